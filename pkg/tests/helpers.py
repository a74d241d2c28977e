"""Shared test utilities: a central finite-difference gradient checker."""

import torch


def finite_difference_check(loss_fn, model, n_samples=50, h=1e-6, seed=0):
    """Compare autograd gradients against central differences.

    loss_fn() must evaluate the scalar loss from the model's current
    parameters. The model is expected to be in float64. Samples n_samples
    parameter components spread across all parameter tensors and returns the
    worst relative error.
    """
    params = [p for p in model.parameters() if p.requires_grad]
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)

    rng = torch.Generator().manual_seed(seed)
    flat = []
    for p, g in zip(params, grads):
        if g is None:
            continue
        for _ in range(max(1, n_samples // len(params))):
            flat.append((p, g, int(torch.randint(p.numel(), (1,), generator=rng))))
    while len(flat) < n_samples:
        p, g, _ = flat[len(flat) % len(params)]
        flat.append((p, g, int(torch.randint(p.numel(), (1,), generator=rng))))

    worst = 0.0
    with torch.no_grad():
        for p, g, idx in flat[:max(n_samples, len(flat))]:
            orig = p.view(-1)[idx].item()
            p.view(-1)[idx] = orig + h
            up = loss_fn().item()
            p.view(-1)[idx] = orig - h
            down = loss_fn().item()
            p.view(-1)[idx] = orig
            fd = (up - down) / (2 * h)
            an = g.view(-1)[idx].item()
            denom = max(abs(fd), abs(an), 1e-4)
            worst = max(worst, abs(fd - an) / denom)
    return worst
