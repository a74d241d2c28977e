"""Separation objectives and metrics: SI-SNR, a simple energy-ratio SDR,
brute-force utterance-level permutation alignment, and the joint two-phase
loss."""

from dataclasses import dataclass
from itertools import permutations
from typing import Optional, Tuple

import torch

EPS = 1e-8


def _as_tensor(x):
    if not torch.is_tensor(x):
        x = torch.as_tensor(x, dtype=torch.float64)
    return x


def si_snr(est, ref, eps=EPS):
    """Scale-invariant SNR in dB of an estimate against a reference.

    The estimate is unit-normalized first (the metric is scale invariant, so
    this only pins the working scale), then projected onto the reference; the
    ratio of projected to residual energy is eps-guarded on both sides so
    perfect reconstruction stays finite (caps near 80 dB).
    """
    est, ref = _as_tensor(est), _as_tensor(ref)
    if est.shape != ref.shape:
        raise ValueError("length mismatch: %s vs %s" % (tuple(est.shape), tuple(ref.shape)))
    ref_energy = torch.sum(ref * ref, dim=-1, keepdim=True)
    if torch.any(ref_energy == 0):
        raise ValueError("undefined reference: all-zero target signal")
    est = est / (torch.sqrt(torch.sum(est * est, dim=-1, keepdim=True)) + 1e-300)
    target = (torch.sum(est * ref, dim=-1, keepdim=True) / ref_energy) * ref
    noise = est - target
    ratio = (torch.sum(target * target, dim=-1) + eps) / (torch.sum(noise * noise, dim=-1) + eps)
    return 10 * torch.log10(ratio)


def sdr_simple(est, ref, eps=EPS):
    """Plain energy-ratio SDR in dB: reference energy over residual energy."""
    est, ref = _as_tensor(est), _as_tensor(ref)
    if est.shape != ref.shape:
        raise ValueError("length mismatch: %s vs %s" % (tuple(est.shape), tuple(ref.shape)))
    ref_energy = torch.sum(ref * ref, dim=-1)
    if torch.any(ref_energy == 0):
        raise ValueError("undefined reference: all-zero target signal")
    resid = est - ref
    return 10 * torch.log10(ref_energy / (torch.sum(resid * resid, dim=-1) + eps))


def pit_loss(estimates, targets, eps=EPS):
    """Utterance-level permutation-invariant SI-SNR loss.

    estimates, targets: (D, T) stacks (or lists of equal-length signals).
    Returns (loss, perm) with loss = -max over all D! assignments of the mean
    SI-SNR, and perm the lexicographically smallest maximizing assignment:
    estimate perm[i] is scored against target i.
    """
    if not torch.is_tensor(estimates):
        estimates = torch.stack([_as_tensor(e) for e in estimates])
    if not torch.is_tensor(targets):
        targets = torch.stack([_as_tensor(t) for t in targets])
    if estimates.shape != targets.shape:
        raise ValueError("source count/length mismatch")
    D = estimates.shape[0]
    if D > 4:
        raise ValueError("brute-force alignment supports at most 4 sources")
    # pairwise[i, j] = si_snr(estimate i, target j)
    est_grid = estimates.unsqueeze(1).expand(D, D, -1)
    tgt_grid = targets.unsqueeze(0).expand(D, D, -1)
    pairwise = si_snr(est_grid, tgt_grid, eps=eps)
    best, best_perm = None, None
    for perm in permutations(range(D)):
        score = sum(pairwise[perm[i], i] for i in range(D)) / D
        if best is None or score.item() > best.item():
            best, best_perm = score, perm
    return -best, best_perm


def batch_pit_loss(estimates, targets, eps=EPS):
    """Mean pit_loss over a batch; estimates/targets are (B, D, T)."""
    losses = [pit_loss(estimates[b], targets[b], eps=eps)[0]
              for b in range(estimates.shape[0])]
    return torch.stack(losses).mean()


@dataclass
class LossReport:
    loss_coarse: Optional[torch.Tensor]
    loss_refine: Optional[torch.Tensor]
    loss_total: torch.Tensor
    perm_coarse: Optional[Tuple[int, ...]] = None
    perm_refine: Optional[Tuple[int, ...]] = None


def joint_loss(output, targets, variant) -> LossReport:
    """Two-phase loss: per-phase permutation-invariant SI-SNR, summed.

    output: SeparationOutput for one utterance (B=1) or unbatched (D, T)
    estimate stacks. With the refine-loss-only variant the first-phase term
    is dropped from the total (and from gradients). One-phase variants
    contribute only the first-phase term.
    """
    coarse = output.coarse_estimates
    refined = output.refined_estimates
    if coarse.dim() == 3:
        if coarse.shape[0] != 1:
            raise ValueError("joint_loss expects a single utterance")
        coarse = coarse[0]
        refined = refined[0] if refined is not None else None
    if targets.dim() == 3:
        targets = targets[0]

    loss_c, perm_c = pit_loss(coarse, targets)
    if refined is None:
        return LossReport(loss_c, None, loss_c, perm_c, None)
    loss_r, perm_r = pit_loss(refined, targets)
    if variant.kind == "refine_loss_only":
        return LossReport(None, loss_r, loss_r, None, perm_r)
    return LossReport(loss_c, loss_r, loss_c + loss_r, perm_c, perm_r)


def delta_metrics(estimates, targets, mixture):
    """Improvement of SI-SNR and simple SDR over using the raw mixture.

    Estimates are aligned to targets by pit_loss first; deltas are averaged
    over sources. Returns dict with per-source and mean values.
    """
    if not torch.is_tensor(estimates):
        estimates = torch.stack([_as_tensor(e) for e in estimates])
    if not torch.is_tensor(targets):
        targets = torch.stack([_as_tensor(t) for t in targets])
    mixture = _as_tensor(mixture)
    _, perm = pit_loss(estimates, targets)
    d_sisnr, d_sdr = [], []
    for i in range(targets.shape[0]):
        est = estimates[perm[i]]
        d_sisnr.append((si_snr(est, targets[i]) - si_snr(mixture, targets[i])).item())
        d_sdr.append((sdr_simple(est, targets[i]) - sdr_simple(mixture, targets[i])).item())
    return {
        "delta_si_snr": d_sisnr,
        "delta_sdr": d_sdr,
        "mean_delta_si_snr": sum(d_sisnr) / len(d_sisnr),
        "mean_delta_sdr": sum(d_sdr) / len(d_sdr),
    }
