"""Training loop, checkpointing, evaluation and the ablation driver."""

import json
import statistics
from pathlib import Path

import numpy as np
import torch

from . import corpus
from .config import TrainConfig, train_config_from_snapshot, config_snapshot
from .model import build_model
from .objective import batch_pit_loss, delta_metrics

CHECKPOINT_FORMAT_VERSION = 1


def clip_gradients(parameters, bound):
    """Clamp every gradient component into [-bound, +bound]."""
    for p in parameters:
        if p.grad is not None:
            p.grad.clamp_(-bound, bound)


def _load_segments(manifest_path, split, segment_s):
    root = Path(manifest_path).parent
    mixes, targets = [], []
    for rec in corpus.load_manifest(manifest_path, split=split):
        mixture, sources = corpus.read_record(rec, root)
        for m, t in corpus.training_segments(mixture, sources, segment_s):
            mixes.append(torch.from_numpy(m.copy()).float())
            targets.append(torch.from_numpy(t.copy()).float())
    if not mixes:
        raise ValueError("no usable %r segments in manifest" % split)
    return torch.stack(mixes), torch.stack(targets)


def _phase_losses(output, targets, variant):
    loss_c = batch_pit_loss(output.coarse_estimates, targets)
    if output.refined_estimates is None:
        return loss_c, None, loss_c
    loss_r = batch_pit_loss(output.refined_estimates, targets)
    if variant.kind == "refine_loss_only":
        return loss_c.detach(), loss_r, loss_r
    return loss_c, loss_r, loss_c + loss_r


def save_checkpoint(path, model, optimizer, cfg, epoch, step, best_valid):
    torch.save({
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer else None,
        "config": config_snapshot(cfg),
        "epoch": epoch,
        "step": step,
        "best_valid": best_valid,
    }, path)


def load_checkpoint(path):
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError("unsupported checkpoint format %r" % blob.get("format_version"))
    cfg = train_config_from_snapshot(blob["config"])
    model = build_model(cfg.variant, cfg.codec, cfg.separator, seed=cfg.seed)
    model.load_state_dict(blob["model_state"])
    model.eval()
    return model, cfg, blob


def train(cfg: TrainConfig, manifest_path, out_dir, stop_fn=None, resume_from=None,
          quiet=True):
    """Optimize one model; returns (best checkpoint path, history list).

    Per step: forward, permutation-invariant two-phase loss, backward,
    component-wise gradient clamp, Adam step. Per epoch: held-out delta
    SI-SNR (refined phase when present), best checkpoint retained, one
    history/log row. stop_fn(history) may end training early.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)

    mixes, targets = _load_segments(manifest_path, "train", cfg.segment_s)
    n = mixes.shape[0]

    start_epoch, step = 0, 0
    if resume_from is not None:
        model, ckpt_cfg, blob = load_checkpoint(resume_from)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                                     weight_decay=cfg.weight_decay)
        if blob["optimizer_state"]:
            optimizer.load_state_dict(blob["optimizer_state"])
        start_epoch, step = blob["epoch"], blob["step"]
        best_valid = blob["best_valid"]
        model.train()
    else:
        model = build_model(cfg.variant, cfg.codec, cfg.separator, seed=cfg.seed)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                                     weight_decay=cfg.weight_decay)
        best_valid = -float("inf")

    best_path = out_dir / "best.pt"
    last_path = out_dir / "last.pt"
    log_path = out_dir / "metrics.log"
    history = []
    order_rng = torch.Generator().manual_seed(cfg.seed + 1)
    done = False

    for epoch in range(start_epoch, cfg.epochs):
        model.train()
        perm = torch.randperm(n, generator=order_rng)
        epoch_c, epoch_r, n_batches = 0.0, 0.0, 0
        for b0 in range(0, n, cfg.batch_size):
            idx = perm[b0:b0 + cfg.batch_size]
            out = model(mixes[idx])
            loss_c, loss_r, total = _phase_losses(out, targets[idx], cfg.variant)
            if not torch.isfinite(total):
                save_checkpoint(out_dir / "diagnostic.pt", model, optimizer,
                                cfg, epoch, step, best_valid)
                raise RuntimeError(
                    "non-finite loss at epoch %d batch %s (indices %s); "
                    "diagnostic checkpoint written" % (epoch, b0 // cfg.batch_size,
                                                       idx.tolist())
                )
            optimizer.zero_grad()
            total.backward()
            clip_gradients(model.parameters(), cfg.grad_clip)
            optimizer.step()
            epoch_c += float(loss_c.detach())
            epoch_r += float(loss_r.detach()) if loss_r is not None else 0.0
            n_batches += 1
            step += 1
            if cfg.max_steps is not None and step >= cfg.max_steps:
                done = True
                break

        valid = evaluate(model, manifest_path, "valid")
        key = "refined" if valid["refined"] is not None else "coarse"
        valid_score = valid[key]["mean_delta_si_snr"]
        row = {
            "epoch": epoch + 1,
            "step": step,
            "loss_coarse": epoch_c / n_batches,
            "loss_refine": epoch_r / n_batches if cfg.variant.two_phase else None,
            "valid_delta_si_snr": valid_score,
            "valid_delta_si_snr_coarse": valid["coarse"]["mean_delta_si_snr"],
        }
        history.append(row)
        with open(log_path, "a") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        if not quiet:
            print("epoch %(epoch)d step %(step)d loss_c %(loss_coarse).3f "
                  "valid %(valid_delta_si_snr).2f dB" % row)

        if valid_score > best_valid:
            best_valid = valid_score
            save_checkpoint(best_path, model, optimizer, cfg, epoch + 1, step, best_valid)
        save_checkpoint(last_path, model, optimizer, cfg, epoch + 1, step, best_valid)
        if done or (stop_fn is not None and stop_fn(history)):
            break

    if not best_path.exists():
        save_checkpoint(best_path, model, optimizer, cfg, cfg.epochs, step, best_valid)
    return best_path, history


@torch.no_grad()
def evaluate(model_or_ckpt, manifest_path, split):
    """Per-record and mean delta SI-SNR / delta SDR for each phase."""
    if isinstance(model_or_ckpt, (str, Path)):
        model, _, _ = load_checkpoint(model_or_ckpt)
    else:
        model = model_or_ckpt
    model.eval()
    root = Path(manifest_path).parent
    records = corpus.load_manifest(manifest_path, split=split)
    if not records:
        raise ValueError("split %r is empty or unknown" % split)

    rows = []
    for rec in records:
        mixture, sources = corpus.read_record(rec, root)
        mix_t = torch.from_numpy(mixture.samples.copy()).float().unsqueeze(0)
        tgt = np.stack([s.samples for s in sources])
        out = model(mix_t)
        row = {"mixture": rec.mixture_path,
               "coarse": delta_metrics(out.coarse_estimates[0].double(),
                                       torch.from_numpy(tgt).double(),
                                       torch.from_numpy(mixture.samples).double())}
        if out.refined_estimates is not None:
            row["refined"] = delta_metrics(out.refined_estimates[0].double(),
                                           torch.from_numpy(tgt).double(),
                                           torch.from_numpy(mixture.samples).double())
        rows.append(row)

    def _mean(phase):
        if phase not in rows[0]:
            return None
        return {
            "mean_delta_si_snr": statistics.fmean(r[phase]["mean_delta_si_snr"] for r in rows),
            "mean_delta_sdr": statistics.fmean(r[phase]["mean_delta_sdr"] for r in rows),
        }

    return {"split": split, "rows": rows,
            "coarse": _mean("coarse"), "refined": _mean("refined")}


def run_ablation(variant_kinds, base_cfg: TrainConfig, manifest_path, out_dir,
                 seeds=(0, 1, 2), block_budget=None):
    """Train each variant with a matched total block budget over several seeds.

    One-phase variants get the whole budget in their single separator;
    two-phase variants get half per phase. Returns one table row per variant
    with mean and stdev of test delta SI-SNR.
    """
    from dataclasses import replace
    from .config import VariantSpec

    out_dir = Path(out_dir)
    budget = block_budget if block_budget is not None else 2 * base_cfg.separator.n_blocks
    table = []
    for kind in variant_kinds:
        spec = VariantSpec(kind=kind).validate()
        per_phase = budget // 2 if spec.two_phase else budget
        scores = []
        for seed in seeds:
            cfg = replace(
                base_cfg, seed=seed, variant=spec,
                separator=replace(base_cfg.separator, n_blocks=per_phase),
            )
            ckpt, _ = train(cfg, manifest_path, out_dir / ("%s_seed%d" % (kind, seed)))
            report = evaluate(ckpt, manifest_path, "test")
            phase = report["refined"] if report["refined"] is not None else report["coarse"]
            scores.append(phase["mean_delta_si_snr"])
        table.append({
            "variant": kind,
            "block_kind": base_cfg.separator.block_kind,
            "n_blocks": per_phase,
            "seeds": list(seeds),
            "mean_delta_si_snr": statistics.fmean(scores),
            "std_delta_si_snr": statistics.stdev(scores) if len(scores) > 1 else 0.0,
        })
    return table
