"""Command line entry points: mix / train / separate / evaluate.

Exit codes: 0 ok, 1 user error (bad config, bad input), 2 internal error.
Flags override config-file keys; overrides are echoed to stderr.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from .audio import AudioFormatError, read_wav, write_wav, Waveform
from .config import (ConfigError, CorpusConfig, TrainConfig, VariantSpec,
                     VARIANT_KINDS, load_run_config)
from . import corpus, trainer


def _load_sections(path):
    if path is None:
        return {}
    return load_run_config(path)


def _echo_override(name, value):
    print("override: %s = %s" % (name, value), file=sys.stderr)


def cmd_mix(args):
    sections = _load_sections(args.config)
    cfg = sections.get("corpus", CorpusConfig())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        _echo_override("corpus.seed", args.seed)
    cfg.validate()
    manifest = corpus.make_corpus(cfg, args.out, force=args.force)
    print("wrote %s (%d records)" % (manifest, len(corpus.load_manifest(manifest))))
    return 0


def cmd_train(args):
    sections = _load_sections(args.config)
    cfg = sections.get("train", TrainConfig())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        _echo_override("train.seed", args.seed)
    if args.variant is not None:
        cfg = replace(cfg, variant=VariantSpec(kind=args.variant))
        _echo_override("train.variant", args.variant)
    cfg.validate()
    ckpt, history = trainer.train(cfg, args.manifest, args.out,
                                  resume_from=args.resume, quiet=False)
    print("best checkpoint: %s (epochs run: %d)" % (ckpt, len(history)))
    return 0


def cmd_separate(args):
    model, cfg, _ = trainer.load_checkpoint(args.checkpoint)
    wav = read_wav(args.input, expect_rate=args.sample_rate)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with torch.no_grad():
        out = model(torch.from_numpy(wav.samples.copy()).float())
    est = out.refined_estimates if out.refined_estimates is not None else out.coarse_estimates
    stem = Path(args.input).stem
    paths = []
    for i in range(est.shape[1]):
        p = out_dir / ("%s_spk%d.wav" % (stem, i + 1))
        samples = est[0, i].numpy().astype(np.float64)
        # normalize loudness so 16-bit quantization noise stays negligible;
        # the scale-invariant scores are unaffected
        peak = np.max(np.abs(samples))
        if peak > 0:
            samples = 0.5 * samples / peak
        write_wav(p, Waveform(samples, wav.sample_rate))
        paths.append(p)
    print("\n".join(str(p) for p in paths))
    return 0


def cmd_evaluate(args):
    splits = corpus.manifest_splits(args.manifest)
    if args.split not in splits:
        raise ConfigError("unknown split %r (valid: %s)" % (args.split, ", ".join(splits)))
    report = trainer.evaluate(args.checkpoint, args.manifest, args.split)
    for phase in ("coarse", "refined"):
        if report[phase] is not None:
            print("%s: delta SI-SNR %.2f dB, delta SDR %.2f dB" % (
                phase, report[phase]["mean_delta_si_snr"],
                report[phase]["mean_delta_sdr"]))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w") as fh:
            for row in report["rows"]:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        print("report written to %s" % args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stepsep",
        description="Two-phase coarse-to-fine speech separation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mix", help="generate the synthetic mixture corpus")
    p.add_argument("--config", help="YAML run config (corpus section)")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true", help="overwrite existing manifest")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("train", help="train a separation model")
    p.add_argument("--config", help="YAML run config (train/codec/separator/variant)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=VARIANT_KINDS)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("separate", help="separate one mixture WAV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="mono WAV at the model rate")
    p.add_argument("--out", required=True)
    p.add_argument("--sample-rate", type=int, default=8000)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="score a checkpoint on a manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", help="write per-record JSONL report here")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, AudioFormatError, FileNotFoundError, FileExistsError,
            ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - internal failure path
        print("internal error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
