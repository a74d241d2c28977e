"""Synthetic two-speaker mixture corpus at desk scale.

"Speakers" are deterministic generators with speaker-specific spectral
bands: even speaker indices occupy a low band, odd indices a high band, so a
mixture of one of each is separable but still requires masking. Mixtures are
built on the 16-bit PCM grid so that on disk mixture == sum of the stored
scaled sources exactly.
"""

import json
import warnings
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import List, Optional

import numpy as np

from .audio import Waveform, read_wav, write_wav

PCM_SCALE = 32768.0


@dataclass
class MixtureRecord:
    mixture_path: str
    source_paths: List[str]
    snr_db: float
    noise_path: Optional[str]
    split: str


def speaker_band(speaker: int):
    """Frequency band (lo_hz, hi_hz) for a synthetic speaker."""
    if speaker % 2 == 0:
        base_lo, base_hi = 100.0, 900.0
    else:
        base_lo, base_hi = 1200.0, 3000.0
    jitter = (speaker * 37) % 80  # small per-speaker offset inside the family
    return base_lo + jitter, base_hi + jitter


def synth_utterance(seed, speaker, index, duration_s, sample_rate) -> Waveform:
    """One deterministic utterance: band-limited noise + modulated harmonics."""
    rng = np.random.default_rng([seed, speaker, index])
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    lo, hi = speaker_band(speaker)

    # band-limited noise via FFT-domain masking
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    noise = np.fft.irfft(spec, n)

    # harmonic stack inside the band, random phases, decaying amplitudes
    f0 = rng.uniform(lo * 1.1, lo * 1.6)
    harm = np.zeros(n)
    k = 1
    while k * f0 <= hi:
        harm += rng.uniform(0.4, 1.0) / k * np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi))
        k += 1

    # slow random amplitude envelope (speech-ish 2-6 Hz modulation)
    env_f = rng.uniform(2.0, 6.0)
    env = 0.55 + 0.45 * np.sin(2 * np.pi * env_f * t + rng.uniform(0, 2 * np.pi))

    sig = env * (harm / max(1, k - 1) + 0.5 * noise / (np.std(noise) + 1e-12))
    peak = np.max(np.abs(sig)) + 1e-12
    sig = np.clip(0.7 * sig / peak, -1.0, 1.0)
    return Waveform(sig.astype(np.float64), sample_rate)


def _quantize(x):
    """Snap to the 16-bit PCM grid so WAV round trips are exact."""
    return np.round(x * PCM_SCALE) / PCM_SCALE


def mix(sources, snr_db, noise=None, noise_snr_db=None):
    """Scale, sum and grid-quantize sources (plus optional noise).

    The first source keeps its level; every other source is rescaled so its
    energy sits snr_db below the first. Noise (if given) is scaled relative
    to the louder source. Everything is rescaled together if the sum would
    clip. Returns (mixture, scaled_sources, scaled_noise); all Waveforms on
    the PCM grid with mixture == sum(scaled) exactly.
    """
    rate = sources[0].sample_rate
    n = len(sources[0])
    sigs = []
    for s in sources:
        if len(s) != n or s.sample_rate != rate:
            raise ValueError("sources must share length and sample rate")
        sigs.append(np.asarray(s.samples, dtype=np.float64))
    energies = [np.sum(s * s) for s in sigs]
    if min(energies) == 0:
        raise ValueError("zero-energy source")

    scaled = [sigs[0]]
    for s, e in zip(sigs[1:], energies[1:]):
        # 10*log10(E1 / E_s') = snr_db
        scale = np.sqrt(energies[0] / (e * 10 ** (snr_db / 10.0)))
        scaled.append(s * scale)

    noise_sig = None
    if noise is not None:
        noise_sig = np.asarray(noise.samples, dtype=np.float64)
        if len(noise_sig) != n:
            raise ValueError("noise length mismatch")
        louder = max(np.sum(s * s) for s in scaled)
        ne = np.sum(noise_sig * noise_sig)
        if ne == 0:
            raise ValueError("zero-energy noise")
        noise_sig = noise_sig * np.sqrt(louder / (ne * 10 ** (noise_snr_db / 10.0)))

    parts = scaled + ([noise_sig] if noise_sig is not None else [])
    total = np.sum(parts, axis=0)
    peak = max(np.max(np.abs(total)), max(np.max(np.abs(p)) for p in parts))
    gain = 1.0
    if peak > 0.99:
        gain = 0.9 / peak

    while True:
        qparts = [_quantize(p * gain) for p in parts]
        mixture = np.sum(qparts, axis=0)
        if np.max(np.abs(mixture)) < 32767.0 / PCM_SCALE:
            break
        gain *= 0.98  # re-quantization nudged a sample over full scale

    out_sources = [Waveform(q, rate) for q in qparts[:len(scaled)]]
    out_noise = Waveform(qparts[-1], rate) if noise_sig is not None else None
    return Waveform(mixture, rate), out_sources, out_noise


def split_speakers(cfg):
    """Assign speaker indices to splits; test speakers are unseen in train."""
    pool = list(range(cfg.n_speakers_pool))
    n_test = max(2, cfg.n_speakers_pool // 4)
    n_test += n_test % 2  # keep an even/odd pair available
    test = pool[-n_test:]
    trainvalid = pool[:-n_test]
    return {"train": trainvalid, "valid": trainvalid, "test": test}


def make_corpus(cfg, out_dir, force=False):
    """Generate WAVs + JSONL manifest; deterministic per cfg.seed."""
    cfg.validate()
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.jsonl"
    if manifest_path.exists() and not force:
        raise FileExistsError(
            "manifest already exists at %s (use force to overwrite)" % manifest_path
        )
    speakers = split_speakers(cfg)
    counts = {"train": cfg.n_train, "valid": cfg.n_valid, "test": cfg.n_test}
    records = []
    for split_i, split in enumerate(("train", "valid", "test")):
        wav_dir = out_dir / "wav" / split
        wav_dir.mkdir(parents=True, exist_ok=True)
        rng = np.random.default_rng([cfg.seed, 1000 + split_i])
        low = [s for s in speakers[split] if s % 2 == 0]
        high = [s for s in speakers[split] if s % 2 == 1]
        for idx in range(counts[split]):
            chosen = [int(rng.choice(low)), int(rng.choice(high))][:cfg.n_sources]
            while len(chosen) < cfg.n_sources:
                chosen.append(int(rng.choice(speakers[split])))
            utts = [synth_utterance(cfg.seed, spk, (split_i << 20) + idx,
                                    cfg.duration_s, cfg.sample_rate)
                    for spk in chosen]
            snr = float(rng.uniform(*cfg.snr_range))
            noise_utt = noise_snr = None
            if cfg.noise_snr_range is not None:
                nrng = np.random.default_rng([cfg.seed, 2000 + split_i, idx])
                noise_utt = Waveform(
                    0.3 * nrng.standard_normal(len(utts[0])), cfg.sample_rate
                )
                noise_snr = float(rng.uniform(*cfg.noise_snr_range))
            mixture, srcs, noise_out = mix(utts, snr, noise_utt, noise_snr)

            stem = "%s_%04d" % (split, idx)
            mix_rel = "wav/%s/%s_mix.wav" % (split, stem)
            src_rels = ["wav/%s/%s_spk%d.wav" % (split, stem, i + 1)
                        for i in range(len(srcs))]
            write_wav(out_dir / mix_rel, mixture)
            for rel, s in zip(src_rels, srcs):
                write_wav(out_dir / rel, s)
            noise_rel = None
            if noise_out is not None:
                noise_rel = "wav/%s/%s_noise.wav" % (split, stem)
                write_wav(out_dir / noise_rel, noise_out)
            records.append(MixtureRecord(mix_rel, src_rels, round(snr, 6),
                                         noise_rel, split))
    with open(manifest_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
    return manifest_path


def load_manifest(manifest_path, split=None):
    manifest_path = Path(manifest_path)
    records = []
    with open(manifest_path) as fh:
        for line in fh:
            rec = MixtureRecord(**json.loads(line))
            if split is None or rec.split == split:
                records.append(rec)
    return records


def manifest_splits(manifest_path):
    return sorted({r.split for r in load_manifest(manifest_path)})


def read_record(rec: MixtureRecord, root):
    """Load (mixture, [sources...]) for one manifest row."""
    root = Path(root)
    mixture = read_wav(root / rec.mixture_path)
    sources = [read_wav(root / p, expect_rate=mixture.sample_rate)
               for p in rec.source_paths]
    return mixture, sources


def training_segments(mixture: Waveform, sources, segment_s=2.0):
    """Non-overlapping fixed-length windows; the remainder is dropped."""
    seg = int(round(segment_s * mixture.sample_rate))
    n = len(mixture)
    if n < seg:
        warnings.warn("utterance shorter than %gs segment, skipped" % segment_s)
        return []
    out = []
    for start in range(0, n - seg + 1, seg):
        sl = slice(start, start + seg)
        out.append((mixture.samples[sl],
                    np.stack([s.samples[sl] for s in sources])))
    return out
