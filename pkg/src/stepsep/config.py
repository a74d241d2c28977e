"""Configuration records for the codec, separator, variants and training."""

from dataclasses import dataclass, field, asdict, replace
from typing import Optional

import yaml


class ConfigError(ValueError):
    pass


# registry of model variants (ablation family)
VARIANT_KINDS = (
    "base",
    "base_expanded",
    "base_deeper",
    "base_high_order",
    "iterative",
    "two_phase_1d",
    "two_phase_1d_expanded",
    "refine_loss_only",
    "full",
)

# variants whose forward produces a second (refined) set of estimates
TWO_PHASE_KINDS = (
    "iterative",
    "two_phase_1d",
    "two_phase_1d_expanded",
    "refine_loss_only",
    "full",
)


@dataclass
class CodecConfig:
    """Filterbank sizes for the first-order and group-wise second-order codecs."""

    n_coarse_basis: int = 256
    coarse_kernel: int = 16
    coarse_stride: int = 8
    n_fine_basis: int = 256
    fine_kernel: int = 2
    fine_stride: int = 1
    n_groups: int = 4
    bias: bool = True
    depth: int = 1  # >1 only for the deeper-codec variant

    def validate(self):
        if self.n_coarse_basis % self.n_groups != 0:
            raise ConfigError(
                "n_coarse_basis (%d) must be divisible by n_groups (%d)"
                % (self.n_coarse_basis, self.n_groups)
            )
        if self.coarse_stride > self.coarse_kernel:
            raise ConfigError("coarse_stride must not exceed coarse_kernel")
        if self.fine_stride > self.fine_kernel:
            raise ConfigError("fine_stride must not exceed fine_kernel")
        if min(self.n_coarse_basis, self.coarse_kernel, self.coarse_stride,
               self.n_fine_basis, self.fine_kernel, self.fine_stride,
               self.n_groups, self.depth) < 1:
            raise ConfigError("codec sizes must be positive")
        return self

    @property
    def group_width(self):
        return self.n_coarse_basis // self.n_groups


@dataclass
class SeparatorConfig:
    """Mask-estimation network hyperparameters (shared by both phases)."""

    block_kind: str = "dprnn"  # "dprnn" or "dptnet"
    n_blocks: int = 6
    chunk_len: int = 100
    inner_dim: int = 64
    rnn_hidden: int = 128
    attn_heads: int = 4
    n_sources: int = 2

    def validate(self):
        if self.block_kind not in ("dprnn", "dptnet"):
            raise ConfigError("unknown block_kind %r" % self.block_kind)
        if self.chunk_len % 2 != 0:
            raise ConfigError("chunk_len must be even (hop = chunk_len/2)")
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        if self.n_sources < 2:
            raise ConfigError("n_sources must be >= 2")
        if self.block_kind == "dptnet" and self.inner_dim % self.attn_heads != 0:
            raise ConfigError("inner_dim must be divisible by attn_heads")
        return self


@dataclass
class VariantSpec:
    """Which model variant to build, plus sparse hyperparameter overrides."""

    kind: str = "full"
    overrides: dict = field(default_factory=dict)

    def validate(self):
        if self.kind not in VARIANT_KINDS:
            raise ConfigError(
                "unknown variant %r (valid: %s)" % (self.kind, ", ".join(VARIANT_KINDS))
            )
        return self

    @property
    def two_phase(self):
        return self.kind in TWO_PHASE_KINDS

    def resolve_codec(self, codec: CodecConfig) -> CodecConfig:
        """Apply variant-forced codec settings on top of the base config."""
        self.validate()
        forced = {}
        if self.kind == "base_expanded":
            forced["n_coarse_basis"] = 1024
        elif self.kind == "base_deeper":
            forced["depth"] = self.overrides.get("depth", 2)
        elif self.kind in ("two_phase_1d", "two_phase_1d_expanded"):
            # single group = plain first-order re-encoding, no group-wise mechanism
            forced["n_groups"] = 1
            if self.kind == "two_phase_1d_expanded":
                forced["n_fine_basis"] = 1024
        out = replace(codec, **forced)
        for key, val in self.overrides.items():
            if hasattr(out, key) and key != "depth":
                out = replace(out, **{key: val})
        return out.validate()


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-5
    grad_clip: float = 5.0  # components clamped to [-grad_clip, +grad_clip]
    epochs: int = 200
    batch_size: int = 4
    seed: int = 0
    segment_s: float = 2.0
    max_steps: Optional[int] = None
    variant: VariantSpec = field(default_factory=VariantSpec)
    codec: CodecConfig = field(default_factory=CodecConfig)
    separator: SeparatorConfig = field(default_factory=SeparatorConfig)

    def validate(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not (self.grad_clip > 0 and self.grad_clip < float("inf")):
            raise ConfigError("grad_clip must be finite and positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        self.variant.validate()
        self.codec.validate()
        self.separator.validate()
        return self


@dataclass
class CorpusConfig:
    n_speakers_pool: int = 20
    n_train: int = 200
    n_valid: int = 40
    n_test: int = 40
    sample_rate: int = 8000
    duration_s: float = 1.0
    snr_range: tuple = (0.0, 5.0)
    noise_snr_range: Optional[tuple] = None  # e.g. (-6.0, 3.0) to add noise
    seed: int = 0
    n_sources: int = 2

    def validate(self):
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.snr_range[0] > self.snr_range[1]:
            raise ConfigError("snr_range must be ordered (low, high)")
        if self.noise_snr_range is not None and self.noise_snr_range[0] > self.noise_snr_range[1]:
            raise ConfigError("noise_snr_range must be ordered (low, high)")
        if self.n_speakers_pool < 2 * self.n_sources:
            raise ConfigError("speaker pool too small for disjoint splits")
        return self


def toy_train_config(block_kind="dprnn", variant_kind="full", seed=0) -> TrainConfig:
    """CPU-minutes preset: small filterbanks, short blocks, 1 s segments."""
    cfg = TrainConfig(
        epochs=20,
        batch_size=4,
        seed=seed,
        segment_s=1.0,
        variant=VariantSpec(kind=variant_kind),
        codec=CodecConfig(n_coarse_basis=64, n_fine_basis=64, n_groups=4),
        separator=SeparatorConfig(
            block_kind=block_kind, n_blocks=2, chunk_len=50,
            inner_dim=32, rnn_hidden=64,
        ),
    )
    return cfg.validate()


# ---------------------------------------------------------------------------
# config-file loading

_SECTION_TYPES = {
    "train": TrainConfig,
    "codec": CodecConfig,
    "separator": SeparatorConfig,
    "variant": VariantSpec,
    "corpus": CorpusConfig,
}


def _build_section(cls, data, path):
    valid = {f for f in cls.__dataclass_fields__}
    unknown = set(data) - valid
    if unknown:
        raise ConfigError(
            "unknown key(s) %s in section %r" % (sorted(unknown), path)
        )
    if "snr_range" in data and data["snr_range"] is not None:
        data["snr_range"] = tuple(data["snr_range"])
    if "noise_snr_range" in data and data["noise_snr_range"] is not None:
        data["noise_snr_range"] = tuple(data["noise_snr_range"])
    return cls(**data)


def load_run_config(path) -> dict:
    """Parse a YAML run-config file into validated config objects.

    Recognized top-level sections: train, codec, separator, variant, corpus.
    Unknown sections or keys are rejected before any work starts.
    """
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping at top level")
    unknown = set(raw) - set(_SECTION_TYPES)
    if unknown:
        raise ConfigError("unknown config section(s): %s" % sorted(unknown))
    out = {}
    for name, cls in _SECTION_TYPES.items():
        if name in raw:
            if not isinstance(raw[name], dict):
                raise ConfigError("section %r must be a mapping" % name)
            out[name] = _build_section(cls, dict(raw[name]), name)
    if "train" in out:
        for sub in ("codec", "separator", "variant"):
            if sub in out:
                setattr(out["train"], sub, out[sub])
        out["train"].validate()
    for name in ("codec", "separator", "variant", "corpus"):
        if name in out:
            out[name].validate()
    return out


def config_snapshot(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def train_config_from_snapshot(snap: dict) -> TrainConfig:
    snap = dict(snap)
    snap["variant"] = VariantSpec(**snap["variant"])
    snap["codec"] = CodecConfig(**snap["codec"])
    snap["separator"] = SeparatorConfig(**snap["separator"])
    return TrainConfig(**snap).validate()
