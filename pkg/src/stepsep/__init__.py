"""Two-phase coarse-to-fine time-domain source separation toolkit."""

from .audio import Waveform, read_wav, write_wav
from .codec import CoarseCodec, FineCodec, pad_to_alignment
from .config import (CodecConfig, CorpusConfig, SeparatorConfig, TrainConfig,
                     VariantSpec, toy_train_config)
from .model import SeparationModel, SeparationOutput, build_model
from .objective import (delta_metrics, joint_loss, pit_loss, sdr_simple, si_snr)
from .separator import MaskEstimator, overlap_add, segment_chunks

__all__ = [
    "Waveform", "read_wav", "write_wav",
    "CoarseCodec", "FineCodec", "pad_to_alignment",
    "CodecConfig", "CorpusConfig", "SeparatorConfig", "TrainConfig",
    "VariantSpec", "toy_train_config",
    "SeparationModel", "SeparationOutput", "build_model",
    "delta_metrics", "joint_loss", "pit_loss", "sdr_simple", "si_snr",
    "MaskEstimator", "overlap_add", "segment_chunks",
]
