"""Variant forwards: one-phase baselines, iterative cascades and the
two-phase coarse-then-refine separator family."""

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from .codec import CoarseCodec, FineCodec, pad_to_alignment
from .config import CodecConfig, ConfigError, SeparatorConfig, VariantSpec
from .separator import MaskEstimator


@dataclass
class SeparationOutput:
    coarse_estimates: torch.Tensor            # (B, D, T)
    refined_estimates: Optional[torch.Tensor]  # (B, D, T) or None for 1-phase
    intermediates: dict


class SeparationModel(nn.Module):
    """Builds the network for one variant and runs its forward pass."""

    def __init__(self, variant: VariantSpec, codec: CodecConfig,
                 separator: SeparatorConfig, generator=None):
        super().__init__()
        variant.validate()
        self.variant = variant
        self.codec_cfg = variant.resolve_codec(codec)
        self.sep_cfg = separator.validate()
        kind = variant.kind
        cc = self.codec_cfg

        self.coarse = CoarseCodec(cc, generator=generator)
        if kind == "base_high_order":
            self.fine = FineCodec(cc, generator=generator)
            self.sep_refine = MaskEstimator(separator, in_dim=cc.n_fine_basis)
        elif kind == "iterative":
            self.sep_coarse = MaskEstimator(separator, in_dim=cc.n_coarse_basis)
            # second pass sees the mixture stacked with the first-pass estimates
            self.coarse2 = CoarseCodec(cc, in_channels=1 + separator.n_sources,
                                       generator=generator)
            self.sep_refine = MaskEstimator(separator, in_dim=cc.n_coarse_basis)
        else:
            self.sep_coarse = MaskEstimator(separator, in_dim=cc.n_coarse_basis)
            if variant.two_phase:
                self.fine = FineCodec(cc, generator=generator)
                self.sep_refine = MaskEstimator(separator, in_dim=cc.n_fine_basis)

    @property
    def n_sources(self):
        return self.sep_cfg.n_sources

    # -- phase forwards -----------------------------------------------------

    def coarse_forward(self, x):
        """First-phase separation in the first-order latent grid.

        x: (B, T) aligned. Returns (masked latents (B, D, N_c, T'),
        decoded estimates (B, D, orig)) for original length = x length.
        """
        orig = x.shape[-1]
        latent = self.coarse.encode(x)                 # (B, Nc, T')
        masks = self.sep_coarse(latent)                # (B, D, Nc, T')
        separated = latent.unsqueeze(1) * masks
        B, D, C, Tp = separated.shape
        est = self.coarse.decode(separated.reshape(B * D, C, Tp), orig)
        return separated, est.reshape(B, D, orig)

    def refine_forward(self, coarse_latents, original_length):
        """Second-phase group-wise separation and component merging.

        coarse_latents: (B, D, N_c, T') first-phase streams. Each stream is
        re-encoded group-wise, split again into D components per (stream,
        group) with a shared separator, and components belonging to the same
        output speaker are summed across input streams before decoding.
        """
        cc = self.codec_cfg
        B, D, C, Tp = coarse_latents.shape
        P, Nr = cc.n_groups, cc.n_fine_basis
        fine = self.fine.encode(coarse_latents.reshape(B * D, C, Tp))  # (B*D, P, Nr, T'')
        Tpp = fine.shape[-1]
        streams = fine.reshape(B * D * P, Nr, Tpp)
        masks = self.sep_refine(streams)               # (B*D*P, D, Nr, T'')
        comps = streams.unsqueeze(1) * masks
        comps = comps.reshape(B, D, P, D, Nr, Tpp)     # (B, i, p, j, Nr, T'')
        merged = comps.sum(dim=1)                      # (B, p, j, Nr, T'')
        merged = merged.permute(0, 2, 1, 3, 4)         # (B, j, p, Nr, T'')
        back = self.fine.decode_stage1(merged.reshape(B * D, P, Nr, Tpp))
        est = self.fine.decode_stage2(back, original_length)
        refined_latents = comps.permute(0, 1, 3, 2, 4, 5)  # (B, i, j, p, Nr, T'')
        return refined_latents, est.reshape(B, D, original_length)

    def _high_order_forward(self, x):
        orig = x.shape[-1]
        cc = self.codec_cfg
        latent = self.coarse.encode(x)
        fine = self.fine.encode(latent)                # (B, P, Nr, T'')
        B, P, Nr, Tpp = fine.shape
        streams = fine.reshape(B * P, Nr, Tpp)
        masks = self.sep_refine(streams)               # (B*P, D, Nr, T'')
        D = self.n_sources
        comps = streams.unsqueeze(1) * masks
        comps = comps.reshape(B, P, D, Nr, Tpp).permute(0, 2, 1, 3, 4)
        back = self.fine.decode_stage1(comps.reshape(B * D, P, Nr, Tpp))
        est = self.fine.decode_stage2(back, orig)
        return est.reshape(B, D, orig)

    def _iterative_forward(self, x):
        orig = x.shape[-1]
        _, first = self.coarse_forward(x)
        stacked = torch.cat([x.unsqueeze(1), first], dim=1)  # (B, 1+D, T)
        latent = self.coarse2.encode(stacked)
        masks = self.sep_refine(latent)
        separated = latent.unsqueeze(1) * masks
        B, D, C, Tp = separated.shape
        est = self.coarse2.decode(separated.reshape(B * D, C, Tp), orig)
        return first, est.reshape(B, D, orig)

    def forward(self, x) -> SeparationOutput:
        """x: (B, T) or (T,) mixture waveform; estimates keep its length."""
        if x.dim() == 1:
            x = x.unsqueeze(0)
        x, orig = pad_to_alignment(x, self.codec_cfg)
        kind = self.variant.kind

        if kind == "base_high_order":
            est = self._high_order_forward(x)
            return SeparationOutput(est[..., :orig], None, {})
        if kind == "iterative":
            first, second = self._iterative_forward(x)
            return SeparationOutput(first[..., :orig], second[..., :orig], {})

        coarse_latents, coarse_est = self.coarse_forward(x)
        if not self.variant.two_phase:
            return SeparationOutput(coarse_est[..., :orig], None,
                                    {"coarse_latents": coarse_latents})
        refined_latents, refined_est = self.refine_forward(coarse_latents, x.shape[-1])
        return SeparationOutput(
            coarse_est[..., :orig], refined_est[..., :orig],
            {"coarse_latents": coarse_latents, "refined_latents": refined_latents},
        )


def build_model(variant, codec, separator, seed=0) -> SeparationModel:
    """Deterministic model construction: same seed, same initial weights."""
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    return SeparationModel(variant, codec, separator, generator=gen)
