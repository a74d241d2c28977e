"""Learned analysis/synthesis filterbanks.

The first-order codec maps waveforms to a nonnegative latent grid and back
(1-D conv + ReLU, transposed conv). The second-order codec re-encodes the
first-order latent group-wise with a single shared filterbank, and decodes in
two stages: back to the first-order grid, then back to the waveform.

Shapes are channel-first throughout: waveforms (B, T), first-order latents
(B, N_c, T'), second-order latents (B, P, N_r, T'').
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


class ShapeError(ValueError):
    pass


def pad_to_alignment(x: torch.Tensor, cfg):
    """Trailing-zero pad (B, T) so the conv frame grid tiles it exactly.

    Returns (padded, original_length) with padded length L satisfying
    L >= kernel and (L - kernel) % stride == 0.
    """
    if x.dim() == 1:
        x = x.unsqueeze(0)
    orig = x.shape[-1]
    if orig == 0:
        raise ValueError("empty input")
    kernel, stride = cfg.coarse_kernel, cfg.coarse_stride
    target = max(orig, kernel)
    rem = (target - kernel) % stride
    if rem:
        target += stride - rem
    if target > orig:
        x = F.pad(x, (0, target - orig))
    return x, orig


def check_alignment(x: torch.Tensor, cfg):
    T = x.shape[-1]
    if T < cfg.coarse_kernel or (T - cfg.coarse_kernel) % cfg.coarse_stride != 0:
        raise ShapeError(
            "input length %d is not aligned to kernel %d / stride %d"
            % (T, cfg.coarse_kernel, cfg.coarse_stride)
        )


def _init_conv(conv, generator):
    # uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], seeded for reproducibility
    fan_in = conv.weight.shape[1] * conv.weight.shape[2]
    if isinstance(conv, nn.ConvTranspose1d):
        fan_in = conv.weight.shape[0] * conv.weight.shape[2]
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        conv.weight.uniform_(-bound, bound, generator=generator)
        if conv.bias is not None:
            conv.bias.uniform_(-bound, bound, generator=generator)


class CoarseCodec(nn.Module):
    """First-order filterbank: waveform <-> nonnegative (N_c, T') latent."""

    def __init__(self, cfg, in_channels=1, generator=None):
        super().__init__()
        self.cfg = cfg
        enc = []
        for d in range(cfg.depth):
            if d == 0:
                enc.append(nn.Conv1d(in_channels, cfg.n_coarse_basis,
                                     cfg.coarse_kernel, stride=cfg.coarse_stride,
                                     bias=cfg.bias))
            else:
                enc.append(nn.Conv1d(cfg.n_coarse_basis, cfg.n_coarse_basis,
                                     3, padding=1, bias=cfg.bias))
        self.enc_layers = nn.ModuleList(enc)
        dec = []
        for d in range(cfg.depth - 1):
            dec.append(nn.Conv1d(cfg.n_coarse_basis, cfg.n_coarse_basis,
                                 3, padding=1, bias=cfg.bias))
        dec.append(nn.ConvTranspose1d(cfg.n_coarse_basis, 1, cfg.coarse_kernel,
                                      stride=cfg.coarse_stride, bias=cfg.bias))
        self.dec_layers = nn.ModuleList(dec)
        if generator is not None:
            for m in list(self.enc_layers) + list(self.dec_layers):
                _init_conv(m, generator)

    def encode(self, x):
        # x: (B, T) or (B, C, T) aligned -> (B, N_c, T'), all >= 0
        if x.dim() == 2:
            x = x.unsqueeze(1)
        check_alignment(x, self.cfg)
        h = x
        for i, layer in enumerate(self.enc_layers):
            h = torch.relu(layer(h))
        return h

    def decode(self, f, original_length):
        # f: (B, N_c, T') -> (B, original_length)
        if f.shape[1] != self.cfg.n_coarse_basis:
            raise ShapeError(
                "expected %d latent rows, got %d" % (self.cfg.n_coarse_basis, f.shape[1])
            )
        h = f
        for layer in self.dec_layers[:-1]:
            h = torch.relu(layer(h))
        wav = self.dec_layers[-1](h).squeeze(1)
        if wav.shape[-1] < original_length:
            raise ShapeError(
                "decoded length %d shorter than original %d"
                % (wav.shape[-1], original_length)
            )
        return wav[..., :original_length]


class FineCodec(nn.Module):
    """Group-wise second-order filterbank over first-order latent frames.

    One shared encoder filterbank (group_width -> N_r, kernel over frames) is
    applied to each of the P contiguous basis groups; decoding stage 1 maps
    each group back to the first-order grid, stage 2 is an independent
    waveform decoder with the first-order geometry.
    """

    def __init__(self, cfg, generator=None):
        super().__init__()
        self.cfg = cfg
        self.enc = nn.Conv1d(cfg.group_width, cfg.n_fine_basis, cfg.fine_kernel,
                             stride=cfg.fine_stride, bias=cfg.bias)
        self.dec1 = nn.ConvTranspose1d(cfg.n_fine_basis, cfg.group_width,
                                       cfg.fine_kernel, stride=cfg.fine_stride,
                                       bias=cfg.bias)
        self.dec2 = nn.ConvTranspose1d(cfg.n_coarse_basis, 1, cfg.coarse_kernel,
                                       stride=cfg.coarse_stride, bias=cfg.bias)
        if generator is not None:
            for m in (self.enc, self.dec1, self.dec2):
                _init_conv(m, generator)

    def encode(self, f):
        # f: (B, N_c, T') -> (B, P, N_r, T'')
        cfg = self.cfg
        B, C, Tp = f.shape
        if C != cfg.n_coarse_basis:
            raise ShapeError("expected %d rows, got %d" % (cfg.n_coarse_basis, C))
        if Tp < cfg.fine_kernel:
            raise ValueError("coarse sequence too short for fine kernel")
        groups = f.reshape(B, cfg.n_groups, cfg.group_width, Tp)
        out = torch.relu(self.enc(groups.reshape(B * cfg.n_groups, cfg.group_width, Tp)))
        return out.reshape(B, cfg.n_groups, cfg.n_fine_basis, -1)

    def decode_stage1(self, g):
        # g: (B, P, N_r, T'') -> (B, N_c, T'), rectified
        cfg = self.cfg
        B, P, Nr, Tpp = g.shape
        if P != cfg.n_groups or Nr != cfg.n_fine_basis:
            raise ShapeError(
                "expected (%d, %d) group/basis axes, got (%d, %d)"
                % (cfg.n_groups, cfg.n_fine_basis, P, Nr)
            )
        h = torch.relu(self.dec1(g.reshape(B * P, Nr, Tpp)))
        return h.reshape(B, cfg.n_coarse_basis, -1)

    def decode_stage2(self, f, original_length):
        # f: (B, N_c, T') -> (B, original_length)
        if f.shape[1] != self.cfg.n_coarse_basis:
            raise ShapeError(
                "expected %d latent rows, got %d" % (self.cfg.n_coarse_basis, f.shape[1])
            )
        wav = self.dec2(f).squeeze(1)
        return wav[..., :original_length]
