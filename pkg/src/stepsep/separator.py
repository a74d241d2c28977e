"""Mask-estimation network: chunking, dual-path blocks, mask head.

Input is a latent sequence (B, C, F). It is layer-normalized, projected to a
small inner dimension, segmented into half-overlapping chunks, refined by R
dual-path blocks (recurrent or transformer flavored), expanded to one stream
per source, merged by overlap-add and mapped to nonnegative masks.
"""

import torch
import torch.nn as nn

from .codec import ShapeError


def segment_chunks(seq: torch.Tensor, chunk_len: int):
    """Split (B, C, F) into half-overlapping chunks.

    Returns (chunks, pad_frames) where chunks is (B, C, chunk_len, n_chunks)
    and pad_frames counts the zero frames appended so the hop grid tiles.
    """
    if chunk_len % 2 != 0:
        raise ValueError("chunk_len must be even")
    B, C, F = seq.shape
    if F < 1:
        raise ValueError("empty sequence")
    hop = chunk_len // 2
    padded = max(F, chunk_len)
    rem = (padded - chunk_len) % hop
    if rem:
        padded += hop - rem
    pad_frames = padded - F
    if pad_frames:
        seq = torch.nn.functional.pad(seq, (0, pad_frames))
    chunks = seq.unfold(-1, chunk_len, hop)  # (B, C, n_chunks, chunk_len)
    return chunks.permute(0, 1, 3, 2).contiguous(), pad_frames


def overlap_add(chunks: torch.Tensor, pad_frames: int):
    """Inverse of segment_chunks: average overlapping halves, drop padding."""
    B, C, L, K = chunks.shape
    hop = L // 2
    frames = (K - 1) * hop + L
    out = chunks.new_zeros(B, C, frames)
    count = chunks.new_zeros(frames)
    for k in range(K):
        out[:, :, k * hop:k * hop + L] += chunks[:, :, :, k]
        count[k * hop:k * hop + L] += 1
    out = out / count
    if pad_frames:
        out = out[:, :, :frames - pad_frames]
    return out


class _ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel axis at each (frame, chunk) position."""

    def __init__(self, dim):
        super().__init__()
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        # x: (..., C, F) -> normalized over C
        return self.norm(x.transpose(-2, -1)).transpose(-2, -1)


class _RNNPath(nn.Module):
    """BiLSTM -> linear back to model dim -> layernorm -> residual."""

    def __init__(self, dim, hidden):
        super().__init__()
        self.rnn = nn.LSTM(dim, hidden, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * hidden, dim)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        # x: (N, steps, C)
        h, _ = self.rnn(x)
        return x + self.norm(self.proj(h))


class _TransformerPath(nn.Module):
    """Self-attention sublayer plus a recurrent feed-forward sublayer.

    The feed-forward first dense layer is a BiLSTM so the path stays
    order-aware without positional encodings.
    """

    def __init__(self, dim, hidden, heads):
        super().__init__()
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm1 = nn.LayerNorm(dim)
        self.rnn = nn.LSTM(dim, hidden, batch_first=True, bidirectional=True)
        self.proj = nn.Linear(2 * hidden, dim)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        a, _ = self.attn(x, x, x, need_weights=False)
        x = self.norm1(x + a)
        h, _ = self.rnn(x)
        return self.norm2(x + self.proj(torch.relu(h)))


class DualPathBlock(nn.Module):
    """One intra-chunk pass then one inter-chunk pass, shape preserving."""

    def __init__(self, cfg):
        super().__init__()
        if cfg.block_kind == "dprnn":
            path = lambda: _RNNPath(cfg.inner_dim, cfg.rnn_hidden)
        else:
            path = lambda: _TransformerPath(cfg.inner_dim, cfg.rnn_hidden, cfg.attn_heads)
        self.intra = path()
        self.inter = path()
        self.inner_dim = cfg.inner_dim

    def forward(self, chunks):
        # chunks: (B, C, L, K)
        B, C, L, K = chunks.shape
        if C != self.inner_dim:
            raise ShapeError("expected %d channels, got %d" % (self.inner_dim, C))
        # intra: sequence axis = within-chunk frames
        x = chunks.permute(0, 3, 2, 1).reshape(B * K, L, C)
        x = self.intra(x)
        x = x.reshape(B, K, L, C)
        # inter: sequence axis = chunk index
        x = x.permute(0, 2, 1, 3).reshape(B * L, K, C)
        x = self.inter(x)
        return x.reshape(B, L, K, C).permute(0, 3, 1, 2).contiguous()


class MaskEstimator(nn.Module):
    """Full mask head: produces n_sources nonnegative masks per latent."""

    def __init__(self, cfg, in_dim):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.in_dim = in_dim
        self.input_norm = _ChannelLayerNorm(in_dim)
        self.input_proj = nn.Linear(in_dim, cfg.inner_dim)
        self.blocks = nn.ModuleList(DualPathBlock(cfg) for _ in range(cfg.n_blocks))
        self.prelu = nn.PReLU()
        self.expand = nn.Linear(cfg.inner_dim, cfg.n_sources * cfg.inner_dim)
        self.mask_proj = nn.Linear(cfg.inner_dim, in_dim)

    def forward(self, latent):
        # latent: (B, in_dim, F) -> (B, n_sources, in_dim, F), all >= 0
        B, C, F = latent.shape
        if C != self.in_dim:
            raise ShapeError("expected %d input channels, got %d" % (self.in_dim, C))
        if F < 1:
            raise ValueError("empty latent sequence")
        D = self.cfg.n_sources
        inner = self.cfg.inner_dim

        x = self.input_norm(latent)
        x = self.input_proj(x.transpose(1, 2)).transpose(1, 2)  # (B, inner, F)
        chunks, pad_frames = segment_chunks(x, self.cfg.chunk_len)
        for block in self.blocks:
            chunks = block(chunks)
        chunks = self.prelu(chunks)
        # expand channels by n_sources, one stream per source
        c = self.expand(chunks.permute(0, 2, 3, 1))  # (B, L, K, D*inner)
        L, K = c.shape[1], c.shape[2]
        c = c.reshape(B, L, K, D, inner).permute(0, 3, 4, 1, 2)  # (B, D, inner, L, K)
        seq = overlap_add(c.reshape(B * D, inner, L, K), pad_frames)  # (B*D, inner, F)
        masks = torch.relu(self.mask_proj(seq.transpose(1, 2))).transpose(1, 2)
        return masks.reshape(B, D, self.in_dim, F)
