"""Hierarchical style encoding: per-word local styles, then a global style.

The local style encoder (LSE) maps one mel segment to a single vector via
spectral affine layers, gated temporal convolutions, self-attention, and
average pooling. The global style encoder (GSE) runs order-free
self-attention blocks over the local styles, pools over segments, and adds
the plain mean of the local styles back in as a time-invariant component.
GSE attention rows can be replaced wholesale, which is the controllability
handle used by the part-of-speech experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import nn, tape
from .audio import MelSpectrogram
from .errors import ConfigurationError, DegenerateInputError
from .nn import ParamTable
from .segmentation import StyleSegment, WordInterval, slice_frame_matrix
from .tape import Tensor

ABLATIONS = ("full", "no_gse", "no_lse", "random_slices")


@dataclass(frozen=True)
class GsaConfig:
    """Dimensions of the local and global style encoders."""

    d_style: int = 384
    n_mels: int = 80
    lse_kernel: int = 5
    lse_heads: int = 2
    gse_layers: int = 2
    gse_heads: int = 2
    ffn_hidden: int = 0  # 0 means 4 * d_style
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.ffn_hidden == 0:
            object.__setattr__(self, "ffn_hidden", 4 * self.d_style)
        if self.d_style % self.lse_heads or self.d_style % self.gse_heads:
            raise ConfigurationError("d_style must divide evenly over the heads")
        if self.lse_kernel % 2 == 0:
            raise ConfigurationError("lse_kernel must be odd")
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ConfigurationError("dropout_rate must be in [0, 1)")


@dataclass(frozen=True)
class LocalStyle:
    """One word-level style vector with the interval it came from."""

    vector: np.ndarray
    interval: WordInterval

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise ConfigurationError("local style must be a finite vector")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class GlobalStyle:
    """Utterance-level style vector conditioning the acoustic model."""

    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or not np.all(np.isfinite(vec)):
            raise ConfigurationError("global style must be a finite vector")
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class AttentionOverride:
    """Replacement row for every post-softmax GSE attention row."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ConfigurationError("override must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ConfigurationError("override weights must be finite and >= 0")
        if not np.any(w > 0):
            raise ConfigurationError("override needs at least one positive weight")
        object.__setattr__(self, "weights", w)


@dataclass
class AttentionRecord:
    """Effective GSE attention per layer, (heads, N, N), plus segment labels."""

    layers: List[np.ndarray] = field(default_factory=list)
    intervals: List[WordInterval] = field(default_factory=list)

    def aggregated_key_weights(self, layer: int = -1, head_mode: str = "mean") -> np.ndarray:
        """Per-segment attention mass: one layer, heads and queries reduced.

        ``head_mode`` is "mean" or an integer head index as a string.
        """
        if not self.layers:
            raise DegenerateInputError("attention record is empty")
        weights = self.layers[layer]
        if head_mode == "mean":
            weights = weights.mean(axis=0)
        else:
            weights = weights[int(head_mode)]
        return weights.mean(axis=0)

    def to_table_lines(self) -> List[str]:
        lines = []
        for layer_idx, layer in enumerate(self.layers):
            n_heads, n, _ = layer.shape
            for head in range(n_heads):
                for qi in range(n):
                    for ki in range(n):
                        lines.append(
                            f"{layer_idx}\t{head}\t{qi}\t{ki}\t{layer[head, qi, ki]:.8f}"
                        )
        return lines


# -- parameter construction ---------------------------------------------------------


def init_gsa_params(
    cfg: GsaConfig,
    rng: np.random.Generator,
    dtype=np.float32,
    ablation: str = "full",
    params: Optional[ParamTable] = None,
    prefix: str = "gsa",
) -> ParamTable:
    """Build the style-encoder parameter table for the chosen ablation."""
    if ablation not in ABLATIONS:
        raise ConfigurationError(f"unknown ablation {ablation!r}")
    if params is None:
        params = {}
    d = cfg.d_style
    if ablation == "no_lse":
        nn.add_affine(params, f"{prefix}.lse_proj", cfg.n_mels, d, rng, dtype)
    else:
        nn.add_affine(params, f"{prefix}.lse.spec1", cfg.n_mels, d, rng, dtype)
        nn.add_affine(params, f"{prefix}.lse.spec2", d, d, rng, dtype)
        nn.add_conv1d(params, f"{prefix}.lse.conv1", cfg.lse_kernel, d, 2 * d, rng, dtype)
        nn.add_conv1d(params, f"{prefix}.lse.conv2", cfg.lse_kernel, d, 2 * d, rng, dtype)
        nn.add_attention(params, f"{prefix}.lse.attn", d, rng, dtype)
    if ablation != "no_gse":
        for layer in range(cfg.gse_layers):
            base = f"{prefix}.gse.l{layer}"
            nn.add_attention(params, f"{base}.attn", d, rng, dtype)
            nn.add_layer_norm(params, f"{base}.ln1", d, dtype)
            nn.add_affine(params, f"{base}.ffn.in", d, cfg.ffn_hidden, rng, dtype)
            nn.add_affine(params, f"{base}.ffn.out", cfg.ffn_hidden, d, rng, dtype)
            nn.add_layer_norm(params, f"{base}.ln2", d, dtype)
    return params


# -- tape-level forward passes ---------------------------------------------------------


def lse_forward_t(
    frames: Tensor,
    params: ParamTable,
    cfg: GsaConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    prefix: str = "gsa",
) -> Tensor:
    """Local style vector (d_style,) from a segment's (L, n_mels) frames."""
    if frames.shape[1] != cfg.n_mels:
        raise ConfigurationError(
            f"segment has {frames.shape[1]} bands, config says {cfg.n_mels}"
        )
    x = nn.affine(frames, params, f"{prefix}.lse.spec1")
    x = tape.gelu(x)
    x = nn.affine(x, params, f"{prefix}.lse.spec2")

    for conv_name in ("conv1", "conv2"):
        gates = nn.conv1d(x, params, f"{prefix}.lse.{conv_name}")
        value = gates[:, : cfg.d_style]
        gate = gates[:, cfg.d_style :]
        branch = value * tape.sigmoid(gate)
        branch = nn.dropout(branch, cfg.dropout_rate, train, rng)
        x = x + branch

    attn_out, _ = nn.multi_head_attention(x, params, f"{prefix}.lse.attn", cfg.lse_heads)
    x = x + nn.dropout(attn_out, cfg.dropout_rate, train, rng)
    return tape.tmean(x, axis=0)


def lse_projection_t(frames: Tensor, params: ParamTable, prefix: str = "gsa") -> Tensor:
    """The no_lse ablation: one affine layer over the segment's temporal mean."""
    pooled = tape.tmean(frames, axis=0, keepdims=True)
    return tape.reshape(nn.affine(pooled, params, f"{prefix}.lse_proj"), (-1,))


def gse_forward_t(
    stacked: Tensor,
    params: ParamTable,
    cfg: GsaConfig,
    override: Optional[AttentionOverride] = None,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    prefix: str = "gsa",
) -> Tuple[Tensor, List[np.ndarray]]:
    """Global style from (N, d_style) local styles; returns attention per layer.

    No positional encoding is applied, so the encoder is permutation
    invariant up to floating-point reassociation. The returned vector is
    the pooled encoder output plus the mean of the input local styles.
    """
    n = stacked.shape[0]
    override_rows = None
    if override is not None:
        if override.weights.size != n:
            raise ConfigurationError(
                f"override length {override.weights.size} != {n} segments"
            )
        override_rows = override.weights

    mean_in = tape.tmean(stacked, axis=0)
    x = stacked
    attention = []
    for layer in range(cfg.gse_layers):
        base = f"{prefix}.gse.l{layer}"
        attn_out, weights = nn.multi_head_attention(
            x, params, f"{base}.attn", cfg.gse_heads, override_rows=override_rows
        )
        attention.append(weights)
        x = nn.layer_norm(x + nn.dropout(attn_out, cfg.dropout_rate, train, rng),
                          params, f"{base}.ln1")
        hidden = tape.gelu(nn.affine(x, params, f"{base}.ffn.in"))
        ffn_out = nn.affine(hidden, params, f"{base}.ffn.out")
        x = nn.layer_norm(x + nn.dropout(ffn_out, cfg.dropout_rate, train, rng),
                          params, f"{base}.ln2")

    pooled = tape.tmean(x, axis=0)
    return pooled + mean_in, attention


def encode_style_t(
    mel_frames: np.ndarray,
    intervals: Sequence[WordInterval],
    params: ParamTable,
    cfg: GsaConfig,
    override: Optional[AttentionOverride] = None,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    ablation: str = "full",
    min_segment_frames: int = 8,
    prefix: str = "gsa",
) -> Tuple[Tensor, List[Tensor], AttentionRecord]:
    """Tape-level gradual encoding: slice, LSE per segment, GSE over the stack."""
    if not intervals:
        raise DegenerateInputError("need at least one word interval")
    dtype = next(iter(params.values())).dtype
    segments = slice_frame_matrix(np.asarray(mel_frames), list(intervals), min_segment_frames)
    locals_t = []
    for segment in segments:
        frames = tape.constant(segment.mel.astype(dtype))
        if ablation == "no_lse":
            locals_t.append(lse_projection_t(frames, params, prefix))
        else:
            locals_t.append(lse_forward_t(frames, params, cfg, train, rng, prefix))

    stacked = tape.concat([tape.reshape(v, (1, cfg.d_style)) for v in locals_t], axis=0)
    record = AttentionRecord(intervals=[s.interval for s in segments])
    if ablation == "no_gse":
        global_t = tape.tmean(stacked, axis=0)
    else:
        global_t, attention = gse_forward_t(stacked, params, cfg, override, train, rng, prefix)
        record.layers = attention
    return global_t, locals_t, record


# -- public (evaluation-mode) API --------------------------------------------------------


def lse_forward(segment: StyleSegment, params: ParamTable, cfg: GsaConfig,
                prefix: str = "gsa") -> LocalStyle:
    """Evaluation-mode local style for one segment."""
    dtype = next(iter(params.values())).dtype
    frames = tape.constant(segment.mel.astype(dtype))
    out = lse_forward_t(frames, params, cfg, train=False, prefix=prefix)
    return LocalStyle(out.data, segment.interval)


def gse_forward(
    local_styles: Sequence[LocalStyle],
    params: ParamTable,
    cfg: GsaConfig,
    override: Optional[AttentionOverride] = None,
    prefix: str = "gsa",
) -> Tuple[GlobalStyle, AttentionRecord]:
    """Evaluation-mode global style over a sequence of local styles."""
    if not local_styles:
        raise DegenerateInputError("need at least one local style")
    dtype = next(iter(params.values())).dtype
    stacked = tape.constant(
        np.stack([ls.vector for ls in local_styles]).astype(dtype)
    )
    out, attention = gse_forward_t(stacked, params, cfg, override, train=False, prefix=prefix)
    record = AttentionRecord(layers=attention,
                             intervals=[ls.interval for ls in local_styles])
    return GlobalStyle(out.data), record


def encode_style(
    mel: MelSpectrogram,
    intervals: Sequence[WordInterval],
    params: ParamTable,
    cfg: GsaConfig,
    override: Optional[AttentionOverride] = None,
    ablation: str = "full",
    min_segment_frames: int = 8,
    prefix: str = "gsa",
) -> Tuple[GlobalStyle, List[LocalStyle], AttentionRecord]:
    """Evaluation-mode gradual style encoding of a reference mel."""
    global_t, locals_t, record = encode_style_t(
        mel.frames, intervals, params, cfg, override=override,
        train=False, ablation=ablation, min_segment_frames=min_segment_frames,
        prefix=prefix,
    )
    local_styles = [
        LocalStyle(v.data, iv) for v, iv in zip(locals_t, record.intervals)
    ]
    return GlobalStyle(global_t.data), local_styles, record


def mean_local_styles(local_styles: Sequence[LocalStyle]) -> np.ndarray:
    """Arithmetic mean of local style vectors."""
    if not local_styles:
        raise DegenerateInputError("need at least one local style")
    return np.mean([ls.vector for ls in local_styles], axis=0)
