"""Non-autoregressive acoustic model conditioned on a global style vector.

Character-level text encoder and mel decoder built from feed-forward
Transformer blocks whose normalization sites are conditional: the scale
and bias of each layer norm are linear projections of the style vector.
Pitch and duration predictors run on the encoder output; length
regulation expands symbols to frames using ground-truth durations during
training and rounded predictions at inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import nn, tape
from .audio import MelConfig, MelSpectrogram
from .errors import (
    ConfigurationError,
    DataError,
    DegenerateInputError,
    DegenerateOutputError,
)
from .nn import ParamTable
from .style_encoder import GlobalStyle
from .tape import Tensor

PAD_SYMBOL = "<pad>"
SYMBOLS: Tuple[str, ...] = (
    (PAD_SYMBOL,)
    + tuple("abcdefghijklmnopqrstuvwxyz")
    + tuple("0123456789")
    + (" ", ".", ",", "!", "?", "'", "-", ":", ";")
)
SYMBOL_TO_ID = {s: i for i, s in enumerate(SYMBOLS)}
PAD_ID = 0


@dataclass(frozen=True)
class TextSequence:
    """Symbol id sequence over the fixed character inventory."""

    symbol_ids: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.symbol_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size < 1:
            raise DegenerateInputError("text sequence must hold at least one symbol")
        if np.any(ids < 0) or np.any(ids >= len(SYMBOLS)):
            raise DataError("symbol id outside the inventory")
        object.__setattr__(self, "symbol_ids", ids)

    @classmethod
    def from_text(cls, text: str) -> "TextSequence":
        ids = []
        for ch in text.lower():
            if ch not in SYMBOL_TO_ID:
                raise DataError(f"character {ch!r} is not in the symbol inventory")
            ids.append(SYMBOL_TO_ID[ch])
        if not ids:
            raise DegenerateInputError("text is empty")
        return cls(np.asarray(ids, dtype=np.int64))

    @property
    def n_symbols(self) -> int:
        return self.symbol_ids.size

    def pad_mask(self) -> np.ndarray:
        """True where the symbol is real (not padding)."""
        return self.symbol_ids != PAD_ID


@dataclass(frozen=True)
class DurationSeq:
    """Frames per symbol; the sum is the target mel length."""

    frames_per_symbol: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.frames_per_symbol, dtype=np.int64)
        if d.ndim != 1 or d.size < 1:
            raise DegenerateInputError("duration sequence is empty")
        if np.any(d < 0):
            raise DataError("durations must be non-negative")
        if d.sum() < 1:
            raise DegenerateInputError("durations sum to zero")
        object.__setattr__(self, "frames_per_symbol", d)

    @property
    def total_frames(self) -> int:
        return int(self.frames_per_symbol.sum())


@dataclass(frozen=True)
class PitchSeq:
    """Normalized log-F0 per symbol, 0 where unvoiced or padding."""

    f0_per_symbol: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.f0_per_symbol, dtype=np.float64)
        if p.ndim != 1 or not np.all(np.isfinite(p)):
            raise DataError("pitch sequence must be a finite vector")
        object.__setattr__(self, "f0_per_symbol", p)


@dataclass(frozen=True)
class AcousticConfig:
    """Dimensions of the encoder/decoder stack."""

    d_model: int = 384
    n_enc_blocks: int = 4
    n_dec_blocks: int = 4
    conv_kernel: int = 3
    n_heads: int = 2
    n_mels: int = 80
    d_style: int = 384
    ffn_hidden: int = 0  # 0 means 4 * d_model
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.ffn_hidden == 0:
            object.__setattr__(self, "ffn_hidden", 4 * self.d_model)
        if self.d_model % self.n_heads:
            raise ConfigurationError("d_model must divide evenly over the heads")
        if self.conv_kernel % 2 == 0:
            raise ConfigurationError("conv_kernel must be odd")


# -- conditional layer normalization ------------------------------------------------


def add_cln(params: ParamTable, prefix: str, d_style: int, d_model: int,
            rng: np.random.Generator, dtype) -> None:
    params[f"{prefix}.e_gamma"] = tape.parameter(
        nn.xavier_uniform(rng, (d_style, d_model), d_style, d_model, dtype)
    )
    params[f"{prefix}.e_beta"] = tape.parameter(
        nn.xavier_uniform(rng, (d_style, d_model), d_style, d_model, dtype)
    )


def cln_t(x: Tensor, style: Tensor, params: ParamTable, prefix: str,
          eps: float = 1e-5) -> Tensor:
    """Row-normalize x, then scale/shift with projections of the style vector."""
    gamma = style @ params[f"{prefix}.e_gamma"]
    beta = style @ params[f"{prefix}.e_beta"]
    return nn.normalize_rows(x, eps) * gamma + beta


def cln(x: np.ndarray, style: GlobalStyle, e_gamma: np.ndarray,
        e_beta: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Numpy-facing conditional layer norm over the rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    w = style.vector
    if e_gamma.shape != (w.size, x.shape[1]) or e_beta.shape != e_gamma.shape:
        raise ConfigurationError("projection shapes do not match style/model dims")
    params = {"cln.e_gamma": tape.constant(e_gamma), "cln.e_beta": tape.constant(e_beta)}
    out = cln_t(tape.constant(x), tape.constant(w), params, "cln", eps)
    return out.data


# -- transformer block -----------------------------------------------------------------


def add_fft_block(params: ParamTable, prefix: str, cfg: AcousticConfig,
                  rng: np.random.Generator, dtype) -> None:
    add_cln(params, f"{prefix}.cln1", cfg.d_style, cfg.d_model, rng, dtype)
    nn.add_attention(params, f"{prefix}.attn", cfg.d_model, rng, dtype)
    add_cln(params, f"{prefix}.cln2", cfg.d_style, cfg.d_model, rng, dtype)
    nn.add_conv1d(params, f"{prefix}.conv1", cfg.conv_kernel, cfg.d_model,
                  cfg.ffn_hidden, rng, dtype)
    nn.add_conv1d(params, f"{prefix}.conv2", cfg.conv_kernel, cfg.ffn_hidden,
                  cfg.d_model, rng, dtype)


def fft_block_t(
    x: Tensor,
    style: Tensor,
    params: ParamTable,
    prefix: str,
    cfg: AcousticConfig,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Pre-norm feed-forward Transformer block with conditional normalization."""
    attn_in = cln_t(x, style, params, f"{prefix}.cln1")
    attn_out, _ = nn.multi_head_attention(attn_in, params, f"{prefix}.attn", cfg.n_heads)
    x = x + nn.dropout(attn_out, cfg.dropout_rate, train, rng)

    ffn_in = cln_t(x, style, params, f"{prefix}.cln2")
    hidden = tape.gelu(nn.conv1d(ffn_in, params, f"{prefix}.conv1"))
    ffn_out = nn.conv1d(hidden, params, f"{prefix}.conv2")
    return x + nn.dropout(ffn_out, cfg.dropout_rate, train, rng)


# -- variance predictors -----------------------------------------------------------------

PREDICTOR_KERNEL = 3


def add_predictor(params: ParamTable, prefix: str, d_model: int,
                  rng: np.random.Generator, dtype) -> None:
    nn.add_conv1d(params, f"{prefix}.conv1", PREDICTOR_KERNEL, d_model, d_model, rng, dtype)
    nn.add_layer_norm(params, f"{prefix}.ln1", d_model, dtype)
    nn.add_conv1d(params, f"{prefix}.conv2", PREDICTOR_KERNEL, d_model, d_model, rng, dtype)
    nn.add_layer_norm(params, f"{prefix}.ln2", d_model, dtype)
    nn.add_affine(params, f"{prefix}.out", d_model, 1, rng, dtype)


def predictor_t(
    x: Tensor,
    params: ParamTable,
    prefix: str,
    dropout_rate: float,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Scalar-per-symbol head: two convs with layer norm, then an affine."""
    h = tape.gelu(nn.conv1d(x, params, f"{prefix}.conv1"))
    h = nn.dropout(nn.layer_norm(h, params, f"{prefix}.ln1"), dropout_rate, train, rng)
    h = tape.gelu(nn.conv1d(h, params, f"{prefix}.conv2"))
    h = nn.dropout(nn.layer_norm(h, params, f"{prefix}.ln2"), dropout_rate, train, rng)
    return tape.reshape(nn.affine(h, params, f"{prefix}.out"), (-1,))


def predict_pitch(h: np.ndarray, params: ParamTable, prefix: str = "ac.pitch") -> np.ndarray:
    return predictor_t(tape.constant(h), params, prefix, 0.0).data


def predict_duration(h: np.ndarray, params: ParamTable, prefix: str = "ac.dur") -> np.ndarray:
    return predictor_t(tape.constant(h), params, prefix, 0.0).data


def durations_from_log(log_durations: np.ndarray, symbol_ids: np.ndarray) -> np.ndarray:
    """Inference rounding: exp(x) - 1, round half to even, >= 1 for non-pad."""
    with np.errstate(over="ignore"):
        raw = np.exp(np.asarray(log_durations, dtype=np.float64)) - 1.0
    if not np.all(np.isfinite(raw)):
        raise DegenerateOutputError("duration prediction overflowed")
    rounded = np.round(raw).astype(np.int64)
    non_pad = np.asarray(symbol_ids) != PAD_ID
    rounded = np.where(non_pad, np.maximum(rounded, 1), 0)
    return rounded


# -- length regulation ----------------------------------------------------------------------


def length_regulate(hidden: np.ndarray, durations: DurationSeq) -> np.ndarray:
    """Repeat row i of ``hidden`` durations[i] times."""
    d = durations.frames_per_symbol
    if d.size != hidden.shape[0]:
        raise ConfigurationError("durations do not match the symbol count")
    return np.repeat(hidden, d, axis=0)


def length_regulate_t(hidden: Tensor, durations: np.ndarray) -> Tensor:
    d = np.asarray(durations, dtype=np.int64)
    if np.any(d < 0) or d.sum() < 1:
        raise DegenerateInputError("durations must be non-negative with positive sum")
    if d.size != hidden.shape[0]:
        raise ConfigurationError("durations do not match the symbol count")
    return tape.repeat_rows(hidden, d)


# -- whole model ----------------------------------------------------------------------------


def init_acoustic_params(
    cfg: AcousticConfig,
    rng: np.random.Generator,
    dtype=np.float32,
    params: Optional[ParamTable] = None,
    prefix: str = "ac",
) -> ParamTable:
    """Build the acoustic-model parameter table."""
    if params is None:
        params = {}
    d = cfg.d_model
    params[f"{prefix}.emb.table"] = tape.parameter(
        nn.xavier_uniform(rng, (len(SYMBOLS), d), len(SYMBOLS), d, dtype)
    )
    for i in range(cfg.n_enc_blocks):
        add_fft_block(params, f"{prefix}.enc.b{i}", cfg, rng, dtype)
    for i in range(cfg.n_dec_blocks):
        add_fft_block(params, f"{prefix}.dec.b{i}", cfg, rng, dtype)
    add_predictor(params, f"{prefix}.pitch", d, rng, dtype)
    add_predictor(params, f"{prefix}.dur", d, rng, dtype)
    nn.add_conv1d(params, f"{prefix}.pitch_emb", PREDICTOR_KERNEL, 1, d, rng, dtype)
    nn.add_affine(params, f"{prefix}.out", d, cfg.n_mels, rng, dtype)
    return params


def synthesize_t(
    symbol_ids: np.ndarray,
    style: Tensor,
    params: ParamTable,
    cfg: AcousticConfig,
    teacher: Optional[Tuple[DurationSeq, PitchSeq]] = None,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
    prefix: str = "ac",
) -> Tuple[Tensor, Tensor, Tensor, np.ndarray]:
    """Tape-level synthesis.

    Returns (mel frames (T, n_mels), pitch predictions (S,), log-duration
    predictions (S,), durations actually used (S,)).
    """
    ids = np.asarray(symbol_ids, dtype=np.int64)
    dtype = next(iter(params.values())).dtype

    x = tape.gather_rows(params[f"{prefix}.emb.table"], ids)
    x = x + tape.constant(nn.sinusoidal_positions(ids.size, cfg.d_model, dtype))
    for i in range(cfg.n_enc_blocks):
        x = fft_block_t(x, style, params, f"{prefix}.enc.b{i}", cfg, train, rng)

    pitch_pred = predictor_t(x, params, f"{prefix}.pitch", cfg.dropout_rate, train, rng)
    dur_pred = predictor_t(x, params, f"{prefix}.dur", cfg.dropout_rate, train, rng)

    if teacher is not None:
        durations_used = teacher[0].frames_per_symbol
        pitch_used: Tensor = tape.constant(teacher[1].f0_per_symbol.astype(dtype))
    else:
        durations_used = durations_from_log(dur_pred.data, ids)
        if durations_used.sum() < 1:
            raise DegenerateOutputError("predicted durations collapsed to zero frames")
        pitch_used = pitch_pred

    pitch_col = tape.reshape(pitch_used, (-1, 1))
    pitch_emb = tape.conv1d_same(
        pitch_col, params[f"{prefix}.pitch_emb.w"], params[f"{prefix}.pitch_emb.b"]
    )
    x = x + pitch_emb

    y = length_regulate_t(x, durations_used)
    for i in range(cfg.n_dec_blocks):
        y = fft_block_t(y, style, params, f"{prefix}.dec.b{i}", cfg, train, rng)
    mel = nn.affine(y, params, f"{prefix}.out")
    return mel, pitch_pred, dur_pred, durations_used


def synthesize_mel(
    text: TextSequence,
    style: GlobalStyle,
    params: ParamTable,
    cfg: AcousticConfig,
    teacher: Optional[Tuple[DurationSeq, PitchSeq]] = None,
    mel_config: Optional[MelConfig] = None,
    prefix: str = "ac",
) -> Tuple[MelSpectrogram, np.ndarray, np.ndarray]:
    """Evaluation-mode synthesis returning a MelSpectrogram.

    Frames are clamped at ln(log_floor) so the result honors the mel
    invariant; the raw tape output is available through synthesize_t.
    """
    dtype = next(iter(params.values())).dtype
    style_t = tape.constant(style.vector.astype(dtype))
    mel_t, pitch_pred, dur_pred, _ = synthesize_t(
        text.symbol_ids, style_t, params, cfg, teacher=teacher, train=False, prefix=prefix
    )
    if mel_config is None:
        mel_config = MelConfig(n_mels=cfg.n_mels)
    elif mel_config.n_mels != cfg.n_mels:
        raise ConfigurationError("mel_config bands do not match the model")
    frames = np.maximum(mel_t.data.astype(np.float64), math.log(mel_config.log_floor))
    return MelSpectrogram(frames, mel_config), pitch_pred.data, dur_pred.data
