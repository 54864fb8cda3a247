"""Losses, optimizer, schedule, deterministic training loop, checkpoints,
and the finite-difference gradient verification harness."""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import nn, tape
from .acoustic import (
    SYMBOLS,
    AcousticConfig,
    DurationSeq,
    PitchSeq,
    add_cln,
    add_fft_block,
    add_predictor,
    cln_t,
    fft_block_t,
    init_acoustic_params,
    predictor_t,
    synthesize_t,
)
from .audio import MelConfig
from .data import parse_manifest, prepare_corpus
from .errors import (
    CheckpointVersionError,
    ConfigurationError,
    DegenerateInputError,
    TrainingError,
)
from .formats import read_checkpoint_file, write_checkpoint_file
from .nn import ParamTable
from .segmentation import random_slice_segments
from .style_encoder import GsaConfig, encode_style_t, init_gsa_params
from .tape import Tensor

ABLATIONS = ("full", "no_gse", "no_lse", "random_slices")


@dataclass(frozen=True)
class TrainConfig:
    lr_scale: float = 1.0
    warmup_steps: int = 4000
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    batch_size: int = 8
    max_steps: int = 1000
    seed: int = 0
    loss_weights: Tuple[float, float, float] = (1.0, 0.1, 0.1)
    ablation: str = "full"
    grad_clip: float = 1.0
    checkpoint_interval: int = 500
    min_segment_frames: int = 8
    random_slice_min_frames: int = 40

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie in (0, 1)")
        if self.warmup_steps < 1:
            raise ConfigurationError("warmup_steps must be >= 1")
        if any(w < 0 for w in self.loss_weights):
            raise ConfigurationError("loss weights must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ConfigurationError(f"unknown ablation {self.ablation!r}")


@dataclass(frozen=True)
class LossReport:
    mel_loss: float
    pitch_loss: float
    dur_loss: float
    total: float
    step: int

    def __post_init__(self):
        values = (self.mel_loss, self.pitch_loss, self.dur_loss, self.total)
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise TrainingError(f"loss became non-finite or negative at step {self.step}")


# -- losses ---------------------------------------------------------------------


def total_loss(
    pred_mel: np.ndarray,
    gt_mel: np.ndarray,
    pred_pitch: np.ndarray,
    gt_pitch: np.ndarray,
    pred_logdur: np.ndarray,
    gt_logdur: np.ndarray,
    weights: Tuple[float, float, float] = (1.0, 0.1, 0.1),
    pad_mask: Optional[np.ndarray] = None,
    step: int = 0,
) -> LossReport:
    """Weighted MSE losses; pitch/duration average over non-pad symbols."""
    pred_mel = np.asarray(pred_mel, dtype=np.float64)
    gt_mel = np.asarray(gt_mel, dtype=np.float64)
    if pred_mel.shape != gt_mel.shape:
        raise ConfigurationError("mel shapes differ")
    pred_pitch = np.asarray(pred_pitch, dtype=np.float64)
    gt_pitch = np.asarray(gt_pitch, dtype=np.float64)
    pred_logdur = np.asarray(pred_logdur, dtype=np.float64)
    gt_logdur = np.asarray(gt_logdur, dtype=np.float64)
    if not (pred_pitch.shape == gt_pitch.shape == pred_logdur.shape == gt_logdur.shape):
        raise ConfigurationError("per-symbol sequence shapes differ")
    if pad_mask is None:
        pad_mask = np.ones(pred_pitch.shape, dtype=bool)
    if pad_mask.shape != pred_pitch.shape or not np.any(pad_mask):
        raise ConfigurationError("pad mask must match and select at least one symbol")

    mel_loss = float(np.mean((pred_mel - gt_mel) ** 2))
    pitch_loss = float(np.mean((pred_pitch[pad_mask] - gt_pitch[pad_mask]) ** 2))
    dur_loss = float(np.mean((pred_logdur[pad_mask] - gt_logdur[pad_mask]) ** 2))
    w_mel, w_pitch, w_dur = weights
    total = w_mel * mel_loss + w_pitch * pitch_loss + w_dur * dur_loss
    return LossReport(mel_loss, pitch_loss, dur_loss, total, step)


def noam_lr(step: int, d_model: int, warmup: int, scale: float = 1.0) -> float:
    """Inverse-sqrt schedule with a linear warmup ramp; peaks at ``warmup``."""
    if step < 1:
        raise ConfigurationError("schedule step must be >= 1")
    return scale * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


# -- optimizer -------------------------------------------------------------------


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    moments_m: Dict[str, np.ndarray],
    moments_v: Dict[str, np.ndarray],
    t: int,
    cfg: TrainConfig,
    lr: float,
) -> None:
    """In-place bias-corrected Adam update."""
    if t < 1:
        raise ConfigurationError("Adam step index must be >= 1")
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, value in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = moments_m[name]
        v = moments_v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * np.square(g)
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
        value -= lr * update


def clip_gradients(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(
        sum(float(np.sum(np.square(g.astype(np.float64)))) for g in grads.values())
    )
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


# -- checkpoints ------------------------------------------------------------------

_SYMBOL_SEPARATOR = "\x1f"


def _config_lines(ckpt: "Checkpoint") -> List[str]:
    lines = [f"step={ckpt.step}"]
    lines.append("symbols=" + _SYMBOL_SEPARATOR.join(ckpt.symbols))
    lines.append(f"pitch_mean={ckpt.pitch_mean!r}")
    lines.append(f"pitch_std={ckpt.pitch_std!r}")
    for section, cfg in (
        ("train", ckpt.train_config),
        ("mel", ckpt.mel_config),
        ("gsa", ckpt.gsa_config),
        ("ac", ckpt.acoustic_config),
    ):
        for f in dataclasses.fields(cfg):
            value = getattr(cfg, f.name)
            if isinstance(value, tuple):
                text = ",".join(repr(v) for v in value)
            else:
                text = repr(value)
            lines.append(f"{section}.{f.name}={text}")
    return lines


def _parse_config_lines(lines: List[str]):
    table: Dict[str, str] = {}
    for line in lines:
        key, _, value = line.partition("=")
        table[key] = value

    def build(section: str, cls):
        kwargs = {}
        for f in dataclasses.fields(cls):
            raw = table.get(f"{section}.{f.name}")
            if raw is None:
                continue
            if f.name == "loss_weights":
                kwargs[f.name] = tuple(float(v) for v in raw.split(","))
            elif f.type in ("int",):
                kwargs[f.name] = int(raw)
            elif f.type in ("float",):
                kwargs[f.name] = float(raw)
            elif f.type in ("str",):
                kwargs[f.name] = raw.strip("'\"")
            else:
                raise CheckpointVersionError(
                    f"cannot parse config field {section}.{f.name} of type {f.type}"
                )
        return cls(**kwargs)

    step = int(table["step"])
    symbols = tuple(table["symbols"].split(_SYMBOL_SEPARATOR))
    pitch_mean = float(table["pitch_mean"])
    pitch_std = float(table["pitch_std"])
    train_cfg = build("train", TrainConfig)
    mel_cfg = build("mel", MelConfig)
    gsa_cfg = build("gsa", GsaConfig)
    ac_cfg = build("ac", AcousticConfig)
    return step, symbols, pitch_mean, pitch_std, train_cfg, mel_cfg, gsa_cfg, ac_cfg


@dataclass
class Checkpoint:
    """Flat named-tensor table plus optimizer state and config snapshot."""

    params: Dict[str, np.ndarray]
    adam_m: Dict[str, np.ndarray]
    adam_v: Dict[str, np.ndarray]
    step: int
    train_config: TrainConfig
    mel_config: MelConfig
    gsa_config: GsaConfig
    acoustic_config: AcousticConfig
    symbols: Tuple[str, ...] = tuple(SYMBOLS)
    pitch_mean: float = 0.0
    pitch_std: float = 1.0

    def save(self, path) -> None:
        tensors: Dict[str, np.ndarray] = {}
        for name, value in self.params.items():
            tensors[f"param.{name}"] = value
        for name, value in self.adam_m.items():
            tensors[f"adam_m.{name}"] = value
        for name, value in self.adam_v.items():
            tensors[f"adam_v.{name}"] = value
        write_checkpoint_file(path, tensors, _config_lines(self))

    @classmethod
    def load(cls, path) -> "Checkpoint":
        tensors, lines = read_checkpoint_file(path)
        (step, symbols, pitch_mean, pitch_std,
         train_cfg, mel_cfg, gsa_cfg, ac_cfg) = _parse_config_lines(lines)
        if symbols != tuple(SYMBOLS):
            raise CheckpointVersionError(
                f"{path}: checkpoint symbol inventory does not match this build"
            )
        params, adam_m, adam_v = {}, {}, {}
        for name, value in tensors.items():
            value = value.astype(np.float32)
            if name.startswith("param."):
                params[name[len("param."):]] = value
            elif name.startswith("adam_m."):
                adam_m[name[len("adam_m."):]] = value
            elif name.startswith("adam_v."):
                adam_v[name[len("adam_v."):]] = value
        return cls(params, adam_m, adam_v, step, train_cfg, mel_cfg, gsa_cfg,
                   ac_cfg, symbols, pitch_mean, pitch_std)

    def to_param_table(self, dtype=np.float32) -> ParamTable:
        return {name: tape.parameter(value.astype(dtype)) for name, value in self.params.items()}


# -- model assembly -----------------------------------------------------------------


def arch_ablation(ablation: str) -> str:
    """The architecture variant for a training ablation mode."""
    return ablation if ablation in ("no_gse", "no_lse") else "full"


def init_model_params(
    gsa_cfg: GsaConfig,
    ac_cfg: AcousticConfig,
    rng: np.random.Generator,
    dtype=np.float32,
    ablation: str = "full",
) -> ParamTable:
    if gsa_cfg.d_style != ac_cfg.d_style:
        raise ConfigurationError("style dimensions of the two configs differ")
    params: ParamTable = {}
    init_gsa_params(gsa_cfg, rng, dtype, arch_ablation(ablation), params)
    init_acoustic_params(ac_cfg, rng, dtype, params)
    return params


# -- training loop -------------------------------------------------------------------


def train(
    manifest_path,
    train_cfg: TrainConfig,
    mel_cfg: Optional[MelConfig] = None,
    gsa_cfg: Optional[GsaConfig] = None,
    ac_cfg: Optional[AcousticConfig] = None,
    outdir: Optional[str] = None,
    progress: Optional[Callable[[LossReport], None]] = None,
) -> Tuple[Checkpoint, List[LossReport]]:
    """Deterministic teacher-forced training on a manifest.

    The style reference for each utterance is the utterance's own mel.
    Two runs with the same seed produce bit-identical checkpoints.
    """
    mel_cfg = mel_cfg or MelConfig()
    gsa_cfg = gsa_cfg or GsaConfig(n_mels=mel_cfg.n_mels)
    ac_cfg = ac_cfg or AcousticConfig(n_mels=mel_cfg.n_mels)
    if gsa_cfg.n_mels != mel_cfg.n_mels or ac_cfg.n_mels != mel_cfg.n_mels:
        raise ConfigurationError("mel band counts disagree across configs")

    entries = parse_manifest(manifest_path)
    if not entries:
        raise DegenerateInputError(f"{manifest_path}: empty manifest")
    utterances, pitch_mean, pitch_std = prepare_corpus(entries, mel_cfg)

    seed_seq = np.random.SeedSequence(train_cfg.seed)
    init_ss, loop_ss = seed_seq.spawn(2)
    params = init_model_params(
        gsa_cfg, ac_cfg, np.random.Generator(np.random.PCG64(init_ss)),
        np.float32, train_cfg.ablation,
    )
    loop_rng = np.random.Generator(np.random.PCG64(loop_ss))

    data_arrays = {name: p.data for name, p in params.items()}
    adam_m = {name: np.zeros_like(v) for name, v in data_arrays.items()}
    adam_v = {name: np.zeros_like(v) for name, v in data_arrays.items()}

    weights = train_cfg.loss_weights
    model_ablation = arch_ablation(train_cfg.ablation)
    reports: List[LossReport] = []
    queue: List[int] = []

    def save_checkpoint(step: int, name: str) -> None:
        if outdir is None:
            return
        snapshot = Checkpoint(
            params={k: v.copy() for k, v in data_arrays.items()},
            adam_m={k: v.copy() for k, v in adam_m.items()},
            adam_v={k: v.copy() for k, v in adam_v.items()},
            step=step,
            train_config=train_cfg,
            mel_config=mel_cfg,
            gsa_config=gsa_cfg,
            acoustic_config=ac_cfg,
            pitch_mean=pitch_mean,
            pitch_std=pitch_std,
        )
        snapshot.save(os.path.join(outdir, name))

    for step in range(train_cfg.max_steps):
        while len(queue) < train_cfg.batch_size:
            queue.extend(loop_rng.permutation(len(utterances)).tolist())
        batch = [queue.pop(0) for _ in range(train_cfg.batch_size)]

        nn.zero_grads(params)
        utt_losses = []
        mel_vals, pitch_vals, dur_vals = [], [], []
        for position, utt_idx in enumerate(batch):
            utt = utterances[utt_idx]
            if train_cfg.ablation == "random_slices":
                slice_seed = (train_cfg.seed * 1000003 + step * 8191 + position) & 0x7FFFFFFF
                slices = random_slice_segments(
                    utt.mel, train_cfg.random_slice_min_frames, slice_seed
                )
                intervals = [s.interval for s in slices]
            else:
                intervals = utt.intervals

            style_t, _, _ = encode_style_t(
                utt.mel.frames, intervals, params, gsa_cfg,
                train=True, rng=loop_rng, ablation=model_ablation,
                min_segment_frames=train_cfg.min_segment_frames,
            )
            mel_t, pitch_t, dur_t, _ = synthesize_t(
                utt.text.symbol_ids, style_t, params, ac_cfg,
                teacher=(utt.durations, utt.pitch), train=True, rng=loop_rng,
            )

            gt_mel = tape.constant(utt.mel.frames.astype(np.float32))
            gt_pitch = tape.constant(utt.pitch.f0_per_symbol.astype(np.float32))
            gt_logdur = tape.constant(
                np.log(utt.durations.frames_per_symbol + 1.0).astype(np.float32)
            )
            diff_mel = mel_t - gt_mel
            mel_loss = tape.tmean(diff_mel * diff_mel)
            diff_pitch = pitch_t - gt_pitch
            pitch_loss = tape.tmean(diff_pitch * diff_pitch)
            diff_dur = dur_t - gt_logdur
            dur_loss = tape.tmean(diff_dur * diff_dur)
            utt_losses.append(
                mel_loss * weights[0] + pitch_loss * weights[1] + dur_loss * weights[2]
            )
            mel_vals.append(float(mel_loss.data))
            pitch_vals.append(float(pitch_loss.data))
            dur_vals.append(float(dur_loss.data))

        batch_loss = utt_losses[0]
        for extra in utt_losses[1:]:
            batch_loss = batch_loss + extra
        batch_loss = batch_loss * (1.0 / len(utt_losses))
        batch_loss.backward()

        grads = nn.collect_grads(params)
        clip_gradients(grads, train_cfg.grad_clip)
        lr = noam_lr(step + 1, ac_cfg.d_model, train_cfg.warmup_steps, train_cfg.lr_scale)
        adam_step(data_arrays, grads, adam_m, adam_v, step + 1, train_cfg, lr)

        report = LossReport(
            mel_loss=float(np.mean(mel_vals)),
            pitch_loss=float(np.mean(pitch_vals)),
            dur_loss=float(np.mean(dur_vals)),
            total=float(batch_loss.data),
            step=step + 1,
        )
        reports.append(report)
        if progress is not None:
            progress(report)
        if train_cfg.checkpoint_interval > 0 and (step + 1) % train_cfg.checkpoint_interval == 0:
            save_checkpoint(step + 1, f"checkpoint_step{step + 1}.gsackpt")

    final = Checkpoint(
        params={k: v.copy() for k, v in data_arrays.items()},
        adam_m={k: v.copy() for k, v in adam_m.items()},
        adam_v={k: v.copy() for k, v in adam_v.items()},
        step=train_cfg.max_steps,
        train_config=train_cfg,
        mel_config=mel_cfg,
        gsa_config=gsa_cfg,
        acoustic_config=ac_cfg,
        pitch_mean=pitch_mean,
        pitch_std=pitch_std,
    )
    if outdir is not None:
        save_checkpoint(train_cfg.max_steps, "checkpoint_final.gsackpt")
    return final, reports


# -- gradient verification ---------------------------------------------------------------


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(|a|, |n|, 1e-8), elementwise."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_gradient_elements(
    loss_fn: Callable[[], Tensor],
    param: Tensor,
    flat_indices: Sequence[int],
    eps: float,
) -> np.ndarray:
    """Central finite differences of the loss for chosen parameter elements."""
    flat = param.data.reshape(-1)
    out = np.empty(len(flat_indices), dtype=np.float64)
    for pos, idx in enumerate(flat_indices):
        saved = flat[idx]
        flat[idx] = saved + eps
        f_plus = float(loss_fn().data)
        flat[idx] = saved - eps
        f_minus = float(loss_fn().data)
        flat[idx] = saved
        out[pos] = (f_plus - f_minus) / (2.0 * eps)
    return out


@dataclass
class GradCheckReport:
    component: str
    per_parameter: Dict[str, float]
    max_error: float = field(init=False)

    def __post_init__(self):
        self.max_error = max(self.per_parameter.values()) if self.per_parameter else 0.0


def _projection_loss(outputs: Sequence[Tensor], rng: np.random.Generator) -> Tensor:
    """Deterministic scalar from arbitrary outputs via fixed random weights.

    The 0.002 scale keeps the loss magnitude around 1e-2 so that central
    finite differences at eps=1e-5 resolve even near-zero gradient
    elements below the relative-error formula's 1e-8 denominator floor.
    """
    total = None
    for out in outputs:
        weights = tape.constant(rng.standard_normal(out.shape) * 0.002)
        term = tape.tsum(out * weights)
        total = term if total is None else total + term
    return total


def _component_setup(component: str, seed: int):
    """Tiny float64 instance of one model component: (params, loss_fn)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dtype = np.float64

    if component == "affine":
        params: ParamTable = {}
        nn.add_affine(params, "probe", 4, 3, rng, dtype)
        x = tape.constant(rng.standard_normal((5, 4)))
        return params, lambda: _projection_loss(
            [nn.affine(x, params, "probe")],
            np.random.Generator(np.random.PCG64(seed + 1)),
        )

    if component == "cln":
        params = {}
        add_cln(params, "probe", 5, 6, rng, dtype)
        x = tape.constant(rng.standard_normal((4, 6)))
        style = tape.parameter(rng.standard_normal(5))
        params["probe.style"] = style
        return params, lambda: _projection_loss(
            [cln_t(x, style, params, "probe")],
            np.random.Generator(np.random.PCG64(seed + 1)),
        )

    if component == "lse":
        cfg = GsaConfig(d_style=16, n_mels=6, lse_kernel=3, lse_heads=2,
                        gse_layers=1, gse_heads=2, ffn_hidden=24, dropout_rate=0.0)
        params = init_gsa_params(cfg, rng, dtype)
        x = tape.constant(rng.standard_normal((7, 6)))
        from .style_encoder import lse_forward_t

        keep = {k: v for k, v in params.items() if k.startswith("gsa.lse.")}
        return keep, lambda: _projection_loss(
            [lse_forward_t(x, params, cfg)],
            np.random.Generator(np.random.PCG64(seed + 1)),
        )

    if component == "gse":
        cfg = GsaConfig(d_style=16, n_mels=6, lse_kernel=3, lse_heads=2,
                        gse_layers=2, gse_heads=2, ffn_hidden=24, dropout_rate=0.0)
        params = init_gsa_params(cfg, rng, dtype)
        stacked = tape.constant(rng.standard_normal((4, 16)))
        from .style_encoder import gse_forward_t

        keep = {k: v for k, v in params.items() if k.startswith("gsa.gse.")}
        return keep, lambda: _projection_loss(
            [gse_forward_t(stacked, params, cfg)[0]],
            np.random.Generator(np.random.PCG64(seed + 1)),
        )

    if component == "fft_block":
        cfg = AcousticConfig(d_model=16, n_enc_blocks=1, n_dec_blocks=1,
                             conv_kernel=3, n_heads=2, n_mels=8, d_style=12,
                             ffn_hidden=24, dropout_rate=0.0)
        params = {}
        add_fft_block(params, "probe", cfg, rng, dtype)
        x = tape.constant(rng.standard_normal((5, 16)))
        style = tape.parameter(rng.standard_normal(12))
        params["probe.style"] = style
        return params, lambda: _projection_loss(
            [fft_block_t(x, style, params, "probe", cfg)],
            np.random.Generator(np.random.PCG64(seed + 1)),
        )

    if component in ("pitch_predictor", "duration_predictor"):
        params = {}
        add_predictor(params, "probe", 16, rng, dtype)
        x = tape.constant(rng.standard_normal((5, 16)))
        return params, lambda: _projection_loss(
            [predictor_t(x, params, "probe", 0.0)],
            np.random.Generator(np.random.PCG64(seed + 1)),
        )

    if component == "acoustic":
        cfg = AcousticConfig(d_model=12, n_enc_blocks=1, n_dec_blocks=1,
                             conv_kernel=3, n_heads=2, n_mels=6, d_style=12,
                             ffn_hidden=16, dropout_rate=0.0)
        params = init_acoustic_params(cfg, rng, dtype)
        ids = np.array([5, 9, 2, 37], dtype=np.int64)
        durations = DurationSeq(np.array([2, 1, 3, 2]))
        pitch = PitchSeq(rng.standard_normal(4))
        style = tape.parameter(rng.standard_normal(12))
        params["ac.style"] = style

        def loss_fn():
            mel_t, pitch_t, dur_t, _ = synthesize_t(
                ids, style, params, cfg, teacher=(durations, pitch)
            )
            return _projection_loss(
                [mel_t, pitch_t, dur_t], np.random.Generator(np.random.PCG64(seed + 1))
            )

        return params, loss_fn

    raise ConfigurationError(f"unknown gradient-check component {component!r}")


def grad_check(
    component: str,
    seed: int = 0,
    eps: float = 1e-5,
    sample_fraction: Optional[float] = None,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    Runs a tiny float64 instance of the component; with
    ``sample_fraction`` only a seeded random subset of each parameter's
    elements is checked (used for the end-to-end model).
    """
    params, loss_fn = _component_setup(component, seed)
    nn.zero_grads(params)
    loss_fn().backward()
    analytic = {
        name: (p.grad if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }

    pick_rng = np.random.Generator(np.random.PCG64(seed + 2))
    per_parameter: Dict[str, float] = {}
    for name, p in params.items():
        size = p.data.size
        if sample_fraction is not None and sample_fraction < 1.0:
            count = max(1, int(math.ceil(size * sample_fraction)))
            indices = pick_rng.choice(size, size=min(count, size), replace=False)
        else:
            indices = np.arange(size)
        numeric = numeric_gradient_elements(loss_fn, p, indices.tolist(), eps)
        per_parameter[name] = relative_error(
            analytic[name].reshape(-1)[indices], numeric
        )
    return GradCheckReport(component, per_parameter)
