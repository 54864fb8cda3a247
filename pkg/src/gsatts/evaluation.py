"""Objective metrics and controllability analytics.

Edit-distance word/character error rates, speaker-embedding cosine
similarity, voiced-frame ratios per part-of-speech tag, attention
statistics over style segments, and the attention-override experiment.

The reference values below were measured on a full-scale multi-GPU
training run and are documented for context only; they are not
reproducible with the desk-scale corpora this package targets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .acoustic import synthesize_mel
from .audio import (
    AudioClip,
    FrameAnalysis,
    MelConfig,
    analyze_frames,
    griffin_lim_invert,
    mel_spectrogram,
)
from .data import PreparedUtterance
from .errors import ConfigurationError, DegenerateInputError
from .formats import read_embedding, write_embedding
from .segmentation import POS_TAGS, WordInterval
from .style_encoder import AttentionOverride, AttentionRecord, encode_style

# Full-scale reference statistics (context only; see module docstring).
FULL_SCALE_POS_ATTENTION_REFERENCE = {
    "NOUN": 0.337,
    "ADJ": 0.323,
    "VERB": 0.228,
    "ETC": 0.113,
}
FULL_SCALE_VOICED_RATIO_REFERENCE = {
    "VERB": 0.7345,
    "ADJ": 0.6573,
    "NOUN": 0.5972,
    "ETC": 0.5468,
}
FULL_SCALE_ADJ_OVERRIDE_REFERENCE = {"wer_delta": -0.45, "secs": 0.790}


# -- edit distance ------------------------------------------------------------------


def edit_distance(ref: Sequence, hyp: Sequence) -> Tuple[int, int, int, int]:
    """Levenshtein distance with unit costs and a deterministic backtrace.

    Returns (distance, substitutions, insertions, deletions); backtrace
    ties prefer substitution, then deletion, then insertion.
    """
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            same = ref[i - 1] == hyp[j - 1]
            dist[i, j] = min(
                dist[i - 1, j - 1] + (0 if same else 1),
                dist[i - 1, j] + 1,
                dist[i, j - 1] + 1,
            )

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i, j] == dist[i - 1, j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + 1:
            subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return int(dist[n, m]), subs, ins, dels


_PUNCT_RE = re.compile(r"[^a-z0-9\s]")
_SPACE_RE = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Lowercase, punctuation to spaces, whitespace collapsed."""
    return _SPACE_RE.sub(" ", _PUNCT_RE.sub(" ", text.lower())).strip()


def wer(ref: str, hyp: str) -> float:
    """Word error rate in percent over normalized word tokens."""
    ref_tokens = normalize_text(ref).split()
    if not ref_tokens:
        raise DegenerateInputError("reference text is empty after normalization")
    hyp_tokens = normalize_text(hyp).split()
    distance, _, _, _ = edit_distance(ref_tokens, hyp_tokens)
    return 100.0 * distance / len(ref_tokens)


def cer(ref: str, hyp: str) -> float:
    """Character error rate in percent, spaces included."""
    ref_chars = list(normalize_text(ref))
    if not ref_chars:
        raise DegenerateInputError("reference text is empty after normalization")
    hyp_chars = list(normalize_text(hyp))
    distance, _, _, _ = edit_distance(ref_chars, hyp_chars)
    return 100.0 * distance / len(ref_chars)


# -- speaker similarity -----------------------------------------------------------------


@dataclass(frozen=True)
class SpeakerEmbedding:
    """L2-normalized speaker vector tagged with its embedder."""

    vector: np.ndarray
    embedder_id: str

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if vec.ndim != 1 or vec.size < 1 or not np.isfinite(norm):
            raise ConfigurationError("embedding must be a finite vector")
        if abs(norm - 1.0) > 1e-6:
            raise ConfigurationError(f"embedding norm {norm} is not 1 within 1e-6")
        object.__setattr__(self, "vector", vec)


def secs(a: SpeakerEmbedding, b: SpeakerEmbedding) -> float:
    """Cosine similarity of two same-embedder speaker embeddings, in [-1, 1]."""
    if a.embedder_id != b.embedder_id:
        raise ConfigurationError(
            f"embedder mismatch: {a.embedder_id!r} vs {b.embedder_id!r}"
        )
    return float(np.clip(np.dot(a.vector, b.vector), -1.0, 1.0))


STATS_EMBEDDER_ID = "mel-stats-v1"


def embed_speaker(
    clip: AudioClip,
    cfg: Optional[MelConfig] = None,
    f0_min: float = 60.0,
    f0_max: float = 400.0,
    voicing_threshold: float = 0.3,
) -> SpeakerEmbedding:
    """Transparent statistics embedder: per-band mel mean/std plus f0 and
    energy statistics, L2-normalized.

    This is a deterministic stand-in, not a claim of equivalence with any
    neural speaker encoder; precomputed embeddings can be loaded instead.
    """
    cfg = cfg or MelConfig()
    if clip.duration_sec < 0.5:
        raise DegenerateInputError("need at least 0.5 s of audio to embed a speaker")
    mel = mel_spectrogram(clip, cfg)
    analysis = analyze_frames(clip, cfg, f0_min, f0_max, voicing_threshold)
    voiced_f0 = analysis.f0_hz[analysis.voiced]
    f0_stats = (
        [float(np.mean(voiced_f0)), float(np.std(voiced_f0))]
        if voiced_f0.size
        else [0.0, 0.0]
    )
    features = np.concatenate(
        [
            mel.frames.mean(axis=0),
            mel.frames.std(axis=0),
            np.asarray(f0_stats),
            [float(np.mean(analysis.energy)), float(np.std(analysis.energy))],
        ]
    )
    norm = float(np.linalg.norm(features))
    if norm <= 0:
        raise DegenerateInputError("feature vector is all zero")
    return SpeakerEmbedding(features / norm, STATS_EMBEDDER_ID)


def load_speaker_embedding(path, embedder_id: str = "external") -> SpeakerEmbedding:
    """Read a precomputed embedding file and L2-normalize it."""
    vec = read_embedding(path)
    norm = float(np.linalg.norm(vec))
    if norm <= 0:
        raise DegenerateInputError(f"{path}: zero-norm embedding")
    return SpeakerEmbedding(vec / norm, embedder_id)


def save_speaker_embedding(path, embedding: SpeakerEmbedding) -> None:
    write_embedding(path, embedding.vector)


# -- part-of-speech analytics ---------------------------------------------------------------


def voiced_frame_ratio(
    analysis: FrameAnalysis, intervals: Sequence[WordInterval]
) -> Dict[str, Optional[float]]:
    """Voiced-frame fraction inside intervals, keyed by POS tag.

    Tags absent from the input are reported as None (undefined).
    """
    voiced_counts = {tag: 0 for tag in POS_TAGS}
    total_counts = {tag: 0 for tag in POS_TAGS}
    for iv in intervals:
        if iv.end_frame > analysis.n_frames:
            raise ConfigurationError("interval extends beyond the analysis length")
        tag = iv.pos_tag or "ETC"
        span = analysis.voiced[iv.start_frame : iv.end_frame]
        voiced_counts[tag] += int(np.count_nonzero(span))
        total_counts[tag] += span.size
    return {
        tag: (voiced_counts[tag] / total_counts[tag] if total_counts[tag] else None)
        for tag in POS_TAGS
    }


def corpus_voiced_frame_ratio(
    pairs: Sequence[Tuple[FrameAnalysis, Sequence[WordInterval]]]
) -> Dict[str, Optional[float]]:
    """Voiced-frame ratios pooled over many utterances."""
    voiced_counts = {tag: 0 for tag in POS_TAGS}
    total_counts = {tag: 0 for tag in POS_TAGS}
    for analysis, intervals in pairs:
        for iv in intervals:
            tag = iv.pos_tag or "ETC"
            span = analysis.voiced[iv.start_frame : iv.end_frame]
            voiced_counts[tag] += int(np.count_nonzero(span))
            total_counts[tag] += span.size
    return {
        tag: (voiced_counts[tag] / total_counts[tag] if total_counts[tag] else None)
        for tag in POS_TAGS
    }


@dataclass
class PosAttentionStats:
    """How often each POS tag owns the highest-attention style segment."""

    counts: Dict[str, int]
    total: int
    fractions: Dict[str, float] = field(init=False)

    def __post_init__(self):
        if self.total > 0:
            self.fractions = {tag: c / self.total for tag, c in self.counts.items()}
        else:
            self.fractions = {tag: 0.0 for tag in self.counts}


RecordInput = Union[AttentionRecord, Tuple[AttentionRecord, Sequence[WordInterval]]]


def pos_attention_stats(
    records: Sequence[RecordInput],
    layer: int = -1,
    head_mode: str = "mean",
) -> PosAttentionStats:
    """Tally the POS tag of the maximum-attention segment per utterance.

    Aggregation uses one GSE layer (default: final) with heads and query
    positions averaged; attention ties break toward the lowest segment
    index. Records may carry their own intervals or come as
    (record, intervals) pairs.
    """
    counts = {tag: 0 for tag in POS_TAGS}
    total = 0
    for item in records:
        if isinstance(item, tuple):
            record, intervals = item
        else:
            record, intervals = item, item.intervals
        if not intervals:
            raise DegenerateInputError("attention record carries no segments")
        aggregated = record.aggregated_key_weights(layer, head_mode)
        best = int(np.argmax(aggregated))
        tag = intervals[best].pos_tag or "ETC"
        counts[tag] += 1
        total += 1
    return PosAttentionStats(counts, total)


# -- attention override experiment --------------------------------------------------------------


@dataclass
class OverrideRow:
    entry_id: str
    used_fallback: bool
    secs_baseline: Optional[float]
    secs_override: Optional[float]
    wer_baseline: Optional[float]
    wer_override: Optional[float]
    mel_delta_linf: Optional[float]

    @property
    def wer_delta(self) -> Optional[float]:
        if self.wer_baseline is None or self.wer_override is None:
            return None
        return self.wer_override - self.wer_baseline


@dataclass
class OverrideReport:
    target_tags: Tuple[str, ...]
    rows: List[OverrideRow]
    fallback_count: int

    def mean(self, attr: str) -> Optional[float]:
        values = [getattr(r, attr) for r in self.rows if getattr(r, attr) is not None]
        return float(np.mean(values)) if values else None


def pos_override_experiment(
    checkpoint,
    utterances: Sequence[PreparedUtterance],
    target_tags: Sequence[str],
    transcriber: Optional[Callable[[AudioClip], str]] = None,
    agg_layer: int = -1,
    agg_heads: str = "mean",
    griffin_lim_iters: int = 30,
) -> OverrideReport:
    """Synthesize with attention kept only on target-POS segments.

    Both arms run through the override mechanism: the baseline overrides
    with the utterance's full aggregated weights, the treatment zeroes
    every non-target segment. With all tags targeted the two arms are
    identical by construction. An utterance whose mask zeroes everything
    falls back to the baseline override and is counted.

    Word error rates are only computed when a ``transcriber`` callable is
    supplied (ASR is outside this package); it receives the inverted
    waveform and must return a transcript.
    """
    target_tags = tuple(t.upper() for t in target_tags)
    for tag in target_tags:
        if tag not in POS_TAGS:
            raise ConfigurationError(f"unknown POS tag {tag!r}")
    if checkpoint.train_config.ablation == "no_gse":
        raise ConfigurationError(
            "attention overrides need a global style encoder; this checkpoint "
            "was trained with the no_gse ablation"
        )

    params = checkpoint.to_param_table()
    gsa_cfg = checkpoint.gsa_config
    ac_cfg = checkpoint.acoustic_config
    mel_cfg = checkpoint.mel_config
    min_frames = checkpoint.train_config.min_segment_frames
    ablation = "no_lse" if checkpoint.train_config.ablation == "no_lse" else "full"

    rows: List[OverrideRow] = []
    fallback_count = 0
    for utt in utterances:
        _, _, record = encode_style(utt.mel, utt.intervals, params, gsa_cfg,
                                    ablation=ablation, min_segment_frames=min_frames)
        aggregated = record.aggregated_key_weights(agg_layer, agg_heads)
        tags = [iv.pos_tag or "ETC" for iv in record.intervals]
        mask = np.array([t in target_tags for t in tags])
        masked = np.where(mask, aggregated, 0.0)

        baseline_override = AttentionOverride(aggregated)
        if not np.any(masked > 0):
            fallback_count += 1
            used_fallback = True
            treatment_override = baseline_override
        else:
            used_fallback = False
            treatment_override = AttentionOverride(masked)

        style_base, _, _ = encode_style(
            utt.mel, utt.intervals, params, gsa_cfg, override=baseline_override,
            ablation=ablation, min_segment_frames=min_frames,
        )
        style_ctrl, _, _ = encode_style(
            utt.mel, utt.intervals, params, gsa_cfg, override=treatment_override,
            ablation=ablation, min_segment_frames=min_frames,
        )
        mel_base, _, _ = synthesize_mel(utt.text, style_base, params, ac_cfg,
                                        mel_config=mel_cfg)
        mel_ctrl, _, _ = synthesize_mel(utt.text, style_ctrl, params, ac_cfg,
                                        mel_config=mel_cfg)

        delta = None
        if mel_base.frames.shape == mel_ctrl.frames.shape:
            delta = float(np.max(np.abs(mel_base.frames - mel_ctrl.frames)))

        ref_emb = _try_embed(utt.clip, mel_cfg)
        base_clip = griffin_lim_invert(mel_base, griffin_lim_iters)
        ctrl_clip = griffin_lim_invert(mel_ctrl, griffin_lim_iters)
        base_emb = _try_embed(base_clip, mel_cfg)
        ctrl_emb = _try_embed(ctrl_clip, mel_cfg)
        secs_base = secs(base_emb, ref_emb) if ref_emb and base_emb else None
        secs_ctrl = secs(ctrl_emb, ref_emb) if ref_emb and ctrl_emb else None

        wer_base = wer_ctrl = None
        if transcriber is not None:
            wer_base = wer(utt.transcript, transcriber(base_clip))
            wer_ctrl = wer(utt.transcript, transcriber(ctrl_clip))

        rows.append(
            OverrideRow(utt.entry_id, used_fallback, secs_base, secs_ctrl,
                        wer_base, wer_ctrl, delta)
        )
    return OverrideReport(target_tags, rows, fallback_count)


def _try_embed(clip: AudioClip, cfg: MelConfig) -> Optional[SpeakerEmbedding]:
    try:
        return embed_speaker(clip, cfg)
    except DegenerateInputError:
        return None


# -- report writers --------------------------------------------------------------------------


def write_key_values(path, mapping: Dict[str, object]) -> None:
    """Line-delimited ``key=value`` report, keys sorted."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(mapping):
            fh.write(f"{key}={mapping[key]}\n")


def write_table(path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    """Tab-separated per-utterance table with a header row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join("" if v is None else str(v) for v in row) + "\n")
