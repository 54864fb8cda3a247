"""Dataset manifest parsing and feature preparation for training and eval.

Manifest lines are ``wav_path | transcript | duration_path | timestamp_path``
with paths resolved relative to the manifest file. Duration files hold one
whitespace-separated integer per text symbol; timestamp files are the
tab-separated word interval format understood by ``load_timestamps``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .acoustic import DurationSeq, PitchSeq, TextSequence
from .audio import (
    AudioClip,
    FrameAnalysis,
    MelConfig,
    MelSpectrogram,
    analyze_frames,
    load_wav,
    mel_spectrogram,
    normalize_loudness,
    resample,
)
from .errors import DataError, FormatError
from .segmentation import WordInterval, load_timestamps


@dataclass(frozen=True)
class ManifestEntry:
    entry_id: str
    wav_path: str
    transcript: str
    duration_path: str
    timestamp_path: str


@dataclass
class PreparedUtterance:
    """All features of one utterance, ready for training or evaluation."""

    entry_id: str
    transcript: str
    clip: AudioClip
    mel: MelSpectrogram
    analysis: FrameAnalysis
    text: TextSequence
    durations: DurationSeq
    pitch: PitchSeq
    intervals: List[WordInterval]


def parse_manifest(path) -> List[ManifestEntry]:
    entries = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split("|")]
            if len(fields) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 '|'-separated fields")
            wav, transcript, dur, ts = fields
            entry_id = os.path.splitext(os.path.basename(wav))[0]
            entries.append(
                ManifestEntry(
                    entry_id,
                    os.path.join(base, wav),
                    transcript,
                    os.path.join(base, dur),
                    os.path.join(base, ts),
                )
            )
    return entries


def read_durations(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    try:
        values = np.asarray([int(t) for t in tokens], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: durations must be integers: {exc}") from exc
    if values.size == 0:
        raise FormatError(f"{path}: empty duration file")
    return values


def symbol_log_pitch(analysis: FrameAnalysis, durations: np.ndarray) -> np.ndarray:
    """Mean log-F0 of voiced frames per symbol; NaN where no voiced frame."""
    bounds = np.concatenate([[0], np.cumsum(durations)])
    out = np.full(durations.size, np.nan)
    for i in range(durations.size):
        span_f0 = analysis.f0_hz[bounds[i] : bounds[i + 1]]
        voiced = span_f0 > 0
        if np.any(voiced):
            out[i] = float(np.mean(np.log(span_f0[voiced])))
    return out


def prepare_utterance(
    entry: ManifestEntry,
    mel_cfg: MelConfig,
    target_dbfs: float = -27.0,
) -> Tuple[PreparedUtterance, np.ndarray]:
    """Load and validate one entry; returns the utterance and raw log-pitch."""
    clip = load_wav(entry.wav_path)
    clip = resample(clip, mel_cfg.sample_rate_hz)
    clip = normalize_loudness(clip, target_dbfs)
    mel = mel_spectrogram(clip, mel_cfg)
    analysis = analyze_frames(clip, mel_cfg)

    text = TextSequence.from_text(entry.transcript)
    durations = read_durations(entry.duration_path)
    if durations.size != text.n_symbols:
        raise DataError(
            f"{entry.entry_id}: {durations.size} durations for {text.n_symbols} symbols"
        )
    if int(durations.sum()) != mel.n_frames:
        raise DataError(
            f"{entry.entry_id}: durations sum to {int(durations.sum())}, mel has {mel.n_frames} frames"
        )
    intervals = load_timestamps(entry.timestamp_path, mel)
    if not intervals:
        raise DataError(f"{entry.entry_id}: timestamp file yields no word intervals")

    raw_pitch = symbol_log_pitch(analysis, durations)
    utt = PreparedUtterance(
        entry_id=entry.entry_id,
        transcript=entry.transcript,
        clip=clip,
        mel=mel,
        analysis=analysis,
        text=text,
        durations=DurationSeq(durations),
        pitch=PitchSeq(np.zeros(durations.size)),  # filled after corpus stats
        intervals=intervals,
    )
    return utt, raw_pitch


def prepare_corpus(
    entries: Sequence[ManifestEntry],
    mel_cfg: MelConfig,
    target_dbfs: float = -27.0,
    pitch_stats: Optional[Tuple[float, float]] = None,
) -> Tuple[List[PreparedUtterance], float, float]:
    """Prepare every entry; pitch is normalized over the corpus' voiced symbols.

    ``pitch_stats`` reuses (mean, std) from a checkpoint instead of
    re-estimating, which keeps evaluation consistent with training.
    """
    utterances = []
    raw_pitches = []
    for entry in entries:
        utt, raw = prepare_utterance(entry, mel_cfg, target_dbfs)
        utterances.append(utt)
        raw_pitches.append(raw)

    if pitch_stats is None:
        voiced_values = np.concatenate(
            [r[np.isfinite(r)] for r in raw_pitches]
        ) if raw_pitches else np.array([])
        if voiced_values.size:
            mean = float(np.mean(voiced_values))
            std = float(max(np.std(voiced_values), 1e-6))
        else:
            mean, std = 0.0, 1.0
    else:
        mean, std = pitch_stats

    for utt, raw in zip(utterances, raw_pitches):
        normalized = np.where(np.isfinite(raw), (raw - mean) / std, 0.0)
        utt.pitch = PitchSeq(normalized)
    return utterances, mean, std
