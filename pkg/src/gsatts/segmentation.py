"""Word-level style segments from a reference mel spectrogram.

Segments come from one of three interval sources: a minimum-cost monotone
alignment over ASR cross-attention weights, an externally supplied word
timestamp file, or seeded random slicing (the ablation baseline).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .audio import MelSpectrogram
from .errors import BoundsError, DegenerateInputError, FormatError

logger = logging.getLogger(__name__)

POS_TAGS = ("NOUN", "VERB", "ADJ", "ETC")
DEFAULT_MIN_SEGMENT_FRAMES = 8
DEFAULT_RANDOM_SLICE_MIN_FRAMES = 40


def normalize_pos_tag(tag: Optional[str]) -> Optional[str]:
    """Collapse a tag onto {NOUN, VERB, ADJ, ETC}; None stays None."""
    if tag is None:
        return None
    tag = tag.strip().upper()
    return tag if tag in POS_TAGS else "ETC"


@dataclass(frozen=True)
class CrossAttentionMatrix:
    """N text tokens x T frames of non-negative attention mass."""

    weights: np.ndarray
    token_to_word: Tuple[int, ...]
    words: Tuple[str, ...]

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2 or weights.shape[0] < 1 or weights.shape[1] < 1:
            raise DegenerateInputError("attention matrix must be non-empty 2-D")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise FormatError("attention weights must be finite and >= 0")
        if not np.all(weights.max(axis=1) > 0):
            raise FormatError("every token row needs at least one positive weight")
        token_to_word = tuple(int(i) for i in self.token_to_word)
        words = tuple(self.words)
        if len(token_to_word) != weights.shape[0]:
            raise FormatError("token_to_word length must match token count")
        if any(t2 < t1 for t1, t2 in zip(token_to_word, token_to_word[1:])):
            raise FormatError("token_to_word must be non-decreasing")
        if token_to_word and not (0 <= min(token_to_word) and max(token_to_word) < len(words)):
            raise FormatError("token_to_word indexes outside the word list")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "token_to_word", token_to_word)
        object.__setattr__(self, "words", words)

    @property
    def n_tokens(self) -> int:
        return self.weights.shape[0]

    @property
    def n_frames(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class AlignmentPath:
    """Monotone lattice path of (token_index, frame_index) steps."""

    steps: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        steps = tuple((int(i), int(j)) for i, j in self.steps)
        if not steps:
            raise DegenerateInputError("alignment path is empty")
        if steps[0] != (0, 0):
            raise FormatError("alignment path must start at (0, 0)")
        for (i0, j0), (i1, j1) in zip(steps, steps[1:]):
            di, dj = i1 - i0, j1 - j0
            if di not in (0, 1) or dj not in (0, 1) or (di == 0 and dj == 0):
                raise FormatError(f"illegal path move ({di}, {dj})")
        object.__setattr__(self, "steps", steps)


@dataclass(frozen=True)
class WordInterval:
    """Half-open frame interval [start_frame, end_frame) owned by one word."""

    word_index: int
    start_frame: int
    end_frame: int
    pos_tag: Optional[str] = None
    word: Optional[str] = None

    def __post_init__(self):
        if self.start_frame < 0 or self.end_frame <= self.start_frame:
            raise BoundsError(
                f"bad interval [{self.start_frame}, {self.end_frame}) for word {self.word_index}"
            )
        object.__setattr__(self, "pos_tag", normalize_pos_tag(self.pos_tag))

    @property
    def n_frames(self) -> int:
        return self.end_frame - self.start_frame


@dataclass(frozen=True)
class StyleSegment:
    """Word-aligned mel slice, padded up to a minimum frame count."""

    mel: np.ndarray
    interval: WordInterval
    fallback: bool = False

    def __post_init__(self):
        mel = np.asarray(self.mel, dtype=np.float64)
        if mel.ndim != 2 or mel.shape[0] < 1:
            raise DegenerateInputError("style segment needs at least one frame")
        object.__setattr__(self, "mel", mel)

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]


def check_intervals(intervals: Sequence[WordInterval], n_frames: int) -> None:
    """Validate ordering, disjointness, and bounds against a T-frame mel."""
    prev_end = 0
    for iv in intervals:
        if iv.start_frame < prev_end:
            raise BoundsError(f"interval for word {iv.word_index} overlaps its predecessor")
        if iv.end_frame > n_frames:
            raise BoundsError(
                f"interval [{iv.start_frame}, {iv.end_frame}) exceeds mel length {n_frames}"
            )
        prev_end = iv.end_frame


# -- alignment ------------------------------------------------------------------


def dtw_align(attn: CrossAttentionMatrix) -> AlignmentPath:
    """Minimum-cost monotone path over the attention lattice.

    Cost of a cell is the negated attention weight, so the path maximizes
    collected attention mass. Moves are (i+1, j), (i, j+1), (i+1, j+1);
    cost ties prefer the diagonal, then the frame advance, then the token
    advance.
    """
    cost = -attn.weights
    n, t = cost.shape
    dist = np.empty((n, t), dtype=np.float64)
    move = np.zeros((n, t), dtype=np.uint8)  # 0 diag, 1 frame, 2 token

    dist[0] = np.cumsum(cost[0])
    move[0, 1:] = 1
    for i in range(1, n):
        dist[i, 0] = dist[i - 1, 0] + cost[i, 0]
        move[i, 0] = 2
        row = dist[i]
        above = dist[i - 1]
        for j in range(1, t):
            diag = above[j - 1]
            left = row[j - 1]
            up = above[j]
            best = diag
            code = 0
            if left < best:
                best = left
                code = 1
            if up < best:
                best = up
                code = 2
            row[j] = cost[i, j] + best
            move[i, j] = code

    steps = [(n - 1, t - 1)]
    i, j = n - 1, t - 1
    while (i, j) != (0, 0):
        code = move[i, j]
        if code == 0 and i > 0 and j > 0:
            i, j = i - 1, j - 1
        elif code == 1 and j > 0:
            j -= 1
        else:
            i -= 1
        steps.append((i, j))
    steps.reverse()
    return AlignmentPath(tuple(steps))


def path_cost(path: AlignmentPath, attn: CrossAttentionMatrix) -> float:
    """Summed negative attention over the visited cells."""
    return float(sum(-attn.weights[i, j] for i, j in path.steps))


def intervals_from_path(
    path: AlignmentPath, attn: CrossAttentionMatrix
) -> List[WordInterval]:
    """Word intervals from a path: per-token frame spans unioned per word.

    A frame shared across a word boundary goes to the earlier word; an
    interval emptied by that rule is dropped (its word owned no frame of
    its own), which keeps the output a partition of the touched frames.
    """
    n, t = attn.weights.shape
    last_i, last_j = path.steps[-1]
    if last_i != n - 1 or last_j != t - 1:
        raise BoundsError("path does not reach the last token and frame")
    if any(i >= n or j >= t for i, j in path.steps):
        raise BoundsError("path leaves the attention matrix")

    n_words = len(attn.words)
    starts = [None] * n_words
    ends = [None] * n_words
    for i, j in path.steps:
        w = attn.token_to_word[i]
        if starts[w] is None or j < starts[w]:
            starts[w] = j
        if ends[w] is None or j + 1 > ends[w]:
            ends[w] = j + 1

    intervals = []
    prev_end = 0
    for w in range(n_words):
        if starts[w] is None:
            continue  # word had no tokens
        start = max(starts[w], prev_end)
        end = ends[w]
        if start >= end:
            logger.warning("word %d lost all frames to its predecessor", w)
            continue
        intervals.append(
            WordInterval(w, start, end, pos_tag=None, word=attn.words[w])
        )
        prev_end = end
    return intervals


# -- slicing --------------------------------------------------------------------


def slice_frame_matrix(
    frames: np.ndarray,
    intervals: Sequence[WordInterval],
    min_segment_frames: int = DEFAULT_MIN_SEGMENT_FRAMES,
) -> List[StyleSegment]:
    """Slice a raw (T, M) frame matrix into padded segments."""
    check_intervals(intervals, frames.shape[0])
    segments = []
    for iv in intervals:
        core = frames[iv.start_frame : iv.end_frame]
        if core.shape[0] < min_segment_frames:
            padding = np.repeat(core[-1:], min_segment_frames - core.shape[0], axis=0)
            core = np.concatenate([core, padding], axis=0)
        segments.append(StyleSegment(core, iv))
    return segments


def slice_segments(
    mel: MelSpectrogram,
    intervals: Sequence[WordInterval],
    min_segment_frames: int = DEFAULT_MIN_SEGMENT_FRAMES,
) -> List[StyleSegment]:
    """One segment per interval; short slices are edge-replicated at the end."""
    return slice_frame_matrix(mel.frames, intervals, min_segment_frames)


def strip_padding(segment: StyleSegment) -> np.ndarray:
    """The unpadded mel rows of a segment (the original interval span)."""
    return segment.mel[: segment.interval.n_frames]


def random_slice_segments(
    mel: MelSpectrogram,
    min_frames: int = DEFAULT_RANDOM_SLICE_MIN_FRAMES,
    seed: int = 0,
) -> List[StyleSegment]:
    """Seeded random partition of [0, T) into slices of >= ``min_frames``.

    Cut lengths are drawn uniformly from the feasible range left to right.
    A mel shorter than ``min_frames`` yields one whole-mel segment flagged
    as a fallback.
    """
    t = mel.n_frames
    if t < min_frames:
        logger.warning(
            "mel of %d frames is shorter than the %d-frame minimum; emitting whole mel",
            t,
            min_frames,
        )
        interval = WordInterval(0, 0, t)
        return [StyleSegment(mel.frames.copy(), interval, fallback=True)]

    rng = np.random.Generator(np.random.PCG64(seed))
    bounds = [0]
    remaining = t
    while remaining >= 2 * min_frames:
        length = int(rng.integers(min_frames, remaining - min_frames, endpoint=True))
        bounds.append(bounds[-1] + length)
        remaining -= length
    bounds.append(t)

    intervals = [
        WordInterval(k, bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1)
    ]
    return slice_segments(mel, intervals, min_segment_frames=1)


# -- external timestamps -----------------------------------------------------------


def load_timestamps(path, mel: MelSpectrogram) -> List[WordInterval]:
    """Word intervals from a tab-separated ``word  start  end  [pos]`` file.

    Seconds convert to frames by floor(t * rate / hop); intervals clamp to
    [0, T] and zero-length results are dropped with a warning count.
    """
    cfg = mel.config
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        prev_end_sec = 0.0
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) not in (3, 4):
                raise FormatError(f"{path}:{lineno}: expected 3 or 4 tab-separated fields")
            word = fields[0]
            try:
                start_sec = float(fields[1])
                end_sec = float(fields[2])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad number: {exc}") from exc
            if start_sec < 0 or end_sec < start_sec:
                raise FormatError(f"{path}:{lineno}: malformed interval")
            if start_sec < prev_end_sec - 1e-9:
                raise FormatError(f"{path}:{lineno}: records overlap")
            prev_end_sec = end_sec
            pos = fields[3] if len(fields) == 4 and fields[3].strip() else None
            records.append((word, start_sec, end_sec, pos))

    scale = cfg.sample_rate_hz / cfg.hop_length
    # Guard of 1e-4 frames absorbs decimal-text representation error when a
    # timestamp sits exactly on a frame boundary.
    guard = 1e-4
    intervals = []
    dropped = 0
    prev_end = 0
    for word, start_sec, end_sec, pos in records:
        start = min(max(int(np.floor(start_sec * scale + guard)), prev_end), mel.n_frames)
        end = min(int(np.floor(end_sec * scale + guard)), mel.n_frames)
        if end <= start:
            dropped += 1
            continue
        intervals.append(
            WordInterval(len(intervals), start, end, pos_tag=pos, word=word)
        )
        prev_end = end
    if dropped:
        logger.warning("%s: dropped %d zero-length word intervals", path, dropped)
    return intervals
