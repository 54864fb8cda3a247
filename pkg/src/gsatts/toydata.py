"""Deterministic synthetic corpus for overfit runs, demos, and tests.

Each utterance is a few short pseudo-words rendered as phase-continuous
sine tones (one pitch per word, silence for spaces), with exact
per-symbol durations, word timestamps, and cycling POS tags. Durations
are constructed so that their sum equals the mel frame count of the
written wav under the given analysis config.
"""

from __future__ import annotations

import os
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .audio import AudioClip, MelConfig, save_wav
from .segmentation import POS_TAGS

_LEXICON = (
    "bo", "dal", "mee", "tib", "ra", "sun", "nel", "kip",
    "vor", "sha", "lum", "pek", "zin", "gat", "rud", "fen",
)


def build_toy_corpus(
    outdir,
    n_utterances: int = 8,
    seed: int = 0,
    mel_cfg: Optional[MelConfig] = None,
    words_per_utterance: Tuple[int, int] = (2, 3),
    frames_per_letter: Tuple[int, int] = (4, 7),
    frames_per_space: Tuple[int, int] = (2, 3),
    amplitude: float = 0.25,
) -> str:
    """Write wavs, duration files, timestamp files, and a manifest.

    Returns the manifest path. Fully deterministic under ``seed``.
    """
    mel_cfg = mel_cfg or MelConfig()
    rng = np.random.Generator(np.random.PCG64(seed))
    os.makedirs(outdir, exist_ok=True)

    manifest_lines = []
    for utt_idx in range(n_utterances):
        n_words = int(rng.integers(words_per_utterance[0], words_per_utterance[1] + 1))
        words = [str(rng.choice(_LEXICON)) for _ in range(n_words)]
        transcript = " ".join(words)
        base_f0 = float(rng.uniform(110.0, 300.0))

        durations: List[int] = []
        symbol_f0: List[float] = []
        for w_idx, word in enumerate(words):
            word_f0 = base_f0 * float(rng.uniform(0.9, 1.15))
            for _ in word:
                durations.append(int(rng.integers(frames_per_letter[0],
                                                  frames_per_letter[1] + 1)))
                symbol_f0.append(word_f0)
            if w_idx != n_words - 1:
                durations.append(int(rng.integers(frames_per_space[0],
                                                  frames_per_space[1] + 1)))
                symbol_f0.append(0.0)

        clip = _render_clip(durations, symbol_f0, mel_cfg, amplitude)
        entry_id = f"utt{utt_idx:03d}"
        wav_name = f"{entry_id}.wav"
        dur_name = f"{entry_id}.dur"
        ts_name = f"{entry_id}.tsv"
        save_wav(os.path.join(outdir, wav_name), clip)
        with open(os.path.join(outdir, dur_name), "w", encoding="utf-8") as fh:
            fh.write(" ".join(str(d) for d in durations) + "\n")
        _write_timestamps(
            os.path.join(outdir, ts_name), transcript, durations, mel_cfg,
            tag_offset=utt_idx,
        )
        manifest_lines.append(f"{wav_name}|{transcript}|{dur_name}|{ts_name}")

    manifest_path = os.path.join(outdir, "manifest.txt")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(manifest_lines) + "\n")
    return manifest_path


def _render_clip(
    durations: Sequence[int],
    symbol_f0: Sequence[float],
    mel_cfg: MelConfig,
    amplitude: float,
) -> AudioClip:
    """Phase-continuous tones per symbol; f0 of 0 renders silence."""
    hop = mel_cfg.hop_length
    rate = mel_cfg.sample_rate_hz
    pieces = []
    phase = 0.0
    for frames, f0 in zip(durations, symbol_f0):
        n = frames * hop
        if f0 > 0:
            t = np.arange(n)
            pieces.append(amplitude * np.sin(phase + 2.0 * np.pi * f0 * t / rate))
            phase += 2.0 * np.pi * f0 * n / rate
        else:
            pieces.append(np.zeros(n))
    samples = np.concatenate(pieces)
    # T = 1 + len // hop, so trim one hop to land exactly on sum(durations).
    samples = samples[: (sum(durations) - 1) * hop]
    return AudioClip(samples, rate)


def _write_timestamps(path, transcript: str, durations: Sequence[int],
                      mel_cfg: MelConfig, tag_offset: int = 0) -> None:
    """Word intervals in seconds that floor back to exact frame indices.

    POS tags cycle through the tag set with a per-utterance offset so every
    tag appears somewhere in a multi-utterance corpus.
    """
    sec_per_frame = mel_cfg.hop_length / mel_cfg.sample_rate_hz
    words = transcript.split(" ")
    lines = []
    frame = 0
    symbol = 0
    for w_idx, word in enumerate(words):
        start = frame
        for _ in word:
            frame += durations[symbol]
            symbol += 1
        tag = POS_TAGS[(tag_offset + w_idx) % len(POS_TAGS)]
        lines.append(f"{word}\t{start * sec_per_frame:.9f}\t{frame * sec_per_frame:.9f}\t{tag}")
        if w_idx != len(words) - 1:
            frame += durations[symbol]  # the space symbol
            symbol += 1
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
