"""Word-level segmentation three ways: a minimum-cost alignment over a
synthetic cross-attention matrix, an external timestamp file, and the
random-slice baseline."""

import os
import tempfile

import numpy as np

from gsatts.audio import MelConfig, MelSpectrogram
from gsatts.segmentation import (
    CrossAttentionMatrix,
    dtw_align,
    intervals_from_path,
    load_timestamps,
    path_cost,
    random_slice_segments,
    slice_segments,
)

rng = np.random.default_rng(0)
cfg = MelConfig(n_mels=20)
n_frames = 120
mel = MelSpectrogram(np.log(np.maximum(rng.uniform(0, 1, (n_frames, 20)), 1e-5)), cfg)

# --- alignment over attention weights -------------------------------------
# Each token's attention mass is a bump over its true frame span.
words = ["the", "quick", "fox"]
token_to_word = [0, 1, 1, 2]  # "quick" has two tokens
centers = np.array([12.0, 45.0, 65.0, 95.0])
cols = np.arange(n_frames)
weights = np.exp(-(((cols[None, :] - centers[:, None]) / 9.0) ** 2)) + 0.01
attn = CrossAttentionMatrix(weights, token_to_word, words)

path = dtw_align(attn)
print(f"alignment path: {len(path.steps)} steps, cost {path_cost(path, attn):.2f}")
intervals = intervals_from_path(path, attn)
for iv in intervals:
    print(f"  word {iv.word!r}: frames [{iv.start_frame}, {iv.end_frame})")

segments = slice_segments(mel, intervals)
print(f"sliced {len(segments)} style segments, lengths "
      f"{[s.n_frames for s in segments]}")

# --- external word timestamps ----------------------------------------------
with tempfile.TemporaryDirectory() as tmp:
    ts_path = os.path.join(tmp, "words.tsv")
    with open(ts_path, "w") as fh:
        fh.write("hello\t0.05\t0.60\tNOUN\n")
        fh.write("there\t0.70\t1.30\tETC\n")
    from_file = load_timestamps(ts_path, mel)
for iv in from_file:
    print(f"timestamp word {iv.word!r} ({iv.pos_tag}): "
          f"frames [{iv.start_frame}, {iv.end_frame})")

# --- random-slice baseline ----------------------------------------------------
for seed in (1, 2):
    slices = random_slice_segments(mel, min_frames=40, seed=seed)
    print(f"random slices (seed {seed}): "
          f"{[(s.interval.start_frame, s.interval.end_frame) for s in slices]}")
