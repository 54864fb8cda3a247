"""PNG rendering for mels, segment boundaries, attention, and POS stats."""

from __future__ import annotations

from typing import List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

from .audio import MelSpectrogram
from .segmentation import POS_TAGS, WordInterval
from .style_encoder import AttentionRecord


def plot_mel_with_boundaries(mel: MelSpectrogram, intervals: Sequence[WordInterval],
                             path) -> None:
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.imshow(mel.frames.T, origin="lower", aspect="auto", interpolation="nearest")
    for iv in intervals:
        ax.axvline(iv.start_frame - 0.5, color="white", linewidth=0.8)
        label = iv.word or f"seg{iv.word_index}"
        if iv.pos_tag:
            label += f"\n{iv.pos_tag}"
        ax.text((iv.start_frame + iv.end_frame) / 2, mel.frames.shape[1] * 0.92,
                label, color="white", ha="center", fontsize=7)
    if intervals:
        ax.axvline(intervals[-1].end_frame - 0.5, color="white", linewidth=0.8)
    ax.set_xlabel("frame")
    ax.set_ylabel("mel band")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_attention_heatmaps(record: AttentionRecord, out_prefix: str) -> List[str]:
    """One PNG per layer/head; returns the written paths."""
    paths = []
    labels = [iv.word or str(iv.word_index) for iv in record.intervals]
    for layer_idx, layer in enumerate(record.layers):
        for head in range(layer.shape[0]):
            fig, ax = plt.subplots(figsize=(4, 4))
            im = ax.imshow(layer[head], vmin=0.0, interpolation="nearest")
            ax.set_xticks(range(len(labels)), labels, rotation=90, fontsize=7)
            ax.set_yticks(range(len(labels)), labels, fontsize=7)
            ax.set_xlabel("key segment")
            ax.set_ylabel("query segment")
            fig.colorbar(im, ax=ax, fraction=0.046)
            fig.tight_layout()
            path = f"{out_prefix}_layer{layer_idx}_head{head}.png"
            fig.savefig(path, dpi=120)
            plt.close(fig)
            paths.append(path)
    return paths


def plot_pos_bar_chart(fractions: dict, path) -> None:
    fig, ax = plt.subplots(figsize=(4, 3))
    values = [fractions.get(tag, 0.0) or 0.0 for tag in POS_TAGS]
    ax.bar(POS_TAGS, values)
    ax.set_ylabel("fraction of utterances")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
