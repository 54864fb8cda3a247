"""Command-line entry point wiring the pipeline end to end.

Subcommands: preprocess, segment, train, synth, eval, inspect. Every
command is deterministic given its config and seed; worker parallelism
for per-entry jobs is capped by the ``GSA_NUM_THREADS`` environment
variable (default 1).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import formats
from .acoustic import TextSequence, synthesize_mel
from .audio import (
    analyze_frames,
    griffin_lim_invert,
    load_wav,
    mel_spectrogram,
    normalize_loudness,
    resample,
    save_wav,
)
from .config import emit_run_config, load_run_config
from .data import parse_manifest, prepare_corpus
from .errors import GsaError, UsageError
from .evaluation import (
    cer,
    corpus_voiced_frame_ratio,
    embed_speaker,
    pos_attention_stats,
    pos_override_experiment,
    secs,
    wer,
    write_key_values,
    write_table,
)
from .segmentation import (
    CrossAttentionMatrix,
    dtw_align,
    intervals_from_path,
    load_timestamps,
    random_slice_segments,
)
from .style_encoder import AttentionOverride, encode_style
from .training import Checkpoint, arch_ablation, train


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GSA_NUM_THREADS", "1")))
    except ValueError:
        return 1


# -- preprocess --------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    cfg = load_run_config(args.config)
    entries = parse_manifest(args.manifest)
    os.makedirs(args.outdir, exist_ok=True)
    if not entries:
        print("warning: empty manifest, nothing to preprocess")
        return 0

    def process(entry):
        clip = load_wav(entry.wav_path)
        clip = resample(clip, cfg.mel.sample_rate_hz)
        clip = normalize_loudness(clip)
        mel = mel_spectrogram(clip, cfg.mel)
        analysis = analyze_frames(clip, cfg.mel)
        formats.write_mel(os.path.join(args.outdir, f"{entry.entry_id}.gsamel"), mel)
        formats.write_frame_analysis(
            os.path.join(args.outdir, f"{entry.entry_id}.gsafra"), analysis
        )
        return mel.n_frames

    total_frames = 0
    failures = 0
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = []
        for entry in entries:
            results.append((entry, pool.submit(process, entry)))
        for entry, future in results:
            try:
                total_frames += future.result()
            except (GsaError, OSError) as exc:
                failures += 1
                print(f"error: {entry.entry_id}: {exc}", file=sys.stderr)

    print(f"entries={len(entries)} frames={total_frames} failures={failures}")
    return 1 if failures == len(entries) else 0


# -- segment -----------------------------------------------------------------------


def cmd_segment(args) -> int:
    mel = formats.read_mel(args.mel)
    if args.timestamps:
        intervals = load_timestamps(args.timestamps, mel)
        segments = None
    elif args.attention:
        weights, token_to_word, words = formats.read_attention(args.attention)
        attn = CrossAttentionMatrix(weights, token_to_word, words)
        if attn.n_frames != mel.n_frames:
            raise UsageError(
                f"attention matrix covers {attn.n_frames} frames, mel has {mel.n_frames}"
            )
        intervals = intervals_from_path(dtw_align(attn), attn)
        segments = None
    else:
        segments = random_slice_segments(mel, args.min_frames, args.seed)
        intervals = [s.interval for s in segments]

    for iv in intervals:
        word = iv.word or f"seg{iv.word_index}"
        pos = iv.pos_tag or ""
        print(f"{iv.word_index}\t{word}\t{iv.start_frame}\t{iv.end_frame}"
              f"\t{iv.n_frames}\t{pos}")
    if args.plot:
        from .plots import plot_mel_with_boundaries

        plot_mel_with_boundaries(mel, intervals, args.plot)
        print(f"wrote {args.plot}")
    return 0


# -- train -------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, seed=args.seed, ablation=args.ablation)
    os.makedirs(args.outdir, exist_ok=True)
    with open(os.path.join(args.outdir, "effective_config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(emit_run_config(cfg))

    log_path = os.path.join(args.outdir, "loss_log.tsv")
    with open(log_path, "w", encoding="utf-8") as log:
        log.write("step\tmel\tpitch\tduration\ttotal\n")

        def progress(report):
            log.write(
                f"{report.step}\t{report.mel_loss:.6f}\t{report.pitch_loss:.6f}"
                f"\t{report.dur_loss:.6f}\t{report.total:.6f}\n"
            )

        checkpoint, reports = train(
            args.manifest, cfg.train, cfg.mel, cfg.gsa, cfg.acoustic,
            outdir=args.outdir, progress=progress,
        )
    final_path = os.path.join(args.outdir, "checkpoint_final.gsackpt")
    if not os.path.exists(final_path):
        checkpoint.save(final_path)
    if reports:
        print(f"steps={len(reports)} first_total={reports[0].total:.4f} "
              f"last_total={reports[-1].total:.4f}")
    else:
        print("steps=0 (initialization checkpoint only)")
    print(f"wrote {final_path}")
    return 0


# -- synth -------------------------------------------------------------------------


def _load_reference(ckpt: Checkpoint, wav_path, ts_path):
    clip = load_wav(wav_path)
    clip = resample(clip, ckpt.mel_config.sample_rate_hz)
    clip = normalize_loudness(clip)
    mel = mel_spectrogram(clip, ckpt.mel_config)
    intervals = load_timestamps(ts_path, mel)
    if not intervals:
        raise UsageError(f"{ts_path}: no usable word intervals")
    return clip, mel, intervals


def parse_override_spec(spec: str, intervals) -> AttentionOverride:
    """Build an override from ``word=weight,...``; unnamed segments get 0.

    Repeated words are addressed as ``word#k`` (1-based occurrence).
    """
    available: Dict[str, List[int]] = {}
    for idx, iv in enumerate(intervals):
        available.setdefault(iv.word or f"seg{iv.word_index}", []).append(idx)

    weights = np.zeros(len(intervals))
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise UsageError(f"override item {item!r} is not word=weight")
        name, _, raw = item.partition("=")
        name = name.strip()
        occurrence = 1
        if "#" in name:
            name, _, occ_raw = name.partition("#")
            try:
                occurrence = int(occ_raw)
            except ValueError as exc:
                raise UsageError(f"bad occurrence in {item!r}") from exc
        if name not in available:
            raise UsageError(
                f"word {name!r} not found; available: {', '.join(sorted(available))}"
            )
        slots = available[name]
        if not (1 <= occurrence <= len(slots)):
            raise UsageError(
                f"{name!r} occurs {len(slots)} time(s); #{occurrence} does not exist"
            )
        try:
            weights[slots[occurrence - 1]] = float(raw)
        except ValueError as exc:
            raise UsageError(f"bad weight in {item!r}") from exc
    if not np.any(weights > 0):
        raise UsageError("override sets every segment to zero")
    return AttentionOverride(weights)


def cmd_synth(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    params = ckpt.to_param_table()
    _, mel_ref, intervals = _load_reference(ckpt, args.reference, args.timestamps)

    override = None
    if args.override:
        override = parse_override_spec(args.override, intervals)
    style, _, _ = encode_style(
        mel_ref, intervals, params, ckpt.gsa_config, override=override,
        ablation=arch_ablation(ckpt.train_config.ablation),
        min_segment_frames=ckpt.train_config.min_segment_frames,
    )
    text = TextSequence.from_text(args.text)
    mel_out, _, _ = synthesize_mel(text, style, params, ckpt.acoustic_config,
                                   mel_config=ckpt.mel_config)
    out_path = args.out or "synth.gsamel"
    formats.write_mel(out_path, mel_out)
    print(f"wrote {out_path} ({mel_out.n_frames} frames)")
    if args.wav:
        clip = griffin_lim_invert(mel_out, n_iters=60)
        save_wav(args.wav, clip)
        print(f"wrote {args.wav}")
    return 0


# -- eval --------------------------------------------------------------------------


def _read_hypothesis(hyp_dir: Optional[str], entry_id: str) -> Optional[str]:
    if hyp_dir is None:
        return None
    path = os.path.join(hyp_dir, f"{entry_id}.txt")
    if not os.path.exists(path):
        return None
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read().strip()


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    params = ckpt.to_param_table()
    entries = parse_manifest(args.manifest)
    utterances, _, _ = prepare_corpus(
        entries, ckpt.mel_config, pitch_stats=(ckpt.pitch_mean, ckpt.pitch_std)
    )
    os.makedirs(args.outdir, exist_ok=True)
    ablation = arch_ablation(ckpt.train_config.ablation)

    rows = []
    records = []
    secs_values: List[float] = []
    wer_values: List[float] = []
    cer_values: List[float] = []
    for utt in utterances:
        style, _, record = encode_style(
            utt.mel, utt.intervals, params, ckpt.gsa_config, ablation=ablation,
            min_segment_frames=ckpt.train_config.min_segment_frames,
        )
        if record.layers:
            records.append(record)
        mel_out, _, _ = synthesize_mel(utt.text, style, params, ckpt.acoustic_config,
                                       mel_config=ckpt.mel_config)
        synth_clip = griffin_lim_invert(mel_out, n_iters=args.gl_iters)
        entry_secs = entry_wer = entry_cer = None
        try:
            entry_secs = secs(
                embed_speaker(synth_clip, ckpt.mel_config),
                embed_speaker(utt.clip, ckpt.mel_config),
            )
            secs_values.append(entry_secs)
        except GsaError as exc:
            print(f"warning: {utt.entry_id}: SECS skipped: {exc}", file=sys.stderr)
        hyp = _read_hypothesis(args.hyp_dir, utt.entry_id)
        if hyp is not None:
            entry_wer = wer(utt.transcript, hyp)
            entry_cer = cer(utt.transcript, hyp)
            wer_values.append(entry_wer)
            cer_values.append(entry_cer)
        rows.append((utt.entry_id, mel_out.n_frames, entry_secs, entry_wer, entry_cer))

    summary: Dict[str, object] = {"entries": len(utterances)}
    if secs_values:
        summary["secs_mean"] = f"{np.mean(secs_values):.6f}"
    if wer_values:
        summary["wer_mean_percent"] = f"{np.mean(wer_values):.4f}"
        summary["cer_mean_percent"] = f"{np.mean(cer_values):.4f}"

    ratios = corpus_voiced_frame_ratio([(u.analysis, u.intervals) for u in utterances])
    for tag, ratio in ratios.items():
        summary[f"voiced_ratio.{tag}"] = "undefined" if ratio is None else f"{ratio:.6f}"

    if records:
        stats = pos_attention_stats(records, layer=args.agg_layer,
                                    head_mode=args.agg_heads)
        for tag, frac in stats.fractions.items():
            summary[f"pos_attention.{tag}"] = f"{frac:.6f}"
        if args.plot:
            from .plots import plot_pos_bar_chart

            plot_pos_bar_chart(stats.fractions,
                               os.path.join(args.outdir, "pos_attention.png"))

    if args.pos_override:
        tags = tuple(t.strip().upper() for t in args.pos_override.split(","))
        report = pos_override_experiment(
            ckpt, utterances, tags, agg_layer=args.agg_layer,
            agg_heads=args.agg_heads, griffin_lim_iters=args.gl_iters,
        )
        summary["override.target_tags"] = ",".join(report.target_tags)
        summary["override.fallbacks"] = report.fallback_count
        mean_secs = report.mean("secs_override")
        if mean_secs is not None:
            summary["override.secs_mean"] = f"{mean_secs:.6f}"
        write_table(
            os.path.join(args.outdir, "override_experiment.tsv"),
            ["entry", "fallback", "secs_baseline", "secs_override",
             "wer_baseline", "wer_override", "mel_delta_linf"],
            [
                (r.entry_id, int(r.used_fallback), r.secs_baseline, r.secs_override,
                 r.wer_baseline, r.wer_override, r.mel_delta_linf)
                for r in report.rows
            ],
        )

    write_key_values(os.path.join(args.outdir, "metrics.txt"), summary)
    write_table(
        os.path.join(args.outdir, "per_utterance.tsv"),
        ["entry", "synth_frames", "secs", "wer", "cer"],
        rows,
    )
    print(f"wrote {os.path.join(args.outdir, 'metrics.txt')}")
    return 0


# -- inspect -----------------------------------------------------------------------


def cmd_inspect(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    params = ckpt.to_param_table()
    _, mel_ref, intervals = _load_reference(ckpt, args.reference, args.timestamps)
    override = None
    if args.override:
        override = parse_override_spec(args.override, intervals)
    _, _, record = encode_style(
        mel_ref, intervals, params, ckpt.gsa_config, override=override,
        ablation=arch_ablation(ckpt.train_config.ablation),
        min_segment_frames=ckpt.train_config.min_segment_frames,
    )
    os.makedirs(args.outdir, exist_ok=True)
    table_path = os.path.join(args.outdir, "attention_table.tsv")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write("layer\thead\tquery_idx\tkey_idx\tweight\n")
        for line in record.to_table_lines():
            fh.write(line + "\n")
    print(f"wrote {table_path}")

    if record.layers:
        aggregated = record.aggregated_key_weights(args.agg_layer, args.agg_heads)
        for iv, weight in zip(record.intervals, aggregated):
            word = iv.word or f"seg{iv.word_index}"
            print(f"{word}\t{iv.pos_tag or ''}\t{weight:.6f}")
        from .plots import plot_attention_heatmaps

        paths = plot_attention_heatmaps(
            record, os.path.join(args.outdir, "attention")
        )
        print(f"wrote {len(paths)} heatmap(s)")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsatts",
        description="Style-conditioned speech synthesis pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="extract mel and frame analyses")
    p.add_argument("manifest")
    p.add_argument("--outdir", required=True)
    p.add_argument("--config")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("segment", help="list style segments of a mel file")
    p.add_argument("--mel", required=True)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--timestamps")
    mode.add_argument("--attention")
    mode.add_argument("--random", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-frames", type=int, default=40)
    p.add_argument("--plot")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="train on a manifest")
    p.add_argument("manifest")
    p.add_argument("--outdir", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--ablation",
                   choices=["full", "no_gse", "no_lse", "random_slices"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="synthesize a mel from text and a reference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--reference", required=True, help="reference wav")
    p.add_argument("--timestamps", required=True, help="word timestamps of the reference")
    p.add_argument("--out", help="output mel path (default synth.gsamel)")
    p.add_argument("--override", help="attention override: word=weight,word#2=0.5,...")
    p.add_argument("--wav", help="also write a Griffin-Lim waveform here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="objective metrics over a test manifest")
    p.add_argument("manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--hyp-dir", help="directory of <entry>.txt hypothesis transcripts")
    p.add_argument("--pos-override", help="comma-separated target POS tags")
    p.add_argument("--agg-layer", type=int, default=-1)
    p.add_argument("--agg-heads", default="mean")
    p.add_argument("--gl-iters", type=int, default=30)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="attention tables and heatmaps for a reference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--timestamps", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--override", help="attention override: word=weight,...")
    p.add_argument("--agg-layer", type=int, default=-1)
    p.add_argument("--agg-heads", default="mean")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except GsaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
