import os

import numpy as np
import pytest

from gsatts import formats
from gsatts.audio import MelConfig, MelSpectrogram, load_wav
from gsatts.cli import main, parse_override_spec
from gsatts.config import parse_run_config
from gsatts.errors import UsageError
from gsatts.segmentation import WordInterval

from conftest import SMALL_MEL


TOY_CONFIG = """
[audio]
n_mels = 32

[gsa]
d_style = 48
n_mels = 32
ffn_hidden = 192
dropout_rate = 0.0

[acoustic]
d_model = 48
n_enc_blocks = 2
n_dec_blocks = 2
n_mels = 32
d_style = 48
ffn_hidden = 192
dropout_rate = 0.0

[train]
max_steps = 5
batch_size = 4
warmup_steps = 50
lr_scale = 0.5
checkpoint_interval = 0
"""


@pytest.fixture()
def toy_config_path(tmp_path):
    path = tmp_path / "toy.cfg"
    path.write_text(TOY_CONFIG)
    return str(path)


def first_entry_paths(toy_corpus):
    base = os.path.dirname(toy_corpus)
    with open(toy_corpus) as fh:
        wav, transcript, dur, ts = fh.readline().strip().split("|")
    return (os.path.join(base, wav), transcript, os.path.join(base, dur),
            os.path.join(base, ts))


class TestPreprocess:
    def test_empty_manifest(self, tmp_path, capsys):
        manifest = tmp_path / "empty.txt"
        manifest.write_text("")
        rc = main(["preprocess", str(manifest), "--outdir", str(tmp_path / "out")])
        assert rc == 0
        assert "empty manifest" in capsys.readouterr().out

    def test_single_entry_outputs(self, toy_corpus, toy_config_path, tmp_path, capsys):
        outdir = tmp_path / "cache"
        rc = main(["preprocess", toy_corpus, "--outdir", str(outdir),
                   "--config", toy_config_path])
        assert rc == 0
        mels = sorted(p for p in os.listdir(outdir) if p.endswith(".gsamel"))
        sidecars = sorted(p for p in os.listdir(outdir) if p.endswith(".gsafra"))
        assert len(mels) == 8 and len(sidecars) == 8
        mel = formats.read_mel(outdir / mels[0])
        analysis = formats.read_frame_analysis(outdir / sidecars[0])
        assert mel.n_frames == analysis.n_frames

    def test_rerun_bit_identical(self, toy_corpus, toy_config_path, tmp_path):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for outdir in (out_a, out_b):
            assert main(["preprocess", toy_corpus, "--outdir", str(outdir),
                         "--config", toy_config_path]) == 0
        for name in os.listdir(out_a):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_all_failures_nonzero_exit(self, tmp_path, capsys):
        manifest = tmp_path / "bad.txt"
        manifest.write_text("missing.wav|abc|missing.dur|missing.tsv\n")
        rc = main(["preprocess", str(manifest), "--outdir", str(tmp_path / "o")])
        assert rc == 1


class TestSegment:
    @pytest.fixture()
    def mel_path(self, toy_corpus, tmp_path):
        wav, _, _, _ = first_entry_paths(toy_corpus)
        clip = load_wav(wav)
        from gsatts.audio import mel_spectrogram

        mel = mel_spectrogram(clip, SMALL_MEL)
        path = tmp_path / "ref.gsamel"
        formats.write_mel(path, mel)
        return str(path), mel

    def test_timestamp_mode_full_span(self, tmp_path, capsys):
        cfg = MelConfig(n_mels=8)
        frames = np.full((50, 8), np.log(1e-5))
        path = tmp_path / "m.gsamel"
        formats.write_mel(path, MelSpectrogram(frames, cfg))
        sec = cfg.hop_length / cfg.sample_rate_hz
        ts = tmp_path / "ts.tsv"
        ts.write_text(f"whole\t0\t{50 * sec:.9f}\tNOUN\n")
        rc = main(["segment", "--mel", str(path), "--timestamps", str(ts)])
        assert rc == 0
        line = capsys.readouterr().out.strip()
        assert line.split("\t") == ["0", "whole", "0", "50", "50", "NOUN"]

    def test_attention_mode_matches_dtw(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        n, t = 3, 30
        cfg = MelConfig(n_mels=8)
        formats.write_mel(tmp_path / "m.gsamel",
                          MelSpectrogram(np.zeros((t, 8)), cfg))
        centers = np.array([4.0, 14.0, 24.0])
        cols = np.arange(t)
        weights = np.exp(-(((cols[None, :] - centers[:, None]) / 3.0) ** 2)) + 0.01
        formats.write_attention(tmp_path / "a.gsaatt", weights, [0, 1, 2],
                                ["one", "two", "three"])
        rc = main(["segment", "--mel", str(tmp_path / "m.gsamel"),
                   "--attention", str(tmp_path / "a.gsaatt")])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 3
        from gsatts.segmentation import CrossAttentionMatrix, dtw_align, intervals_from_path

        attn = CrossAttentionMatrix(weights, [0, 1, 2], ["one", "two", "three"])
        expected = intervals_from_path(dtw_align(attn), attn)
        got_bounds = [(int(l.split("\t")[2]), int(l.split("\t")[3])) for l in lines]
        assert got_bounds == [(iv.start_frame, iv.end_frame) for iv in expected]

    def test_attention_frame_mismatch_is_usage_error(self, tmp_path, capsys):
        cfg = MelConfig(n_mels=8)
        formats.write_mel(tmp_path / "m.gsamel",
                          MelSpectrogram(np.zeros((10, 8)), cfg))
        formats.write_attention(tmp_path / "a.gsaatt", np.ones((2, 99)), [0, 1],
                                ["a", "b"])
        rc = main(["segment", "--mel", str(tmp_path / "m.gsamel"),
                   "--attention", str(tmp_path / "a.gsaatt")])
        assert rc == 2

    def test_random_mode_deterministic(self, mel_path, capsys):
        path, _ = mel_path
        rc = main(["segment", "--mel", path, "--random", "--seed", "7",
                   "--min-frames", "10"])
        assert rc == 0
        first = capsys.readouterr().out
        rc = main(["segment", "--mel", path, "--random", "--seed", "7",
                   "--min-frames", "10"])
        assert rc == 0
        assert capsys.readouterr().out == first

    def test_plot_written(self, mel_path, tmp_path, capsys):
        path, _ = mel_path
        png = tmp_path / "seg.png"
        rc = main(["segment", "--mel", path, "--random", "--seed", "1",
                   "--min-frames", "10", "--plot", str(png)])
        assert rc == 0
        assert png.exists() and png.stat().st_size > 0


class TestTrainCommand:
    def test_train_writes_artifacts(self, toy_corpus, toy_config_path, tmp_path, capsys):
        outdir = tmp_path / "run"
        rc = main(["train", toy_corpus, "--outdir", str(outdir),
                   "--config", toy_config_path, "--seed", "5"])
        assert rc == 0
        assert (outdir / "checkpoint_final.gsackpt").exists()
        log_lines = (outdir / "loss_log.tsv").read_text().strip().splitlines()
        assert log_lines[0].startswith("step\t")
        assert len(log_lines) == 6
        emitted = (outdir / "effective_config.txt").read_text()
        cfg = parse_run_config(emitted)
        assert cfg.train.seed == 5
        assert cfg.train.max_steps == 5


class TestSynthCommand:
    def test_synth_deterministic(self, mini_checkpoint_path, toy_corpus, tmp_path):
        wav, _, _, ts = first_entry_paths(toy_corpus)
        out_a = tmp_path / "a.gsamel"
        out_b = tmp_path / "b.gsamel"
        for out in (out_a, out_b):
            rc = main(["synth", "--checkpoint", mini_checkpoint_path,
                       "--text", "dal bo", "--reference", wav,
                       "--timestamps", ts, "--out", str(out)])
            assert rc == 0
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_synth_wav_output(self, mini_checkpoint_path, toy_corpus, tmp_path):
        wav, _, _, ts = first_entry_paths(toy_corpus)
        out_wav = tmp_path / "synth.wav"
        rc = main(["synth", "--checkpoint", mini_checkpoint_path,
                   "--text", "dal bo", "--reference", wav, "--timestamps", ts,
                   "--out", str(tmp_path / "s.gsamel"), "--wav", str(out_wav)])
        assert rc == 0
        clip = load_wav(out_wav)
        assert clip.samples.size > 0

    def test_override_by_word(self, mini_checkpoint_path, toy_corpus, tmp_path):
        wav, transcript, _, ts = first_entry_paths(toy_corpus)
        word = transcript.split()[0]
        rc = main(["synth", "--checkpoint", mini_checkpoint_path,
                   "--text", "bo dal", "--reference", wav, "--timestamps", ts,
                   "--out", str(tmp_path / "o.gsamel"),
                   "--override", f"{word}=1.0"])
        assert rc == 0

    def test_override_absent_word_lists_available(self, mini_checkpoint_path,
                                                  toy_corpus, tmp_path, capsys):
        wav, transcript, _, ts = first_entry_paths(toy_corpus)
        rc = main(["synth", "--checkpoint", mini_checkpoint_path,
                   "--text", "bo", "--reference", wav, "--timestamps", ts,
                   "--out", str(tmp_path / "o.gsamel"),
                   "--override", "notaword=1.0"])
        assert rc == 2
        err = capsys.readouterr().err
        for word in transcript.split():
            assert word in err

    def test_override_spec_parsing(self):
        intervals = [WordInterval(0, 0, 5, None, "the"),
                     WordInterval(1, 5, 9, None, "cat"),
                     WordInterval(2, 9, 14, None, "the")]
        override = parse_override_spec("the#2=0.5,cat=1", intervals)
        assert np.allclose(override.weights, [0.0, 1.0, 0.5])
        with pytest.raises(UsageError):
            parse_override_spec("the#3=1", intervals)
        with pytest.raises(UsageError):
            parse_override_spec("cat=0", intervals)


class TestEvalCommand:
    def test_eval_writes_reports(self, mini_checkpoint_path, toy_corpus, tmp_path):
        outdir = tmp_path / "eval"
        rc = main(["eval", toy_corpus, "--checkpoint", mini_checkpoint_path,
                   "--outdir", str(outdir), "--gl-iters", "5", "--plot"])
        assert rc == 0
        metrics = dict(
            line.split("=", 1)
            for line in (outdir / "metrics.txt").read_text().splitlines()
        )
        assert metrics["entries"] == "8"
        assert "pos_attention.NOUN" in metrics
        fractions = [float(metrics[f"pos_attention.{t}"])
                     for t in ("NOUN", "VERB", "ADJ", "ETC")]
        assert sum(fractions) == pytest.approx(1.0, abs=1e-9)
        table = (outdir / "per_utterance.tsv").read_text().strip().splitlines()
        assert len(table) == 9
        assert (outdir / "pos_attention.png").exists()

    def test_eval_with_hypotheses_and_override(self, mini_checkpoint_path,
                                               toy_corpus, tmp_path):
        hyp_dir = tmp_path / "hyp"
        hyp_dir.mkdir()
        from gsatts.data import parse_manifest

        for entry in parse_manifest(toy_corpus):
            (hyp_dir / f"{entry.entry_id}.txt").write_text(entry.transcript)
        outdir = tmp_path / "eval"
        rc = main(["eval", toy_corpus, "--checkpoint", mini_checkpoint_path,
                   "--outdir", str(outdir), "--hyp-dir", str(hyp_dir),
                   "--pos-override", "NOUN,VERB,ADJ,ETC", "--gl-iters", "3"])
        assert rc == 0
        metrics = dict(
            line.split("=", 1)
            for line in (outdir / "metrics.txt").read_text().splitlines()
        )
        assert metrics["wer_mean_percent"] == "0.0000"
        assert metrics["override.fallbacks"] == "0"
        table = (outdir / "override_experiment.tsv").read_text().strip().splitlines()
        assert len(table) == 9
        # full-mask override: treatment identical to baseline
        for line in table[1:]:
            fields = line.split("\t")
            assert float(fields[-1]) == 0.0


class TestInspectCommand:
    def test_inspect_writes_tables_and_heatmaps(self, mini_checkpoint_path,
                                                toy_corpus, tmp_path, capsys):
        wav, _, _, ts = first_entry_paths(toy_corpus)
        outdir = tmp_path / "inspect"
        rc = main(["inspect", "--checkpoint", mini_checkpoint_path,
                   "--reference", wav, "--timestamps", ts,
                   "--outdir", str(outdir)])
        assert rc == 0
        table = (outdir / "attention_table.tsv").read_text().strip().splitlines()
        assert table[0] == "layer\thead\tquery_idx\tkey_idx\tweight"
        assert len(table) > 1
        pngs = [p for p in os.listdir(outdir) if p.endswith(".png")]
        assert len(pngs) == 4  # 2 layers x 2 heads
