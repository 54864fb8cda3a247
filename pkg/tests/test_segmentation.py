import numpy as np
import pytest

from gsatts.audio import MelConfig, MelSpectrogram
from gsatts.errors import BoundsError, DegenerateInputError, FormatError
from gsatts.segmentation import (
    AlignmentPath,
    CrossAttentionMatrix,
    WordInterval,
    check_intervals,
    dtw_align,
    intervals_from_path,
    load_timestamps,
    path_cost,
    random_slice_segments,
    slice_segments,
    strip_padding,
)

CFG = MelConfig(n_mels=4)


def make_mel(n_frames: int, n_mels: int = 4) -> MelSpectrogram:
    rng = np.random.default_rng(n_frames)
    frames = np.log(np.maximum(rng.uniform(0, 1, (n_frames, n_mels)), 1e-5))
    return MelSpectrogram(frames, MelConfig(n_mels=n_mels))


def enumerate_min_cost(weights: np.ndarray) -> float:
    """Exhaustive enumeration over every monotone path (test oracle)."""
    n, t = weights.shape
    best = [np.inf]

    def walk(i, j, acc):
        acc += -weights[i, j]
        if (i, j) == (n - 1, t - 1):
            best[0] = min(best[0], acc)
            return
        if i + 1 < n and j + 1 < t:
            walk(i + 1, j + 1, acc)
        if j + 1 < t:
            walk(i, j + 1, acc)
        if i + 1 < n:
            walk(i + 1, j, acc)

    walk(0, 0, 0.0)
    return best[0]


def uniform_attention(n, t, seed):
    rng = np.random.default_rng(seed)
    weights = rng.uniform(0.01, 1.0, (n, t))
    token_to_word = np.sort(rng.integers(0, max(1, n // 2) + 1, n)).tolist()
    n_words = max(token_to_word) + 1
    words = [f"w{k}" for k in range(n_words)]
    return CrossAttentionMatrix(weights, token_to_word, words)


class TestDtwAlign:
    def test_single_cell(self):
        attn = CrossAttentionMatrix(np.array([[1.0]]), [0], ["a"])
        assert dtw_align(attn).steps == ((0, 0),)

    def test_two_by_two_identity(self):
        attn = CrossAttentionMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1], ["a", "b"])
        path = dtw_align(attn)
        assert path.steps == ((0, 0), (1, 1))
        assert path_cost(path, attn) == -2.0
        # all three monotone paths, by hand: diag -2, around either corner -2... -1
        assert enumerate_min_cost(attn.weights) == -2.0

    def test_cost_matches_enumeration_oracle(self):
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            n = int(rng.integers(1, 7))
            t = int(rng.integers(1, 9))
            attn = uniform_attention(n, t, seed)
            got = path_cost(dtw_align(attn), attn)
            want = enumerate_min_cost(attn.weights)
            assert got == pytest.approx(want, abs=1e-12), f"seed {seed} ({n}x{t})"

    def test_scale_invariance(self):
        for seed in range(20):
            attn = uniform_attention(5, 7, seed)
            scaled = CrossAttentionMatrix(attn.weights * 7.5, attn.token_to_word, attn.words)
            assert dtw_align(attn).steps == dtw_align(scaled).steps

    def test_path_shape_invariants(self):
        for seed in range(20):
            attn = uniform_attention(4, 12, seed)
            path = dtw_align(attn)
            assert path.steps[0] == (0, 0)
            assert path.steps[-1] == (attn.n_tokens - 1, attn.n_frames - 1)

    def test_empty_matrix_rejected(self):
        with pytest.raises(DegenerateInputError):
            CrossAttentionMatrix(np.zeros((0, 3)), [], [])


class TestIntervalsFromPath:
    def test_single_token_full_span(self):
        attn = CrossAttentionMatrix(np.ones((1, 4)), [0], ["hi"])
        path = dtw_align(attn)
        intervals = intervals_from_path(path, attn)
        assert len(intervals) == 1
        assert (intervals[0].start_frame, intervals[0].end_frame) == (0, 4)
        assert intervals[0].word == "hi"

    def test_diagonal_two_words(self):
        attn = CrossAttentionMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1], ["a", "b"])
        intervals = intervals_from_path(dtw_align(attn), attn)
        assert [(iv.start_frame, iv.end_frame) for iv in intervals] == [(0, 1), (1, 2)]

    def test_two_tokens_one_word_union(self):
        weights = np.array(
            [[1.0, 0.1, 0.1, 0.1],
             [0.1, 1.0, 0.1, 0.1],
             [0.1, 0.1, 1.0, 1.0]]
        )
        attn = CrossAttentionMatrix(weights, [0, 0, 1], ["ab", "c"])
        intervals = intervals_from_path(dtw_align(attn), attn)
        assert intervals[0].word_index == 0
        assert intervals[0].start_frame == 0
        assert intervals[0].end_frame >= 2
        assert intervals[-1].end_frame == 4

    def test_sorted_disjoint_nonempty_on_ridge_attention(self):
        # Realistic ASR cross-attention concentrates each token's mass on
        # its own frame span; there every word keeps a non-empty interval.
        for seed in range(30):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(2, 6))
            t = int(4 * n + rng.integers(0, 8))
            centers = np.sort(rng.uniform(0, t - 1, n))
            cols = np.arange(t)
            weights = np.exp(-((cols[None, :] - centers[:, None]) / 2.0) ** 2) + 0.01
            token_to_word = np.sort(rng.integers(0, n, n)).tolist()
            remap = {w: k for k, w in enumerate(dict.fromkeys(token_to_word))}
            token_to_word = [remap[w] for w in token_to_word]
            words = [f"w{k}" for k in range(max(token_to_word) + 1)]
            attn = CrossAttentionMatrix(weights, token_to_word, words)
            intervals = intervals_from_path(dtw_align(attn), attn)
            check_intervals(intervals, t)
            assert {iv.word_index for iv in intervals} == set(token_to_word)

    def test_degenerate_stacking_drops_words_deterministically(self, caplog):
        # A path that parks several words on one frame cannot give each a
        # non-empty interval; later words are dropped with a warning.
        attn = CrossAttentionMatrix(np.ones((3, 2)), [0, 1, 2], ["a", "b", "c"])
        path = AlignmentPath(((0, 0), (0, 1), (1, 1), (2, 1)))
        with caplog.at_level("WARNING"):
            intervals = intervals_from_path(path, attn)
        assert [iv.word_index for iv in intervals] == [0]
        assert intervals[0].end_frame == 2
        assert sum("lost all frames" in rec.message for rec in caplog.records) == 2

    def test_path_must_reach_corner(self):
        attn = CrossAttentionMatrix(np.ones((2, 3)), [0, 1], ["a", "b"])
        bad = AlignmentPath(((0, 0), (0, 1)))
        with pytest.raises(BoundsError):
            intervals_from_path(bad, attn)


class TestSliceSegments:
    def test_whole_mel_identity(self):
        mel = make_mel(12)
        segments = slice_segments(mel, [WordInterval(0, 0, 12)], min_segment_frames=4)
        assert len(segments) == 1
        assert np.array_equal(segments[0].mel, mel.frames)

    def test_padding_rule(self):
        mel = make_mel(10)
        segments = slice_segments(mel, [WordInterval(0, 3, 5)], min_segment_frames=8)
        seg = segments[0]
        assert seg.n_frames == 8
        assert np.array_equal(seg.mel[:2], mel.frames[3:5])
        for row in seg.mel[2:]:
            assert np.array_equal(row, mel.frames[4])

    def test_reconstruction(self):
        mel = make_mel(30)
        intervals = [WordInterval(0, 0, 9), WordInterval(1, 12, 20), WordInterval(2, 25, 30)]
        segments = slice_segments(mel, intervals, min_segment_frames=2)
        rebuilt = np.concatenate([strip_padding(s) for s in segments])
        expected = np.concatenate([mel.frames[0:9], mel.frames[12:20], mel.frames[25:30]])
        assert np.array_equal(rebuilt, expected)

    def test_out_of_bounds(self):
        mel = make_mel(5)
        with pytest.raises(BoundsError):
            slice_segments(mel, [WordInterval(0, 2, 9)])

    def test_overlap_rejected(self):
        mel = make_mel(10)
        with pytest.raises(BoundsError):
            slice_segments(mel, [WordInterval(0, 0, 5), WordInterval(1, 4, 8)])


class TestRandomSlices:
    def test_exact_minimum_single_slice(self):
        segments = random_slice_segments(make_mel(40), min_frames=40, seed=0)
        assert len(segments) == 1
        assert (segments[0].interval.start_frame, segments[0].interval.end_frame) == (0, 40)
        assert not segments[0].fallback

    def test_pigeonhole_single_slice(self):
        segments = random_slice_segments(make_mel(79), min_frames=40, seed=1)
        assert len(segments) == 1

    def test_partition_property(self):
        mel = make_mel(200)
        for seed in range(100):
            segments = random_slice_segments(mel, min_frames=40, seed=seed)
            cursor = 0
            for seg in segments:
                assert seg.interval.start_frame == cursor
                assert seg.interval.n_frames >= 40
                assert seg.interval.pos_tag is None
                cursor = seg.interval.end_frame
            assert cursor == 200

    def test_reproducible(self):
        mel = make_mel(200)
        a = random_slice_segments(mel, 40, seed=7)
        b = random_slice_segments(mel, 40, seed=7)
        assert [s.interval for s in a] == [s.interval for s in b]

    def test_fallback_when_too_short(self, caplog):
        with caplog.at_level("WARNING"):
            segments = random_slice_segments(make_mel(20), min_frames=40, seed=0)
        assert len(segments) == 1
        assert segments[0].fallback
        assert segments[0].n_frames == 20


class TestLoadTimestamps:
    def test_full_span(self, tmp_path):
        mel = make_mel(50)
        sec = mel.config.hop_length / mel.config.sample_rate_hz
        path = tmp_path / "ts.tsv"
        path.write_text(f"hello\t0.0\t{50 * sec:.9f}\tNOUN\n")
        intervals = load_timestamps(path, mel)
        assert len(intervals) == 1
        assert (intervals[0].start_frame, intervals[0].end_frame) == (0, 50)
        assert intervals[0].pos_tag == "NOUN"
        assert intervals[0].word == "hello"

    def test_second_to_frame_conversion(self, tmp_path):
        mel = make_mel(50)
        path = tmp_path / "ts.tsv"
        path.write_text("word\t0.10\t0.30\n")
        intervals = load_timestamps(path, mel)
        assert intervals[0].start_frame == 8  # floor(0.10 * 22050 / 256)
        assert intervals[0].end_frame == 25  # floor(0.30 * 22050 / 256)

    def test_overlap_rejected(self, tmp_path):
        path = tmp_path / "ts.tsv"
        path.write_text("a\t0.0\t0.5\nb\t0.4\t0.9\n")
        with pytest.raises(FormatError):
            load_timestamps(path, make_mel(100))

    def test_malformed_number(self, tmp_path):
        path = tmp_path / "ts.tsv"
        path.write_text("a\t0.0\tnope\n")
        with pytest.raises(FormatError):
            load_timestamps(path, make_mel(10))

    def test_zero_length_dropped(self, tmp_path, caplog):
        path = tmp_path / "ts.tsv"
        path.write_text("a\t0.0\t0.001\nb\t0.2\t0.5\n")
        with caplog.at_level("WARNING"):
            intervals = load_timestamps(path, make_mel(60))
        assert len(intervals) == 1
        assert intervals[0].word == "b"
        assert any("dropped" in rec.message for rec in caplog.records)

    def test_unknown_pos_maps_to_etc(self, tmp_path):
        path = tmp_path / "ts.tsv"
        path.write_text("a\t0.0\t0.3\tADVERB\n")
        intervals = load_timestamps(path, make_mel(40))
        assert intervals[0].pos_tag == "ETC"
