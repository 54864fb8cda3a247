import dataclasses
import math

import numpy as np
import pytest

from gsatts import nn, tape
from gsatts.acoustic import AcousticConfig, TextSequence
from gsatts.audio import MelConfig
from gsatts.errors import (
    CheckpointVersionError,
    ConfigurationError,
    TrainingError,
)
from gsatts.style_encoder import GsaConfig
from gsatts.training import (
    Checkpoint,
    LossReport,
    TrainConfig,
    adam_step,
    clip_gradients,
    grad_check,
    init_model_params,
    noam_lr,
    numeric_gradient_elements,
    relative_error,
    total_loss,
    train,
)

from conftest import SMALL_ACOUSTIC, SMALL_GSA, SMALL_MEL


class TestTotalLoss:
    def test_zero_when_equal(self):
        rng = np.random.default_rng(0)
        mel = rng.standard_normal((6, 4))
        pitch = rng.standard_normal(5)
        dur = rng.standard_normal(5)
        report = total_loss(mel, mel, pitch, pitch, dur, dur)
        assert report.total == 0.0

    def test_constant_offset(self):
        rng = np.random.default_rng(1)
        mel = rng.standard_normal((6, 4))
        z = np.zeros(3)
        report = total_loss(mel + 1.0, mel, z, z, z, z, weights=(1.0, 0.0, 0.0))
        assert report.total == pytest.approx(1.0, abs=1e-12)

    def test_double_loop_oracle(self):
        rng = np.random.default_rng(2)
        pred_mel, gt_mel = rng.standard_normal((2, 5, 3))
        pred_p, gt_p, pred_d, gt_d = rng.standard_normal((4, 6))
        mask = np.array([True, True, False, True, True, True])
        report = total_loss(pred_mel, gt_mel, pred_p, gt_p, pred_d, gt_d,
                            weights=(1.0, 0.1, 0.2), pad_mask=mask)

        mel_acc = 0.0
        for i in range(5):
            for j in range(3):
                mel_acc += (pred_mel[i, j] - gt_mel[i, j]) ** 2
        mel_acc /= 15
        p_acc = sum((pred_p[i] - gt_p[i]) ** 2 for i in range(6) if mask[i]) / 5
        d_acc = sum((pred_d[i] - gt_d[i]) ** 2 for i in range(6) if mask[i]) / 5
        want = mel_acc + 0.1 * p_acc + 0.2 * d_acc
        assert report.total == pytest.approx(want, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ConfigurationError):
            total_loss(np.zeros((2, 2)), np.zeros((3, 2)), np.zeros(1),
                       np.zeros(1), np.zeros(1), np.zeros(1))

    def test_negative_loss_impossible(self):
        with pytest.raises(TrainingError):
            LossReport(-1.0, 0.0, 0.0, -1.0, 0)


class TestNoamLr:
    def test_branch_crossover_at_warmup(self):
        warmup, d_model, scale = 4000, 384, 1.0
        lr = noam_lr(warmup, d_model, warmup, scale)
        assert lr == pytest.approx(scale * d_model ** -0.5 * warmup ** -0.5, rel=1e-12)
        ramp = warmup * warmup ** -1.5
        decay = warmup ** -0.5
        assert ramp == pytest.approx(decay, rel=1e-12)

    def test_first_step(self):
        lr = noam_lr(1, 384, 4000, 1.0)
        assert lr == pytest.approx(384 ** -0.5 * 4000 ** -1.5, rel=1e-12)

    def test_rises_then_decays(self):
        warmup = 50
        values = [noam_lr(s, 64, warmup, 1.0) for s in range(1, 3 * warmup + 1)]
        peak = int(np.argmax(values)) + 1
        assert peak == warmup
        for a, b in zip(values[: warmup - 1], values[1:warmup]):
            assert b >= a
        for a, b in zip(values[warmup - 1 :], values[warmup:]):
            assert b <= a

    def test_bad_step(self):
        with pytest.raises(ConfigurationError):
            noam_lr(0, 64, 10, 1.0)


def scalar_dicts(value, *names):
    return {name: np.array([value], dtype=np.float64) for name in names}


class TestAdamStep:
    def test_zero_gradient_no_change(self):
        cfg = TrainConfig(adam_eps=1e-8)
        params = scalar_dicts(1.5, "w")
        adam_step(params, scalar_dicts(0.0, "w"), scalar_dicts(0.0, "w"),
                  scalar_dicts(0.0, "w"), t=1, cfg=cfg, lr=0.1)
        assert params["w"][0] == 1.5

    def test_first_step_bias_correction(self):
        cfg = TrainConfig(adam_eps=1e-8)
        params = scalar_dicts(0.0, "w")
        adam_step(params, scalar_dicts(1.0, "w"), scalar_dicts(0.0, "w"),
                  scalar_dicts(0.0, "w"), t=1, cfg=cfg, lr=0.1)
        assert params["w"][0] == pytest.approx(-0.1 * 1.0 / (1.0 + 1e-8), rel=1e-12)

    def test_ten_steps_match_scalar_recurrence_oracle(self):
        cfg = TrainConfig(adam_eps=1e-8, beta1=0.9, beta2=0.98)
        rng = np.random.default_rng(3)
        grads = rng.standard_normal(10)
        lr = 0.05

        params = scalar_dicts(0.3, "w")
        m = scalar_dicts(0.0, "w")
        v = scalar_dicts(0.0, "w")
        for t, g in enumerate(grads, start=1):
            adam_step(params, scalar_dicts(g, "w"), m, v, t=t, cfg=cfg, lr=lr)

        theta, m_ref, v_ref = 0.3, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m_ref = 0.9 * m_ref + 0.1 * g
            v_ref = 0.98 * v_ref + 0.02 * g * g
            mhat = m_ref / (1 - 0.9 ** t)
            vhat = v_ref / (1 - 0.98 ** t)
            theta -= lr * mhat / (math.sqrt(vhat) + 1e-8)
        assert abs(params["w"][0] - theta) <= 1e-10

    def test_non_finite_gradient_names_parameter(self):
        cfg = TrainConfig()
        with pytest.raises(TrainingError, match="enc.b0"):
            adam_step(scalar_dicts(0.0, "enc.b0"), scalar_dicts(np.nan, "enc.b0"),
                      scalar_dicts(0.0, "enc.b0"), scalar_dicts(0.0, "enc.b0"),
                      t=1, cfg=cfg, lr=0.1)


def test_clip_gradients():
    grads = {"a": np.array([3.0, 4.0]), "b": np.array([12.0])}
    norm = clip_gradients(grads, 1.0)
    assert norm == pytest.approx(13.0)
    total = math.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values()))
    assert total == pytest.approx(1.0, rel=1e-9)
    grads2 = {"a": np.array([0.3])}
    clip_gradients(grads2, 1.0)
    assert grads2["a"][0] == pytest.approx(0.3)


class TestCheckpoint:
    def make_checkpoint(self, seed=0):
        gsa = GsaConfig(d_style=16, n_mels=6, lse_kernel=3, gse_layers=1,
                        ffn_hidden=24, dropout_rate=0.0)
        ac = AcousticConfig(d_model=16, n_enc_blocks=1, n_dec_blocks=1,
                            n_mels=6, d_style=16, ffn_hidden=24, dropout_rate=0.0)
        rng = np.random.Generator(np.random.PCG64(seed))
        params = init_model_params(gsa, ac, rng, np.float32)
        arrays = {k: v.data for k, v in params.items()}
        return Checkpoint(
            params=arrays,
            adam_m={k: np.zeros_like(v) for k, v in arrays.items()},
            adam_v={k: np.zeros_like(v) for k, v in arrays.items()},
            step=7,
            train_config=TrainConfig(max_steps=7, loss_weights=(1.0, 0.2, 0.3)),
            mel_config=MelConfig(n_mels=6),
            gsa_config=gsa,
            acoustic_config=ac,
            pitch_mean=5.1,
            pitch_std=0.4,
        ), gsa, ac

    def test_roundtrip_bitwise_forward(self, tmp_path):
        ckpt, gsa, ac = self.make_checkpoint()
        path = tmp_path / "x.gsackpt"
        ckpt.save(path)
        back = Checkpoint.load(path)
        assert back.step == 7
        assert back.train_config == ckpt.train_config
        assert back.mel_config == ckpt.mel_config
        assert back.gsa_config == ckpt.gsa_config
        assert back.acoustic_config == ckpt.acoustic_config
        assert back.pitch_mean == pytest.approx(5.1)

        from gsatts.acoustic import DurationSeq, PitchSeq, synthesize_t

        ids = TextSequence.from_text("ab").symbol_ids
        teacher = (DurationSeq(np.array([2, 2])), PitchSeq(np.zeros(2)))
        style = np.zeros(16, dtype=np.float32)
        out_a = synthesize_t(ids, tape.constant(style), ckpt.to_param_table(), ac,
                             teacher=teacher)[0].data
        out_b = synthesize_t(ids, tape.constant(style), back.to_param_table(), ac,
                             teacher=teacher)[0].data
        assert np.array_equal(out_a, out_b)

    def test_symbol_inventory_mismatch(self, tmp_path):
        from gsatts import formats

        ckpt, _, _ = self.make_checkpoint()
        path = tmp_path / "bad.gsackpt"
        ckpt.save(path)
        tensors, lines = formats.read_checkpoint_file(path)
        lines = [ln if not ln.startswith("symbols=") else "symbols=a\x1fb"
                 for ln in lines]
        formats.write_checkpoint_file(path, {k: v.astype(np.float32) for k, v in tensors.items()}, lines)
        with pytest.raises(CheckpointVersionError):
            Checkpoint.load(path)


class TestTrain:
    def test_zero_steps_returns_init(self, toy_corpus):
        cfg = TrainConfig(max_steps=0, batch_size=8, seed=5, checkpoint_interval=0)
        ckpt, reports = train(toy_corpus, cfg, SMALL_MEL, SMALL_GSA, SMALL_ACOUSTIC)
        assert reports == []
        assert ckpt.step == 0
        assert ckpt.params

    def test_same_seed_bitwise_identical(self, toy_corpus):
        cfg = TrainConfig(max_steps=6, batch_size=4, seed=11, warmup_steps=50,
                          lr_scale=0.5, checkpoint_interval=0)
        a, ra = train(toy_corpus, cfg, SMALL_MEL, SMALL_GSA, SMALL_ACOUSTIC)
        b, rb = train(toy_corpus, cfg, SMALL_MEL, SMALL_GSA, SMALL_ACOUSTIC)
        assert [r.total for r in ra] == [r.total for r in rb]
        assert set(a.params) == set(b.params)
        for name in a.params:
            assert np.array_equal(a.params[name], b.params[name]), name
            assert np.array_equal(a.adam_m[name], b.adam_m[name]), name

    def test_loss_decreases(self, toy_corpus):
        cfg = TrainConfig(max_steps=30, batch_size=8, seed=1, warmup_steps=100,
                          lr_scale=0.5, checkpoint_interval=0)
        _, reports = train(toy_corpus, cfg, SMALL_MEL, SMALL_GSA, SMALL_ACOUSTIC)
        assert reports[-1].total < 0.1 * reports[0].total

    @pytest.mark.parametrize("ablation", ["no_gse", "no_lse", "random_slices"])
    def test_ablation_modes_run(self, toy_corpus, ablation):
        cfg = TrainConfig(max_steps=2, batch_size=4, seed=2, ablation=ablation,
                          checkpoint_interval=0)
        ckpt, reports = train(toy_corpus, cfg, SMALL_MEL, SMALL_GSA, SMALL_ACOUSTIC)
        assert len(reports) == 2
        assert all(math.isfinite(r.total) for r in reports)
        if ablation == "no_gse":
            assert not any(k.startswith("gsa.gse") for k in ckpt.params)
        if ablation == "no_lse":
            assert "gsa.lse_proj.w" in ckpt.params


class TestGradCheckHarness:
    def test_relative_error_formula(self):
        assert relative_error(np.array([1.0]), np.array([1.0])) == 0.0
        assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)
        assert relative_error(np.array([0.0]), np.array([1e-10])) == pytest.approx(1e-2)

    def test_affine_tight(self):
        assert grad_check("affine", seed=1).max_error <= 1e-7

    def test_corrupted_gradient_is_caught(self):
        rng = np.random.default_rng(0)
        params = {}
        nn.add_affine(params, "probe", 4, 3, rng, np.float64)
        x = tape.constant(rng.standard_normal((5, 4)))
        proj = tape.constant(rng.standard_normal((5, 3)))

        def loss_fn():
            return tape.tsum(nn.affine(x, params, "probe") * proj)

        nn.zero_grads(params)
        loss_fn().backward()
        corrupted = params["probe.w"].grad.copy()
        corrupted.reshape(-1)[0] *= 1.10
        numeric = numeric_gradient_elements(
            loss_fn, params["probe.w"], list(range(corrupted.size)), 1e-5
        )
        assert relative_error(corrupted.reshape(-1), numeric) > 1e-2
