"""Shared fixtures: toy corpus, small configs, and a briefly trained model."""

import numpy as np
import pytest

from gsatts.acoustic import AcousticConfig
from gsatts.audio import AudioClip, MelConfig
from gsatts.style_encoder import GsaConfig
from gsatts.toydata import build_toy_corpus
from gsatts.training import TrainConfig, train


def tone_clip(freq_hz: float, duration_sec: float = 1.0, rate: int = 22050,
              amplitude: float = 0.3) -> AudioClip:
    t = np.arange(int(duration_sec * rate))
    return AudioClip(amplitude * np.sin(2.0 * np.pi * freq_hz * t / rate), rate)


SMALL_MEL = MelConfig(n_mels=32)
SMALL_GSA = GsaConfig(d_style=48, n_mels=32, ffn_hidden=192, dropout_rate=0.0)
SMALL_ACOUSTIC = AcousticConfig(
    d_model=48, n_enc_blocks=2, n_dec_blocks=2, n_mels=32, d_style=48,
    ffn_hidden=192, dropout_rate=0.0,
)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Manifest path of a deterministic 8-utterance synthetic corpus."""
    outdir = tmp_path_factory.mktemp("toy_corpus")
    manifest = build_toy_corpus(
        outdir, n_utterances=8, seed=0, mel_cfg=SMALL_MEL,
        words_per_utterance=(2, 2), frames_per_letter=(3, 5),
        frames_per_space=(2, 2),
    )
    return manifest


@pytest.fixture(scope="session")
def mini_checkpoint(toy_corpus, tmp_path_factory):
    """A lightly trained checkpoint for functional (non-overfit) tests."""
    ckpt, _ = train(
        toy_corpus,
        TrainConfig(max_steps=40, batch_size=8, seed=3, warmup_steps=100,
                    lr_scale=0.5, checkpoint_interval=0),
        SMALL_MEL, SMALL_GSA, SMALL_ACOUSTIC,
    )
    return ckpt


@pytest.fixture(scope="session")
def mini_checkpoint_path(mini_checkpoint, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "mini.gsackpt"
    mini_checkpoint.save(path)
    return str(path)
