"""Train briefly on the synthetic toy corpus, then synthesize a new
utterance with a style taken from one of the training references.

A real overfit run uses 2000 steps (see the acceptance suite); 150 steps
here keep the demo under a minute while still showing the loss falling.
"""

import os
import tempfile

from gsatts.acoustic import AcousticConfig, TextSequence, synthesize_mel
from gsatts.audio import MelConfig, griffin_lim_invert, save_wav
from gsatts.data import parse_manifest, prepare_corpus
from gsatts.style_encoder import GsaConfig, encode_style
from gsatts.toydata import build_toy_corpus
from gsatts.training import TrainConfig, train

mel_cfg = MelConfig(n_mels=32)
gsa_cfg = GsaConfig(d_style=48, n_mels=32, ffn_hidden=192, dropout_rate=0.0)
ac_cfg = AcousticConfig(d_model=48, n_enc_blocks=2, n_dec_blocks=2, n_mels=32,
                        d_style=48, ffn_hidden=192, dropout_rate=0.0)

with tempfile.TemporaryDirectory() as workdir:
    manifest = build_toy_corpus(workdir, n_utterances=8, seed=0, mel_cfg=mel_cfg,
                                frames_per_letter=(6, 9))
    print(f"toy corpus at {workdir} (8 utterances)")

    train_cfg = TrainConfig(max_steps=150, batch_size=8, seed=7, warmup_steps=100,
                            lr_scale=0.5, checkpoint_interval=0)
    checkpoint, reports = train(manifest, train_cfg, mel_cfg, gsa_cfg, ac_cfg)
    print(f"trained {len(reports)} steps: total loss "
          f"{reports[0].total:.1f} -> {reports[-1].total:.3f}")

    params = checkpoint.to_param_table()
    utterances, _, _ = prepare_corpus(
        parse_manifest(manifest), mel_cfg,
        pitch_stats=(checkpoint.pitch_mean, checkpoint.pitch_std),
    )
    reference = utterances[0]
    style, _, _ = encode_style(reference.mel, reference.intervals, params, gsa_cfg)
    print(f"style reference: {reference.entry_id!r} ({reference.transcript!r})")

    text = TextSequence.from_text("dal bo")
    mel_out, pitch, durations = synthesize_mel(text, style, params, ac_cfg,
                                               mel_config=mel_cfg)
    print(f"synthesized {mel_out.n_frames} frames for {text.n_symbols} symbols")

    clip = griffin_lim_invert(mel_out, n_iters=40)
    out_path = os.path.join(workdir, "synth.wav")
    save_wav(out_path, clip)
    print(f"wrote {out_path}: {clip.duration_sec:.2f} s of audio "
          f"(RMS {clip.rms():.4f})")
