"""Walk through the audio front end: loudness, mel extraction, pitch, and
Griffin-Lim inversion, using a synthesized tone as the input signal."""

import math

import numpy as np

from gsatts.audio import (
    AudioClip,
    MelConfig,
    analyze_frames,
    griffin_lim_invert,
    mel_spectrogram,
    normalize_loudness,
    resample,
)

rate = 22050
cfg = MelConfig()

# A 330 Hz tone with a little vibrato, nominally at -12 dBFS.
t = np.arange(rate * 2) / rate
vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * 5.0 * t)
clip = AudioClip(0.25 * np.sin(2 * np.pi * 330.0 * t * vibrato), rate)
print(f"input: {clip.duration_sec:.2f} s at {clip.sample_rate_hz} Hz, "
      f"RMS {20 * math.log10(clip.rms()):.1f} dBFS")

clip = resample(clip, cfg.sample_rate_hz)
clip = normalize_loudness(clip, -27.0)
print(f"after loudness normalization: RMS {20 * math.log10(clip.rms()):.2f} dBFS")

mel = mel_spectrogram(clip, cfg)
print(f"mel spectrogram: {mel.n_frames} frames x {mel.config.n_mels} bands, "
      f"range [{mel.frames.min():.2f}, {mel.frames.max():.2f}] (ln scale)")

analysis = analyze_frames(clip, cfg)
voiced = analysis.voiced.mean()
f0 = np.median(analysis.f0_hz[analysis.voiced])
print(f"frame analysis: {voiced:.0%} voiced, median F0 {f0:.1f} Hz")

inverted, history = griffin_lim_invert(mel, n_iters=40, return_history=True)
spectrum = np.abs(np.fft.rfft(inverted.samples))
peak_hz = np.argmax(spectrum) * inverted.sample_rate_hz / inverted.samples.size
print(f"Griffin-Lim inversion: residual {history[0]:.3f} -> {history[-1]:.3f} "
      f"over {len(history)} iterations; spectral peak at {peak_hz:.0f} Hz")
