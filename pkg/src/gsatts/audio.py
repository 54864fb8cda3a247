"""Audio I/O, mel-spectrogram extraction, and frame-level prosody analysis.

Everything here is a pure function of its inputs: no global state, no hidden
RNG, safe to call from many threads at once.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window, resample_poly

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    FormatError,
    UnsupportedFormatError,
)

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 22050
DEFAULT_TARGET_DBFS = -27.0


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with nominal amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 1:
            raise DegenerateInputError("audio clip must hold at least one sample")
        if not np.all(np.isfinite(samples)):
            raise FormatError("audio clip contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ConfigurationError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def duration_sec(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.samples))))


@dataclass(frozen=True)
class MelConfig:
    """STFT and mel filterbank parameters."""

    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    n_fft: int = 1024
    hop_length: int = 256
    win_length: int = 1024
    n_mels: int = 80
    f_min_hz: float = 0.0
    f_max_hz: float = 8000.0
    log_floor: float = 1e-5

    def __post_init__(self):
        if not (self.hop_length <= self.win_length <= self.n_fft):
            raise ConfigurationError("need hop_length <= win_length <= n_fft")
        if not (0 <= self.f_min_hz < self.f_max_hz <= self.sample_rate_hz / 2):
            raise ConfigurationError("need 0 <= f_min < f_max <= nyquist")
        if self.n_mels < 1:
            raise ConfigurationError("n_mels must be >= 1")
        if self.log_floor <= 0:
            raise ConfigurationError("log_floor must be positive")


@dataclass(frozen=True)
class MelSpectrogram:
    """Time-major T x M matrix of natural-log mel magnitudes."""

    frames: np.ndarray
    config: MelConfig

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise DegenerateInputError("mel spectrogram needs at least one frame")
        if frames.shape[1] != self.config.n_mels:
            raise ConfigurationError(
                f"mel has {frames.shape[1]} bands, config says {self.config.n_mels}"
            )
        if not np.all(np.isfinite(frames)):
            raise FormatError("mel spectrogram contains non-finite entries")
        if np.any(frames < math.log(self.config.log_floor) - 1e-9):
            raise FormatError("mel spectrogram entry below ln(log_floor)")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class FrameAnalysis:
    """Per-frame RMS energy, F0 estimate, and voicing decision."""

    energy: np.ndarray
    f0_hz: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        energy = np.asarray(self.energy, dtype=np.float64)
        f0 = np.asarray(self.f0_hz, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        if not (energy.shape == f0.shape == voiced.shape) or energy.ndim != 1:
            raise ConfigurationError("analysis sequences must share one length")
        if not np.array_equal(f0 > 0, voiced):
            raise ConfigurationError("voicing must agree with f0 > 0")
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "f0_hz", f0)
        object.__setattr__(self, "voiced", voiced)

    @property
    def n_frames(self) -> int:
        return self.energy.shape[0]


# -- WAV I/O ----------------------------------------------------------------

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file (16-bit PCM or 32-bit float) as a mono clip.

    Multichannel input is averaged down to mono; 16-bit samples are scaled
    by 1/32768 so full negative scale maps to -1.0.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    offset = 12
    while offset + 8 <= len(blob):
        chunk_id = blob[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", blob, offset + 4)
        body = blob[offset + 8 : offset + 8 + chunk_size]
        if len(body) < chunk_size:
            raise FormatError(f"{path}: truncated '{chunk_id!r}' chunk")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise FormatError(f"{path}: fmt chunk too short")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            data = body
        offset += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if n_channels < 1:
        raise FormatError(f"{path}: zero channels")

    if audio_format == _WAVE_FORMAT_PCM and bits == 16:
        raw = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedFormatError(
            f"{path}: unsupported encoding (format={audio_format}, bits={bits})"
        )

    usable = (raw.size // n_channels) * n_channels
    if usable == 0:
        raise DegenerateInputError(f"{path}: empty data chunk")
    mono = raw[:usable].reshape(-1, n_channels).mean(axis=1)
    return AudioClip(mono, int(sample_rate))


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM, clipping samples outside [-1, 1]."""
    scaled = np.clip(clip.samples, -1.0, 1.0)
    pcm = np.round(scaled * 32767.0).astype("<i2")
    data = pcm.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(data),
        b"WAVE",
        b"fmt ",
        16,
        _WAVE_FORMAT_PCM,
        1,
        clip.sample_rate_hz,
        clip.sample_rate_hz * 2,
        2,
        16,
        b"data",
        len(data),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data)


# -- Gain and rate conversion -------------------------------------------------


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Polyphase resampling with scipy's Kaiser-windowed sinc filter."""
    if target_hz <= 0:
        raise ConfigurationError("target rate must be positive")
    if target_hz == clip.sample_rate_hz:
        return clip
    g = math.gcd(target_hz, clip.sample_rate_hz)
    out = resample_poly(clip.samples, target_hz // g, clip.sample_rate_hz // g)
    return AudioClip(out, target_hz)


def normalize_loudness(clip: AudioClip, target_dbfs: float = DEFAULT_TARGET_DBFS) -> AudioClip:
    """Scale the clip so its RMS level in dBFS matches ``target_dbfs``.

    Raises DegenerateInputError on digital silence. Samples pushed outside
    [-1, 1] by the gain are clipped and the count is reported via a warning.
    """
    rms = clip.rms()
    if rms <= 0.0:
        raise DegenerateInputError("cannot normalize a silent clip")
    gain = 10.0 ** ((target_dbfs - 20.0 * math.log10(rms)) / 20.0)
    scaled = clip.samples * gain
    n_clipped = int(np.count_nonzero(np.abs(scaled) > 1.0))
    if n_clipped:
        logger.warning("loudness normalization clipped %d samples", n_clipped)
        scaled = np.clip(scaled, -1.0, 1.0)
    return AudioClip(scaled, clip.sample_rate_hz)


# -- Mel filterbank ------------------------------------------------------------


def _hz_to_mel(freq_hz):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    freq_hz = np.asarray(freq_hz, dtype=np.float64)
    f_sp = 200.0 / 3.0
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    mel = freq_hz / f_sp
    above = freq_hz >= min_log_hz
    mel = np.where(
        above,
        min_log_mel + np.log(np.maximum(freq_hz, min_log_hz) / min_log_hz) / logstep,
        mel,
    )
    return mel


def _mel_to_hz(mel):
    mel = np.asarray(mel, dtype=np.float64)
    f_sp = 200.0 / 3.0
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    freq = f_sp * mel
    above = mel >= min_log_mel
    freq = np.where(above, min_log_hz * np.exp(logstep * (mel - min_log_mel)), freq)
    return freq


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Area-normalized triangular filters, shape (n_mels, n_fft // 2 + 1)."""
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.linspace(0.0, cfg.sample_rate_hz / 2.0, n_bins)
    mel_edges = np.linspace(
        _hz_to_mel(cfg.f_min_hz), _hz_to_mel(cfg.f_max_hz), cfg.n_mels + 2
    )
    hz_edges = _mel_to_hz(mel_edges)

    fdiff = np.diff(hz_edges)
    ramps = hz_edges[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1][:, None]
    upper = ramps[2:] / fdiff[1:][:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    # Slaney area normalization keeps per-filter energy comparable.
    enorm = 2.0 / (hz_edges[2 : cfg.n_mels + 2] - hz_edges[:cfg.n_mels])
    return weights * enorm[:, None]


def mel_band_centers_hz(cfg: MelConfig) -> np.ndarray:
    """Center frequency in Hz of each mel band."""
    mel_edges = np.linspace(
        _hz_to_mel(cfg.f_min_hz), _hz_to_mel(cfg.f_max_hz), cfg.n_mels + 2
    )
    return _mel_to_hz(mel_edges[1:-1])


# -- STFT machinery -------------------------------------------------------------


def _frame_signal(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Reflection-pad by win_length // 2 and slice into (T, win_length) frames."""
    pad = cfg.win_length // 2
    if samples.size < 2 or pad > samples.size - 1:
        raise DegenerateInputError(
            f"clip of {samples.size} samples is too short for win_length {cfg.win_length}"
        )
    padded = np.pad(samples, pad, mode="reflect")
    n_frames = 1 + (padded.size - cfg.win_length) // cfg.hop_length
    if n_frames < 1:
        raise DegenerateInputError("clip shorter than one analysis window")
    view = np.lib.stride_tricks.sliding_window_view(padded, cfg.win_length)
    return view[:: cfg.hop_length][:n_frames].copy()


def stft_magnitude(clip: AudioClip, cfg: MelConfig) -> np.ndarray:
    """Hann-windowed STFT magnitude, shape (n_fft // 2 + 1, T)."""
    frames = _frame_signal(clip.samples, cfg)
    window = get_window("hann", cfg.win_length, fftbins=True)
    spec = np.fft.rfft(frames * window[None, :], n=cfg.n_fft, axis=1)
    return np.abs(spec).T


def _stft_complex(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    frames = _frame_signal(samples, cfg)
    window = get_window("hann", cfg.win_length, fftbins=True)
    return np.fft.rfft(frames * window[None, :], n=cfg.n_fft, axis=1).T


def _istft(spec: np.ndarray, cfg: MelConfig, n_samples: int) -> np.ndarray:
    """Weighted overlap-add inverse of ``_stft_complex``."""
    window = get_window("hann", cfg.win_length, fftbins=True)
    frames = np.fft.irfft(spec.T, n=cfg.n_fft, axis=1)[:, : cfg.win_length]
    pad = cfg.win_length // 2
    total = pad * 2 + n_samples
    out = np.zeros(max(total, (frames.shape[0] - 1) * cfg.hop_length + cfg.win_length))
    wss = np.zeros_like(out)
    w2 = window * window
    for t in range(frames.shape[0]):
        start = t * cfg.hop_length
        out[start : start + cfg.win_length] += frames[t] * window
        wss[start : start + cfg.win_length] += w2
    out = out / np.where(wss > 1e-11, wss, 1.0)
    return out[pad : pad + n_samples]


def mel_spectrogram(clip: AudioClip, cfg: MelConfig) -> MelSpectrogram:
    """Log-mel spectrogram: |STFT| -> mel filterbank -> ln(max(x, log_floor))."""
    if clip.sample_rate_hz != cfg.sample_rate_hz:
        raise ConfigurationError(
            f"clip rate {clip.sample_rate_hz} != config rate {cfg.sample_rate_hz}"
        )
    magnitude = stft_magnitude(clip, cfg)
    mel = mel_filterbank(cfg) @ magnitude
    log_mel = np.log(np.maximum(mel, cfg.log_floor))
    return MelSpectrogram(log_mel.T, cfg)


# -- Pitch and voicing ----------------------------------------------------------


def analyze_frames(
    clip: AudioClip,
    cfg: MelConfig,
    f0_min: float = 60.0,
    f0_max: float = 400.0,
    voicing_threshold: float = 0.3,
) -> FrameAnalysis:
    """Frame-level RMS energy plus a normalized-autocorrelation F0 estimate.

    A frame is voiced iff a normalized-autocorrelation peak over the lag
    range [rate/f0_max, rate/f0_min] reaches ``voicing_threshold`` and the
    RMS energy reaches 1e-4; f0 is 0 on unvoiced frames. Among qualifying
    peaks the smallest lag wins, which avoids octave errors on strongly
    periodic signals where every period multiple correlates equally.
    """
    if not (0 < f0_min < f0_max < cfg.sample_rate_hz / 2):
        raise ConfigurationError("need 0 < f0_min < f0_max < nyquist")
    frames = _frame_signal(clip.samples, cfg)
    n_frames, win = frames.shape
    energy = np.sqrt(np.mean(np.square(frames), axis=1))

    lag_min = max(1, int(math.ceil(cfg.sample_rate_hz / f0_max)))
    lag_max = min(win - 1, int(math.floor(cfg.sample_rate_hz / f0_min)))
    if lag_min > lag_max:
        raise ConfigurationError("f0 search range is empty for this window length")

    nfft = 1 << int(math.ceil(math.log2(2 * win)))
    spectra = np.fft.rfft(frames, n=nfft, axis=1)
    autocorr = np.fft.irfft(np.abs(spectra) ** 2, n=nfft, axis=1)[:, :win]

    # Normalization: ac[t] / sqrt(E[0:W-t] * E[t:W]) via cumulative energies.
    sq = np.square(frames)
    csum = np.cumsum(sq, axis=1)
    total = csum[:, -1:]
    lags = np.arange(lag_min, lag_max + 1)
    head = csum[:, win - lags - 1]
    tail = total - np.where(lags[None, :] > 0, csum[:, lags - 1], 0.0)
    denom = np.sqrt(head * tail)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 1e-12, autocorr[:, lag_min : lag_max + 1] / denom, 0.0)

    local_max = np.ones_like(corr, dtype=bool)
    if corr.shape[1] >= 2:
        local_max[:, 1:] = corr[:, 1:] >= corr[:, :-1]
        local_max[:, :-1] &= corr[:, :-1] >= corr[:, 1:]
    qualified = local_max & (corr >= voicing_threshold)
    has_peak = qualified.any(axis=1)
    first_peak = np.argmax(qualified, axis=1)
    voiced = has_peak & (energy >= 1e-4)
    f0 = np.where(voiced, cfg.sample_rate_hz / lags[first_peak], 0.0)
    return FrameAnalysis(energy, f0, voiced)


# -- Mel inversion ---------------------------------------------------------------


def mel_to_linear(mel: MelSpectrogram, n_nnls_steps: int = 50) -> np.ndarray:
    """Non-negative least-squares inversion of the mel filterbank.

    Projected gradient descent; a pseudo-inverse can go negative, which
    breaks Griffin-Lim, so positivity is enforced at every step.
    """
    fb = mel_filterbank(mel.config)
    target = np.exp(mel.frames).T
    lipschitz = float(np.linalg.norm(fb, 2)) ** 2
    linear = fb.T @ target
    for _ in range(n_nnls_steps):
        grad = fb.T @ (fb @ linear - target)
        linear = np.maximum(0.0, linear - grad / lipschitz)
    return linear


def griffin_lim_invert(
    mel: MelSpectrogram, n_iters: int = 60, return_history: bool = False
):
    """Recover a waveform from a log-mel spectrogram.

    Mel -> linear magnitude by NNLS, then classic Griffin-Lim phase
    recovery starting from zero phase (deterministic). With
    ``return_history`` the per-iteration spectral-convergence residual is
    returned alongside the clip.
    """
    if n_iters < 1:
        raise ConfigurationError("n_iters must be >= 1")
    cfg = mel.config
    magnitude = mel_to_linear(mel)
    n_samples = (mel.n_frames - 1) * cfg.hop_length
    n_samples = max(n_samples, cfg.win_length // 2 + 1)
    target_norm = float(np.linalg.norm(magnitude))

    phase = np.zeros_like(magnitude)
    history = []
    samples = None
    for _ in range(n_iters):
        samples = _istft(magnitude * np.exp(1j * phase), cfg, n_samples)
        rebuilt = _stft_complex(samples, cfg)
        rebuilt = rebuilt[:, : magnitude.shape[1]]
        if rebuilt.shape[1] < magnitude.shape[1]:
            rebuilt = np.pad(rebuilt, ((0, 0), (0, magnitude.shape[1] - rebuilt.shape[1])))
        phase = np.angle(rebuilt)
        if target_norm > 0:
            history.append(float(np.linalg.norm(np.abs(rebuilt) - magnitude) / target_norm))
        else:
            history.append(0.0)
    clip = AudioClip(samples, cfg.sample_rate_hz)
    if return_history:
        return clip, history
    return clip
