"""Binary interchange formats.

All multi-byte fields are little-endian. Layouts:

* ``GSAMEL1``  mel spectrogram: magic, u32 T, u32 M, T*M float32 row-major
  (time-major).
* ``GSAATT1``  cross-attention matrix: magic, u32 N, u32 T, N*T float32
  row-major, N u32 token-to-word indices, u32 word count, then per word a
  u32 byte length and UTF-8 text.
* ``GSAFRA1``  frame analysis sidecar: magic, u32 T, T float32 energy,
  T float32 f0, T u8 voiced flags.
* ``GSACKPT1`` checkpoint: magic, u32 entry count, per entry u16 name
  length + UTF-8 name, u8 rank, rank u32 dims, float32 data; then u32 line
  count and per line a u32 byte length + UTF-8 ``key=value`` text.
* ``GSAEMB1``  speaker embedding: magic, u32 dim, dim float32.
"""

from __future__ import annotations

import struct
from typing import Dict, List, Optional, Tuple

import numpy as np

from .audio import FrameAnalysis, MelConfig, MelSpectrogram
from .errors import FormatError

MEL_MAGIC = b"GSAMEL1"
ATTENTION_MAGIC = b"GSAATT1"
FRAMES_MAGIC = b"GSAFRA1"
CHECKPOINT_MAGIC = b"GSACKPT1"
EMBEDDING_MAGIC = b"GSAEMB1"


class _Reader:
    """Cursor over a byte blob with format-error reporting."""

    def __init__(self, blob: bytes, label: str):
        self.blob = blob
        self.label = label
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"{self.label}: truncated (wanted {n} bytes)")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def f32_array(self, count: int, shape=None) -> np.ndarray:
        raw = self.take(4 * count)
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        return arr.reshape(shape) if shape is not None else arr

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise FormatError(f"{self.label}: bad magic {got!r}, expected {magic!r}")

    def done(self) -> None:
        if self.pos != len(self.blob):
            raise FormatError(f"{self.label}: {len(self.blob) - self.pos} trailing bytes")


def _read_file(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


# -- mel ----------------------------------------------------------------------


def write_mel(path, mel: MelSpectrogram) -> None:
    t, m = mel.frames.shape
    with open(path, "wb") as fh:
        fh.write(MEL_MAGIC)
        fh.write(struct.pack("<II", t, m))
        fh.write(mel.frames.astype("<f4").tobytes())


def read_mel(path, config: Optional[MelConfig] = None) -> MelSpectrogram:
    """Load a mel file; ``config`` defaults to the package defaults with M bands."""
    r = _Reader(_read_file(path), str(path))
    r.expect_magic(MEL_MAGIC)
    t = r.u32()
    m = r.u32()
    if t < 1 or m < 1:
        raise FormatError(f"{path}: empty mel ({t}x{m})")
    frames = r.f32_array(t * m, (t, m))
    r.done()
    if config is None:
        config = MelConfig(n_mels=m)
    elif config.n_mels != m:
        raise FormatError(f"{path}: file has {m} bands, config says {config.n_mels}")
    return MelSpectrogram(frames, config)


# -- cross-attention -------------------------------------------------------------


def write_attention(path, weights: np.ndarray, token_to_word, words) -> None:
    weights = np.asarray(weights, dtype=np.float64)
    n, t = weights.shape
    token_to_word = [int(i) for i in token_to_word]
    if len(token_to_word) != n:
        raise FormatError("token_to_word length must equal the token count")
    with open(path, "wb") as fh:
        fh.write(ATTENTION_MAGIC)
        fh.write(struct.pack("<II", n, t))
        fh.write(weights.astype("<f4").tobytes())
        fh.write(np.asarray(token_to_word, dtype="<u4").tobytes())
        fh.write(struct.pack("<I", len(words)))
        for word in words:
            raw = word.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_attention(path) -> Tuple[np.ndarray, List[int], List[str]]:
    r = _Reader(_read_file(path), str(path))
    r.expect_magic(ATTENTION_MAGIC)
    n = r.u32()
    t = r.u32()
    if n < 1 or t < 1:
        raise FormatError(f"{path}: empty attention matrix ({n}x{t})")
    weights = r.f32_array(n * t, (n, t))
    token_to_word = np.frombuffer(r.take(4 * n), dtype="<u4").astype(int).tolist()
    n_words = r.u32()
    words = []
    for _ in range(n_words):
        length = r.u32()
        words.append(r.take(length).decode("utf-8"))
    r.done()
    return weights, token_to_word, words


# -- frame analysis ---------------------------------------------------------------


def write_frame_analysis(path, analysis: FrameAnalysis) -> None:
    t = analysis.n_frames
    with open(path, "wb") as fh:
        fh.write(FRAMES_MAGIC)
        fh.write(struct.pack("<I", t))
        fh.write(analysis.energy.astype("<f4").tobytes())
        fh.write(analysis.f0_hz.astype("<f4").tobytes())
        fh.write(analysis.voiced.astype("u1").tobytes())


def read_frame_analysis(path) -> FrameAnalysis:
    r = _Reader(_read_file(path), str(path))
    r.expect_magic(FRAMES_MAGIC)
    t = r.u32()
    energy = r.f32_array(t)
    f0 = r.f32_array(t)
    voiced = np.frombuffer(r.take(t), dtype="u1").astype(bool)
    r.done()
    # Voicing flags are authoritative; f0 is zeroed where unvoiced so the
    # float32 round-trip cannot break the f0>0 <-> voiced invariant.
    f0 = np.where(voiced, f0, 0.0)
    return FrameAnalysis(energy, f0, voiced)


# -- checkpoint tensor table --------------------------------------------------------


def write_checkpoint_file(path, tensors: Dict[str, np.ndarray], config_lines: List[str]) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(tensors)))
        for name, value in tensors.items():
            raw_name = name.encode("utf-8")
            if len(raw_name) > 0xFFFF:
                raise FormatError(f"tensor name too long: {name[:40]}...")
            arr = np.asarray(value)
            if arr.ndim > 255:
                raise FormatError(f"tensor rank {arr.ndim} exceeds format limit")
            fh.write(struct.pack("<H", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.astype("<f4").tobytes())
        fh.write(struct.pack("<I", len(config_lines)))
        for line in config_lines:
            raw = line.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)


def read_checkpoint_file(path) -> Tuple[Dict[str, np.ndarray], List[str]]:
    r = _Reader(_read_file(path), str(path))
    r.expect_magic(CHECKPOINT_MAGIC)
    n_entries = r.u32()
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(n_entries):
        name = r.take(r.u16()).decode("utf-8")
        rank = r.u8()
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if rank else 1
        data = r.f32_array(count, shape if rank else ())
        if name in tensors:
            raise FormatError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = data
    n_lines = r.u32()
    lines = [r.take(r.u32()).decode("utf-8") for _ in range(n_lines)]
    r.done()
    return tensors, lines


# -- speaker embedding ----------------------------------------------------------------


def write_embedding(path, vector: np.ndarray) -> None:
    vector = np.asarray(vector, dtype=np.float64).reshape(-1)
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        fh.write(struct.pack("<I", vector.size))
        fh.write(vector.astype("<f4").tobytes())


def read_embedding(path) -> np.ndarray:
    r = _Reader(_read_file(path), str(path))
    r.expect_magic(EMBEDDING_MAGIC)
    dim = r.u32()
    if dim < 1:
        raise FormatError(f"{path}: zero-dimensional embedding")
    vec = r.f32_array(dim)
    r.done()
    return vec
