"""WAV and corpus-manifest loading.

Only uncompressed RIFF/WAVE is understood: integer PCM at 8/16/24/32 bits
and 32-bit IEEE float.  Multichannel audio is downmixed by averaging the
channels of each frame.  No resampling is done; the sample rate travels
with the clip.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable

import numpy as np

US = 0
NON_US = 1
LABELS = (US, NON_US)


class WavFormatError(ValueError):
    """The file is not a WAV this loader can decode."""


class ManifestError(ValueError):
    pass


class WaveFormat(IntEnum):
    PCM = 0x0001
    IEEE_FLOAT = 0x0003
    EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("AudioClip needs a nonempty 1-D sample array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        if np.max(np.abs(samples)) > 1.0:
            raise ValueError("AudioClip samples must lie in [-1, 1]")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        samples = samples.copy()
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class CorpusManifest:
    """Ordered ``(path, label)`` records; label 0 is US, 1 is non-US."""

    entries: tuple[tuple[str, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        entries = tuple((str(p), int(lab)) for p, lab in self.entries)
        if not entries:
            raise ManifestError("manifest has no entries")
        seen = set()
        for path, label in entries:
            if label not in LABELS:
                raise ManifestError(f"label {label} for {path!r} is not 0 (US) or 1 (non-US)")
            if path in seen:
                raise ManifestError(f"duplicate path {path!r}")
            seen.add(path)
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def paths(self) -> list[str]:
        return [p for p, _ in self.entries]

    @property
    def labels(self) -> list[int]:
        return [lab for _, lab in self.entries]


# GUID tail shared by the KSDATAFORMAT_SUBTYPE_* identifiers.
_SUBFORMAT_TAIL = b"\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        yield chunk_id, body
        pos += 8 + size + (size & 1)


def _parse_fmt(body: bytes) -> tuple[int, int, int, int]:
    if len(body) < 16:
        raise WavFormatError("fmt chunk too short")
    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", body, 0)
    if tag == WaveFormat.EXTENSIBLE:
        if len(body) < 40:
            raise WavFormatError("extensible fmt chunk too short")
        subformat = body[24:40]
        if subformat[2:] != _SUBFORMAT_TAIL:
            raise WavFormatError("unsupported extensible subformat")
        tag = struct.unpack_from("<H", subformat, 0)[0]
    if tag not in (WaveFormat.PCM, WaveFormat.IEEE_FLOAT):
        raise WavFormatError(f"compressed or unknown format tag 0x{tag:04x}")
    if channels < 1:
        raise WavFormatError("channel count must be positive")
    if rate == 0:
        raise WavFormatError("sample rate is zero")
    if tag == WaveFormat.PCM and bits not in (8, 16, 24, 32):
        raise WavFormatError(f"unsupported PCM bit depth {bits}")
    if tag == WaveFormat.IEEE_FLOAT and bits != 32:
        raise WavFormatError(f"unsupported float bit depth {bits}")
    if block_align != channels * bits // 8:
        raise WavFormatError("block align disagrees with channels and bit depth")
    return tag, channels, rate, bits


def _decode(raw: bytes, tag: int, channels: int, bits: int) -> np.ndarray:
    width = bits // 8
    n_frames = len(raw) // (width * channels)
    raw = raw[: n_frames * width * channels]
    if tag == WaveFormat.IEEE_FLOAT:
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(values)):
            raise WavFormatError("float samples contain NaN or Inf")
        values = np.clip(values, -1.0, 1.0)
    elif bits == 8:
        # 8-bit WAV is unsigned with a 128 offset.
        values = (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        values = ints / float(1 << 23)
    else:
        dtype = {16: "<i2", 32: "<i4"}[bits]
        values = np.frombuffer(raw, dtype=dtype).astype(np.float64) / float(1 << (bits - 1))
    return values.reshape(n_frames, channels)


def load_wav(path) -> AudioClip:
    """Read a RIFF/WAVE file into a mono :class:`AudioClip`.

    Integer samples are divided by ``2**(bits-1)`` so the most negative code
    maps to exactly -1.0.  Channels are averaged per frame.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise WavFormatError(f"cannot read {path}: {exc}") from exc
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path} is not a RIFF/WAVE file")

    fmt = None
    raw = None
    for chunk_id, body in _iter_chunks(data):
        if chunk_id == b"fmt " and fmt is None:
            fmt = _parse_fmt(body)
        elif chunk_id == b"data" and raw is None:
            raw = body
    if fmt is None:
        raise WavFormatError(f"{path} has no fmt chunk")
    if raw is None:
        raise WavFormatError(f"{path} has no data chunk")
    tag, channels, rate, bits = fmt
    frames = _decode(raw, tag, channels, bits)
    if frames.shape[0] == 0:
        raise WavFormatError(f"{path} has an empty data chunk")
    mono = frames[:, 0] if channels == 1 else frames.mean(axis=1)
    return AudioClip(mono, rate, source_id=str(path))


def write_wav(path, samples, sample_rate: int, bits: int = 16) -> None:
    """Write mono integer PCM.  Samples are clipped to [-1, 1] first."""
    if bits not in (8, 16, 24, 32):
        raise ValueError(f"unsupported bit depth {bits}")
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    scale = float(1 << (bits - 1))
    ints = np.clip(np.round(x * scale), -scale, scale - 1).astype(np.int64)
    if bits == 8:
        payload = (ints + 128).astype(np.uint8).tobytes()
    elif bits == 24:
        u = ints & 0xFFFFFF
        payload = np.stack([u & 0xFF, (u >> 8) & 0xFF, (u >> 16) & 0xFF], axis=1).astype(np.uint8).tobytes()
    else:
        payload = ints.astype({16: "<i2", 32: "<i4"}[bits]).tobytes()
    width = bits // 8
    fmt = struct.pack("<HHIIHH", WaveFormat.PCM, 1, sample_rate, sample_rate * width, width, bits)
    pad = b"\x00" if len(payload) & 1 else b""
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload + pad
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def load_manifest(path) -> CorpusManifest:
    """Parse a ``path,label`` CSV manifest (header line optional).

    Blank lines are skipped.  Paths may not contain commas.
    """
    text = Path(path).read_text(encoding="utf-8")
    entries = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or not parts[0]:
            raise ManifestError(f"line {lineno}: expected 'path,label', got {line!r}")
        if not entries and parts == ["path", "label"]:
            continue
        try:
            label = int(parts[1])
        except ValueError:
            raise ManifestError(f"line {lineno}: label {parts[1]!r} is not an integer") from None
        entries.append((parts[0], label))
    if not entries:
        raise ManifestError(f"{path}: manifest is empty")
    return CorpusManifest(tuple(entries))


def write_manifest(path, entries: Iterable[tuple[str, int]]) -> None:
    lines = ["path,label"] + [f"{p},{int(lab)}" for p, lab in entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def resolve_entry(manifest_path, entry_path: str) -> Path:
    """Relative manifest paths are taken relative to the manifest's folder."""
    p = Path(entry_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
