"""MFCC front end: pre-emphasis, Hamming-windowed STFT, mel filterbank,
log energies, DCT-II, and per-clip mean summarization."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from .audio import AudioClip

LOG_FLOOR = 1e-12
MEL_BREAK_HZ = 1000.0

DEFAULT_ALPHA = 0.97
DEFAULT_FRAME_MS = 25.0
DEFAULT_HOP_MS = 10.0
DEFAULT_NUM_FILTERS = 26
DEFAULT_NUM_COEFFS = 13


@dataclass(frozen=True)
class MfccConfig:
    """Every knob of the MFCC pipeline.

    ``f_high=None`` means the Nyquist frequency of whatever clip is being
    processed.
    """

    alpha: float = DEFAULT_ALPHA
    frame_ms: float = DEFAULT_FRAME_MS
    hop_ms: float = DEFAULT_HOP_MS
    num_filters: int = DEFAULT_NUM_FILTERS
    num_coeffs: int = DEFAULT_NUM_COEFFS
    f_low: float = 0.0
    f_high: Optional[float] = None
    include_c0: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be positive")
        if not 0 < self.hop_ms <= self.frame_ms:
            raise ValueError("hop_ms must satisfy 0 < hop_ms <= frame_ms")
        if self.num_filters < 2:
            raise ValueError("num_filters must be at least 2")
        max_q = self.num_filters if self.include_c0 else self.num_filters - 1
        if not 1 <= self.num_coeffs <= max_q:
            raise ValueError(f"num_coeffs must lie in [1, {max_q}] for {self.num_filters} filters")
        if self.f_low < 0:
            raise ValueError("f_low must be nonnegative")
        if self.f_high is not None and self.f_high <= self.f_low:
            raise ValueError("f_high must exceed f_low")

    def frame_length(self, sample_rate: int) -> int:
        # round() is half-to-even: 25 ms at 44.1 kHz gives 1102 samples.
        return int(round(self.frame_ms * sample_rate / 1000.0))

    def hop_length(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_ms * sample_rate / 1000.0)))

    def upper_frequency(self, sample_rate: int) -> float:
        nyquist = sample_rate / 2.0
        f_high = nyquist if self.f_high is None else self.f_high
        if f_high > nyquist:
            raise ValueError(f"f_high={f_high} exceeds Nyquist {nyquist}")
        if self.f_low >= f_high:
            raise ValueError(f"f_low={self.f_low} must be below f_high={f_high}")
        return f_high

    def to_text(self) -> str:
        """Flat ``key=value`` form, space separated."""
        parts = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                text = "nyquist"
            elif isinstance(value, bool):
                text = "true" if value else "false"
            else:
                text = repr(value)
            parts.append(f"{f.name}={text}")
        return " ".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "MfccConfig":
        kwargs = {}
        types = {f.name: f.type for f in fields(cls)}
        for token in text.split():
            key, _, value = token.partition("=")
            if key not in types:
                raise ValueError(f"unknown MFCC setting {key!r}")
            kwargs[key] = _parse_setting(key, value)
        return cls(**kwargs)

    def as_dict(self) -> dict:
        return asdict(self)


def _parse_setting(key: str, value: str):
    if key in ("num_filters", "num_coeffs"):
        return int(value)
    if key == "include_c0":
        if value.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"include_c0 must be true or false, got {value!r}")
        return value.lower() in ("true", "1")
    if key == "f_high" and value.lower() in ("nyquist", "none", ""):
        return None
    return float(value)


@dataclass(frozen=True)
class FrameMatrix:
    frames: np.ndarray
    sample_rate: int

    @property
    def frame_length(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class PowerSpectra:
    spectra: np.ndarray
    fft_size: int
    sample_rate: int


@dataclass(frozen=True)
class MelFilterbank:
    weights: np.ndarray
    center_freqs: np.ndarray
    edge_bins: np.ndarray

    @property
    def num_filters(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class MfccMatrix:
    coeffs: np.ndarray
    config: MfccConfig

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[0]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    label: Optional[int] = None
    source_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("feature vector must be a nonempty 1-D array")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature vector contains non-finite values")
        object.__setattr__(self, "values", values)


def pre_emphasis(signal, alpha: float) -> np.ndarray:
    """First-order high-pass: ``s[n] = x[n] - alpha * x[n-1]``, ``s[0] = x[0]``.

    ``signal`` may be an :class:`AudioClip` or a plain array.  The output is
    an array because emphasis can push samples outside [-1, 1].
    """
    x = signal.samples if isinstance(signal, AudioClip) else signal
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("pre-emphasis needs a nonempty 1-D signal")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    out = np.empty_like(x)
    out[0] = x[0]
    out[1:] = x[1:] - alpha * x[:-1]
    return out


def hamming_window(length: int) -> np.ndarray:
    if length < 2:
        raise ValueError("Hamming window needs length >= 2")
    n = np.arange((length + 1) // 2)
    half = 0.54 - 0.46 * np.cos(2.0 * np.pi * n / (length - 1))
    # Mirror the first half so w[n] == w[length-1-n] bit for bit.
    return np.concatenate((half, half[: length // 2][::-1]))


def frame_signal(samples: np.ndarray, frame_len: int, hop_len: int) -> np.ndarray:
    """Split into overlapping frames; a trailing partial frame is dropped."""
    if samples.size < frame_len:
        raise ValueError(f"signal of {samples.size} samples is shorter than one frame ({frame_len})")
    n_frames = 1 + (samples.size - frame_len) // hop_len
    idx = np.arange(frame_len)[None, :] + hop_len * np.arange(n_frames)[:, None]
    return samples[idx]


def frame_and_window(clip: AudioClip, config: MfccConfig) -> FrameMatrix:
    frame_len = config.frame_length(clip.sample_rate)
    hop_len = config.hop_length(clip.sample_rate)
    frames = frame_signal(np.asarray(clip.samples), frame_len, hop_len)
    return FrameMatrix(frames * hamming_window(frame_len), clip.sample_rate)


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n) - 1).bit_length()


def power_spectrum(frames: FrameMatrix, fft_size: Optional[int] = None) -> PowerSpectra:
    """``|X[k]|**2`` for bins ``0..fft_size/2`` of each zero-padded frame."""
    data = np.atleast_2d(frames.frames)
    if data.size == 0:
        raise ValueError("no frames to transform")
    if fft_size is None:
        fft_size = next_pow2(data.shape[1])
    if fft_size < data.shape[1]:
        raise ValueError("fft_size shorter than the frame")
    spectrum = np.fft.rfft(data, n=fft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return PowerSpectra(power, fft_size, frames.sample_rate)


def hz_to_mel(f):
    """Piecewise mel warp: identity up to 1 kHz, ``2595*log10(1+f/700)`` above.

    Note the two branches disagree by about 0.015 mel at 1 kHz.
    """
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be nonnegative")
    out = np.where(f <= MEL_BREAK_HZ, f, 2595.0 * np.log10(1.0 + f / 700.0))
    return out if out.ndim else float(out)


def mel_to_hz(mel):
    """Inverse of :func:`hz_to_mel` (base-10 form above 1000 mel)."""
    mel = np.asarray(mel, dtype=np.float64)
    if np.any(mel < 0):
        raise ValueError("mel value must be nonnegative")
    out = np.where(mel <= MEL_BREAK_HZ, mel, 700.0 * (10.0 ** (mel / 2595.0) - 1.0))
    return out if out.ndim else float(out)


def build_filterbank(config: MfccConfig, fft_size: int, sample_rate: int) -> MelFilterbank:
    """Unit-peak triangles spaced evenly on the mel axis.

    ``M + 2`` edges are placed uniformly in mel between ``f_low`` and
    ``f_high`` and snapped to the nearest FFT bin; filter ``m`` rises from
    edge ``m`` to edge ``m+1`` and falls to edge ``m+2``.
    """
    f_high = config.upper_frequency(sample_rate)
    m = config.num_filters
    mel_edges = np.linspace(hz_to_mel(config.f_low), hz_to_mel(f_high), m + 2)
    hz_edges = mel_to_hz(mel_edges)
    bins = np.floor(hz_edges * fft_size / sample_rate + 0.5).astype(int)
    if np.unique(bins).size < m + 2:
        raise ValueError(
            f"{m} filters need {m + 2} distinct FFT bins but fft_size={fft_size} "
            f"yields only {np.unique(bins).size}; use a larger fft_size or fewer filters"
        )
    n_bins = fft_size // 2 + 1
    k = np.arange(n_bins)
    weights = np.zeros((m, n_bins))
    for i in range(m):
        lo, mid, hi = bins[i], bins[i + 1], bins[i + 2]
        rise = (k >= lo) & (k <= mid)
        fall = (k > mid) & (k <= hi)
        weights[i, rise] = (k[rise] - lo) / (mid - lo)
        weights[i, fall] = (hi - k[fall]) / (hi - mid)
    weights.setflags(write=False)
    centers = hz_edges[1:-1].copy()
    return MelFilterbank(weights, centers, bins)


def filterbank_log_energies(spectrum, bank: MelFilterbank) -> np.ndarray:
    """``ln(max(sum_k P[k] * W[m, k], 1e-12))`` per filter.

    Accepts one spectrum row or a matrix of rows.
    """
    spectrum = np.asarray(spectrum, dtype=np.float64)
    if spectrum.shape[-1] != bank.weights.shape[1]:
        raise ValueError(
            f"spectrum has {spectrum.shape[-1]} bins, filterbank expects {bank.weights.shape[1]}"
        )
    energies = spectrum @ bank.weights.T
    return np.log(np.maximum(energies, LOG_FLOOR))


def dct_basis(num_filters: int) -> np.ndarray:
    j = np.arange(num_filters)[:, None]
    m = np.arange(num_filters)[None, :]
    return np.cos(np.pi * j * (m + 0.5) / num_filters)


def dct_cepstrum(log_energies, q: int, include_c0: bool = True) -> np.ndarray:
    """Unnormalized DCT-II of the log energies, truncated to ``q`` terms.

    ``c[j] = sum_m S[m] cos(pi*j*(m+1/2)/M)``.  Returns ``c[0..q-1]``, or
    ``c[1..q]`` when ``include_c0`` is false.
    """
    log_energies = np.asarray(log_energies, dtype=np.float64)
    m = log_energies.shape[-1]
    start = 0 if include_c0 else 1
    if not 1 <= q <= m - start:
        raise ValueError(f"q={q} out of range for {m} filter outputs")
    basis = dct_basis(m)[start : start + q]
    return log_energies @ basis.T


def compute_mfcc(clip: AudioClip, config: MfccConfig) -> MfccMatrix:
    emphasized = pre_emphasis(clip.samples, config.alpha)
    frame_len = config.frame_length(clip.sample_rate)
    hop_len = config.hop_length(clip.sample_rate)
    frames = frame_signal(emphasized, frame_len, hop_len) * hamming_window(frame_len)
    spectra = power_spectrum(FrameMatrix(frames, clip.sample_rate))
    bank = cached_filterbank(config, spectra.fft_size, clip.sample_rate)
    log_e = filterbank_log_energies(spectra.spectra, bank)
    coeffs = dct_cepstrum(log_e, config.num_coeffs, config.include_c0)
    return MfccMatrix(coeffs, config)


_BANK_CACHE: dict = {}


def cached_filterbank(config: MfccConfig, fft_size: int, sample_rate: int) -> MelFilterbank:
    # Only the fields that shape the bank go into the key.
    key = (config.num_filters, config.f_low, config.f_high, fft_size, sample_rate)
    bank = _BANK_CACHE.get(key)
    if bank is None:
        bank = build_filterbank(config, fft_size, sample_rate)
        _BANK_CACHE[key] = bank
    return bank


def summarize_mean(m: MfccMatrix, label: Optional[int] = None, source_id: str = "") -> FeatureVector:
    if m.coeffs.ndim != 2 or m.coeffs.shape[0] == 0:
        raise ValueError("cannot summarize an empty MFCC matrix")
    # Averaging deviations from the first frame keeps identical frames exact.
    ref = m.coeffs[0]
    return FeatureVector(ref + (m.coeffs - ref).mean(axis=0), label=label, source_id=source_id)


def extract_features(clip: AudioClip, config: MfccConfig, label: Optional[int] = None) -> FeatureVector:
    return summarize_mean(compute_mfcc(clip, config), label=label, source_id=clip.source_id)


def coefficient_names(config: MfccConfig) -> list[str]:
    start = 0 if config.include_c0 else 1
    return [f"c{j}" for j in range(start, start + config.num_coeffs)]


def with_coeffs(config: MfccConfig, q: int) -> MfccConfig:
    return replace(config, num_coeffs=q)


def frame_count(n_samples: int, config: MfccConfig, sample_rate: int) -> int:
    frame_len = config.frame_length(sample_rate)
    if n_samples < frame_len:
        return 0
    return 1 + (n_samples - frame_len) // config.hop_length(sample_rate)


__all__ = [
    "MfccConfig", "FrameMatrix", "PowerSpectra", "MelFilterbank", "MfccMatrix", "FeatureVector",
    "pre_emphasis", "hamming_window", "frame_and_window", "power_spectrum", "hz_to_mel",
    "mel_to_hz", "build_filterbank", "filterbank_log_energies", "dct_cepstrum", "compute_mfcc",
    "summarize_mean", "extract_features", "coefficient_names",
]
