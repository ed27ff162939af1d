"""Seeded synthetic two-accent corpus.

Each clip is a short voiced "word": a harmonic tone mixture on a speaker
pitch, shaped by formant-like resonance peaks, with an attack/decay
envelope and a little breath noise.  Words share vowel targets across
accents; the accent moves the formants and changes their sharpness, which
is what the classifiers have to pick up.  The default layout copies the
balanced design of 11 speakers per accent (6 female, 5 male) times 15
words, 330 clips in all.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, write_manifest, write_wav

# (F1, F2, F3) vowel targets in Hz, one per word.
VOWELS = np.array([
    [730, 1090, 2440], [660, 1720, 2410], [530, 1840, 2480], [390, 1990, 2550],
    [270, 2290, 3010], [570, 840, 2410], [440, 1020, 2240], [300, 870, 2240],
    [640, 1190, 2390], [490, 1350, 1690], [600, 1500, 2500], [350, 1600, 2600],
    [450, 1250, 2300], [700, 1400, 2600], [500, 1000, 2500],
], dtype=np.float64)

NEUTRAL_VOWEL = np.array([500.0, 1500.0, 2500.0])

# Accent 1 scales (F1, F2, F3) and uses broader resonances.
ACCENT_SCALE = {0: np.array([1.0, 1.0, 1.0]), 1: np.array([1.06, 0.94, 1.04])}
ACCENT_BANDWIDTH = {0: np.array([80.0, 100.0, 140.0]), 1: np.array([110.0, 140.0, 180.0])}


@dataclass(frozen=True)
class CorpusLayout:
    speakers_per_accent: int = 11
    female_per_accent: int = 6
    words: int = 15
    sample_rate: int = 44100
    duration: float = 1.0
    word_spread: float = 0.25


@dataclass(frozen=True)
class Speaker:
    accent: int
    female: bool
    f0: float
    formant_scale: np.ndarray
    tilt: float
    bandwidth_scale: float


def draw_speaker(rng: np.random.Generator, accent: int, female: bool) -> Speaker:
    f0 = rng.uniform(180, 240) if female else rng.uniform(95, 135)
    base = rng.uniform(1.05, 1.15) if female else rng.uniform(0.92, 1.0)
    scale = base * rng.normal(1.0, 0.05, size=3)
    return Speaker(accent, female, f0, scale, rng.uniform(0.3, 0.8), rng.uniform(0.8, 1.25))


def synth_clip(rng: np.random.Generator, speaker: Speaker, word: int, layout: CorpusLayout) -> np.ndarray:
    sample_rate = layout.sample_rate
    duration = layout.duration * rng.uniform(0.9, 1.1)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    vowel = NEUTRAL_VOWEL + layout.word_spread * (VOWELS[word] - NEUTRAL_VOWEL)
    formants = vowel * ACCENT_SCALE[speaker.accent] * speaker.formant_scale
    formants = formants * rng.normal(1.0, 0.02, size=3)
    bandwidths = ACCENT_BANDWIDTH[speaker.accent] * speaker.bandwidth_scale * rng.uniform(0.95, 1.05, size=3)
    pitch = speaker.f0 * rng.uniform(0.98, 1.02)
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4, 6) * t)
    phase = 2 * np.pi * np.cumsum(pitch * vibrato) / sample_rate
    top = min(11000.0, sample_rate / 2.0)
    signal = np.zeros(n)
    h = 1
    while h * pitch < top:
        f = h * pitch
        # Resonance peaks over a speaker-specific source tilt.
        gain = sum(1.0 / (1.0 + ((f - fc) / bw) ** 2) for fc, bw in zip(formants, bandwidths))
        gain = (gain + 0.02) / h**speaker.tilt
        signal += gain * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        h += 1
    env = np.minimum(1.0, t / 0.05) * np.exp(-1.5 * t / duration)
    signal *= env
    signal += rng.uniform(0.005, 0.006) * np.max(np.abs(signal)) * rng.standard_normal(n)
    return 0.8 * signal / np.max(np.abs(signal))


def generate_corpus(seed: int, layout: CorpusLayout = CorpusLayout()):
    """Yield ``(source_id, label, AudioClip)`` in a fixed order."""
    rng = np.random.default_rng(seed)
    for accent in (0, 1):
        for s in range(layout.speakers_per_accent):
            female = s < layout.female_per_accent
            speaker = draw_speaker(rng, accent, female)
            for w in range(layout.words):
                sid = f"{'us' if accent == 0 else 'nonus'}_{'f' if female else 'm'}{s:02d}_w{w:02d}"
                x = synth_clip(rng, speaker, w, layout)
                yield sid, accent, AudioClip(x, layout.sample_rate, sid)


def write_corpus(out_dir, seed: int, layout: CorpusLayout = CorpusLayout()) -> Path:
    """Write WAVs plus ``manifest.csv`` into ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sid, label, clip in generate_corpus(seed, layout):
        name = f"{sid}.wav"
        write_wav(out_dir / name, clip.samples, clip.sample_rate)
        entries.append((name, label))
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest
