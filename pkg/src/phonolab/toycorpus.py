"""Deterministic synthetic speech corpus for desk-scale training and tests.

Each phone is a stable AR(4) filter (two resonances) driven by a glottal
pulse train, noise, or both.  Utterances are random sequences of lexicon
words framed by silence, written as 16 kHz WAV files with HTK labels.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .corpus import write_htk_labels, write_manifest, write_wav
from .dsp.framing import FRAME_SHIFT, SAMPLE_RATE, WINDOW_LEN
from .phonoset import SILENCE, VOWELS, PhoneAlignment

# phone: (resonances as (Hz, bandwidth Hz), voiced, noise share, level)
TOY_PHONES = {
    "aa": (((750, 90), (1150, 110)), True, 0.0, 1.0),
    "iy": (((290, 60), (2300, 150)), True, 0.0, 0.9),
    "uw": (((330, 70), (850, 100)), True, 0.0, 0.9),
    "eh": (((560, 80), (1800, 130)), True, 0.0, 1.0),
    "m": (((350, 120), (1300, 100)), True, 0.0, 0.35),
    "n": (((450, 150), (3000, 150)), True, 0.0, 0.35),
    "s": (((4800, 500), (6500, 700)), False, 1.0, 0.3),
    "sh": (((2600, 400), (3400, 500)), False, 1.0, 0.35),
    "f": (((1600, 1500), (5500, 1500)), False, 1.0, 0.12),
    "z": (((4300, 500), (6200, 700)), True, 0.6, 0.3),
}
SILENCE_LEVEL = 0.003
TARGET_RMS = 0.08
CROSSFADE = 40  # samples on each side of a phone boundary
PRE_ROLL = 800  # filter warm-up samples
GLOTTAL_POLE = (0.05, 0.93)  # angle (rad), magnitude of the excitation shaping filter

TOY_LEXICON = {
    "SEE": "S IY1", "SEA": "S IY1", "ME": "M IY1", "KNEE": "N IY1", "SHE": "SH IY1",
    "FEE": "F IY1", "ZOO": "Z UW1", "MOO": "M UW1", "SHOE": "SH UW1", "NEW": "N UW1",
    "MESS": "M EH1 S", "FEZ": "F EH1 Z", "MOSS": "M AA1 S", "SEEN": "S IY1 N",
    "MEN": "M EH1 N", "SHEEN": "SH IY1 N", "NOSE": "N UW1 Z", "FAME": "F EH1 M",
    "SAW": "S AA1", "SHAM": "SH AA1 M", "SEEM": "S IY1 M", "MOON": "M UW1 N",
    "FEN": "F EH1 N", "ZEN": "Z EH1 N",
}

DURATIONS = {"vowel": (12, 3), "consonant": (8, 2), "sil": (20, 5)}  # mean, spread in frames


def ar4_coefficients(resonances, fs=SAMPLE_RATE) -> np.ndarray:
    """Denominator of a cascade of two-pole resonators."""
    den = np.array([1.0])
    for freq, bw in resonances:
        r = np.exp(-np.pi * bw / fs)
        den = np.convolve(den, [1.0, -2 * r * np.cos(2 * np.pi * freq / fs), r * r])
    return den


def _filter_rms(den):
    # RMS gain of 1/den for a unit-variance white input
    impulse = np.zeros(4096)
    impulse[0] = 1.0
    return float(np.sqrt(np.sum(lfilter([1.0], den, impulse) ** 2)))


def _duration(rng, phone):
    kind = "sil" if phone == SILENCE else "vowel" if phone in VOWELS else "consonant"
    mean, spread = DURATIONS[kind]
    return int(rng.integers(mean - spread, mean + spread + 1))


def _pulse_train(f0_per_sample, rng):
    out = np.zeros(f0_per_sample.size)
    t = float(rng.uniform(0, SAMPLE_RATE / f0_per_sample[0]))
    while t < out.size:
        out[int(t)] = 1.0
        t += SAMPLE_RATE / f0_per_sample[int(t)]
    return out


def render_utterance(phones_with_frames, rng) -> np.ndarray:
    """Render (phone, frames) spans to samples; frame count is preserved."""
    n_frames = sum(d for _, d in phones_with_frames)
    n = FRAME_SHIFT * n_frames + (WINDOW_LEN - FRAME_SHIFT)
    base_f0 = rng.uniform(100, 160)
    drift = np.linspace(0, rng.uniform(-20, 20), n)
    f0 = base_f0 + drift + 5 * np.sin(2 * np.pi * np.arange(n) / rng.uniform(4000, 9000))
    angle, mag = GLOTTAL_POLE
    pulses = lfilter([1.0], [1.0, -2 * mag * np.cos(angle), mag * mag], _pulse_train(f0, rng))
    pulses /= np.sqrt(np.mean(pulses ** 2)) + 1e-12
    noise = rng.normal(size=n)
    out = np.zeros(n)
    pos = 0
    # spans cover frame hops; the tail after the last hop belongs to the last span
    bounds = []
    for i, (phone, frames) in enumerate(phones_with_frames):
        length = frames * FRAME_SHIFT
        if i == 0:
            length += (WINDOW_LEN - FRAME_SHIFT) // 2
        if i == len(phones_with_frames) - 1:
            length = n - pos
        bounds.append((phone, pos, pos + length))
        pos += length
    t = np.arange(n)
    for i, (phone, a, b) in enumerate(bounds):
        lo, hi = max(0, a - CROSSFADE), min(n, b + CROSSFADE)
        if phone == SILENCE:
            seg = SILENCE_LEVEL * noise[lo:hi]
        else:
            res, voiced, noise_share, level = TOY_PHONES[phone]
            den = ar4_coefficients(res)
            start = max(0, lo - PRE_ROLL)
            exc = np.sqrt(1 - noise_share) * pulses[start:hi] if voiced else 0.0
            exc = exc + np.sqrt(noise_share) * noise[start:hi]
            seg = lfilter([level * TARGET_RMS / _filter_rms(den)], den, exc)[lo - start:]
        # linear crossfades centred on the span edges sum to one across neighbours
        w = np.ones(hi - lo)
        if i > 0:
            w *= np.clip((t[lo:hi] - (a - CROSSFADE)) / (2 * CROSSFADE), 0, 1)
        if i < len(bounds) - 1:
            w *= np.clip(((b + CROSSFADE) - t[lo:hi]) / (2 * CROSSFADE), 0, 1)
        out[lo:hi] += w * seg
    return np.clip(out, -1.0, 1.0)


def random_sentence(rng, n_words):
    words = list(TOY_LEXICON)
    return [words[i] for i in rng.integers(0, len(words), n_words)]


def sentence_phones(words):
    phones = [SILENCE]
    for w in words:
        phones.extend(p.rstrip("0123456789").lower() for p in TOY_LEXICON[w].split())
    phones.append(SILENCE)
    return phones


def make_utterance(rng, n_words=None):
    """Returns (samples, PhoneAlignment, words)."""
    words = random_sentence(rng, n_words or int(rng.integers(3, 7)))
    spans = [(p, _duration(rng, p)) for p in sentence_phones(words)]
    samples = render_utterance(spans, rng)
    entries, t = [], 0
    for p, d in spans:
        entries.append((p, t, t + d))
        t += d
    return samples, PhoneAlignment(tuple(entries)), words


def write_lexicon(path) -> None:
    with open(path, "w") as fh:
        fh.write(";;; toy lexicon for the synthetic corpus\n")
        for word, pron in sorted(TOY_LEXICON.items()):
            fh.write(f"{word}  {pron}\n")


def make_toy_corpus(out_dir, seed: int = 0, utterances: int = 200, test_fraction: float = 0.2):
    """Write WAVs, HTK labels, lexicon and manifests; returns the manifest path.

    ``manifest.txt`` lists everything; ``train.txt`` and ``test.txt`` split
    it (every k-th utterance goes to test).  Output is byte-identical for a
    fixed seed.
    """
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "lab").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    step = max(2, int(round(1 / test_fraction))) if test_fraction > 0 else 0
    pairs, train, test, texts = [], [], [], []
    for i in range(utterances):
        samples, align, words = make_utterance(rng)
        name = f"utt{i:04d}"
        wav, lab = Path("wav") / f"{name}.wav", Path("lab") / f"{name}.lab"
        write_wav(samples, out / wav)
        write_htk_labels(align, out / lab)
        pairs.append((wav, lab))
        (test if step and i % step == step - 1 else train).append((wav, lab))
        texts.append(f"{name}\t{' '.join(words)}")
    write_manifest(pairs, out / "manifest.txt")
    write_manifest(train, out / "train.txt")
    write_manifest(test, out / "test.txt")
    (out / "text.txt").write_text("\n".join(texts) + "\n")
    write_lexicon(out / "lexicon.dict")
    return out / "manifest.txt"
