"""Spectral features: PLP cepstra for the analysers, mel cepstra for MCD."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.fft import dct

from ..errors import ContractError
from .framing import SAMPLE_RATE, append_deltas, frame_signal
from .lpc import levinson

NFFT = 512
POWER_FLOOR = 1e-10
PRE_EMPHASIS = 0.97
MEL_BANDS = 26


def power_spectrum(frames, nfft: int = NFFT) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ContractError("expected a non-empty (N, L) frame matrix")
    spec = np.abs(np.fft.rfft(frames, nfft, axis=1)) ** 2
    return np.maximum(spec, POWER_FLOOR)


def hz_to_bark(f):
    return 6.0 * np.arcsinh(np.asarray(f, dtype=float) / 600.0)


def bark_to_hz(z):
    return 600.0 * np.sinh(np.asarray(z, dtype=float) / 6.0)


@lru_cache(maxsize=8)
def bark_filterbank(nfft: int = NFFT, sample_rate: int = SAMPLE_RATE):
    """Critical-band masking curves on a 1-Bark grid, shape (bands, nfft//2+1).

    Returns the weight matrix and band centre frequencies in Hz.
    """
    nyq_bark = float(hz_to_bark(sample_rate / 2))
    nbands = int(np.ceil(nyq_bark)) + 1
    step = nyq_bark / (nbands - 1)
    bin_bark = hz_to_bark(np.arange(nfft // 2 + 1) * sample_rate / nfft)
    centres = np.arange(nbands) * step
    lof = bin_bark[None, :] - centres[:, None] - 0.5
    hif = bin_bark[None, :] - centres[:, None] + 0.5
    wts = 10.0 ** np.minimum(0.0, np.minimum(hif, -2.5 * lof))
    return wts, bark_to_hz(centres)


def equal_loudness(freqs):
    """Approximation of the 40 dB equal-loudness curve at the given frequencies."""
    fsq = np.asarray(freqs, dtype=float) ** 2
    return (fsq / (fsq + 1.6e5)) ** 2 * ((fsq + 1.44e6) / (fsq + 9.61e6))


def lpc_to_cepstrum(a, gain, n_ceps: int) -> np.ndarray:
    """Cepstrum c[0..n_ceps] of the all-pole model gain / A(z)."""
    a = np.asarray(a, dtype=float)
    p = a.size
    c = np.zeros(n_ceps + 1)
    c[0] = np.log(gain)
    for n in range(1, n_ceps + 1):
        acc = a[n - 1] if n <= p else 0.0
        for k in range(max(1, n - p), n):
            acc += (k / n) * c[k] * a[n - k - 1]
        c[n] = acc
    return c


def plp_static(frames, model_order: int = 12, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """13 PLP values per frame: model log-gain followed by 12 cepstra."""
    spec = power_spectrum(frames)
    wts, centres = bark_filterbank(NFFT, sample_rate)
    aud = spec @ wts.T
    aud = aud * equal_loudness(centres)[None, :]
    aud = np.maximum(aud, POWER_FLOOR) ** 0.33
    aud[:, 0] = aud[:, 1]
    aud[:, -1] = aud[:, -2]
    # autocorrelation is the inverse DFT of the (even) auditory power spectrum
    full = np.hstack([aud, aud[:, -2:0:-1]])
    r = np.real(np.fft.ifft(full, axis=1))[:, : model_order + 1]
    out = np.empty((aud.shape[0], 13))
    for i, ri in enumerate(r):
        a, err, _ = levinson(ri, model_order)
        out[i] = lpc_to_cepstrum(a, np.sqrt(max(err, POWER_FLOOR)), 12)
    return out


def plp_features(frames, model_order: int = 12, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """39-dimensional PLP features (13 static + deltas + delta-deltas)."""
    return append_deltas(plp_static(frames, model_order, sample_rate))


def pre_emphasis(x, coef: float = PRE_EMPHASIS) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return x
    return np.concatenate([x[:1], x[1:] - coef * x[:-1]])


def acoustic_features(w) -> np.ndarray:
    """Pre-emphasised, Hamming-framed PLP features of a waveform, shape (N, 39)."""
    x = w.samples if hasattr(w, "samples") else w
    frames = frame_signal(pre_emphasis(x))
    if frames.shape[0] == 0:
        return np.zeros((0, 39))
    return plp_features(frames)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(nbands: int = MEL_BANDS, nfft: int = NFFT,
                   sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular mel filters, shape (nbands, nfft//2+1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2), nbands + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(up, down))


def mel_cepstra(frames, order: int = 13, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Mel cepstra c0..c{order-1} of the log mel amplitude spectrum.

    Scaled as a true cepstrum, log|X(mel)| ~ c0 + 2 sum c_n cos(n w), which
    is the convention the MCD constant 10/ln10 * sqrt(2) assumes.
    """
    spec = power_spectrum(frames)
    energies = np.maximum(spec @ mel_filterbank(MEL_BANDS, NFFT, sample_rate).T, POWER_FLOOR)
    log_amplitude = 0.5 * np.log(energies)
    return dct(log_amplitude, type=2, axis=1)[:, :order] / (2 * MEL_BANDS)
