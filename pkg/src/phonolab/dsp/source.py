"""Excitation parameters: pitch, harmonic-to-noise ratio, glottal pole."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import butter, lfilter, sosfiltfilt

from .framing import SAMPLE_RATE
from .lpc import inverse_filter, lpc_analysis

VOICING_THRESHOLD = 0.3
HNR_CLAMP = 1e-4
GLOTTAL_FALLBACK_ANGLE = 0.05
GLOTTAL_MAG_FLOOR = 1e-2
GLOTTAL_MAG_CEIL = 0.98
GLOTTAL_MIN_RESONANCE = 0.5  # weaker complex pairs are treated as no resonance
PITCH_LOWPASS_HZ = 1000.0

_LOWPASS = {}


def _pitch_lowpass(x, sample_rate):
    # smooths pulse-like excitation so jittered periods still give one broad peak
    if sample_rate not in _LOWPASS:
        _LOWPASS[sample_rate] = butter(4, PITCH_LOWPASS_HZ, fs=sample_rate, output="sos")
    return sosfiltfilt(_LOWPASS[sample_rate], x, padlen=min(x.size - 1, 60))


def _lag_range(n, fmin, fmax, sample_rate):
    lo = max(1, int(math.floor(sample_rate / fmax)))
    hi = min(n - 2, int(math.ceil(sample_rate / fmin)))
    return lo, hi


def normalized_autocorrelation(x, lag: int) -> float:
    """Correlation coefficient between x[:-lag] and x[lag:] (0 for silent input)."""
    x = np.asarray(x, dtype=float)
    a, b = x[:-lag], x[lag:]
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if den <= 1e-20:
        return 0.0
    return float(np.dot(a, b)) / den


def _best_lag(x, fmin, fmax, sample_rate):
    """Lag of the strongest interior peak of the biased autocorrelation.

    The biased estimate decays with lag, which favours the fundamental over
    its multiples and keeps noise peaks small.
    """
    n = x.size
    lo, hi = _lag_range(n, fmin, fmax, sample_rate)
    if hi <= lo + 1:
        return None
    r = np.correlate(x, x, mode="full")[n - 1:]
    if r[0] <= 1e-20:
        return None
    r = r / r[0]
    seg = r[lo - 1:hi + 2]
    interior = np.arange(1, seg.size - 1)
    peaks = interior[(seg[interior] > seg[interior - 1]) & (seg[interior] >= seg[interior + 1])]
    if peaks.size == 0:
        return None
    best = peaks[np.argmax(seg[peaks])]
    # parabolic refinement of the peak position
    y0, y1, y2 = seg[best - 1], seg[best], seg[best + 1]
    den = y0 - 2 * y1 + y2
    shift = 0.5 * (y0 - y2) / den if den < 0 else 0.0
    return int(best + lo - 1), float(best + lo - 1 + shift)


def estimate_f0(frame, fmin: float = 50.0, fmax: float = 500.0,
                sample_rate: int = SAMPLE_RATE):
    """Fundamental frequency in Hz, or ``None`` for an unvoiced frame.

    The lag is picked on a low-passed copy; the frame is voiced when the
    normalized autocorrelation of the raw frame near that lag (+-2 samples)
    exceeds 0.3.
    """
    x = np.asarray(frame, dtype=float)
    x = x - x.mean()
    found = _best_lag(_pitch_lowpass(x, sample_rate), fmin, fmax, sample_rate)
    if found is None:
        return None
    lag, frac_lag = found
    peak = max(normalized_autocorrelation(x, k) for k in range(lag - 2, lag + 3) if 0 < k < x.size)
    if peak <= VOICING_THRESHOLD:
        return None
    return sample_rate / frac_lag


def estimate_hnr(frame, f0=None, fmin: float = 50.0, fmax: float = 500.0,
                 sample_rate: int = SAMPLE_RATE) -> float:
    """Log harmonic-to-noise ratio ``log(r / (1 - r))``.

    ``r`` is the normalized autocorrelation at the pitch lag (or at the best
    candidate lag when ``f0`` is None), clamped to [1e-4, 1 - 1e-4].
    """
    x = np.asarray(frame, dtype=float)
    x = x - x.mean()
    if f0:
        lag = int(round(sample_rate / f0))
    else:
        found = _best_lag(x, fmin, fmax, sample_rate)
        lag = found[0] if found else None
    r = normalized_autocorrelation(x, lag) if lag and lag < x.size else 0.0
    r = min(max(r, HNR_CLAMP), 1.0 - HNR_CLAMP)
    return math.log(r / (1.0 - r))


def estimate_glottal_pole(frame, a):
    """Angle and magnitude of a 2-pole fit to the LPC residual.

    Falls back to ``(0.05, |largest pole|)`` when the residual's order-2
    predictor has real poles, a complex pair too weak to be a resonance
    (magnitude below 0.5, as for a white residual) or the frame is silent.
    """
    x = np.asarray(frame, dtype=float)
    residual = lfilter(inverse_filter(a), [1.0], x)
    b, _ = lpc_analysis(residual * np.hamming(residual.size), 2)
    poles = np.roots(inverse_filter(b)) if np.any(b) else np.zeros(0)
    complex_poles = poles[(np.abs(poles.imag) > 1e-12) & (np.abs(poles) >= GLOTTAL_MIN_RESONANCE)]
    if complex_poles.size:
        pole = complex_poles[0]
        angle = abs(float(np.angle(pole)))
        mag = float(np.clip(abs(pole), GLOTTAL_MAG_FLOOR, GLOTTAL_MAG_CEIL))
        return angle, mag
    mag = float(np.max(np.abs(poles))) if poles.size else 0.0
    return GLOTTAL_FALLBACK_ANGLE, float(np.clip(mag, GLOTTAL_MAG_FLOOR, GLOTTAL_MAG_CEIL))
