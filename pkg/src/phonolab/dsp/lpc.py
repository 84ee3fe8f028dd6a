"""Linear prediction: Levinson-Durbin analysis, LSP conversion, formants.

Coefficients use the predictor convention
``x[n] ~ sum_k a[k] * x[n-k]``, so the inverse filter is
``A(z) = 1 - sum_k a[k] z^-k`` (see :func:`inverse_filter`).
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError
from .framing import SAMPLE_RATE

GAIN_FLOOR = 1e-8


class RootFindingError(ContractError):
    """LSP root search did not find the expected interleaved roots."""


def inverse_filter(a) -> np.ndarray:
    """Polynomial coefficients of A(z) in powers of z^-1."""
    return np.concatenate([[1.0], -np.asarray(a, dtype=float)])


def autocorrelation(frame, maxlag: int) -> np.ndarray:
    x = np.asarray(frame, dtype=float)
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft)
    r = np.fft.irfft(spec * np.conj(spec), nfft)[: maxlag + 1]
    if r.size < maxlag + 1:
        r = np.concatenate([r, np.zeros(maxlag + 1 - r.size)])
    return r


def levinson(r, order: int):
    """Levinson-Durbin recursion on autocorrelation ``r[0..order]``.

    Returns (a, err, k): predictor coefficients, final prediction error and
    reflection coefficients.  The recursion stops early (remaining
    coefficients zero) if the error stops being positive.
    """
    r = np.asarray(r, dtype=float)
    a = np.zeros(order)
    k = np.zeros(order)
    err = r[0]
    for i in range(order):
        if err <= 0:
            break
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        ki = acc / err
        if abs(ki) >= 1.0:
            break
        prev = a[:i].copy()
        a[i] = ki
        a[:i] = prev - ki * prev[::-1]
        k[i] = ki
        err *= 1.0 - ki * ki
    return a, err, k


def lpc_analysis(frame, order: int = 24):
    """Autocorrelation-method LPC of one (already windowed) frame.

    Returns ``(a, gain)`` with ``gain = sqrt(prediction error energy)``.
    A silent frame yields zero coefficients and gain 1e-8.
    """
    x = np.asarray(frame, dtype=float)
    if order >= x.size:
        raise ContractError(f"LPC order {order} must be below frame length {x.size}")
    r = autocorrelation(x, order)
    if r[0] <= 1e-20:
        return np.zeros(order), GAIN_FLOOR
    r[0] *= 1.0 + 1e-9  # white-noise correction keeps the recursion well conditioned
    a, err, _ = levinson(r, order)
    return a, max(float(np.sqrt(max(err, 0.0))), GAIN_FLOOR)


def _sum_difference(a):
    A = inverse_filter(a)
    rev = np.concatenate([[0.0], A[::-1]])
    A = np.concatenate([A, [0.0]])
    return A + rev, A - rev  # P(z) palindromic, Q(z) antipalindromic


def _deflated(P, Q, p):
    """P and Q with their trivial roots at z = +-1 divided out (both palindromic)."""
    if p % 2 == 0:
        return _deflate(P, -1.0, 1), _deflate(Q, 1.0, 1)
    return P, _deflate(Q, 1.0, 2)


def _deflate(poly, sign, step):
    # divide by (1 - sign * z^-step)
    out = np.zeros(poly.size - step)
    for i in range(out.size):
        out[i] = poly[i] + (sign * out[i - step] if i >= step else 0.0)
    return out


def _real_response(poly, omega, imag=False):
    """poly(e^jw) * e^{j*deg*w/2}: real part for palindromic, imaginary for antipalindromic."""
    deg = poly.size - 1
    k = np.arange(poly.size)
    v = np.exp(1j * np.outer(omega, deg / 2.0 - k)) @ poly
    return v.imag if imag else v.real


def _roots_on_circle(scan_poly, refine_poly, imag, want: int, grid: int, tol: float):
    # scan_poly has no roots at 0 or pi, so the closed grid is safe; refine_poly
    # has the same sign on (0, pi) and avoids the round-off of deflation.
    deg = scan_poly.size - 1
    omega = np.pi * np.arange(grid + 1) / grid
    f = (np.fft.rfft(scan_poly, 2 * grid) * np.exp(0.5j * deg * omega)).real
    sign_change = np.nonzero(np.signbit(f[:-1]) != np.signbit(f[1:]))[0]
    if sign_change.size != want:
        return None
    lo, hi = omega[sign_change], omega[sign_change + 1]
    flo = f[sign_change]  # only the sign is used until lo moves
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        fm = _real_response(refine_poly, mid, imag)
        left = np.signbit(fm) == np.signbit(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    # final secant step inside the bracket
    f_lo, f_hi = _real_response(refine_poly, lo, imag), _real_response(refine_poly, hi, imag)
    denom = f_hi - f_lo
    safe = np.abs(denom) > 0
    t = np.where(safe, -f_lo / np.where(safe, denom, 1.0), 0.5)
    return lo + np.clip(t, 0.0, 1.0) * (hi - lo)


def lpc_to_lsp(a, tol: float = 1e-9) -> np.ndarray:
    """Line spectral pairs (radians, ascending in (0, pi)) of a minimum-phase filter.

    Roots of the sum and difference polynomials are bracketed by a sign-change
    scan of the unit circle and refined by bisection.  Raises
    :class:`RootFindingError` if the roots are not all found or do not
    interleave, which is what happens for non-minimum-phase input.
    """
    a = np.asarray(a, dtype=float)
    p = a.size
    P, Q = _sum_difference(a)
    Pd, Qd = _deflated(P, Q, p)
    n_p = (p + 1) // 2
    n_q = p // 2
    for grid in (4096, 65536, 1 << 20):
        rp = _roots_on_circle(Pd, P, False, n_p, grid=grid, tol=tol)
        rq = _roots_on_circle(Qd, Q, True, n_q, grid=grid, tol=tol) if n_q else np.zeros(0)
        if rp is not None and rq is not None:
            break
    else:
        raise RootFindingError("LSP root search failed; filter is not minimum phase")
    lsp = np.empty(p)
    lsp[0::2] = rp
    lsp[1::2] = rq
    if np.any(np.diff(lsp) <= 0) or lsp[0] <= 0 or lsp[-1] >= np.pi:
        raise RootFindingError("LSP roots do not interleave; filter is not minimum phase")
    return lsp


def lsp_to_lpc(lsp) -> np.ndarray:
    """Inverse of :func:`lpc_to_lsp`."""
    w = np.asarray(lsp, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ContractError("lsp must be a non-empty vector")
    if np.any(np.diff(w) <= 0) or w[0] <= 0 or w[-1] >= np.pi:
        raise ContractError("lsp must be strictly ascending inside (0, pi)")
    p = w.size
    P = np.array([1.0])
    Q = np.array([1.0])
    for wi in w[0::2]:
        P = np.convolve(P, [1.0, -2.0 * np.cos(wi), 1.0])
    for wi in w[1::2]:
        Q = np.convolve(Q, [1.0, -2.0 * np.cos(wi), 1.0])
    if p % 2 == 0:
        P = np.convolve(P, [1.0, 1.0])
        Q = np.convolve(Q, [1.0, -1.0])
    else:
        Q = np.convolve(Q, [1.0, 0.0, -1.0])
    A = 0.5 * (P + Q)
    return -A[1:p + 1]


def estimate_formants(frame, count: int = 4, order: int = 12,
                      max_bandwidth: float = 500.0, sample_rate: int = SAMPLE_RATE):
    """Formant (frequency, bandwidth) pairs in Hz from order-12 LPC poles."""
    x = np.asarray(frame, dtype=float)
    x = x * np.hamming(x.size)
    a, _ = lpc_analysis(x, order)
    if not np.any(a):
        return []
    poles = np.roots(inverse_filter(a))
    poles = poles[np.imag(poles) > 0]
    freqs = np.angle(poles) * sample_rate / (2 * np.pi)
    bws = -np.log(np.abs(poles)) * sample_rate / np.pi
    keep = bws < max_bandwidth
    out = sorted(zip(freqs[keep].tolist(), bws[keep].tolist()))
    return out[:count]
