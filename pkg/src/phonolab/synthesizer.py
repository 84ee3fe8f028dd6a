"""Posteriors to speech: parameter extraction, DNN regression, smoothing, re-synthesis.

A frame's static parameter vector has 29 entries::

    [0:24]  line spectral pairs (radians)
    [24]    log gain
    [25]    log harmonic-to-noise ratio
    [26]    glottal pole angle (radians)
    [27]    log glottal pole magnitude
    [28]    log F0 (Hz)

Targets append first and second differences for 87 values per frame.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.linalg import solveh_banded
from scipy.signal import lfilter

from .dsp import (
    FRAME_SHIFT,
    SAMPLE_RATE,
    WINDOW_LEN,
    Waveform,
    append_deltas,
    estimate_f0,
    estimate_glottal_pole,
    estimate_hnr,
    frame_signal,
    lpc_analysis,
    lpc_to_lsp,
    lsp_to_lpc,
    overlap_add,
    stack_context,
)
from .dsp.lpc import inverse_filter
from .errors import ContractError, DataError
from .neural import Network, TrainConfig, forward, init_network, load_network, save_network, train
from .phonoset import FeatureSystem, PosteriorMatrix

log = logging.getLogger(__name__)

LPC_ORDER = 24
STATIC_DIM = 29
TARGET_DIM = 3 * STATIC_DIM
SYNTH_CONTEXT = 11
DEFAULT_HIDDEN = (256, 256, 256, 256)
LSP, LOG_GAIN, LOG_HNR, GLOTTAL_ANGLE, LOG_GLOTTAL_MAG, LOG_F0 = (
    slice(0, 24), 24, 25, 26, 27, 28,
)
UNVOICED_LOG_F0 = 0.0  # used only when an utterance has no voiced frame at all
VOICING_HNR = 0.25  # a frame is voiced iff sigmoid(log_hnr) >= 0.25
MIN_LSP_GAP = 0.005
PEAK = 0.9
VARIANCE_FLOOR = 1e-8


# Target extraction

def interpolate_unvoiced(f0) -> np.ndarray:
    """Log F0 track with unvoiced frames (None) filled from voiced neighbours."""
    voiced = np.array([v is not None for v in f0])
    out = np.full(len(f0), UNVOICED_LOG_F0)
    if voiced.any():
        idx = np.nonzero(voiced)[0]
        logs = np.log([f0[i] for i in idx])
        out = np.interp(np.arange(len(f0)), idx, logs)  # edges hold the nearest value
    return out


def extract_static(w) -> np.ndarray:
    """29 static vocoder parameters per analysis frame, shape (N, 29)."""
    raw = frame_signal(w, window=None)
    windowed = raw * np.hamming(WINDOW_LEN)
    n = raw.shape[0]
    out = np.zeros((n, STATIC_DIM))
    f0 = []
    for i in range(n):
        a, gain = lpc_analysis(windowed[i], LPC_ORDER)
        out[i, LSP] = lpc_to_lsp(a)
        out[i, LOG_GAIN] = math.log(gain)
        fi = estimate_f0(raw[i])
        f0.append(fi)
        out[i, LOG_HNR] = estimate_hnr(raw[i], fi)
        angle, mag = estimate_glottal_pole(raw[i], a)
        out[i, GLOTTAL_ANGLE] = angle
        out[i, LOG_GLOTTAL_MAG] = math.log(mag)
    out[:, LOG_F0] = interpolate_unvoiced(f0)
    return out


def extract_targets(w) -> np.ndarray:
    """87-wide parameter track: 29 statics followed by their deltas."""
    static = extract_static(w)
    if static.shape[0] == 0:
        return np.zeros((0, TARGET_DIM))
    return append_deltas(static)


# Model

@dataclass
class SynthModel:
    net: Network
    global_variances: np.ndarray
    system: FeatureSystem
    input_mean: np.ndarray

    def __post_init__(self):
        self.global_variances = np.asarray(self.global_variances, dtype=float)
        self.input_mean = np.asarray(self.input_mean, dtype=float)
        width = self.system.K * SYNTH_CONTEXT
        if self.net.layer_sizes[0] != width or self.net.layer_sizes[-1] != TARGET_DIM:
            raise ContractError(f"network sizes {self.net.layer_sizes} do not fit {width} -> {TARGET_DIM}")
        if self.global_variances.shape != (TARGET_DIM,) or np.any(self.global_variances <= 0):
            raise ContractError("global variances must be 87 positive values")
        if self.input_mean.shape != (width,):
            raise ContractError(f"input mean must have {width} values")


@dataclass
class SynthConfig:
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    train: TrainConfig = field(default_factory=lambda: TrainConfig.regressor(epochs=40))
    heldout_fraction: float = 0.1


def _stack(z) -> np.ndarray:
    frames = z.frames if isinstance(z, PosteriorMatrix) else np.asarray(z, dtype=float)
    return stack_context(frames, SYNTH_CONTEXT)


def train_synthesizer(corpus, cfg: SynthConfig | None = None, names=None):
    """Train the posterior-to-parameter regressor.

    ``corpus`` holds (PosteriorMatrix, 87-wide track) pairs.  Returns
    (SynthModel, History).
    """
    from .analyzer import split_heldout

    cfg = cfg or SynthConfig()
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot train a synthesizer on an empty corpus")
    system = corpus[0][0].system
    xs, ys = [], []
    for i, (z, track) in enumerate(corpus):
        name = names[i] if names else f"utterance {i}"
        if z.system.name != system.name:
            raise DataError(f"{name}: posteriors use {z.system.name}, expected {system.name}")
        track = np.asarray(track, dtype=float)
        if track.ndim != 2 or track.shape[1] != TARGET_DIM:
            raise DataError(f"{name}: target track must be (N, {TARGET_DIM})")
        if z.num_frames != track.shape[0]:
            raise DataError(f"{name}: {z.num_frames} posterior frames but {track.shape[0]} target frames")
        xs.append(_stack(z))
        ys.append(track)
    train_idx, held_idx = split_heldout(len(corpus), cfg.heldout_fraction)
    x = np.vstack([xs[i] for i in train_idx])
    y = np.vstack([ys[i] for i in train_idx])
    input_mean = x.mean(axis=0)
    t_mean = y.mean(axis=0)
    t_std = np.sqrt(np.maximum(y.var(axis=0), VARIANCE_FLOOR))
    heldout = None
    if held_idx:
        xh = np.vstack([xs[i] for i in held_idx]) - input_mean
        yh = (np.vstack([ys[i] for i in held_idx]) - t_mean) / t_std
        heldout = (xh, yh)
    net = init_network([system.K * SYNTH_CONTEXT, *cfg.hidden, TARGET_DIM], "linear", cfg.train.seed)
    net, history = train(net, x - input_mean, (y - t_mean) / t_std, cfg.train, heldout)
    # de-standardization is folded into the linear output layer
    net.weights[-1] = net.weights[-1] * t_std[None, :]
    net.biases[-1] = net.biases[-1] * t_std + t_mean
    gv = np.maximum(np.vstack(ys).var(axis=0), VARIANCE_FLOOR)
    return SynthModel(net, gv, system, input_mean), history


def generate_params(m: SynthModel, z) -> np.ndarray:
    """Raw 87-wide parameter track, one row per posterior frame."""
    frames = z.frames if isinstance(z, PosteriorMatrix) else np.asarray(z, dtype=float)
    if frames.ndim != 2 or frames.shape[1] != m.system.K:
        raise ContractError(f"posterior width {frames.shape[-1]} != K={m.system.K}")
    if frames.shape[0] == 0:
        return np.zeros((0, TARGET_DIM))
    return forward(m.net, _stack(frames) - m.input_mean)


# Smoothing and post-filtering

def _delta_operators(n):
    """Sparse Δ and ΔΔ matrices with edge replication (same windows as append_deltas)."""
    idx = np.arange(n)
    prev, nxt = np.maximum(idx - 1, 0), np.minimum(idx + 1, n - 1)
    ones = np.ones(n)
    d1 = sparse.coo_matrix((np.r_[0.5 * ones, -0.5 * ones], (np.r_[idx, idx], np.r_[nxt, prev])), shape=(n, n))
    d2 = sparse.coo_matrix((np.r_[ones, -2 * ones, ones], (np.r_[idx, idx, idx], np.r_[prev, idx, nxt])),
                           shape=(n, n))
    return d1.tocsr(), d2.tocsr()


def mlpg_smooth(raw, global_variances) -> np.ndarray:
    """Maximum-likelihood static trajectory under static, Δ and ΔΔ constraints.

    Each of the 29 dimensions solves a symmetric pentadiagonal system with
    a banded Cholesky factorization.
    """
    raw = np.asarray(raw, dtype=float)
    var = np.asarray(global_variances, dtype=float)
    if var.shape != (TARGET_DIM,) or np.any(var <= 0):
        raise ContractError("global variances must be 87 positive values")
    if raw.ndim != 2 or raw.shape[1] != TARGET_DIM:
        raise ContractError(f"raw track must be (N, {TARGET_DIM})")
    n = raw.shape[0]
    out = np.zeros((n, STATIC_DIM))
    if n == 0:
        return out
    d1, d2 = _delta_operators(n)
    g1, g2 = (d1.T @ d1).tocsr(), (d2.T @ d2).tocsr()
    for d in range(STATIC_DIM):
        vs, v1, v2 = var[d], var[STATIC_DIM + d], var[2 * STATIC_DIM + d]
        a = sparse.identity(n, format="csr") / vs + g1 / v1 + g2 / v2
        b = raw[:, d] / vs + d1.T @ raw[:, STATIC_DIM + d] / v1 + d2.T @ raw[:, 2 * STATIC_DIM + d] / v2
        bands = np.zeros((3, n))  # upper form: row 2 holds the main diagonal
        for k in range(3):
            bands[2 - k, k:] = a.diagonal(k)
        out[:, d] = solveh_banded(bands, b)
    return out


def stabilize_lsp(lsp, min_gap: float = MIN_LSP_GAP) -> np.ndarray:
    """Sort each frame and push LSPs apart so every gap (with 0 and pi) is >= min_gap."""
    w = np.sort(np.atleast_2d(np.asarray(lsp, dtype=float)), axis=1)
    p = w.shape[1]
    lo = min_gap * np.arange(1, p + 1)
    hi = np.pi - min_gap * np.arange(p, 0, -1)
    w = np.clip(w, lo, hi)
    for j in range(1, p):
        w[:, j] = np.maximum(w[:, j], w[:, j - 1] + min_gap)
    for j in range(p - 2, -1, -1):
        w[:, j] = np.minimum(w[:, j], w[:, j + 1] - min_gap)
    return w


def formant_enhance(lsp_track, gamma: float = 1.2, min_gap: float = MIN_LSP_GAP) -> np.ndarray:
    """Sharpen spectral peaks by raising LSP gaps to the power ``gamma``.

    Gaps (including those to 0 and pi) become proportional to g**gamma and
    are rescaled to span pi, with no gap smaller than ``min_gap``.
    """
    w = np.atleast_2d(np.asarray(lsp_track, dtype=float))
    if gamma == 1.0 or w.size == 0:
        return w.copy()
    edges = np.hstack([np.zeros((w.shape[0], 1)), w, np.full((w.shape[0], 1), np.pi)])
    gaps = np.diff(edges, axis=1)
    if np.any(gaps <= 0):
        raise ContractError("LSP frames must be strictly ascending inside (0, pi)")
    g = gaps ** gamma
    g *= np.pi / g.sum(axis=1, keepdims=True)
    for _ in range(g.shape[1]):
        small = g < min_gap
        if not small.any():
            break
        free = ~small
        spare = np.pi - min_gap * small.sum(axis=1, keepdims=True)
        scale = spare / np.where(free, g, 0.0).sum(axis=1, keepdims=True)
        g = np.where(small, min_gap, g * scale)
    return np.cumsum(g, axis=1)[:, :-1]


# Re-synthesis

def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


def _pulse_positions(f0_frames, voiced, n_samples):
    """Sample indices of a phase-continuous pulse train following the frame F0."""
    centres = FRAME_SHIFT * np.arange(len(f0_frames)) + WINDOW_LEN // 2
    f0_samples = np.interp(np.arange(n_samples), centres, f0_frames)
    voiced_samples = np.interp(np.arange(n_samples), centres, voiced.astype(float)) > 0.5
    out = np.zeros(n_samples)
    t = 0.0
    while t < n_samples:
        i = int(t)
        if voiced_samples[i]:
            out[i] = 1.0
        t += SAMPLE_RATE / max(f0_samples[i], 20.0)
    return out


def _unit_rms(x):
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 1e-12 else x


def resynthesize(static, f0_track=None, seed: int = 0) -> Waveform:
    """LPC re-synthesis of a 29-wide static track by windowed overlap-add.

    ``f0_track`` (Hz per frame, 0 or None for unvoiced) replaces the model's
    pitch and voicing when given.  Noise is seeded for reproducibility.
    """
    static = np.atleast_2d(np.asarray(static, dtype=float))
    n = static.shape[0] if static.size else 0
    if n == 0:
        return Waveform(np.zeros(0))
    if static.shape[1] != STATIC_DIM:
        raise ContractError(f"static track must have {STATIC_DIM} columns")
    n_samples = FRAME_SHIFT * (n - 1) + WINDOW_LEN
    lsp = stabilize_lsp(static[:, LSP])
    gain = np.exp(np.clip(static[:, LOG_GAIN], -30.0, 5.0))
    harmonic = _sigmoid(static[:, LOG_HNR])
    if f0_track is None:
        f0 = np.exp(np.clip(static[:, LOG_F0], np.log(40.0), np.log(600.0)))
        voiced = harmonic >= VOICING_HNR
    else:
        f0_in = np.array([0.0 if v is None else float(v) for v in f0_track])
        if f0_in.size != n:
            raise ContractError(f"external F0 track has {f0_in.size} frames, expected {n}")
        voiced = f0_in > 0
        f0 = np.where(voiced, f0_in, 100.0)
    angle = np.clip(static[:, GLOTTAL_ANGLE], 1e-3, np.pi - 1e-3)
    mag = np.clip(np.exp(static[:, LOG_GLOTTAL_MAG]), 0.01, 0.98)
    # excitation lives on a timeline padded by one window of filter warm-up
    pad = WINDOW_LEN
    pulses = np.concatenate([np.zeros(pad), _pulse_positions(f0, voiced, n_samples)])
    noise = np.random.default_rng(seed).normal(size=n_samples + pad)
    window_energy = np.sqrt(np.sum(np.hamming(WINDOW_LEN) ** 2))
    segments = np.zeros((n, WINDOW_LEN))
    for i in range(n):
        lo = FRAME_SHIFT * i  # padded index of real sample FRAME_SHIFT * i - pad
        hi = lo + pad + WINDOW_LEN
        glottal = [1.0, -2 * mag[i] * np.cos(angle[i]), mag[i] ** 2]
        pulse = lfilter([1.0], glottal, pulses[lo:hi]) if voiced[i] else np.zeros(hi - lo)
        h = harmonic[i] if voiced[i] else 0.0
        exc = np.sqrt(h) * _unit_rms(pulse) + np.sqrt(1.0 - h) * _unit_rms(noise[lo:hi])
        exc = _unit_rms(exc) * gain[i] / window_energy
        a = lsp_to_lpc(lsp[i])
        segments[i] = lfilter([1.0], inverse_filter(a), exc)[pad:]
    out = overlap_add(segments)
    out = np.nan_to_num(out)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= PEAK / peak
    return Waveform(out)


# Pipelines

def render_posteriors(m: SynthModel, z, gamma: float = 1.2, f0_track=None, seed: int = 0) -> Waveform:
    """generate_params, MLPG smoothing, formant enhancement and re-synthesis."""
    raw = generate_params(m, z)
    static = mlpg_smooth(raw, m.global_variances)
    if static.shape[0]:
        static[:, LSP] = formant_enhance(stabilize_lsp(static[:, LSP]), gamma)
    return resynthesize(static, f0_track, seed)


def vocode(bank, m: SynthModel, w, pitch_source: str = "model", gamma: float = 1.2, seed: int = 0) -> Waveform:
    """Analysis by the feature bank followed by synthesis from the posteriors.

    ``pitch_source="original"`` drives the excitation with F0 measured on
    the input instead of the model's predicted log F0.
    """
    from .analyzer import analyze

    if bank.system.name != m.system.name:
        raise ContractError(f"analyzer bank uses {bank.system.name} but the model uses {m.system.name}")
    if pitch_source not in ("model", "original"):
        raise ContractError(f"pitch_source must be 'model' or 'original', got {pitch_source!r}")
    z = analyze(bank, w)
    f0 = None
    if pitch_source == "original":
        f0 = [estimate_f0(f) for f in frame_signal(w, window=None)]
    return render_posteriors(m, z, gamma, f0, seed)


# Persistence

def save_model(m: SynthModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_network(m.net, d / "synth.net")
    np.savetxt(d / "gv.txt", m.global_variances, fmt="%.17g")
    np.savetxt(d / "norm.txt", m.input_mean, fmt="%.17g")
    (d / "system.txt").write_text(m.system.name + "\n")


def load_model(directory) -> SynthModel:
    from .analyzer import read_system_file

    d = Path(directory)
    missing = [name for name in ("synth.net", "gv.txt", "norm.txt", "system.txt") if not (d / name).exists()]
    if missing:
        raise DataError(f"synthesizer model {d} is missing {', '.join(missing)}")
    system = read_system_file(d / "system.txt")
    return SynthModel(load_network(d / "synth.net"), np.loadtxt(d / "gv.txt", ndmin=1),
                      system, np.loadtxt(d / "norm.txt", ndmin=1))
