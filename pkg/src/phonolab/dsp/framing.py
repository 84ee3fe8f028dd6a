"""Waveforms, framing, dynamic features, context stacking and overlap-add."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

SAMPLE_RATE = 16000
WINDOW_LEN = 400  # 25 ms
FRAME_SHIFT = 160  # 10 ms


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1)
        if self.sample_rate != SAMPLE_RATE:
            raise ContractError(f"sample_rate {self.sample_rate} != {SAMPLE_RATE}")
        if not np.all(np.isfinite(self.samples)):
            raise ContractError("waveform contains non-finite samples")

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def num_frames(num_samples: int, window_len: int = WINDOW_LEN, shift: int = FRAME_SHIFT) -> int:
    if num_samples < window_len:
        return 0
    return (num_samples - window_len) // shift + 1


def frame_signal(w, window: str | None = "hamming", window_len: int = WINDOW_LEN,
                 shift: int = FRAME_SHIFT) -> np.ndarray:
    """Cut a waveform into overlapping frames, shape (N, window_len).

    ``w`` may be a :class:`Waveform` or a bare sample array.  ``window=None``
    returns raw (rectangular) frames.
    """
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=float)
    n = num_frames(x.size, window_len, shift)
    if n == 0:
        return np.zeros((0, window_len))
    idx = np.arange(window_len)[None, :] + shift * np.arange(n)[:, None]
    frames = x[idx]
    if window == "hamming":
        frames = frames * np.hamming(window_len)
    elif window is not None:
        raise ContractError(f"unsupported analysis window {window!r}")
    return frames


def append_deltas(static) -> np.ndarray:
    """Append first and second differences: [x, dx, ddx] with edge replication."""
    x = np.asarray(static, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ContractError("append_deltas needs an (N>=1, d) matrix")
    padded = np.concatenate([x[:1], x, x[-1:]])
    prev, nxt = padded[:-2], padded[2:]
    delta = (nxt - prev) / 2.0
    delta2 = prev - 2.0 * x + nxt
    return np.hstack([x, delta, delta2])


def stack_context(feats, width: int) -> np.ndarray:
    """Concatenate each row with its (width-1)/2 neighbours on both sides."""
    x = np.asarray(feats, dtype=float)
    if width < 1 or width % 2 == 0:
        raise ContractError(f"context width must be a positive odd integer, got {width}")
    half = width // 2
    n = x.shape[0]
    if n == 0:
        return np.zeros((0, x.shape[1] * width))
    idx = np.clip(np.arange(n)[:, None] + np.arange(-half, half + 1)[None, :], 0, n - 1)
    return x[idx].reshape(n, -1)


def synthesis_window(segment_len: int, shift: int = FRAME_SHIFT) -> np.ndarray:
    """Triangular window of length 2*shift centred in the segment.

    Copies hopped by ``shift`` sum to exactly one, so overlap-add of
    constant frames is constant wherever frames fully overlap.
    """
    span = 2 * shift
    if segment_len < span:
        n = np.arange(segment_len)
        return 1.0 - np.abs(n - (segment_len - 1) / 2) / (segment_len / 2)
    n = np.arange(span)
    tri = 1.0 - np.abs(n - (span - 1) / 2) / shift
    pad = segment_len - span
    return np.concatenate([np.zeros(pad // 2), tri, np.zeros(pad - pad // 2)])


def overlap_add(frames, shift: int = FRAME_SHIFT) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2:
        raise ContractError("overlap_add expects an (N, L) array of segments")
    n, seg = frames.shape
    if n == 0:
        return np.zeros(0)
    win = synthesis_window(seg, shift)
    out = np.zeros((n - 1) * shift + seg)
    for i in range(n):
        out[i * shift:i * shift + seg] += frames[i] * win
    return out
