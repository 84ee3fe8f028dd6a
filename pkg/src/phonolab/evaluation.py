"""Objective evaluation: mel cepstral distortion, phone distance matrices, intelligibility."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .dsp import WINDOW_LEN, FRAME_SHIFT, frame_signal, mel_cepstra
from .errors import ContractError, DataError, ParseError
from .phonoset import CMUBET, SILENCE

log = logging.getLogger(__name__)

MCD_SCALE = 10.0 / math.log(10.0)
PGM_CEILING = 1.5  # distances at or above this are drawn white


class EvaluationWarning(UserWarning):
    pass


@dataclass
class DistanceMatrix:
    labels: list[str]
    values: np.ndarray

    def __post_init__(self):
        self.labels = list(self.labels)
        self.values = np.asarray(self.values, dtype=float)
        p = len(self.labels)
        if self.values.shape != (p, p):
            raise ContractError(f"matrix shape {self.values.shape} does not match {p} labels")
        if len(set(self.labels)) != p:
            raise ContractError("matrix labels must be unique")
        if not np.all(np.isfinite(self.values)):
            raise ContractError("matrix contains non-finite values")

    def __getitem__(self, pair):
        i, j = (self.labels.index(x) for x in pair)
        return self.values[i, j]


def mcd(c1, c2) -> float:
    """Mel cepstral distortion in dB over c1..c12 (c0 is excluded)."""
    a, b = np.asarray(c1, dtype=float), np.asarray(c2, dtype=float)
    if a.shape != b.shape:
        raise ContractError(f"cepstra lengths differ: {a.shape} vs {b.shape}")
    d = a[..., 1:13] - b[..., 1:13]
    return float(MCD_SCALE * np.sqrt(2.0 * np.sum(d * d)))


def _pairwise_mcd(a, b) -> np.ndarray:
    d = a[:, None, 1:13] - b[None, :, 1:13]
    return MCD_SCALE * np.sqrt(2.0 * np.sum(d * d, axis=2))


def _phone_order(labels):
    rank = {p: i for i, p in enumerate((*CMUBET, SILENCE))}
    return sorted(labels, key=lambda p: (rank.get(p, len(rank)), p))


def build_exemplars(corpus, exclude=()) -> dict[str, list[np.ndarray]]:
    """One 13-dim mel cepstral vector from the centre frame of every phone instance.

    ``corpus`` holds (Waveform, PhoneAlignment) pairs.  Spans whose centre
    frame lies outside the audio are skipped and counted in a warning.
    """
    exemplars: dict[str, list[np.ndarray]] = {}
    skipped = 0
    for w, align in corpus:
        frames = frame_signal(w)
        centres = {}
        for p, s, e in align:
            if p in exclude:
                continue
            c = (s + e - 1) // 2
            if c >= frames.shape[0]:
                skipped += 1
                continue
            centres.setdefault(p, []).append(c)
        for p, idx in centres.items():
            ceps = mel_cepstra(frames[idx])
            exemplars.setdefault(p, []).extend(ceps)
    if skipped:
        warnings.warn(f"{skipped} phone span(s) outside the audio were skipped", EvaluationWarning)
    return {p: exemplars[p] for p in _phone_order(exemplars)}


def exemplars_from_waveforms(phone_audio, frames_per_phone: int = 1) -> dict[str, list[np.ndarray]]:
    """Exemplars from stationary per-phone audio (e.g. composed atoms), taken at the centre."""
    out = {}
    for p, w in phone_audio.items():
        frames = frame_signal(w)
        if frames.shape[0] == 0:
            continue
        c = frames.shape[0] // 2
        lo = max(0, c - frames_per_phone // 2)
        out[p] = list(mel_cepstra(frames[lo:lo + frames_per_phone]))
    return {p: out[p] for p in _phone_order(out)}


def distance_matrix(test, ref) -> DistanceMatrix:
    """Entry (i, j): mean MCD between test exemplars of phone i and ref exemplars of phone j."""
    shared = [p for p in ref if p in test and len(test[p]) and len(ref[p])]
    only = sorted(set(test) ^ set(ref))
    if only:
        log.warning("phones present in only one exemplar set: %s", " ".join(only))
    if not shared:
        raise DataError("test and reference exemplar sets share no phones")
    values = np.zeros((len(shared), len(shared)))
    for i, p in enumerate(shared):
        a = np.asarray(test[p])
        for j, q in enumerate(shared):
            values[i, j] = _pairwise_mcd(a, np.asarray(ref[q])).mean()
    return DistanceMatrix(shared, values)


def scale_natural(d: DistanceMatrix) -> DistanceMatrix:
    """Map each column affinely to [1, 2]: its minimum to 1 and its maximum to 2."""
    v = d.values
    lo, hi = v.min(axis=0), v.max(axis=0)
    span = hi - lo
    flat = span <= 0
    if flat.any():
        cols = ", ".join(d.labels[j] for j in np.nonzero(flat)[0])
        warnings.warn(f"constant column(s) {cols} set to 1", EvaluationWarning)
    safe = np.where(flat, 1.0, span)
    scaled = 1.0 + (1.0 - (hi - v) / safe)
    scaled[:, flat] = 1.0
    return DistanceMatrix(d.labels, scaled)


def normalize(d_vocoded: DistanceMatrix, d_natural_scaled: DistanceMatrix) -> DistanceMatrix:
    """Element-wise product of the vocoded distances and the scaled natural ones."""
    if d_vocoded.labels != d_natural_scaled.labels:
        raise ContractError("matrices must share the same labels in the same order")
    return DistanceMatrix(d_vocoded.labels, d_vocoded.values * d_natural_scaled.values)


def restrict(d: DistanceMatrix, labels) -> DistanceMatrix:
    idx = [d.labels.index(p) for p in labels]
    return DistanceMatrix(list(labels), d.values[np.ix_(idx, idx)])


def diagonal_mean(d: DistanceMatrix) -> float:
    return float(np.mean(np.diag(d.values)))


def diagonal_dominance(d: DistanceMatrix) -> float:
    """Fraction of rows whose diagonal entry is the row minimum."""
    v = d.values
    return float(np.mean(np.diag(v) <= v.min(axis=1)))


# Intelligibility

def align_words(ref, hyp):
    """Minimum edit distance alignment; returns (hits, substitutions, deletions, insertions).

    Among equal-cost paths a substitution is preferred over an
    insertion/deletion pair.
    """
    n, m = len(ref), len(hyp)
    cost = np.zeros((n + 1, m + 1), dtype=int)
    cost[:, 0] = np.arange(n + 1)
    cost[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1])
            cost[i, j] = min(diag, cost[i - 1, j] + 1, cost[i, j - 1] + 1)
    hits = subs = dels = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i, j] == cost[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] == hyp[j - 1]:
                hits += 1
            else:
                subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and cost[i, j] == cost[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return hits, subs, dels, ins


def intelligibility_score(hits: int, insertions: int, n_ref: int) -> float:
    if n_ref <= 0:
        raise ContractError("reference must contain at least one word")
    return 100.0 * (hits - insertions) / n_ref


def intelligibility(ref_words, hyp_words) -> float:
    """Percentage (H - I) / N of a word transcription; may be negative."""
    ref = [w.upper() for w in ref_words]
    hyp = [w.upper() for w in hyp_words]
    if not ref:
        raise ContractError("reference must contain at least one word")
    hits, _, _, ins = align_words(ref, hyp)
    return intelligibility_score(hits, ins, len(ref))


# Export

def export_matrix(d: DistanceMatrix, path, fmt: str = "csv") -> None:
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["", *d.labels])
            for label, row in zip(d.labels, d.values):
                writer.writerow([label, *(f"{v:.6f}" for v in row)])
    elif fmt == "pgm":
        grey = np.round(255 * np.clip((d.values - 1.0) / (PGM_CEILING - 1.0), 0.0, 1.0)).astype(int)
        with open(path, "w") as fh:
            fh.write(f"P2\n# rows/cols: {' '.join(d.labels)}\n{grey.shape[1]} {grey.shape[0]}\n255\n")
            for row in grey:
                fh.write(" ".join(str(v) for v in row) + "\n")
    else:
        raise ContractError(f"unknown matrix format {fmt!r}; use csv or pgm")


def import_matrix_csv(path) -> DistanceMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty matrix file", path, 1)
    labels = rows[0][1:]
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(labels) + 1:
            raise ParseError(f"expected {len(labels) + 1} fields", path, lineno)
        try:
            values.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    return DistanceMatrix(labels, np.array(values).reshape(len(values), len(labels)))
