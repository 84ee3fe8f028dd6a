"""Phonological feature systems (GP, SPE, eSPE) and their CMUbet tables.

Each system maps the 39 CMUbet phonemes plus ``sil`` to a binary feature
vector.  The rows below are reproduced as printed in the source tables,
including the handful of phonemes that share a vector (see
:func:`validate_system`).
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, ParseError, UnknownPhonemeError

SYSTEM_NAMES = ("GP", "SPE", "eSPE")
SILENCE = "sil"
FRAME_SHIFT = 0.01

GP_FEATURES = ("A", "I", "U", "E", "S", "h", "H", "N", "a", "i", "u", "silence")
SPE_FEATURES = (
    "vocalic", "consonantal", "high", "back", "low", "anterior", "coronal",
    "round", "rising", "tense", "voice", "continuant", "nasal", "strident",
    "silence",
)
ESPE_FEATURES = (
    "vowel", "fricative", "nasal", "stop", "approximant", "coronal", "high",
    "dental", "glottal", "labial", "low", "mid", "retroflex", "velar",
    "anterior", "back", "continuant", "round", "tense", "voiced", "silence",
)

# (phoneme, active features); every other feature is 0.
_GP_ROWS = (
    ('iy', ('I', 'i')),
    ('ih', ('I', 'E')),
    ('uw', ('U', 'u')),
    ('uh', ('U', 'E')),
    ('ey', ('A', 'I', 'i')),
    ('ow', ('A', 'U', 'u')),
    ('oy', ('A', 'U', 'i', 'u')),
    ('ao', ('A', 'U', 'E', 'u')),
    ('aa', ('A', 'a')),
    ('ae', ('A', 'I', 'a')),
    ('ah', ('A', 'E')),
    ('aw', ('A', 'U', 'u')),
    ('ay', ('A', 'I', 'i')),
    ('y', ('I',)),
    ('w', ('U',)),
    ('eh', ('A', 'I', 'E', 'i')),
    ('er', ('A', 'E')),
    ('r', ('A', 'U', 'E')),
    ('l', ('S',)),
    ('p', ('U', 'S', 'h', 'H')),
    ('b', ('U', 'S', 'h')),
    ('f', ('U', 'h', 'H')),
    ('v', ('U', 'h')),
    ('m', ('U', 'S', 'N')),
    ('t', ('A', 'S', 'h', 'H')),
    ('d', ('A', 'S', 'h')),
    ('th', ('A', 'h', 'H')),
    ('dh', ('A', 'h')),
    ('n', ('S', 'N')),
    ('s', ('E', 'h', 'H')),
    ('z', ('E', 'h')),
    ('ch', ('I', 'S', 'H')),
    ('jh', ('I', 'S')),
    ('sh', ('I', 'h', 'H')),
    ('zh', ('I', 'h')),
    ('k', ('E', 'S', 'h', 'H')),
    ('g', ('E', 'S', 'h')),
    ('ng', ('E', 'S', 'N')),
    ('hh', ('h', 'H')),
)

_SPE_ROWS = (
    ('iy', ('vocalic', 'high', 'tense', 'voice', 'continuant')),
    ('ih', ('vocalic', 'high', 'voice', 'continuant')),
    ('uw', ('vocalic', 'high', 'back', 'round', 'tense', 'voice', 'continuant')),
    ('uh', ('vocalic', 'high', 'back', 'round', 'voice', 'continuant')),
    ('ey', ('vocalic', 'rising', 'tense', 'voice', 'continuant')),
    ('ow', ('vocalic', 'back', 'round', 'rising', 'tense', 'voice', 'continuant')),
    ('oy', ('vocalic', 'back', 'round', 'rising', 'voice', 'continuant')),
    ('ao', ('vocalic', 'back', 'round', 'voice', 'continuant')),
    ('aa', ('vocalic', 'back', 'low', 'tense', 'voice', 'continuant')),
    ('ae', ('vocalic', 'low', 'voice', 'continuant')),
    ('ah', ('vocalic', 'back', 'voice', 'continuant')),
    ('aw', ('vocalic', 'back', 'low', 'rising', 'tense', 'voice', 'continuant')),
    ('ay', ('vocalic', 'low', 'rising', 'tense', 'voice', 'continuant')),
    ('y', ('high', 'voice', 'continuant')),
    ('w', ('high', 'back', 'round', 'voice', 'continuant')),
    ('eh', ('vocalic', 'voice', 'continuant')),
    ('er', ('vocalic', 'tense', 'voice', 'continuant')),
    ('r', ('vocalic', 'consonantal', 'coronal', 'voice', 'continuant')),
    ('l', ('vocalic', 'consonantal', 'anterior', 'coronal', 'voice', 'continuant')),
    ('p', ('consonantal', 'anterior')),
    ('b', ('consonantal', 'anterior', 'voice')),
    ('f', ('consonantal', 'anterior', 'continuant', 'strident')),
    ('v', ('consonantal', 'anterior', 'voice', 'continuant', 'strident')),
    ('m', ('consonantal', 'anterior', 'voice', 'nasal')),
    ('t', ('consonantal', 'anterior', 'coronal')),
    ('d', ('consonantal', 'anterior', 'coronal', 'voice')),
    ('th', ('consonantal', 'anterior', 'coronal', 'continuant')),
    ('dh', ('consonantal', 'anterior', 'coronal', 'voice', 'continuant')),
    ('n', ('consonantal', 'anterior', 'coronal', 'voice', 'nasal')),
    ('s', ('consonantal', 'anterior', 'coronal', 'continuant', 'strident')),
    ('z', ('consonantal', 'anterior', 'coronal', 'voice', 'continuant', 'strident')),
    ('ch', ('consonantal', 'high', 'coronal', 'strident')),
    ('jh', ('consonantal', 'high', 'coronal', 'voice', 'strident')),
    ('sh', ('consonantal', 'high', 'coronal', 'continuant', 'strident')),
    ('zh', ('consonantal', 'high', 'coronal', 'voice', 'continuant', 'strident')),
    ('k', ('consonantal', 'high', 'back')),
    ('g', ('consonantal', 'high', 'back', 'voice')),
    ('ng', ('consonantal', 'high', 'back', 'voice', 'nasal')),
    ('hh', ('low', 'continuant')),
)

_ESPE_ROWS = (
    ('iy', ('vowel', 'high', 'continuant', 'tense', 'voiced')),
    ('ih', ('vowel', 'high', 'continuant', 'voiced')),
    ('uw', ('vowel', 'high', 'back', 'continuant', 'round', 'tense', 'voiced')),
    ('uh', ('vowel', 'high', 'back', 'continuant', 'round', 'voiced')),
    ('ey', ('vowel', 'mid', 'continuant', 'tense', 'voiced')),
    ('ow', ('vowel', 'high', 'mid', 'back', 'continuant', 'round', 'tense', 'voiced')),
    ('oy', ('vowel', 'back', 'continuant', 'round', 'voiced')),
    ('ao', ('vowel', 'back', 'continuant', 'round', 'tense', 'voiced')),
    ('aa', ('vowel', 'low', 'back', 'continuant', 'tense', 'voiced')),
    ('ae', ('vowel', 'low', 'continuant', 'tense', 'voiced')),
    ('ah', ('vowel', 'mid', 'back', 'continuant', 'voiced')),
    ('aw', ('vowel', 'low', 'back', 'continuant', 'round', 'tense', 'voiced')),
    ('ay', ('vowel', 'low', 'back', 'continuant', 'tense', 'voiced')),
    ('y', ('approximant', 'high', 'continuant', 'round', 'voiced')),
    ('w', ('approximant', 'labial', 'anterior', 'continuant', 'round', 'voiced')),
    ('eh', ('vowel', 'mid', 'continuant', 'voiced')),
    ('er', ('vowel', 'retroflex', 'continuant', 'voiced')),
    ('r', ('approximant', 'retroflex', 'continuant', 'round', 'voiced')),
    ('l', ('approximant', 'coronal', 'continuant', 'voiced')),
    ('p', ('stop', 'labial', 'anterior', 'tense')),
    ('b', ('stop', 'labial', 'anterior', 'voiced')),
    ('f', ('fricative', 'labial', 'anterior', 'continuant', 'tense')),
    ('v', ('fricative', 'labial', 'anterior', 'continuant', 'round', 'voiced')),
    ('m', ('nasal', 'labial', 'anterior', 'voiced')),
    ('t', ('stop', 'coronal', 'anterior', 'tense')),
    ('d', ('stop', 'coronal', 'anterior', 'voiced')),
    ('th', ('fricative', 'dental', 'anterior', 'continuant', 'tense')),
    ('dh', ('fricative', 'dental', 'anterior', 'continuant', 'voiced')),
    ('n', ('nasal', 'coronal', 'anterior', 'voiced')),
    ('s', ('fricative', 'coronal', 'anterior', 'continuant', 'tense')),
    ('z', ('fricative', 'coronal', 'anterior', 'continuant', 'voiced')),
    ('ch', ('fricative', 'high', 'tense')),
    ('jh', ('fricative', 'high', 'voiced')),
    ('sh', ('fricative', 'high', 'continuant', 'tense')),
    ('zh', ('fricative',)),
    ('k', ('stop', 'high', 'velar', 'back', 'tense')),
    ('g', ('stop', 'high', 'velar', 'back', 'voiced')),
    ('ng', ('nasal', 'high', 'velar', 'voiced')),
    ('hh', ('glottal',)),
)


CMUBET = tuple(sym for sym, _ in _GP_ROWS)
VOWELS = frozenset(
    "iy ih uw uh ey ow oy ao aa ae ah aw ay eh er".split()
)

_BUILTIN = {
    "GP": (GP_FEATURES, _GP_ROWS),
    "SPE": (SPE_FEATURES, _SPE_ROWS),
    "eSPE": (ESPE_FEATURES, _ESPE_ROWS),
}

_STRESS = re.compile(r"[0-9]+$")


def normalize_symbol(symbol: str) -> str:
    """Lower-case a CMUbet symbol and strip its stress digit (``ER1`` -> ``er``)."""
    return _STRESS.sub("", symbol.strip()).lower()


@dataclass(frozen=True)
class FeatureSystem:
    name: str
    features: tuple[str, ...]
    table: Mapping[str, np.ndarray]

    @property
    def K(self) -> int:
        return len(self.features)

    @property
    def phonemes(self) -> tuple[str, ...]:
        return tuple(self.table)

    @property
    def matrix(self) -> np.ndarray:
        """Table rows stacked in table order, shape (P, K)."""
        return np.stack([self.table[p] for p in self.table])

    def index(self, feature: str) -> int:
        try:
            return self.features.index(feature)
        except ValueError:
            raise KeyError(f"{self.name} has no feature {feature!r}") from None

    def __contains__(self, phoneme: str) -> bool:
        return phoneme in self.table

    def __reduce__(self):
        # mappingproxy is not picklable; rebuild from rows
        return make_system, (self.name, self.features, [(p, v) for p, v in self.table.items()])


def make_system(name: str, features: Sequence[str], rows: Iterable[tuple[str, Sequence[float]]]) -> FeatureSystem:
    """Build a FeatureSystem from explicit (phoneme, vector) rows.

    Vectors are frozen (read-only); no validation beyond shape is done here.
    """
    features = tuple(features)
    table = {}
    for sym, vec in rows:
        arr = np.array(vec, dtype=float)
        if arr.shape != (len(features),):
            raise ContractError(
                f"row {sym!r} has {arr.size} values, expected {len(features)}"
            )
        arr.setflags(write=False)
        table[sym] = arr
    return FeatureSystem(name, features, MappingProxyType(table))


def _canonical_name(name: str) -> str:
    for known in SYSTEM_NAMES:
        if name.lower() == known.lower():
            return known
    raise ContractError(f"unknown feature system {name!r}; expected one of {SYSTEM_NAMES}")


_CACHE: dict[str, FeatureSystem] = {}


def load_system(name: str) -> FeatureSystem:
    """Return the built-in GP, SPE or eSPE system (case-insensitive name)."""
    name = _canonical_name(name)
    if name not in _CACHE:
        features, rows = _BUILTIN[name]
        vectors = []
        for sym, active in rows:
            vec = [1.0 if f in active else 0.0 for f in features]
            vectors.append((sym, vec))
        sil = [0.0] * len(features)
        sil[features.index("silence")] = 1.0
        vectors.append((SILENCE, sil))
        _CACHE[name] = make_system(name, features, vectors)
    return _CACHE[name]


@dataclass(frozen=True)
class Finding:
    kind: str  # "dimension" | "duplicate" | "non-binary" | "row-count"
    message: str
    phonemes: tuple[str, ...] = ()


_EXPECTED_K = {"GP": 12, "SPE": 15, "eSPE": 21}


def validate_system(sys: FeatureSystem) -> list[Finding]:
    """Check a feature table; an empty list means the table is valid."""
    report = []
    expected_k = _EXPECTED_K.get(sys.name)
    if expected_k is not None and sys.K != expected_k:
        report.append(Finding("dimension", f"{sys.name} has K={sys.K}, expected {expected_k}"))
    if expected_k is not None and len(sys.table) != len(CMUBET) + 1:
        report.append(
            Finding("row-count", f"{len(sys.table)} rows, expected {len(CMUBET) + 1}")
        )
    seen: dict[tuple, list[str]] = {}
    for sym, vec in sys.table.items():
        if vec.shape != (sys.K,):
            report.append(Finding("dimension", f"row {sym!r} has length {vec.size}", (sym,)))
            continue
        bad = vec[(vec != 0) & (vec != 1)]
        if bad.size:
            report.append(
                Finding("non-binary", f"row {sym!r} has non-binary values {bad.tolist()}", (sym,))
            )
        seen.setdefault(tuple(vec), []).append(sym)
    for syms in seen.values():
        if len(syms) > 1:
            report.append(
                Finding("duplicate", f"phonemes {', '.join(syms)} share one feature vector", tuple(syms))
            )
    return report


def phoneme_to_features(sys: FeatureSystem, phoneme: str) -> np.ndarray:
    sym = normalize_symbol(phoneme)
    try:
        return sys.table[sym].copy()
    except KeyError:
        raise UnknownPhonemeError(phoneme, sys.name) from None


def nearest_phoneme(sys: FeatureSystem, vector) -> tuple[str, float]:
    """Closest table row in Euclidean distance; ties go to the earlier row."""
    v = np.asarray(vector, dtype=float)
    if v.shape != (sys.K,):
        raise ContractError(f"vector length {v.size} != K={sys.K}")
    dist = np.sqrt(((sys.matrix - v) ** 2).sum(axis=1))
    i = int(np.argmin(dist))
    return sys.phonemes[i], float(dist[i])


def nearest_phonemes(sys: FeatureSystem, vectors) -> list[str]:
    """Vectorised :func:`nearest_phoneme` over the rows of an (N, K) array."""
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    d2 = ((v[:, None, :] - sys.matrix[None, :, :]) ** 2).sum(axis=2)
    names = sys.phonemes
    return [names[i] for i in np.argmin(d2, axis=1)]


@dataclass(frozen=True)
class PhoneAlignment:
    """Contiguous (phoneme, start_frame, end_frame) spans, end exclusive."""

    entries: tuple[tuple[str, int, int], ...]

    def __post_init__(self):
        entries = tuple((str(p), int(s), int(e)) for p, s, e in self.entries)
        object.__setattr__(self, "entries", entries)
        prev_end = None
        for p, s, e in entries:
            if s >= e:
                raise ContractError(f"span {p!r} [{s}, {e}) is empty or reversed")
            if prev_end is not None and s != prev_end:
                raise ContractError(f"span {p!r} starts at {s}, previous span ended at {prev_end}")
            prev_end = e

    @property
    def num_frames(self) -> int:
        return self.entries[-1][2] if self.entries else 0

    @property
    def start(self) -> int:
        return self.entries[0][1] if self.entries else 0

    def frame_labels(self) -> list[str]:
        labels = []
        for p, s, e in self.entries:
            labels.extend([p] * (e - s))
        return labels

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


@dataclass
class PosteriorMatrix:
    frames: np.ndarray
    system: FeatureSystem
    frame_shift: float = FRAME_SHIFT

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=float)
        if self.frames.ndim != 2 or self.frames.shape[1] != self.system.K:
            raise ContractError(
                f"posterior matrix shape {self.frames.shape} incompatible with K={self.system.K}"
            )
        if self.frames.size and (self.frames.min() < 0 or self.frames.max() > 1):
            raise ContractError("posterior values must lie in [0, 1]")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def canonical_posteriors(sys: FeatureSystem, align: PhoneAlignment) -> PosteriorMatrix:
    """Hard 0/1 posteriors: each aligned frame gets its phoneme's table row.

    Frames before the first span (if it does not start at 0) are silence.
    """
    out = np.zeros((align.num_frames, sys.K))
    out[:, sys.index("silence")] = 1.0
    for p, s, e in align:
        out[s:e] = phoneme_to_features(sys, p)
    return PosteriorMatrix(out, sys)


def export_system_csv(sys: FeatureSystem, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phoneme", *sys.features])
        for sym, vec in sys.table.items():
            writer.writerow([sym, *(f"{v:g}" for v in vec)])


def import_system_csv(path, name: str | None = None) -> FeatureSystem:
    """Read a user-defined system written by :func:`export_system_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise ParseError("missing header row", path, 1)
    header = rows[0]
    features = header[1:]
    body = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", path, lineno)
        try:
            body.append((row[0], [float(x) for x in row[1:]]))
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    if name is None:
        name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return make_system(name, features, body)
