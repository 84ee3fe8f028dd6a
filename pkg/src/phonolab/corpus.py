"""File formats: WAV audio, HTK labels, CMU dictionary, manifests and config."""

from __future__ import annotations

import configparser
import logging
import os
import re
import warnings
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp.framing import SAMPLE_RATE, Waveform, num_frames
from .errors import ContractError, DataError, ParseError, UnsupportedFormatError
from .phonoset import CMUBET, SILENCE, PhoneAlignment, PosteriorMatrix, load_system, normalize_symbol

log = logging.getLogger(__name__)

HTK_UNITS_PER_SECOND = 10_000_000  # HTK times are in 100 ns units
ALIGN_TOLERANCE = 2  # frames an alignment may overshoot its audio
SILENCE_ALIASES = frozenset({"sil", "pau", "h#", "sp", "#"})
_PHONES = frozenset(CMUBET) | {SILENCE}


class CorpusWarning(UserWarning):
    pass


# WAV

def read_wav(path) -> Waveform:
    """Read a 16 kHz mono PCM16 WAV file, scaling samples by 1/32768."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels, width, rate = fh.getnchannels(), fh.getsampwidth(), fh.getframerate()
            comp = fh.getcomptype()
            raw = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise UnsupportedFormatError(f"{path}: not a PCM WAV file ({exc or 'truncated'})") from None
    if comp != "NONE":
        raise UnsupportedFormatError(f"{path}: compression {comp} is not PCM")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: sample_width {8 * width} bits != 16")
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: channels {channels} != 1")
    if rate != SAMPLE_RATE:
        raise UnsupportedFormatError(f"{path}: sample_rate {rate} != {SAMPLE_RATE}")
    samples = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    return Waveform(samples)


def write_wav(w, path) -> None:
    """Write PCM16 mono at 16 kHz with saturating rounding."""
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=float)
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(pcm.tobytes())


# HTK labels

def label_phone(token: str) -> str:
    """Centre phone of an HTK/HTS label token, stress-stripped and lower-case."""
    if "-" in token and "+" in token:
        token = token[token.index("-") + 1:]
        token = token[:token.index("+")]
    sym = normalize_symbol(token)
    return SILENCE if sym in SILENCE_ALIASES else sym


def parse_htk_labels(path, frame_shift: float = 0.01) -> PhoneAlignment:
    """Parse ``start end name`` lines (100 ns units) into a frame alignment.

    Extra trailing fields (scores, word labels) are ignored.  Spans must be
    contiguous and each must cover at least one frame.
    """
    units = round(frame_shift * HTK_UNITS_PER_SECOND)
    entries = []
    prev_end = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0] in {".", "///"} or parts[0].startswith("#"):
                continue
            if len(parts) < 3:
                raise ParseError("expected 'start end name'", path, lineno)
            try:
                start, end = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError("start and end must be integers", path, lineno) from None
            if end <= start:
                raise ParseError(f"end {end} is not after start {start}", path, lineno)
            if prev_end is not None and start != prev_end:
                kind = "overlaps" if start < prev_end else "leaves a gap after"
                raise ParseError(f"segment {kind} the previous one (ends at {prev_end})", path, lineno)
            phone = label_phone(parts[2])
            if phone not in _PHONES:
                raise ParseError(f"unknown phone {parts[2]!r}", path, lineno)
            s, e = start // units, end // units
            if e <= s:
                raise ParseError(f"segment {phone!r} is shorter than one frame", path, lineno)
            entries.append((phone, s, e))
            prev_end = end
    if not entries:
        raise ParseError("no label lines", path, None)
    return PhoneAlignment(tuple(entries))


def write_htk_labels(align: PhoneAlignment, path, frame_shift: float = 0.01) -> None:
    units = round(frame_shift * HTK_UNITS_PER_SECOND)
    with open(path, "w") as fh:
        for p, s, e in align:
            fh.write(f"{s * units} {e * units} {p}\n")


# Lexicon

@dataclass
class Lexicon:
    entries: dict[str, list[list[str]]] = field(default_factory=dict)

    def __contains__(self, word: str) -> bool:
        return word.upper() in self.entries

    def __getitem__(self, word: str) -> list[list[str]]:
        return self.entries[word.upper()]

    def __len__(self):
        return len(self.entries)

    def add(self, word: str, phones) -> None:
        self.entries.setdefault(word.upper(), []).append(list(phones))


_VARIANT = re.compile(r"\(\d+\)$")


def parse_cmudict(path) -> Lexicon:
    """Parse CMUdict text (``WORD  PH1 PH2``, ``WORD(2)`` variants, ``;;;`` comments)."""
    lex = Lexicon()
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith(";;;"):
                continue
            parts = line.split()
            if len(parts) < 2:
                raise ParseError("entry has no pronunciation", path, lineno)
            word = _VARIANT.sub("", parts[0])
            phones = [normalize_symbol(p) for p in parts[1:]]
            for raw, p in zip(parts[1:], phones):
                if p not in CMUBET:
                    raise ParseError(f"unknown phoneme {raw!r}", path, lineno)
            lex.add(word, phones)
    return lex


# Config

@dataclass
class Config:
    """Sectioned key/value settings with typed getters."""

    sections: dict[str, dict[str, str]] = field(default_factory=dict)
    path: str | None = None

    def get_str(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def _typed(self, section, key, default, conv, kind):
        raw = self.get_str(section, key)
        if raw is None:
            return default
        try:
            return conv(raw)
        except ValueError:
            raise ParseError(f"[{section}] {key} = {raw!r} is not a valid {kind}", self.path) from None

    def get_int(self, section: str, key: str, default=None):
        return self._typed(section, key, default, int, "integer")

    def get_float(self, section: str, key: str, default=None):
        return self._typed(section, key, default, float, "number")

    def get_path(self, section: str, key: str, default=None):
        raw = self.get_str(section, key)
        if raw is None:
            return default
        p = Path(os.path.expanduser(raw))
        if not p.is_absolute() and self.path is not None:
            p = Path(self.path).parent / p
        return p

    def get_ints(self, section: str, key: str, default=None):
        """Comma-separated integers, e.g. ``hidden = 256,64,256``."""
        return self._typed(section, key, default,
                           lambda s: [int(v) for v in s.replace(" ", "").split(",") if v], "integer list")

    def unknown_keys(self, schema) -> list[str]:
        """``section.key`` names absent from ``schema`` (a section -> keys mapping)."""
        out = []
        for sec, items in self.sections.items():
            known = schema.get(sec)
            for key in items:
                if known is None or key not in known:
                    out.append(f"{sec}.{key}")
        return out

    def resolved(self) -> str:
        lines = []
        for sec, items in self.sections.items():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in items.items())
        return "\n".join(lines)


def parse_config(text: str, path=None) -> Config:
    parser = configparser.ConfigParser(
        strict=True, interpolation=None, comment_prefixes=("#", ";"),
        inline_comment_prefixes=("#",), empty_lines_in_values=False,
    )
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text, source=str(path) if path else "<string>")
    except configparser.DuplicateOptionError as exc:
        raise ParseError(f"duplicate key {exc.option!r} in section [{exc.section}]", path, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(f"duplicate section [{exc.section}]", path, exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside any [section]", path, exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ParseError("malformed line", path, lineno) from None
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    return Config(sections, str(path) if path else None)


def load_config(path) -> Config:
    with open(path) as fh:
        return parse_config(fh.read(), path)


# Corpus manifests

def read_manifest(path) -> list[tuple[Path, Path]]:
    base = Path(path).parent
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ParseError("expected 'wav_path<TAB>lab_path'", path, lineno)
            pairs.append(tuple(p if Path(p).is_absolute() else base / p for p in map(Path, parts)))
    return pairs


def fit_alignment(align: PhoneAlignment, n_frames: int, name: str = "") -> PhoneAlignment:
    """Clip an alignment that overshoots the audio by at most 2 frames."""
    over = align.num_frames - n_frames
    if over <= 0:
        return align
    if over > ALIGN_TOLERANCE:
        raise DataError(
            f"{name}: alignment has {align.num_frames} frames but audio only {n_frames}"
        )
    warnings.warn(f"{name}: alignment overshoots audio by {over} frame(s); clipped", CorpusWarning)
    entries = [(p, s, min(e, n_frames)) for p, s, e in align if s < n_frames]
    return PhoneAlignment(tuple(entries))


def load_corpus(manifest) -> list[tuple[Waveform, PhoneAlignment]]:
    pairs = read_manifest(manifest)
    missing = [str(p) for pair in pairs for p in pair if not p.exists()]
    if missing:
        raise DataError("missing corpus files: " + ", ".join(missing))
    corpus = []
    for wav_path, lab_path in pairs:
        w = read_wav(wav_path)
        align = parse_htk_labels(lab_path)
        corpus.append((w, fit_alignment(align, num_frames(len(w)), str(lab_path))))
    return corpus


def write_manifest(pairs, path) -> None:
    with open(path, "w") as fh:
        for wav_path, lab_path in pairs:
            fh.write(f"{wav_path}\t{lab_path}\n")


# Posterior matrices

POSTERIOR_MAGIC = "# phonolab-posteriors"


def write_posteriors(z: PosteriorMatrix, path) -> None:
    """CSV with a system comment line, a feature header and one row per frame."""
    with open(path, "w") as fh:
        fh.write(f"{POSTERIOR_MAGIC} system={z.system.name}\n")
        fh.write(",".join(z.system.features) + "\n")
        for row in z.frames:
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")


def read_posteriors(path) -> PosteriorMatrix:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(POSTERIOR_MAGIC + " system="):
        raise ParseError(f"missing '{POSTERIOR_MAGIC} system=...' header", path, 1)
    try:
        system = load_system(lines[0].split("=", 1)[1].strip())
    except ContractError as exc:
        raise ParseError(str(exc), path, 1) from None
    if len(lines) < 2 or lines[1].split(",") != list(system.features):
        raise ParseError(f"feature header does not match {system.name}", path, 2)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        fields = line.split(",")
        if len(fields) != system.K:
            raise ParseError(f"expected {system.K} values, got {len(fields)}", path, lineno)
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
    try:
        return PosteriorMatrix(np.array(rows).reshape(len(rows), system.K), system)
    except ContractError as exc:
        raise ParseError(str(exc), path) from None
