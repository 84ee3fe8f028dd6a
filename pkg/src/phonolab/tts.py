"""Text-to-speech front end: text or labels to canonical posteriors to audio."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Lexicon, parse_htk_labels
from .dsp import Waveform
from .errors import ContractError, OutOfVocabularyError
from .phonoset import SILENCE, VOWELS, FeatureSystem, PhoneAlignment, canonical_posteriors
from .synthesizer import SynthModel, render_posteriors

# sentence-internal punctuation that becomes a pause
_PAUSE = re.compile(r"[,;:.!?]")
_WORD = re.compile(r"[A-Za-z0-9']+")


@dataclass
class DurationTable:
    """Fallback phone durations in frames."""

    overrides: dict[str, int] = field(default_factory=dict)
    vowel: int = 12
    consonant: int = 8
    silence: int = 20

    def __post_init__(self):
        for name, d in [("vowel", self.vowel), ("consonant", self.consonant), ("silence", self.silence),
                        *self.overrides.items()]:
            if int(d) < 1:
                raise ContractError(f"duration for {name} must be at least 1 frame, got {d}")

    def __getitem__(self, phone: str) -> int:
        if phone in self.overrides:
            return int(self.overrides[phone])
        if phone == SILENCE:
            return self.silence
        return self.vowel if phone in VOWELS else self.consonant


def _tokens(text: str):
    """Words and pause markers in reading order."""
    for m in re.finditer(rf"{_WORD.pattern}|{_PAUSE.pattern}", text):
        yield ("pause", None) if _PAUSE.fullmatch(m.group()) else ("word", m.group().upper())


def text_to_phonemes(text: str, lex: Lexicon) -> list[str]:
    """Phone sequence for ``text`` with silence at both ends and at internal punctuation."""
    if not text or not text.strip():
        raise ContractError("text must not be empty")
    phones = [SILENCE]
    for kind, word in _tokens(text):
        if kind == "pause":
            if phones[-1] != SILENCE:
                phones.append(SILENCE)
            continue
        if word not in lex:
            raise OutOfVocabularyError(word)
        phones.extend(lex[word][0])
    if phones[-1] != SILENCE:
        phones.append(SILENCE)
    if len(phones) == 1:
        raise ContractError(f"text {text!r} contains no words")
    return phones


def assign_durations(phones, dt: DurationTable | None = None) -> PhoneAlignment:
    """Contiguous alignment from table durations."""
    phones = list(phones)
    if not phones:
        raise ContractError("phone sequence must not be empty")
    dt = dt or DurationTable()
    entries, t = [], 0
    for p in phones:
        d = dt[p]
        entries.append((p, t, t + d))
        t += d
    return PhoneAlignment(tuple(entries))


def tts_alignment(source, lex: Lexicon | None = None, dt: DurationTable | None = None) -> PhoneAlignment:
    """Alignment for text, a label file path, or an existing PhoneAlignment."""
    if isinstance(source, PhoneAlignment):
        return source
    if isinstance(source, Path) or (isinstance(source, str) and source.endswith(".lab")):
        return parse_htk_labels(source)
    if lex is None:
        raise ContractError("a lexicon is needed to synthesize from text")
    return assign_durations(text_to_phonemes(source, lex), dt)


def tts_synthesize(source, sys: FeatureSystem, m: SynthModel, lex: Lexicon | None = None,
                   dt: DurationTable | None = None, gamma: float = 1.2, seed: int = 0) -> Waveform:
    """Synthesize speech from text (needs ``lex``), an HTK label file or an alignment.

    Label files and alignments bypass the lexicon and the duration table.
    """
    if sys.name != m.system.name:
        raise ContractError(f"system {sys.name} does not match the model's {m.system.name}")
    align = tts_alignment(source, lex, dt)
    return render_posteriors(m, canonical_posteriors(sys, align), gamma, seed=seed)
