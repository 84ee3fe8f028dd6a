"""Phonological atoms: speech rendered from a single active feature, and their mixtures."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analyzer import check_case_sensitive
from .corpus import write_wav
from .dsp import Waveform
from .dsp.framing import FRAME_SHIFT, SAMPLE_RATE
from .errors import ContractError
from .phonoset import FeatureSystem, phoneme_to_features
from .synthesizer import PEAK, SynthModel, render_posteriors

# sounds outside the English table, as prime fusions (ASCII names)
COMPOSED_SOUNDS = {
    "GP": {"y": ("I", "U", "E"), "oe": ("A", "I", "U", "E")},
}


@dataclass
class AtomSet:
    system: FeatureSystem
    atoms: dict[str, Waveform]
    duration: float = 2.0

    def __post_init__(self):
        if list(self.atoms) != list(self.system.features):
            raise ContractError("atoms must be given for every feature, in system order")
        lengths = {len(w) for w in self.atoms.values()}
        if len(lengths) > 1:
            raise ContractError(f"atoms differ in length: {sorted(lengths)}")

    def __getitem__(self, feature: str) -> Waveform:
        return self.atoms[feature]

    def __len__(self):
        return len(self.atoms)


def generate_atoms(m: SynthModel, duration: float = 2.0, gamma: float = 1.2, seed: int = 0) -> AtomSet:
    """One waveform per feature from a constant unit posterior vector."""
    n_frames = max(1, int(round(duration * SAMPLE_RATE / FRAME_SHIFT)))
    atoms = {}
    for k, feature in enumerate(m.system.features):
        z = np.zeros((n_frames, m.system.K))
        z[:, k] = 1.0
        atoms[feature] = render_posteriors(m, z, gamma, seed=seed)
    return AtomSet(m.system, atoms, duration)


def compose(atoms, weights=None) -> Waveform:
    """Weighted average of equal-length atom waveforms, peak-normalized to 0.9."""
    atoms = list(atoms)
    if not atoms:
        raise ContractError("compose needs at least one atom")
    lengths = {len(a) for a in atoms}
    if len(lengths) > 1:
        raise ContractError(f"atoms differ in length: {sorted(lengths)}")
    w = np.ones(len(atoms)) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (len(atoms),):
        raise ContractError(f"{w.size} weights for {len(atoms)} atoms")
    mix = sum(wi * a.samples for wi, a in zip(w, atoms)) / len(atoms)
    peak = np.max(np.abs(mix))
    if peak > 0:
        mix = mix * (PEAK / peak)
    return Waveform(mix)


def phone_recipe(sys: FeatureSystem, phoneme: str) -> list[str]:
    """Features active in a phoneme's table row."""
    row = phoneme_to_features(sys, phoneme)
    active = [f for f, v in zip(sys.features, row) if v]
    if not active:
        raise ContractError(f"{phoneme!r} has no active feature to compose")
    return active


def sound_recipe(sys: FeatureSystem, name: str) -> list[str]:
    """Features of a composed non-English sound (e.g. GP ``oe``), else of a table phoneme."""
    fused = COMPOSED_SOUNDS.get(sys.name, {})
    if name in fused:
        return list(fused[name])
    return phone_recipe(sys, name)


def compose_phone(sys: FeatureSystem, atomset: AtomSet, phoneme: str) -> Waveform:
    return compose([atomset[f] for f in phone_recipe(sys, phoneme)])


def export_atoms(atomset: AtomSet, directory) -> list[Path]:
    """Write ``<feature>.wav`` for every atom."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    check_case_sensitive(d, atomset.system.features)
    paths = []
    for feature, w in atomset.atoms.items():
        path = d / f"{feature}.wav"
        write_wav(w, path)
        paths.append(path)
    return paths
