import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phonolab.atoms import (
    AtomSet,
    compose,
    compose_phone,
    export_atoms,
    generate_atoms,
    phone_recipe,
    sound_recipe,
)
from phonolab.corpus import read_wav
from phonolab.dsp import Waveform, num_frames
from phonolab.errors import ContractError, UnknownPhonemeError
from phonolab.neural import init_network
from phonolab.phonoset import load_system
from phonolab.synthesizer import PEAK, SYNTH_CONTEXT, TARGET_DIM, SynthModel

GP = load_system("GP")


@pytest.fixture(scope="module")
def atomset():
    net = init_network([GP.K * SYNTH_CONTEXT, 8, TARGET_DIM], "linear", seed=2)
    m = SynthModel(net, np.ones(TARGET_DIM), GP, np.zeros(GP.K * SYNTH_CONTEXT))
    return generate_atoms(m, duration=0.3)


def signals(k, n=200, seed=0):
    rng = np.random.default_rng(seed)
    return [Waveform(rng.uniform(-1, 1, n)) for _ in range(k)]


class TestCompose:
    def test_single_atom_is_peak_normalized_copy(self):
        (a,) = signals(1)
        out = compose([a])
        np.testing.assert_allclose(out.samples, a.samples * PEAK / np.max(np.abs(a.samples)))

    def test_idempotent_on_normalized_atom(self):
        a = compose(signals(1))
        np.testing.assert_allclose(compose([a]).samples, a.samples)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 1000), st.floats(0.1, 10.0))
    def test_permutation_and_scale(self, k, seed, c):
        atoms = signals(k, seed=seed)
        ref = compose(atoms).samples
        np.testing.assert_allclose(compose(atoms[::-1]).samples, ref, atol=1e-12)
        np.testing.assert_allclose(compose(atoms, [c] * k).samples, ref, atol=1e-12)
        assert np.max(np.abs(ref)) == pytest.approx(PEAK)

    def test_weights(self):
        a, b = signals(2)
        np.testing.assert_allclose(compose([a, b], [1.0, 0.0]).samples, compose([a]).samples)

    def test_silent_input_stays_silent(self):
        assert not compose([Waveform(np.zeros(10))]).samples.any()

    def test_errors(self):
        with pytest.raises(ContractError):
            compose([])
        with pytest.raises(ContractError):
            compose([Waveform(np.zeros(3)), Waveform(np.zeros(4))])
        with pytest.raises(ContractError):
            compose(signals(2), [1.0])


class TestRecipes:
    @pytest.mark.parametrize("phone, features", [
        ("iy", ["I", "i"]),
        ("aa", ["A", "a"]),
        ("hh", ["h", "H"]),
        ("m", ["U", "S", "N"]),
        ("s", ["E", "h", "H"]),
    ])
    def test_gp_rows(self, phone, features):
        assert phone_recipe(GP, phone) == features

    def test_composed_sounds(self):
        assert sound_recipe(GP, "oe") == ["A", "I", "U", "E"]
        assert sound_recipe(GP, "y") == ["I", "U", "E"]
        assert sound_recipe(GP, "iy") == phone_recipe(GP, "iy")

    def test_composed_sounds_are_gp_only(self):
        with pytest.raises(UnknownPhonemeError):
            sound_recipe(load_system("SPE"), "oe")

    def test_unknown_phone(self):
        with pytest.raises(UnknownPhonemeError):
            phone_recipe(GP, "qq")


class TestAtomSet:
    def test_one_atom_per_feature(self, atomset):
        assert list(atomset.atoms) == list(GP.features)
        assert len({len(a) for a in atomset.atoms.values()}) == 1
        assert num_frames(len(atomset["A"])) == 30

    def test_compose_phone(self, atomset):
        out = compose_phone(GP, atomset, "iy")
        expected = compose([atomset["I"], atomset["i"]])
        np.testing.assert_array_equal(out.samples, expected.samples)

    def test_export_names(self, atomset, tmp_path):
        paths = export_atoms(atomset, tmp_path)
        assert sorted(p.name for p in tmp_path.iterdir()) == sorted(f"{f}.wav" for f in GP.features)
        assert len(read_wav(paths[0])) == len(atomset["A"])

    def test_validation(self, atomset):
        atoms = dict(atomset.atoms)
        atoms["A"] = Waveform(np.zeros(5))
        with pytest.raises(ContractError):
            AtomSet(GP, atoms)
        with pytest.raises(ContractError):
            AtomSet(GP, dict(list(atomset.atoms.items())[1:]))
