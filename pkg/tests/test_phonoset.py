import numpy as np
import pytest
from hypothesis import given, strategies as st

from phonolab.errors import ContractError, ParseError, UnknownPhonemeError
from phonolab.phonoset import (
    CMUBET,
    PhoneAlignment,
    PosteriorMatrix,
    canonical_posteriors,
    export_system_csv,
    import_system_csv,
    load_system,
    make_system,
    nearest_phoneme,
    nearest_phonemes,
    normalize_symbol,
    phoneme_to_features,
    validate_system,
)

SYSTEMS = ["GP", "SPE", "eSPE"]
# rows printed identically in the source tables (first symbol wins lookups)
KNOWN_DUPLICATES = {
    "GP": {("ey", "ay"), ("ow", "aw"), ("ah", "er")},
    "SPE": set(),
    "eSPE": {("aa", "ay")},
}


def active(sys, phoneme):
    vec = phoneme_to_features(sys, phoneme)
    return {f for f, v in zip(sys.features, vec) if v}


class TestTables:
    @pytest.mark.parametrize("name, k", [("GP", 12), ("SPE", 15), ("eSPE", 21)])
    def test_dimensions(self, name, k):
        sys = load_system(name)
        assert sys.K == k
        assert sys.K * 11 == {"GP": 132, "SPE": 165, "eSPE": 231}[name]
        assert len(sys.table) == 40
        assert sys.phonemes[-1] == "sil"

    @pytest.mark.parametrize("name", SYSTEMS)
    def test_binary_and_silence_column(self, name):
        sys = load_system(name)
        m = sys.matrix
        assert set(np.unique(m)) <= {0.0, 1.0}
        sil = sys.index("silence")
        assert m[:-1, sil].sum() == 0
        assert active(sys, "sil") == {"silence"}

    def test_case_insensitive(self):
        assert load_system("gp") is load_system("GP")

    def test_unknown_system(self):
        with pytest.raises(ContractError):
            load_system("IPA")

    @pytest.mark.parametrize("name, phoneme, expected", [
        ("GP", "iy", {"I", "i"}),
        ("GP", "aa", {"A", "a"}),
        ("GP", "hh", {"h", "H"}),
        ("SPE", "y", {"high", "voice", "continuant"}),
        ("eSPE", "iy", {"vowel", "high", "continuant", "tense", "voiced"}),
        ("eSPE", "zh", {"fricative"}),
        ("eSPE", "sil", {"silence"}),
    ])
    def test_printed_rows(self, name, phoneme, expected):
        assert active(load_system(name), phoneme) == expected

    def test_cmubet_size(self):
        assert len(CMUBET) == 39 and len(set(CMUBET)) == 39

    def test_table_is_read_only(self):
        sys = load_system("GP")
        with pytest.raises(ValueError):
            sys.table["iy"][0] = 5.0


class TestValidation:
    @pytest.mark.parametrize("name", SYSTEMS)
    def test_only_printed_duplicates_reported(self, name):
        report = validate_system(load_system(name))
        assert all(f.kind == "duplicate" for f in report)
        assert {f.phonemes for f in report} == KNOWN_DUPLICATES[name]

    def test_spe_valid(self):
        assert validate_system(load_system("SPE")) == []

    def test_constructed_duplicate(self):
        spe = load_system("SPE")
        rows = list(spe.table.items()) + [("iy2", spe.table["iy"])]
        report = validate_system(make_system("custom", spe.features, rows))
        assert [f.kind for f in report] == ["duplicate"]
        assert report[0].phonemes == ("iy", "iy2")

    def test_non_binary(self):
        sys = make_system("custom", ["a", "b"], [("x", [0.5, 1.0]), ("y", [0.0, 1.0])])
        assert [f.kind for f in validate_system(sys)] == ["non-binary"]

    def test_wrong_dimension_for_builtin_name(self):
        sys = make_system("GP", ["a", "silence"], [("x", [1, 0]), ("sil", [0, 1])])
        kinds = {f.kind for f in validate_system(sys)}
        assert {"dimension", "row-count"} <= kinds


class TestLookup:
    def test_unknown_phoneme(self):
        with pytest.raises(UnknownPhonemeError) as info:
            phoneme_to_features(load_system("GP"), "zz")
        assert info.value.symbol == "zz"
        assert "zz" in str(info.value)

    def test_stress_stripped(self):
        gp = load_system("GP")
        np.testing.assert_array_equal(phoneme_to_features(gp, "ER1"), gp.table["er"])
        assert normalize_symbol("AH0") == "ah"

    def test_returns_copy(self):
        gp = load_system("GP")
        row = phoneme_to_features(gp, "iy")
        row[:] = 7
        assert gp.table["iy"].max() == 1

    @pytest.mark.parametrize("name", SYSTEMS)
    def test_nearest_round_trip(self, name):
        sys = load_system(name)
        shadowed = {b for _, b in KNOWN_DUPLICATES[name]}
        for p in sys.phonemes:
            got, dist = nearest_phoneme(sys, phoneme_to_features(sys, p))
            assert dist == 0.0
            if p in shadowed:
                first = next(a for a, b in KNOWN_DUPLICATES[name] if b == p)
                assert got == first
            else:
                assert got == p

    def test_nearest_silence(self):
        sys = load_system("eSPE")
        v = np.zeros(sys.K)
        v[sys.index("silence")] = 1
        assert nearest_phoneme(sys, v) == ("sil", 0.0)

    @given(st.sampled_from(SYSTEMS), st.integers(0, 39), st.integers(0, 20))
    def test_bit_flip_matches_exhaustive_scan(self, name, row, bit):
        sys = load_system(name)
        v = sys.matrix[row].copy()
        v[bit % sys.K] = 1 - v[bit % sys.K]
        got, dist = nearest_phoneme(sys, v)
        dists = [float(np.linalg.norm(v - sys.table[p])) for p in sys.phonemes]
        best = min(dists)
        assert dist == pytest.approx(best) and dist <= 1.0
        assert got == sys.phonemes[dists.index(best)]

    def test_vectorised_matches_scalar(self):
        sys = load_system("SPE")
        v = np.random.default_rng(0).random((30, sys.K))
        assert nearest_phonemes(sys, v) == [nearest_phoneme(sys, r)[0] for r in v]

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            nearest_phoneme(load_system("GP"), np.zeros(5))


class TestAlignment:
    def test_contiguity_enforced(self):
        with pytest.raises(ContractError):
            PhoneAlignment((("aa", 0, 3), ("iy", 4, 6)))
        with pytest.raises(ContractError):
            PhoneAlignment((("aa", 3, 3),))

    def test_frame_labels(self):
        al = PhoneAlignment((("sil", 0, 2), ("aa", 2, 4)))
        assert al.frame_labels() == ["sil", "sil", "aa", "aa"]
        assert al.num_frames == 4


class TestCanonical:
    def test_constant_span(self):
        gp = load_system("GP")
        z = canonical_posteriors(gp, PhoneAlignment((("iy", 0, 3),)))
        assert z.frames.shape == (3, 12)
        np.testing.assert_array_equal(z.frames, np.tile(gp.table["iy"], (3, 1)))

    def test_two_spans(self):
        gp = load_system("GP")
        z = canonical_posteriors(gp, PhoneAlignment((("sil", 0, 2), ("aa", 2, 4))))
        np.testing.assert_array_equal(z.frames[:2], np.tile(gp.table["sil"], (2, 1)))
        np.testing.assert_array_equal(z.frames[2:], np.tile(gp.table["aa"], (2, 1)))

    def test_unknown(self):
        with pytest.raises(UnknownPhonemeError):
            canonical_posteriors(load_system("GP"), PhoneAlignment((("qq", 0, 1),)))

    @given(st.lists(st.tuples(st.sampled_from(CMUBET + ("sil",)), st.integers(1, 5)), min_size=1, max_size=8))
    def test_rows_are_table_rows(self, spans):
        sys = load_system("eSPE")
        entries, t = [], 0
        for p, d in spans:
            entries.append((p, t, t + d))
            t += d
        z = canonical_posteriors(sys, PhoneAlignment(tuple(entries)))
        assert z.num_frames == t
        assert set(np.unique(z.frames)) <= {0.0, 1.0}
        for p, s, e in entries:
            np.testing.assert_array_equal(z.frames[s:e], np.tile(sys.table[p], (e - s, 1)))

    def test_posterior_range_checked(self):
        with pytest.raises(ContractError):
            PosteriorMatrix(np.full((2, 12), 1.5), load_system("GP"))


class TestCSV:
    def test_round_trip(self, tmp_path):
        spe = load_system("SPE")
        export_system_csv(spe, tmp_path / "spe.csv")
        back = import_system_csv(tmp_path / "spe.csv", "SPE")
        assert back.features == spe.features
        np.testing.assert_array_equal(back.matrix, spe.matrix)
        assert validate_system(back) == []

    def test_bad_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("phoneme,a,b\nx,1,0\ny,1\n")
        with pytest.raises(ParseError) as info:
            import_system_csv(path)
        assert info.value.line == 3
