import warnings

import numpy as np
import pytest

from phonolab.analyzer import (
    INPUT_WIDTH,
    AnalyzerBank,
    AnalyzerConfig,
    analyze,
    binarize,
    check_case_sensitive,
    context_features,
    fold_input_normalization,
    format_accuracy_table,
    load_bank,
    save_bank,
    split_heldout,
    train_analyzer_bank,
)
from phonolab.corpus import load_corpus
from phonolab.dsp import Waveform, num_frames
from phonolab.errors import ContractError, DataError, ParseError
from phonolab.neural import TrainConfig, forward, init_network
from phonolab.phonoset import PosteriorMatrix, load_system


@pytest.fixture(scope="module")
def tiny_bank(small_toy):
    corpus = load_corpus(small_toy / "train.txt")
    cfg = AnalyzerConfig(hidden=(16,), train=TrainConfig.classifier(epochs=3), heldout_fraction=0.25)
    return train_analyzer_bank(corpus, load_system("SPE"), cfg)


class TestSplit:
    def test_every_kth_held_out(self):
        train, held = split_heldout(20, 0.1)
        assert held == [9, 19]
        assert sorted(train + held) == list(range(20))

    def test_no_heldout(self):
        assert split_heldout(5, 0.0) == ([0, 1, 2, 3, 4], [])
        assert split_heldout(1, 0.5) == ([0], [])

    def test_small_corpus_keeps_one(self):
        train, held = split_heldout(3, 0.1)
        assert held == [2] and train == [0, 1]


class TestFolding:
    def test_equivalent_to_explicit_standardization(self, rng):
        net = init_network([6, 5, 2], "softmax", seed=1)
        mean, std = rng.normal(size=6), rng.uniform(0.5, 2.0, 6)
        x = rng.normal(size=(10, 6))
        folded = fold_input_normalization(net, mean, std)
        np.testing.assert_allclose(forward(folded, x), forward(net, (x - mean) / std), atol=1e-12)

    def test_original_untouched(self, rng):
        net = init_network([3, 2], "softmax", seed=1)
        before = net.weights[0].copy()
        fold_input_normalization(net, np.ones(3), 2 * np.ones(3))
        np.testing.assert_array_equal(net.weights[0], before)


class TestBankContracts:
    def test_context_width(self):
        assert context_features(Waveform(np.zeros(4000))).shape == (num_frames(4000), INPUT_WIDTH)

    def test_wrong_net_count(self):
        with pytest.raises(ContractError):
            AnalyzerBank(load_system("SPE"), [])

    def test_wrong_net_shape(self):
        sys = load_system("SPE")
        nets = [init_network([INPUT_WIDTH, 2], "softmax")] * (sys.K - 1) + [init_network([10, 2], "softmax")]
        with pytest.raises(ContractError):
            AnalyzerBank(sys, nets)

    def test_empty_corpus(self):
        with pytest.raises(DataError):
            train_analyzer_bank([], load_system("SPE"))


class TestBinarize:
    def test_threshold(self):
        sys = load_system("SPE")
        z = PosteriorMatrix(np.full((2, sys.K), 0.5), sys)
        np.testing.assert_array_equal(binarize(z).frames, 1.0)
        np.testing.assert_array_equal(binarize(z, 0.6).frames, 0.0)

    @pytest.mark.parametrize("t", [0.0, 1.0, -0.1])
    def test_bad_threshold(self, t):
        sys = load_system("SPE")
        with pytest.raises(ContractError):
            binarize(PosteriorMatrix(np.zeros((1, sys.K)), sys), t)


class TestTrainedBank:
    def test_table(self, tiny_bank):
        bank, table = tiny_bank
        assert [r.feature for r in table] == list(bank.features)
        assert all(0.0 <= r.train_accuracy <= 1.0 for r in table)
        assert "mean" in format_accuracy_table(table)

    def test_better_than_chance(self, tiny_bank):
        _, table = tiny_bank
        usable = [r for r in table if not r.degenerate]
        majority = np.mean([max(r.positive_rate, 1 - r.positive_rate) for r in usable])
        assert np.mean([r.train_accuracy for r in usable]) >= majority

    def test_posteriors(self, tiny_bank, small_toy):
        bank, _ = tiny_bank
        w, _ = load_corpus(small_toy / "test.txt")[0]
        z = analyze(bank, w)
        assert z.frames.shape == (num_frames(len(w)), bank.system.K)
        assert np.all((z.frames >= 0) & (z.frames <= 1))

    def test_short_input(self, tiny_bank):
        bank, _ = tiny_bank
        assert analyze(bank, Waveform(np.zeros(100))).frames.shape == (0, bank.system.K)

    def test_save_load_exact(self, tiny_bank, small_toy, tmp_path):
        bank, _ = tiny_bank
        save_bank(bank, tmp_path / "bank")
        back = load_bank(tmp_path / "bank")
        w, _ = load_corpus(small_toy / "test.txt")[0]
        np.testing.assert_array_equal(analyze(back, w).frames, analyze(bank, w).frames)

    def test_missing_net(self, tiny_bank, tmp_path):
        bank, _ = tiny_bank
        save_bank(bank, tmp_path / "bank")
        (tmp_path / "bank" / f"{bank.features[0]}.net").unlink()
        with pytest.raises(DataError, match=bank.features[0]):
            load_bank(tmp_path / "bank")

    def test_bad_system_file(self, tmp_path):
        (tmp_path / "system.txt").write_text("XYZ\n")
        with pytest.raises(ParseError):
            load_bank(tmp_path)


class TestCaseSensitivity:
    def test_distinct_names_skip_probe(self, tmp_path):
        check_case_sensitive(tmp_path, ["a", "b"])
        assert list(tmp_path.iterdir()) == []

    def test_probe_cleans_up(self, tmp_path):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            try:
                check_case_sensitive(tmp_path, ["A", "a"])
            except DataError:
                pass
        assert list(tmp_path.iterdir()) == []

    def test_gp_bank_files_distinct(self, tmp_path):
        gp = load_system("GP")
        nets = [init_network([INPUT_WIDTH, 2], "softmax", seed=k) for k in range(gp.K)]
        save_bank(AnalyzerBank(gp, nets), tmp_path)
        back = load_bank(tmp_path)
        for a, b in zip(back.nets, nets):
            np.testing.assert_array_equal(a.weights[0], b.weights[0])
