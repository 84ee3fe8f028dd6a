"""Shared fixtures: the seeded toy corpus and the models trained on it.

The trained fixtures are session-scoped because training dominates the
suite's runtime; they are built only when a test asks for them.
"""

import time

import numpy as np
import pytest

from phonolab.analyzer import AnalyzerConfig, analyze, train_analyzer_bank
from phonolab.corpus import load_corpus
from phonolab.neural import TrainConfig
from phonolab.phonoset import load_system
from phonolab.synthesizer import SynthConfig, extract_targets, train_synthesizer
from phonolab.toycorpus import make_toy_corpus

TOY_SEED = 7
ANALYZER_EPOCHS = 10
SYNTH_HIDDEN = (256, 256)
SYNTH_EPOCHS = 60

ACCEPTANCE_LINES = []
TIMINGS = {}  # seconds spent building each session fixture


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_report():
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    t0 = time.perf_counter()
    make_toy_corpus(out, seed=TOY_SEED)
    TIMINGS["toy corpus"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def toy_train(toy_dir):
    return load_corpus(toy_dir / "train.txt")


@pytest.fixture(scope="session")
def toy_test(toy_dir):
    return load_corpus(toy_dir / "test.txt")


@pytest.fixture(scope="session")
def small_toy(tmp_path_factory):
    """A dozen utterances for fast pipeline tests."""
    out = tmp_path_factory.mktemp("small_toy")
    make_toy_corpus(out, seed=1, utterances=12, test_fraction=0.25)
    return out


@pytest.fixture(scope="session")
def gp_bank_and_table(toy_train):
    cfg = AnalyzerConfig(train=TrainConfig.classifier(epochs=ANALYZER_EPOCHS))
    t0 = time.perf_counter()
    out = train_analyzer_bank(toy_train, load_system("GP"), cfg)
    TIMINGS["analyzer training"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def gp_bank(gp_bank_and_table):
    return gp_bank_and_table[0]


@pytest.fixture(scope="session")
def synth_examples(gp_bank, toy_train):
    t0 = time.perf_counter()
    out = [(analyze(gp_bank, w), extract_targets(w)) for w, _ in toy_train]
    TIMINGS["synth features"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def gp_model_and_history(synth_examples):
    cfg = SynthConfig(hidden=SYNTH_HIDDEN, train=TrainConfig.regressor(epochs=SYNTH_EPOCHS))
    t0 = time.perf_counter()
    out = train_synthesizer(synth_examples, cfg)
    TIMINGS["synth training"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def gp_model(gp_model_and_history):
    return gp_model_and_history[0]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
