"""Bank of binary phonological feature analysers (one 2-class net per feature)."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import acoustic_features, stack_context
from .errors import ContractError, DataError, ParseError
from .neural import Network, TrainConfig, forward, init_network, load_network, save_network, train
from .phonoset import FeatureSystem, PosteriorMatrix, load_system, phoneme_to_features

log = logging.getLogger(__name__)

ANALYZER_CONTEXT = 9
INPUT_WIDTH = 39 * ANALYZER_CONTEXT
DEFAULT_HIDDEN = (256, 64, 256)


@dataclass
class AnalyzerBank:
    system: FeatureSystem
    nets: list[Network]

    def __post_init__(self):
        if len(self.nets) != self.system.K:
            raise ContractError(f"{len(self.nets)} nets for K={self.system.K} features")
        for f, net in zip(self.system.features, self.nets):
            if net.layer_sizes[0] != INPUT_WIDTH or net.layer_sizes[-1] != 2:
                raise ContractError(f"net for {f!r} has sizes {net.layer_sizes}")

    @property
    def features(self):
        return self.system.features


@dataclass
class AnalyzerConfig:
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    train: TrainConfig = field(default_factory=lambda: TrainConfig.classifier(epochs=20))
    heldout_fraction: float = 0.1
    jobs: int = 1


@dataclass
class FeatureAccuracy:
    feature: str
    train_accuracy: float
    heldout_accuracy: float
    positive_rate: float
    degenerate: bool


def context_features(w) -> np.ndarray:
    """9-frame stacked PLP features, shape (N, 351)."""
    return stack_context(acoustic_features(w), ANALYZER_CONTEXT)


def split_heldout(n_items: int, fraction: float) -> tuple[list[int], list[int]]:
    """Deterministic utterance split: every k-th item is held out."""
    if n_items < 2 or fraction <= 0:
        return list(range(n_items)), []
    step = max(2, int(round(1.0 / fraction)))
    held = [i for i in range(n_items) if i % step == step - 1]
    if not held:
        held = [n_items - 1]
    train_idx = [i for i in range(n_items) if i not in set(held)]
    return train_idx, held


def _frame_data(corpus, sys):
    """Stacked inputs and (N, K) binary feature labels for the aligned frames."""
    xs, ys = [], []
    for w, align in corpus:
        feats = context_features(w)
        labels = np.array([phoneme_to_features(sys, p) for p in align.frame_labels()])
        start = align.start
        n = min(feats.shape[0], align.num_frames)
        if n <= start:
            continue
        xs.append(feats[start:n])
        ys.append(labels[: n - start])
    if not xs:
        return np.zeros((0, INPUT_WIDTH)), np.zeros((0, sys.K))
    return np.vstack(xs), np.vstack(ys)


def _standardize(x_train):
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std[std < 1e-8] = 1.0
    return mean, std


def fold_input_normalization(net: Network, mean, std) -> Network:
    """Absorb ``(x - mean) / std`` into the first layer so raw inputs can be fed."""
    out = net.copy()
    w = out.weights[0] / std[:, None]
    out.biases[0] = out.biases[0] - mean @ w
    out.weights[0] = w
    return out


def _accuracy(net, x, y):
    if x.shape[0] == 0:
        return float("nan")
    return float(np.mean(forward(net, x).argmax(axis=1) == y))


def _train_one(args):
    k, feature, x, y, xh, yh, hidden, cfg, seed = args
    net = init_network([INPUT_WIDTH, *hidden, 2], "softmax", seed + k)
    targets = np.eye(2)[y]
    heldout = (xh, np.eye(2)[yh]) if xh.shape[0] else None
    net, history = train(net, x, targets, cfg, heldout)
    log.info("feature %s: best epoch %d of %d", feature, history.best_epoch, len(history.train_loss))
    return net


def train_analyzer_bank(corpus, sys: FeatureSystem, cfg: AnalyzerConfig | None = None):
    """Train one classifier per feature; returns (bank, list of FeatureAccuracy).

    Frame labels come from the aligned phoneme's feature row.  Features whose
    labels contain a single class are still trained and flagged degenerate.
    """
    cfg = cfg or AnalyzerConfig()
    corpus = list(corpus)
    if not corpus:
        raise DataError("cannot train an analyzer bank on an empty corpus")
    train_idx, held_idx = split_heldout(len(corpus), cfg.heldout_fraction)
    x, labels = _frame_data([corpus[i] for i in train_idx], sys)
    xh, labels_h = _frame_data([corpus[i] for i in held_idx], sys)
    if x.shape[0] == 0:
        raise DataError("corpus has no aligned frames")
    mean, std = _standardize(x)
    xn, xhn = (x - mean) / std, (xh - mean) / std
    seed = cfg.train.seed
    jobs = [
        (k, f, xn, labels[:, k].astype(int), xhn, labels_h[:, k].astype(int), tuple(cfg.hidden), cfg.train, seed)
        for k, f in enumerate(sys.features)
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as pool:
            nets = list(pool.map(_train_one, jobs))
    else:
        nets = [_train_one(j) for j in jobs]
    nets = [fold_input_normalization(n, mean, std) for n in nets]
    table = []
    for k, (f, net) in enumerate(zip(sys.features, nets)):
        y, yh = labels[:, k].astype(int), labels_h[:, k].astype(int)
        degenerate = len(np.unique(np.concatenate([y, yh]))) < 2
        table.append(FeatureAccuracy(f, _accuracy(net, x, y), _accuracy(net, xh, yh),
                                     float(np.mean(y)), degenerate))
    return AnalyzerBank(sys, nets), table


def format_accuracy_table(table) -> str:
    lines = [f"{'feature':<14}{'train':>8}{'heldout':>9}{'pos.rate':>10}  note"]
    for row in table:
        note = "degenerate" if row.degenerate else ""
        lines.append(f"{row.feature:<14}{100 * row.train_accuracy:8.2f}{100 * row.heldout_accuracy:9.2f}"
                     f"{100 * row.positive_rate:10.2f}  {note}")
    usable = [r.heldout_accuracy for r in table if not r.degenerate and np.isfinite(r.heldout_accuracy)]
    if usable:
        lines.append(f"{'mean':<14}{'':>8}{100 * np.mean(usable):9.2f}")
    return "\n".join(lines)


def analyze(bank: AnalyzerBank, w) -> PosteriorMatrix:
    """Per-frame posterior of each feature occurring: the class-1 softmax output."""
    x = context_features(w)
    out = np.zeros((x.shape[0], bank.system.K))
    if x.shape[0]:
        for k, net in enumerate(bank.nets):
            out[:, k] = forward(net, x)[:, 1]
    return PosteriorMatrix(out, bank.system)


def binarize(z: PosteriorMatrix, threshold: float = 0.5) -> PosteriorMatrix:
    """1 where the posterior is at least ``threshold``, else 0."""
    if not 0.0 < threshold < 1.0:
        raise ContractError(f"threshold must lie in (0, 1), got {threshold}")
    return PosteriorMatrix((z.frames >= threshold).astype(float), z.system, z.frame_shift)


def _net_path(directory: Path, feature: str) -> Path:
    return directory / f"{feature}.net"


def check_case_sensitive(directory: Path, names) -> None:
    """GP has features differing only in case (A/a); refuse to clobber them."""
    folded = {n.lower() for n in names}
    if len(folded) == len(set(names)):
        return
    probe = directory / ".phonolab-case-probe"
    probe.write_text("")
    try:
        if (directory / probe.name.upper()).exists():
            raise DataError(f"{directory} is on a case-insensitive filesystem; "
                            "feature files such as A and a would collide")
    finally:
        probe.unlink()


def save_bank(bank: AnalyzerBank, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    check_case_sensitive(d, bank.features)
    (d / "system.txt").write_text(bank.system.name + "\n")
    for f, net in zip(bank.features, bank.nets):
        save_network(net, _net_path(d, f))


def read_system_file(path) -> FeatureSystem:
    try:
        name = Path(path).read_text().strip()
    except FileNotFoundError:
        raise DataError(f"missing {path}") from None
    try:
        return load_system(name)
    except ContractError as exc:
        raise ParseError(str(exc), path, 1) from None


def load_bank(directory) -> AnalyzerBank:
    d = Path(directory)
    sys = read_system_file(d / "system.txt")
    nets = []
    for f in sys.features:
        path = _net_path(d, f)
        if not path.exists():
            raise DataError(f"analyzer bank {d} has no network for feature {f!r}")
        nets.append(load_network(path))
    return AnalyzerBank(sys, nets)
