"""``phonolab`` command line: analysis, synthesis, atoms, TTS and evaluation pipelines.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analyzer, atoms, evaluation, synthesizer, toycorpus, tts
from .corpus import (
    Config,
    load_config,
    load_corpus,
    parse_cmudict,
    parse_htk_labels,
    read_posteriors,
    read_wav,
    write_posteriors,
    write_wav,
)
from .dsp import estimate_formants, frame_signal
from .errors import ContractError, PhonolabError
from .neural import TrainConfig
from .phonoset import CMUBET, SILENCE, SYSTEM_NAMES, canonical_posteriors, load_system

log = logging.getLogger("phonolab")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

_TRAIN_KEYS = {"hidden", "epochs", "lr", "batch_size", "patience", "heldout_fraction"}
CONFIG_SCHEMA = {
    "analyzer": _TRAIN_KEYS | {"jobs"},
    "synth": _TRAIN_KEYS | {"jobs", "posteriors"},
    "synthesis": {"gamma", "pitch"},
    "atoms": {"duration"},
    "durations": {"vowel", "consonant", "silence", *CMUBET, SILENCE},
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """argparse with exit status 1 for usage errors (argparse itself uses 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# Settings

def _load_cfg(args) -> Config:
    return load_config(args.config) if getattr(args, "config", None) else Config()


def _pick(flag, cfg_value, default):
    if flag is not None:
        return flag
    return default if cfg_value is None else cfg_value


def _train_settings(args, cfg: Config, section: str, base: TrainConfig, hidden_default):
    hidden = tuple(_pick(args.hidden, cfg.get_ints(section, "hidden"), list(hidden_default)))
    train = TrainConfig(
        learning_rate=_pick(args.lr, cfg.get_float(section, "lr"), base.learning_rate),
        batch_size=cfg.get_int(section, "batch_size", base.batch_size),
        epochs=_pick(args.epochs, cfg.get_int(section, "epochs"), base.epochs),
        seed=args.seed,
        early_stop_patience=cfg.get_int(section, "patience", base.early_stop_patience),
        loss=base.loss,
    )
    heldout = cfg.get_float(section, "heldout_fraction", 0.1)
    jobs = _pick(args.jobs, cfg.get_int(section, "jobs"), 1)
    return hidden, train, heldout, jobs


def _gamma(args, cfg: Config) -> float:
    return _pick(getattr(args, "gamma", None), cfg.get_float("synthesis", "gamma"), 1.2)


def _report(command: str, seed, settings: dict) -> None:
    """Every run states its resolved settings and seed for reproducibility."""
    print(f"# phonolab {command}", file=sys.stderr)
    if seed is not None:
        print(f"# seed = {seed}", file=sys.stderr)
    for key, value in settings.items():
        print(f"# {key} = {value}", file=sys.stderr)


def _parse_hidden(text: str):
    try:
        sizes = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("hidden layer sizes must be positive")
    return sizes


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


# Commands

def cmd_train_analyzer(args) -> int:
    cfg = _load_cfg(args)
    system = load_system(args.system)
    hidden, train, heldout, jobs = _train_settings(
        args, cfg, "analyzer", TrainConfig.classifier(epochs=20), analyzer.DEFAULT_HIDDEN)
    _report("train-analyzer", args.seed, {
        "system": system.name, "manifest": args.manifest, "out": args.out, "hidden": hidden,
        "learning_rate": train.learning_rate, "batch_size": train.batch_size, "epochs": train.epochs,
        "patience": train.early_stop_patience, "heldout_fraction": heldout, "jobs": jobs})
    corpus = load_corpus(args.manifest)
    bank, table = analyzer.train_analyzer_bank(
        corpus, system, analyzer.AnalyzerConfig(hidden, train, heldout, jobs))
    analyzer.save_bank(bank, args.out)
    print(analyzer.format_accuracy_table(table))
    return EXIT_OK


def _synth_example(job):
    bank, system, w, align, mode = job
    z = canonical_posteriors(system, align) if mode == "canonical" else analyzer.analyze(bank, w)
    track = synthesizer.extract_targets(w)
    n = min(z.num_frames, track.shape[0])
    return type(z)(z.frames[:n], z.system), track[:n]


def cmd_train_synth(args) -> int:
    cfg = _load_cfg(args)
    mode = _pick(args.posteriors, cfg.get_str("synth", "posteriors"), "analyzed")
    if mode not in ("analyzed", "canonical"):
        raise UsageError(f"posteriors must be 'analyzed' or 'canonical', got {mode!r}")
    if mode == "analyzed" and not args.bank:
        raise UsageError("--bank is required unless --posteriors canonical")
    if mode == "canonical" and not args.system:
        raise UsageError("--system is required with --posteriors canonical")
    bank = analyzer.load_bank(args.bank) if mode == "analyzed" else None
    system = bank.system if bank else load_system(args.system)
    if args.system and load_system(args.system).name != system.name:
        raise ContractError(f"--system {args.system} does not match the bank's {system.name}")
    hidden, train, heldout, jobs = _train_settings(
        args, cfg, "synth", TrainConfig.regressor(epochs=40), synthesizer.DEFAULT_HIDDEN)
    _report("train-synth", args.seed, {
        "system": system.name, "manifest": args.manifest, "bank": args.bank, "out": args.out,
        "posteriors": mode, "hidden": hidden, "learning_rate": train.learning_rate,
        "batch_size": train.batch_size, "epochs": train.epochs, "patience": train.early_stop_patience,
        "heldout_fraction": heldout, "jobs": jobs})
    corpus = load_corpus(args.manifest)
    work = [(bank, system, w, a, mode) for w, a in corpus]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            examples = list(pool.map(_synth_example, work))
    else:
        examples = [_synth_example(j) for j in work]
    model, history = synthesizer.train_synthesizer(
        examples, synthesizer.SynthConfig(hidden, train, heldout))
    synthesizer.save_model(model, args.out)
    held = f", held-out loss {min(history.heldout_loss):.4f}" if history.heldout_loss else ""
    print(f"best epoch {history.best_epoch} of {len(history.train_loss)}{held}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    bank = analyzer.load_bank(args.bank)
    _report("analyze", None, {"bank": args.bank, "input": args.input, "output": args.output,
                              "binarize": args.binarize})
    z = analyzer.analyze(bank, read_wav(args.input))
    if args.binarize is not None:
        z = analyzer.binarize(z, args.binarize)
    write_posteriors(z, args.output)
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _load_cfg(args)
    model = synthesizer.load_model(args.model)
    gamma = _gamma(args, cfg)
    _report("synthesize", args.seed, {"model": args.model, "input": args.input, "output": args.output,
                                      "gamma": gamma})
    z = read_posteriors(args.input)
    if z.system.name != model.system.name:
        raise ContractError(f"posteriors use {z.system.name} but the model uses {model.system.name}")
    write_wav(synthesizer.render_posteriors(model, z, gamma, seed=args.seed), args.output)
    return EXIT_OK


def cmd_vocode(args) -> int:
    cfg = _load_cfg(args)
    bank = analyzer.load_bank(args.bank)
    model = synthesizer.load_model(args.model)
    if args.system and load_system(args.system).name != bank.system.name:
        raise ContractError(f"--system {args.system} does not match the bank's {bank.system.name}")
    gamma = _gamma(args, cfg)
    pitch = _pick(args.pitch, cfg.get_str("synthesis", "pitch"), "model")
    _report("vocode", args.seed, {"system": bank.system.name, "bank": args.bank, "model": args.model,
                                  "input": args.input, "output": args.output, "gamma": gamma,
                                  "pitch": pitch})
    w = synthesizer.vocode(bank, model, read_wav(args.input), pitch, gamma, args.seed)
    write_wav(w, args.output)
    return EXIT_OK


def _atom_settings(args, cfg):
    model = synthesizer.load_model(args.model)
    duration = _pick(args.duration, cfg.get_float("atoms", "duration"), 2.0)
    if duration <= 0:
        raise ContractError(f"duration must be positive, got {duration}")
    return model, duration, _gamma(args, cfg)


def cmd_atoms_generate(args) -> int:
    cfg = _load_cfg(args)
    model, duration, gamma = _atom_settings(args, cfg)
    _report("atoms generate", args.seed, {"model": args.model, "duration": duration, "gamma": gamma,
                                          "out": args.out})
    atomset = atoms.generate_atoms(model, duration, gamma, args.seed)
    print(f"{'feature':<14}{'seconds':>8}{'rms':>9}  formants below 5 kHz (Hz)")
    for feature, w in atomset.atoms.items():
        frames = frame_signal(w, window=None)
        centre = frames[frames.shape[0] // 2]
        formants = [f for f, _ in estimate_formants(centre) if f < 5000]
        rms = float(np.sqrt(np.mean(w.samples ** 2)))
        print(f"{feature:<14}{w.duration:8.2f}{rms:9.4f}  {' '.join(f'{f:.0f}' for f in formants)}")
    if args.out:
        atoms.export_atoms(atomset, args.out)
    return EXIT_OK


def cmd_atoms_export(args) -> int:
    cfg = _load_cfg(args)
    model, duration, gamma = _atom_settings(args, cfg)
    _report("atoms export", args.seed, {"model": args.model, "duration": duration, "gamma": gamma,
                                        "directory": args.directory})
    paths = atoms.export_atoms(atoms.generate_atoms(model, duration, gamma, args.seed), args.directory)
    print(f"wrote {len(paths)} atoms to {args.directory}")
    return EXIT_OK


def _read_atomset(directory, system) -> atoms.AtomSet:
    d = Path(directory)
    missing = [f for f in system.features if not (d / f"{f}.wav").exists()]
    if missing:
        raise PhonolabError(f"{d} has no atom for feature(s) {', '.join(missing)}")
    waves = {f: read_wav(d / f"{f}.wav") for f in system.features}
    return atoms.AtomSet(system, waves, next(iter(waves.values())).duration)


def cmd_compose(args) -> int:
    system = load_system(args.system)
    atomset = _read_atomset(args.atoms, system)
    if args.phone:
        features = atoms.sound_recipe(system, args.phone)
    else:
        features = [f.strip() for f in args.features.split(",") if f.strip()]
        unknown = [f for f in features if f not in system.features]
        if unknown:
            raise UsageError(f"{system.name} has no feature(s) {', '.join(unknown)}")
    weights = None
    if args.weights:
        weights = [float(v) for v in args.weights.split(",")]
    _report("compose", None, {"system": system.name, "atoms": args.atoms, "features": ",".join(features),
                              "weights": args.weights or "1", "output": args.output})
    write_wav(atoms.compose([atomset[f] for f in features], weights), args.output)
    return EXIT_OK


def _duration_table(cfg: Config) -> tts.DurationTable:
    overrides = {}
    for key in cfg.sections.get("durations", {}):
        if key not in ("vowel", "consonant", "silence"):
            overrides[key] = cfg.get_int("durations", key)
    return tts.DurationTable(overrides, cfg.get_int("durations", "vowel", 12),
                             cfg.get_int("durations", "consonant", 8),
                             cfg.get_int("durations", "silence", 20))


def cmd_tts(args) -> int:
    cfg = _load_cfg(args)
    model = synthesizer.load_model(args.model)
    gamma = _gamma(args, cfg)
    dt = _duration_table(cfg)
    settings = {"model": args.model, "gamma": gamma, "output": args.output}
    if args.labels:
        source = parse_htk_labels(args.labels)
        lex = None
        settings["labels"] = args.labels
    else:
        if not args.lexicon:
            raise UsageError("--lexicon is required with --text")
        lex = parse_cmudict(args.lexicon)
        source = args.text
        settings.update(text=args.text, lexicon=args.lexicon, durations=
                        f"vowel {dt.vowel}, consonant {dt.consonant}, silence {dt.silence}")
    _report("tts", args.seed, settings)
    w = tts.tts_synthesize(source, model.system, model, lex, dt, gamma, args.seed)
    write_wav(w, args.output)
    return EXIT_OK


def cmd_eval_matrix(args) -> int:
    exclude = tuple(p for p in args.exclude.split(",") if p) if args.exclude else ()
    _report("eval-matrix", None, {"test": args.test, "ref": args.ref, "out": args.out,
                                  "heatmap": args.heatmap, "matrix": args.matrix,
                                  "exclude": ",".join(exclude)})
    ref = evaluation.build_exemplars(load_corpus(args.ref), exclude)
    test = evaluation.build_exemplars(load_corpus(args.test), exclude)
    d_voc = evaluation.distance_matrix(test, ref)
    d_nat = evaluation.restrict(evaluation.distance_matrix(ref, ref), d_voc.labels)
    d_norm = evaluation.normalize(d_voc, evaluation.scale_natural(d_nat))
    chosen = {"norm": d_norm, "vocoded": d_voc, "natural": d_nat}[args.matrix]
    evaluation.export_matrix(chosen, args.out, "csv")
    if args.heatmap:
        evaluation.export_matrix(chosen, args.heatmap, "pgm")
    print(f"phones {len(d_norm.labels)}")
    print(f"diagonal mean (vocoded) {evaluation.diagonal_mean(d_voc):.3f} dB")
    print(f"diagonal mean (normalized) {evaluation.diagonal_mean(d_norm):.3f}")
    print(f"diagonal dominance (normalized) {100 * evaluation.diagonal_dominance(d_norm):.1f}%")
    return EXIT_OK


def _read_transcripts(path) -> dict[str, list[str]]:
    """``id<TAB>words`` lines; lines without a tab are keyed by line number."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            key, _, words = line.rstrip("\n").partition("\t") if "\t" in line else (str(lineno), "", line)
            out[key] = words.split()
    return out


def cmd_eval_intel(args) -> int:
    _report("eval-intel", None, {"ref": args.ref, "hyp": args.hyp})
    ref, hyp = _read_transcripts(args.ref), _read_transcripts(args.hyp)
    missing = sorted(set(ref) - set(hyp))
    if missing:
        raise PhonolabError(f"hypothesis file lacks utterance(s) {', '.join(missing)}")
    hits = ins = n = 0
    for key, words in ref.items():
        h, _, _, i = evaluation.align_words([w.upper() for w in words], [w.upper() for w in hyp[key]])
        hits, ins, n = hits + h, ins + i, n + len(words)
    print(f"N={n} H={hits} I={ins}")
    print(f"intelligibility {evaluation.intelligibility_score(hits, ins, n):.2f}%")
    return EXIT_OK


def cmd_make_toy_corpus(args) -> int:
    _report("make-toy-corpus", args.seed, {"out": args.out, "utterances": args.utterances,
                                           "test_fraction": args.test_fraction})
    manifest = toycorpus.make_toy_corpus(args.out, args.seed, args.utterances, args.test_fraction)
    print(manifest)
    return EXIT_OK


def cmd_lint_config(args) -> int:
    cfg = load_config(args.config_file)
    _report("lint-config", None, {"config": args.config_file})
    print(cfg.resolved())
    unknown = cfg.unknown_keys(CONFIG_SCHEMA)
    for key in unknown:
        print(f"unknown key: {key}")
    return EXIT_DATA if unknown else EXIT_OK


# Parser

def _add_common(p, seed=True):
    p.add_argument("--config", help="settings file ([analyzer], [synth], [synthesis], [atoms], [durations])")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="training and excitation noise seed (default 0)")


def _add_training(p):
    p.add_argument("--hidden", type=_parse_hidden, help="hidden layer sizes, e.g. 256,64,256")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--lr", type=float, help="SGD learning rate")
    p.add_argument("--jobs", type=_positive_int, help="worker processes")


def build_parser() -> Parser:
    parser = Parser(prog="phonolab", description="Phonological vocoding, atoms and evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    sub.required = True
    systems = ", ".join(SYSTEM_NAMES)

    p = sub.add_parser("train-analyzer", help="train the per-feature classifier bank")
    p.add_argument("--system", required=True, help=systems)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="bank directory")
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_train_analyzer)

    p = sub.add_parser("train-synth", help="train the posterior-to-parameter regressor")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model directory")
    p.add_argument("--bank", help="analyzer bank providing the input posteriors")
    p.add_argument("--system", help=f"{systems}; required with --posteriors canonical")
    p.add_argument("--posteriors", choices=("analyzed", "canonical"))
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_train_synth)

    p = sub.add_parser("analyze", help="posteriors of a WAV file as CSV")
    p.add_argument("--bank", required=True)
    p.add_argument("--binarize", type=float, metavar="THRESHOLD")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="speech from a posterior CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--gamma", type=float, help="formant enhancement strength (default 1.2)")
    p.add_argument("input")
    p.add_argument("output")
    _add_common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("vocode", help="analysis followed by synthesis")
    p.add_argument("--system", help="optional check against the bank's system")
    p.add_argument("--bank", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--pitch", choices=("model", "original"))
    p.add_argument("--gamma", type=float)
    p.add_argument("input")
    p.add_argument("output")
    _add_common(p)
    p.set_defaults(func=cmd_vocode)

    p = sub.add_parser("atoms", help="phonological atoms")
    atom_sub = p.add_subparsers(dest="atoms_command", metavar="action", parser_class=Parser)
    atom_sub.required = True
    q = atom_sub.add_parser("generate", help="render the atoms and report their formants")
    q.add_argument("--model", required=True)
    q.add_argument("--duration", type=float, help="seconds (default 2.0)")
    q.add_argument("--gamma", type=float)
    q.add_argument("--out", help="also write <feature>.wav files here")
    _add_common(q)
    q.set_defaults(func=cmd_atoms_generate)
    q = atom_sub.add_parser("export", help="write one <feature>.wav per atom")
    q.add_argument("--model", required=True)
    q.add_argument("--duration", type=float)
    q.add_argument("--gamma", type=float)
    q.add_argument("directory")
    _add_common(q)
    q.set_defaults(func=cmd_atoms_export)

    p = sub.add_parser("compose", help="mix atoms into a phone or a new sound")
    p.add_argument("--system", required=True, help=systems)
    p.add_argument("--atoms", required=True, help="directory of <feature>.wav atoms")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--phone", help="phoneme (its table row) or composed sound such as GP oe, y")
    which.add_argument("--features", help="comma-separated feature names")
    p.add_argument("--weights", help="comma-separated weights (default all 1)")
    p.add_argument("output")
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("tts", help="synthesize text or an HTK label file")
    p.add_argument("--model", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text")
    src.add_argument("--labels", help="HTK label file; bypasses lexicon and durations")
    p.add_argument("--lexicon", help="CMU-format dictionary (needed with --text)")
    p.add_argument("--gamma", type=float)
    p.add_argument("output")
    _add_common(p)
    p.set_defaults(func=cmd_tts)

    p = sub.add_parser("eval-matrix", help="phone distance matrices from two manifests")
    p.add_argument("--test", required=True, help="manifest of vocoded or synthesized audio")
    p.add_argument("--ref", required=True, help="manifest of natural references")
    p.add_argument("--out", required=True, help="CSV output")
    p.add_argument("--heatmap", help="PGM output")
    p.add_argument("--matrix", choices=("norm", "vocoded", "natural"), default="norm")
    p.add_argument("--exclude", default=SILENCE, help="comma-separated phones to skip (default sil)")
    p.set_defaults(func=cmd_eval_matrix)

    p = sub.add_parser("eval-intel", help="word intelligibility score (H - I) / N")
    p.add_argument("--ref", required=True, help="reference transcripts, id<TAB>words per line")
    p.add_argument("--hyp", required=True, help="listener transcripts in the same layout")
    p.set_defaults(func=cmd_eval_intel)

    p = sub.add_parser("make-toy-corpus", help="write the synthetic desk-scale corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--utterances", type=_positive_int, default=200)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.set_defaults(func=cmd_make_toy_corpus)

    p = sub.add_parser("lint-config", help="print a settings file and flag unknown keys")
    p.add_argument("config_file")
    p.set_defaults(func=cmd_lint_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"phonolab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PhonolabError, OSError) as exc:
        print(f"phonolab: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
