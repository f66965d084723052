"""Command-line entry point: ``bladetwin <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import datastore, plots, workflow
from .config import (
    ConfigError,
    PipelineParams,
    blade_study_to_dict,
    load_blade_study,
    load_protocol,
    protocol_to_dict,
    read_json,
)
from .dsp import SignalError
from .features import FeatureError
from .fem import FemError, apply_damage, modal_analysis
from .hammer import ProtocolSpec, SimulationError
from .ml import MLError
from .presets import load_reference

THREADS_ENV = "BLADETWIN_THREADS"

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_BAD_CONFIG = 4
EXIT_VALIDATION = 5
EXIT_MODEL = 6
EXIT_SIGNAL = 7
EXIT_ML = 8

# checked in order, so subclasses come before their bases
ERROR_CODES = [
    (workflow.StageError, EXIT_MISSING_INPUT, "missing_input"),
    (FileNotFoundError, EXIT_MISSING_INPUT, "missing_input"),
    (ConfigError, EXIT_BAD_CONFIG, "bad_config"),
    (datastore.DataStoreError, EXIT_BAD_CONFIG, "bad_data"),
    (json.JSONDecodeError, EXIT_BAD_CONFIG, "bad_config"),
    (FemError, EXIT_MODEL, "model"),
    (SimulationError, EXIT_MODEL, "simulation"),
    (SignalError, EXIT_SIGNAL, "signal"),
    (FeatureError, EXIT_SIGNAL, "features"),
    (MLError, EXIT_ML, "ml"),
]

EPILOG = f"""exit codes:
  {EXIT_OK}  success
  {EXIT_INTERNAL}  unexpected internal error
  {EXIT_USAGE}  bad command-line usage
  {EXIT_MISSING_INPUT}  a required input file or stage output is missing
  {EXIT_BAD_CONFIG}  a config or data file is malformed or violates its schema
  {EXIT_VALIDATION}  dataset validation found problems
  {EXIT_MODEL}  structural model or simulation error
  {EXIT_SIGNAL}  signal processing or feature extraction error
  {EXIT_ML}  classifier training or evaluation error

Errors are printed to stderr as one line:
  bladetwin: error code=<n> kind=<kind> message=<text>

The default thread count comes from ${THREADS_ENV} (else 1)."""


class Fail(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code = code
        self.kind = kind


# --- argument parsing --------------------------------------------------------

def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", type=Path, help="blade study JSON (default: shipped reference blade)")
    g.add_argument("--protocol", type=Path, help="test protocol JSON (default: built-in protocol)")
    g.add_argument("--out", type=Path, default=Path("run"), help="run directory (default: ./run)")
    g.add_argument("--seed", type=int, help="master seed for simulation, split and forests")
    g.add_argument("--threads", type=int, default=None, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    g.add_argument("--modes", type=int, help="number of modes retained (eigen output / simulation)")
    g.add_argument("--window-s", type=float, help="post-impact window in s (default 2.0)")
    g.add_argument("--cutoff-hz", type=float, help="low-pass cutoff in Hz (default 1000)")
    g.add_argument("-v", "--verbose", action="count", default=0)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(
        prog="bladetwin",
        description="Synthetic hammer-test twin of a scaled wind-turbine blade and its damage classifiers.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = ap.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text, epilog=EPILOG,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    p = add("eigen", "print the natural frequencies of the blade")
    p.add_argument("--damage", help="label from the study's damage list (default Healthy)")
    add("simulate", "generate the synthetic hammer-test dataset into <out>/dataset")
    p = add("preprocess", "truncate and low-pass every trial into <out>/preprocessed")
    p.add_argument("--dataset", type=Path, help="raw dataset directory (default <out>/dataset)")
    p = add("features", "extract per-trial features into <out>/features.csv")
    p.add_argument("--dataset", type=Path, help="dataset directory (default <out>/preprocessed)")
    p = add("rank", "one-way ANOVA of every feature into <out>/anova.csv")
    p.add_argument("--alpha", type=float, default=0.05)
    p = add("search-pairs", "score every pair of the top selected features into <out>/pairs.csv")
    p.add_argument("--max-features", type=int, default=workflow.DEFAULT_SEARCH_FEATURES)
    p = add("train", "fit RF, SVM, KNN and NB on one stratified split")
    p.add_argument("--features-list", default=",".join(workflow.DEFAULT_TRAIN_FEATURES),
                   help="comma-separated feature names (default wn3,wn4)")
    add("evaluate", "score the trained models and write confusion matrices and the report")
    p = add("pipeline", "simulate, preprocess, features, rank, search-pairs, train and evaluate")
    p.add_argument("--features-list", default=",".join(workflow.DEFAULT_TRAIN_FEATURES))
    p.add_argument("--max-features", type=int, default=workflow.DEFAULT_SEARCH_FEATURES)
    p = add("plot", "write figure data (CSV) and SVG renderings into <out>/plots")
    p.add_argument("--shifts", action="store_true", help="per-damage frequency shifts, modes 1-6")
    p.add_argument("--frf", action="store_true", help="per-trial and class-mean FRF magnitudes")
    p.add_argument("--densities", action="store_true", help="per-class feature densities")
    p.add_argument("--confusion", action="store_true", help="confusion matrices")
    p.add_argument("--features-list", help="features for --densities (default: top 6 selected)")
    p = add("validate", "check a dataset directory against its manifest")
    p.add_argument("dataset", nargs="?", type=Path, help="dataset directory (default <out>/dataset)")
    return ap


# --- helpers -----------------------------------------------------------------

def _study(args):
    if args.config is not None:
        if not args.config.is_file():
            raise Fail(EXIT_MISSING_INPUT, "missing_input", f"config file not found: {args.config}")
        return load_blade_study(args.config)
    return load_reference()


def _protocol(args) -> ProtocolSpec:
    if args.protocol is not None:
        if not args.protocol.is_file():
            raise Fail(EXIT_MISSING_INPUT, "missing_input", f"protocol file not found: {args.protocol}")
        proto = load_protocol(args.protocol)
    else:
        proto = ProtocolSpec()
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.modes is not None:
        changes["n_modes"] = args.modes
    return replace(proto, **changes) if changes else proto


def _params(args) -> PipelineParams:
    changes = {}
    if args.window_s is not None:
        changes["window_s"] = args.window_s
    if args.cutoff_hz is not None:
        changes["cutoff_hz"] = args.cutoff_hz
    return replace(PipelineParams(), **changes)


def _seed(args) -> int:
    """--seed, else the seed the run's dataset was generated with, else the default."""
    if args.seed is not None:
        return args.seed
    proto = args.out / "dataset" / "protocol.json"
    if proto.is_file():
        return int(read_json(proto)["master_seed"])
    if args.protocol is not None and args.protocol.is_file():
        return load_protocol(args.protocol).master_seed
    return ProtocolSpec().master_seed


def _threads(args) -> int:
    return max(1, args.threads) if args.threads is not None else _default_threads()


def _feature_list(text: str) -> list[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    if not names:
        raise Fail(EXIT_USAGE, "usage", "empty feature list")
    return names


def _say(msg: str) -> None:
    print(msg, flush=True)


# --- subcommands -------------------------------------------------------------

def cmd_eigen(args) -> int:
    blade, damages = _study(args)
    damage = None
    if args.damage:
        found = [d for d in damages if d.label == args.damage]
        if not found:
            raise Fail(EXIT_BAD_CONFIG, "bad_config", f"damage {args.damage!r} not in the study")
        damage = found[0]
    n = args.modes or 6
    model = apply_damage(blade, damage) if damage else blade
    freqs = modal_analysis(model, n).frequencies
    _say("mode,frequency_hz")
    for i, f in enumerate(freqs, 1):
        _say(f"{i},{float(f)!r}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    blade, damages = _study(args)
    protocol = _protocol(args)
    m = workflow.simulate(args.out, blade, damages, protocol, _threads(args))
    _say(f"wrote {len(m.files)} trials to {args.out / 'dataset'}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    m = workflow.preprocess(args.out, _params(args), _threads(args), args.dataset)
    _say(f"wrote {len(m.files)} preprocessed trials to {args.out / 'preprocessed'}")
    return EXIT_OK


def cmd_features(args) -> int:
    table = workflow.features(args.out, _params(args), _threads(args), args.dataset)
    _say(f"wrote {len(table)} rows x {len(table.names)} features to {args.out / 'features.csv'}")
    return EXIT_OK


def cmd_rank(args) -> int:
    res = workflow.rank(args.out, args.alpha)
    for i, name in enumerate(res.ranking, 1):
        st = res.stats[name]
        flag = "selected" if name in res.selected else "rejected"
        note = "  (mode 5: transverse, unreliable at a single-axis sensor)" if name == "wn5" else ""
        _say(f"{i:2d} {name:18s} F={st.f_statistic:.6g} p={st.p_value:.3g} {flag}{note}")
    for name, why in sorted(res.excluded.items()):
        _say(f"   {name:18s} excluded: {why}")
    return EXIT_OK


def _print_pairs(scores, n=5):
    for s in scores[:n]:
        accs = " ".join(f"{k}={100 * v:.1f}%" for k, v in s.accuracies.items())
        _say(f"{s.pair[0]} & {s.pair[1]}: {accs}")


def cmd_search_pairs(args) -> int:
    res = workflow.search_pairs(args.out, _seed(args), args.max_features, _threads(args))
    _say(f"{len(res.scores)} pairs, {res.n_evaluations} evaluations; top 5:")
    _print_pairs(res.scores)
    return EXIT_OK


def cmd_train(args) -> int:
    res = workflow.train(args.out, _seed(args), _feature_list(args.features_list), _threads(args))
    _say(f"trained {', '.join(res.models)} on {len(res.split.train)} rows (split {res.split.identity})")
    return EXIT_OK


def _report(args, feature_names) -> dict:
    return workflow.write_report(args.out, _seed(args), _params(args), feature_names)


def cmd_evaluate(args) -> int:
    cms = workflow.evaluate_models(args.out)
    names = read_json(next(iter(sorted((args.out / "models").glob("*.json")))))["features"]
    _report(args, names)
    for kind, cm in cms.items():
        _say(f"{kind}: accuracy {100 * cm.accuracy:.2f}%")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    blade, damages = _study(args)
    protocol = _protocol(args)
    seed = args.seed if args.seed is not None else protocol.master_seed
    threads = _threads(args)
    params = _params(args)
    names = _feature_list(args.features_list)
    t0 = time.perf_counter()
    outcome = workflow.run_pipeline(args.out, blade, damages, protocol, params, seed, threads, names,
                                    args.max_features)
    _say(f"selected features: {', '.join(outcome.selected[:8])}")
    for kind, acc in outcome.report["accuracy"].items():
        _say(f"{kind}: accuracy {100 * acc:.2f}%")
    _say("top pairs:")
    for p in outcome.report["top_pairs"]:
        _say(f"  {p['pair'][0]} & {p['pair'][1]}: best {100 * p['best']:.1f}%")
    _say(f"report: {args.out / 'report.json'} ({time.perf_counter() - t0:.1f} s)")
    return EXIT_OK


def cmd_plot(args) -> int:
    out = args.out / "plots"
    chosen = [k for k in ("shifts", "frf", "densities", "confusion") if getattr(args, k)]
    explicit = bool(chosen)
    chosen = chosen or ["shifts", "frf", "densities", "confusion"]
    written = []
    for kind in chosen:
        try:
            if kind == "shifts":
                blade, damages = _study(args)
                written.append(plots.shifts(out, workflow.frequency_shifts(blade, damages)))
            elif kind == "frf":
                src = args.out / "preprocessed"
                if not (src / datastore.MANIFEST_NAME).is_file():
                    raise workflow.StageError(f"missing preprocessed dataset: {src}")
                written.append(plots.frf(out, src, _params(args)))
            elif kind == "densities":
                path = args.out / "features.csv"
                if not path.is_file():
                    raise workflow.StageError(f"missing feature table: {path}")
                table = datastore.read_feature_table(path)
                if args.features_list:
                    names = _feature_list(args.features_list)
                elif (args.out / "anova.csv").is_file():
                    names = [r[0] for r in datastore.read_anova(args.out / "anova.csv") if r[3]][:6]
                else:
                    names = ["wn3", "wn4", "wn6", "zeta3", "zeta4", "shape_factor"]
                written.append(plots.densities(out, table, names))
            elif kind == "confusion":
                if not list(args.out.glob("confusion_*.csv")):
                    raise workflow.StageError(f"no confusion matrices in {args.out}")
                written.append(plots.confusion(out, args.out))
        except workflow.StageError as exc:
            if explicit:
                raise
            logging.getLogger("bladetwin").warning("skipping %s plot: %s", kind, exc)
    for w in written:
        _say(f"wrote {w} and {w.with_suffix('.svg').name if w.stem != 'confusion_summary' else 'confusion.svg'}")
    if not written:
        raise workflow.StageError("nothing to plot: run the pipeline first")
    return EXIT_OK


def cmd_validate(args) -> int:
    root = args.dataset or args.out / "dataset"
    study = None
    if args.config is not None:
        study = blade_study_to_dict(*load_blade_study(args.config))
    protocol = protocol_to_dict(_protocol(args)) if args.protocol is not None else None
    report = datastore.validate_dataset(root, study, protocol)
    _say(str(report))
    if not report.ok:
        raise Fail(EXIT_VALIDATION, "validation", f"{len(report.problems)} problem(s) in {root}")
    return EXIT_OK


COMMANDS = {
    "eigen": cmd_eigen,
    "simulate": cmd_simulate,
    "preprocess": cmd_preprocess,
    "features": cmd_features,
    "rank": cmd_rank,
    "search-pairs": cmd_search_pairs,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "plot": cmd_plot,
    "validate": cmd_validate,
}


def _error_line(code: int, kind: str, message: str) -> str:
    return f"bladetwin: error code={code} kind={kind} message={' '.join(str(message).split())}"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except Fail as exc:
        print(_error_line(exc.code, exc.kind, str(exc)), file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        for etype, code, kind in ERROR_CODES:
            if isinstance(exc, etype):
                print(_error_line(code, kind, str(exc)), file=sys.stderr)
                return code
        logging.getLogger("bladetwin").debug("internal error", exc_info=True)
        print(_error_line(EXIT_INTERNAL, "internal", f"{type(exc).__name__}: {exc}"), file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
