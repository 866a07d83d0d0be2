"""Command-line front end: ``mtcca simulate | analyze | graph``.

Every run writes one JSON document (to ``--out`` or stdout).  Failures
produce a JSON object with an ``error`` member and a nonzero exit code.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import MtccaError, RowCountMismatch
from .experiments import MethodConfig, run_monte_carlo
from .graph import build_graph, pairwise_first_order, symmetric_difference
from .io import ingest_csv, read_numeric_csv
from .moments import Family, MtFunctionSpec, transformed_moments
from .selection import SelectionConfig, select_parameters
from .significance import Reselect, permutation_test_orders
from .simulation import ModelName, SimulationModel
from .solver import mtcca

DEFAULT_SEED = 0
EXIT_MODULE_ERROR = 1
EXIT_USAGE = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _clean(obj):
    """JSON-ready copy: arrays to lists, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _emit(document: dict, out: Optional[str]) -> None:
    text = json.dumps(_clean(document), indent=2)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


def _probability(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def _unit(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return value


def _positive(kind):
    def parse(text):
        value = kind(text)
        if not value > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return value
    return parse


def _non_negative_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _add_common(p, mt_choices, mt_default, perms_default):
    p.add_argument("--mt", choices=mt_choices, default=mt_default,
                   help="MT-function family (identity is linear CCA)")
    p.add_argument("--perms", type=_non_negative_int, default=perms_default,
                   help="permutations per significance test (0 skips the test)")
    p.add_argument("--alpha", type=_probability, default=0.01, help="significance level")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master random seed")
    p.add_argument("--out", default=None, help="JSON report path (default: stdout)")
    p.add_argument("--starts", type=_positive(int), default=SelectionConfig.n_starts,
                   help="ascent starts (the first is always the region anchor)")
    p.add_argument("--iters", type=_non_negative_int, default=SelectionConfig.max_iters,
                   help="maximum ascent iterations per start")
    p.add_argument("--tol", type=_positive(float), default=SelectionConfig.tol,
                   help="step-norm stopping tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtcca", description="Measure-transformed canonical correlation analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sim = sub.add_parser("simulate", help="Monte-Carlo study on a synthetic model")
    sim.add_argument("model", choices=[m.value for m in ModelName])
    _add_common(sim, ["identity", "exponential", "gaussian", "all"], "all", 200)
    sim.add_argument("--samples", type=_positive(int), default=1000, help="observations per trial")
    sim.add_argument("--trials", type=_positive(int), default=100, help="Monte-Carlo trials")
    sim.add_argument("--full-scale", action="store_true",
                     help="1000 trials and 1000 permutations per test")

    ana = sub.add_parser("analyze", help="MTCCA of a dataset with permutation p-values")
    ana.add_argument("inputs", nargs="+", metavar="INPUT",
                     help="X.csv Y.csv, or XY.csv followed by the number of X columns")
    _add_common(ana, ["identity", "exponential", "gaussian"], "gaussian", 1000)

    gr = sub.add_parser("graph", help="dependency graphs over several entities")
    gr.add_argument("inputs", nargs="+", metavar="ENTITY.csv",
                    help="one CSV per entity, rows aligned across files")
    _add_common(gr, ["identity", "exponential", "gaussian"], "gaussian", 0)
    gr.add_argument("--lambda", dest="lam", type=_unit, default=0.5,
                    help="edge threshold on the first-order coefficient")
    return parser


def _selection_config(args) -> SelectionConfig:
    return SelectionConfig(n_starts=args.starts, max_iters=args.iters, tol=args.tol, seed=args.seed)


def _config_echo(args) -> dict:
    echo = {k: v for k, v in vars(args).items()}
    if "lam" in echo:
        echo["lambda"] = echo.pop("lam")
    return echo


def _simulate(args) -> dict:
    if args.full_scale:
        args.trials, args.perms = 1000, 1000
    config = _selection_config(args)
    families = ["identity", "exponential", "gaussian"] if args.mt == "all" else [args.mt]
    methods = [MethodConfig.lcca() if f == "identity" else MethodConfig.mtcca(f, config)
               for f in families]
    model = SimulationModel(args.model, n_samples=args.samples, seed=args.seed)
    summaries = run_monte_carlo(model, methods, args.trials, seed=args.seed,
                                m_permutations=args.perms, alpha=args.alpha)
    return {
        "command": "simulate",
        "config": _config_echo(args),
        "coefficients": {s.method: {"mean": s.mean_rho, "std": s.std_rho} for s in summaries},
        "directions": {s.method: {"a_mean": s.align_a_mean, "a_std": s.align_a_std,
                                  "b_mean": s.align_b_mean, "b_std": s.align_b_std}
                       for s in summaries},
        "p_values": {s.method: {"mean": s.mean_p_value, "rejection_rate": s.rejection_rate}
                     for s in summaries},
        "psi_trace": None,
        "diagnostics": {s.method: {"n_failures": s.n_failures, "n_trials": s.n_trials}
                        for s in summaries},
        "summaries": [s.to_dict() for s in summaries],
    }


def _load_pair(inputs: List[str]):
    if len(inputs) != 2:
        raise _UsageError("analyze expects X.csv Y.csv or XY.csv SPLIT")
    first, second = inputs
    try:
        split = int(second)
    except ValueError:
        return ingest_csv(first, second)
    return ingest_csv(first, split=split)


def _scatter_path(out: Optional[str]) -> Optional[Path]:
    if not out:
        return None
    out = Path(out)
    return out.with_name(out.stem + "_scatter.csv")


def _analyze(args) -> dict:
    sample = _load_pair(args.inputs)
    family = Family(args.mt)
    config = _selection_config(args)
    selection = None
    if family is Family.IDENTITY:
        spec = MtFunctionSpec.identity()
        strategy = spec
    else:
        selection = select_parameters(sample, family, config)
        spec = selection.spec
        strategy = Reselect(family, config)
    moments = transformed_moments(sample, spec)
    sol = mtcca(sample, spec)
    p_values = None
    n_failures = 0
    if args.perms > 0:
        reports = permutation_test_orders(sample, strategy, m=args.perms, seed=args.seed,
                                          alpha=args.alpha, observed_rho=sol.rho)
        p_values = [rep.to_dict() for rep in reports]
        n_failures = reports[0].n_failures
    scatter = _scatter_path(args.out)
    if scatter is not None:
        u, v = sol.variates(sample, 1)
        with scatter.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["a1_x", "b1_y"])
            writer.writerows(zip(map(repr, u.tolist()), map(repr, v.tolist())))
    return {
        "command": "analyze",
        "config": _config_echo(args),
        "coefficients": sol.rho,
        "directions": {"x_labels": list(sample.x_labels), "y_labels": list(sample.y_labels),
                       "a": sol.a_dirs, "b": sol.b_dirs},
        "p_values": p_values,
        "psi_trace": None if selection is None else selection.to_dict(),
        "diagnostics": {
            "n": sample.n, "p": sample.p, "q": sample.q,
            "spec": spec.to_dict(),
            "conditioning": sol.conditioning,
            "effective_sample_fraction": moments.effective_sample_fraction,
            "log_weight_max": moments.log_weight_max,
            "n_permutation_failures": n_failures,
            "scatter_csv": None if scatter is None else str(scatter),
        },
    }


def _graph(args) -> dict:
    if len(args.inputs) < 2:
        raise _UsageError("graph needs at least two entity files")
    entities = {}
    rows = None
    for path in args.inputs:
        label = Path(path).stem
        if label in entities:
            raise _UsageError(f"duplicate entity name {label!r}")
        _, data = read_numeric_csv(path)
        if rows is not None and data.shape[0] != rows:
            raise RowCountMismatch(f"{path} has {data.shape[0]} rows, expected {rows}")
        rows = data.shape[0]
        entities[label] = data
    config = _selection_config(args)
    mt_coef, labels = pairwise_first_order(entities, args.mt, config)
    lin_coef, _ = pairwise_first_order(entities, Family.IDENTITY)
    g_mt = build_graph(mt_coef, labels, args.lam)
    g_lin = build_graph(lin_coef, labels, args.lam)
    only_mt, only_lin = symmetric_difference(g_mt, g_lin)
    return {
        "command": "graph",
        "config": _config_echo(args),
        "coefficients": {"mt": mt_coef, "lcca": lin_coef, "labels": list(labels)},
        "directions": None,
        "p_values": None,
        "psi_trace": None,
        "graphs": {"mt": g_mt.to_dict(), "lcca": g_lin.to_dict()},
        "symmetric_difference": {
            "only_mt": [list(e) for e in sorted(only_mt)],
            "only_lcca": [list(e) for e in sorted(only_lin)],
            "distance": len(only_mt) + len(only_lin),
        },
        "diagnostics": {"n": rows, "n_entities": len(labels)},
    }


_COMMANDS = {"simulate": _simulate, "analyze": _analyze, "graph": _graph}


def main(argv=None) -> int:
    out = None
    try:
        args = build_parser().parse_args(argv)
        out = args.out
        document = _COMMANDS[args.command](args)
    except _UsageError as exc:
        _emit({"error": {"type": "UsageError", "message": str(exc)}}, None)
        return EXIT_USAGE
    except (MtccaError, ValueError, OSError) as exc:
        error = {"type": type(exc).__name__, "message": str(exc)}
        for attr in ("row", "col", "which"):
            if hasattr(exc, attr):
                error[attr] = getattr(exc, attr)
        _emit({"error": error}, out)
        return EXIT_MODULE_ERROR
    _emit(document, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
