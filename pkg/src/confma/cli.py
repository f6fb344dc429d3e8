"""Command-line interface: ``confma simulate | predict | evaluate | rerun``.

Every command that writes to ``--out`` also writes ``manifest.json`` with
the resolved arguments; ``confma rerun manifest.json`` replays the run.
Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .conformal import conformal_interval
from .core import (ConfmaError, ConformalConfig, Ordering, Variant, WeightScheme, ALL_SCHEMES,
                   all_subsets_model_set, bivariate_model_set, nested_model_set,
                   validate_dataset, ModelSet, CandidateModel, DimensionMismatch,
                   NonFiniteInput, TooFewRows, TooManyColumns)
from .dgp import EquityConfig, HansenConfig
from .ensemble import EnsembleFitter
from .harness import (Design, ExperimentConfig, InsufficientData, leave_one_out_eval,
                      rolling_window_eval, run_monte_carlo)
from .io import (MissingColumn, ParseError, RunManifest, emit_plot_csv, emit_report,
                 load_csv, render_csv, render_json)

log = logging.getLogger("confma")


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _schemes(names):
    if not names:
        return ALL_SCHEMES
    out = []
    for n in names:
        for part in n.split(","):
            if part.strip():
                out.append(WeightScheme.parse(part))
    return tuple(out)


def _variants(variant, adaptive):
    vs = [Variant.FULL, Variant.SPLIT] if variant == "both" else [Variant(variant)]
    ad = {"no": [False], "yes": [True], "both": [False, True]}[adaptive]
    return tuple((v, a) for a in ad for v in vs)


def _common(p, variant_default="both"):
    p.add_argument("--alpha", type=float, default=0.10, help="miscoverage level")
    p.add_argument("--scheme", action="append", default=None,
                   help="weight scheme (repeatable): equal, regression, saic, sbic, mma, jma")
    p.add_argument("--variant", choices=["full", "split", "both"], default=variant_default)
    p.add_argument("--adaptive", choices=["yes", "no", "both"], default="no",
                   nargs="?", const="yes")
    p.add_argument("--grid-points", type=int, default=200)
    p.add_argument("--grid-expansion", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", default=None, help="output directory (default: print to stdout)")
    p.add_argument("--figures", action="store_true", help="also render PNG bar charts")
    p.add_argument("--sigma2-dof", action="store_true",
                   help="Mallows variance from RSS/(n-p) instead of RSS/n")


def _data_args(p):
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--y", required=True, dest="y_column", help="outcome column name")
    p.add_argument("--ordering", choices=["exchangeable", "timeseries"], default=None)
    p.add_argument("--models", choices=["all-subsets", "nested", "bivariate", "single"],
                   default="all-subsets")
    p.add_argument("--no-intercept", action="store_true",
                   help="do not prepend a constant column to X")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="confma", description="Conformal prediction intervals for model averaging")
    ap.add_argument("--version", action="version", version=f"confma {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="Monte Carlo coverage study")
    s.add_argument("--design", choices=["hansen_homo", "hansen_hetero", "equity"],
                   default="hansen_homo")
    s.add_argument("--n", type=int, default=None, help="sample size")
    s.add_argument("--r2", type=float, default=None)
    s.add_argument("--alpha-decay", type=float, default=1.0)
    s.add_argument("--truncation", type=int, default=1000)
    s.add_argument("--replications", type=int, default=500)
    s.add_argument("--exact-r2", action="store_true",
                   help="calibrate c to the exact population R^2 of the cross-sectional design")
    _common(s)

    p = sub.add_parser("predict", help="one interval at a new covariate row")
    _data_args(p)
    p.add_argument("--x", required=True,
                   help="comma-separated covariates of the new row, in header order")
    _common(p, variant_default="full")

    e = sub.add_parser("evaluate", help="leave-one-out or rolling-window evaluation")
    _data_args(e)
    e.add_argument("--mode", choices=["loo", "rolling"], default=None)
    e.add_argument("--window", type=int, default=212)
    e.add_argument("--n-predictions", type=int, default=100)
    e.add_argument("--max-evals", type=int, default=None)
    e.add_argument("--tau", type=float, default=0.2, help="hit-rate tolerance")
    _common(e)

    r = sub.add_parser("rerun", help="replay a run from its manifest")
    r.add_argument("manifest")
    r.add_argument("--out", default=None, help="override the output directory")
    return ap


def _model_set(kind, p, intercept):
    q = p - 1 if intercept else p
    if kind == "all-subsets":
        return all_subsets_model_set(q, intercept=intercept)
    if kind == "nested":
        return nested_model_set(p, 2 if intercept else 1)
    if kind == "bivariate":
        if not intercept:
            raise ConfigError("bivariate models need the intercept column")
        return bivariate_model_set(q)
    return ModelSet(tuple(CandidateModel((j,)) for j in range(p)))


def _load(args, default_ordering):
    ordering = Ordering(args.ordering or default_ordering)
    data = load_csv(args.data, args.y_column, ordering)
    names = list(data.column_names)
    X = data.X
    intercept = not args.no_intercept
    if intercept:
        X = np.column_stack([np.ones(data.n), X])
        names = ["const"] + names
    data = validate_dataset(X, data.y, ordering, names)
    return data, _model_set(args.models, data.p, intercept), intercept


def _apply_dof(schemes, dof):
    if not dof:
        return schemes
    return tuple(WeightScheme(s.kind, s.weights, s.label, sigma2_dof=True) for s in schemes)


def _emit(rows, args, stem="report", n=None):
    if args.out is None:
        sys.stdout.write(render_csv(rows) if args.format == "csv" else render_json(rows))
        return []
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{stem}.{args.format}")
    emit_report(rows, args.format, path)
    plot = os.path.join(args.out, f"{stem}_plot.csv")
    emit_plot_csv(rows, plot)
    outputs = [path, plot]
    if args.figures:
        from .plotting import report_figures
        outputs += report_figures(rows, args.alpha, os.path.join(args.out, "figures"), stem, n=n)
    return outputs


def cmd_simulate(args):
    design = Design(args.design)
    if design is Design.EQUITY:
        kw = {"n": args.n or 100, "alpha_decay": args.alpha_decay,
              "truncation_J": args.truncation, "seed": args.seed}
        if args.r2 is not None:
            kw["r2"] = args.r2
        dgp = EquityConfig(**kw)
    else:
        dgp = HansenConfig(n=args.n or 150, alpha_decay=args.alpha_decay,
                           r2=0.5 if args.r2 is None else args.r2,
                           hetero=design is Design.HANSEN_HETERO,
                           truncation_J=args.truncation, seed=args.seed,
                           exact_r2=args.exact_r2)
    cfg = ExperimentConfig(design=design, schemes=_apply_dof(_schemes(args.scheme), args.sigma2_dof),
                           variants=_variants(args.variant, args.adaptive),
                           replications=args.replications, alpha=args.alpha, dgp=dgp,
                           master_seed=args.seed, grid_points=args.grid_points,
                           grid_expansion=args.grid_expansion)
    rows = run_monte_carlo(cfg)
    return _emit(rows, args, stem=f"simulate_{design.value}", n=dgp.n)


def cmd_predict(args):
    data, ms, intercept = _load(args, "exchangeable")
    try:
        x = [float(v) for v in args.x.split(",")]
    except ValueError:
        raise ConfigError(f"--x must be comma-separated numbers, got {args.x!r}") from None
    if intercept:
        x = [1.0] + x
    if len(x) != data.p:
        raise ConfigError(f"--x has {len(x) - intercept} values, data has "
                          f"{data.p - intercept} covariates")
    result = []
    for scheme in _apply_dof(_schemes(args.scheme), args.sigma2_dof):
        for variant, adaptive in _variants(args.variant, args.adaptive):
            cfg = ConformalConfig(alpha=args.alpha, grid_points=args.grid_points,
                                  grid_expansion=args.grid_expansion, adaptive=adaptive,
                                  variant=variant, seed=args.seed)
            rep = conformal_interval(data, np.array(x), EnsembleFitter(ms, scheme), cfg)
            d = {"scheme": scheme.name, "variant": variant.value, "adaptive": adaptive}
            d.update(rep.as_dict())
            result.append(d)
    text = json.dumps(result, indent=2) + "\n"
    if args.format == "csv":
        keys = list(result[0])
        lines = [",".join(keys)] + [",".join(str(r[k]).lower() if isinstance(r[k], bool)
                                             else str(r[k]) for k in keys) for r in result]
        text = "\n".join(lines) + "\n"
    if args.out is None:
        sys.stdout.write(text)
        return []
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"interval.{args.format}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return [path]


def cmd_evaluate(args):
    mode = args.mode
    if mode is None:
        mode = "rolling" if args.ordering == "timeseries" else "loo"
    data, ms, _ = _load(args, "timeseries" if mode == "rolling" else "exchangeable")
    design = Design.CSV_TIME_SERIES if mode == "rolling" else Design.CSV_CROSS_SECTION
    cfg = ExperimentConfig(design=design, schemes=_apply_dof(_schemes(args.scheme), args.sigma2_dof),
                           variants=_variants(args.variant, args.adaptive), alpha=args.alpha,
                           window=args.window, n_predictions=args.n_predictions,
                           master_seed=args.seed, grid_points=args.grid_points,
                           grid_expansion=args.grid_expansion, tau=args.tau,
                           max_evals=args.max_evals)
    if mode == "rolling":
        rows = rolling_window_eval(data, ms, cfg=cfg)
    else:
        rows = leave_one_out_eval(data, ms, cfg=cfg)
    return _emit(rows, args, stem=f"evaluate_{mode}")


COMMANDS = {"simulate": cmd_simulate, "predict": cmd_predict, "evaluate": cmd_evaluate}


def _run(argv, args):
    manifest = RunManifest(command=args.command, config_echo={"argv": list(argv), **{
        k: v for k, v in vars(args).items()}}, master_seed=getattr(args, "seed", 0),
        tool_version=__version__)
    outputs = COMMANDS[args.command](args)
    manifest.finish()
    if args.out is not None:
        manifest.outputs = outputs
        manifest.write(os.path.join(args.out, "manifest.json"))
    return 0


def _rerun_argv(args):
    m = RunManifest.read(args.manifest)
    argv = list(m.config_echo["argv"])
    if args.out is not None:
        # drop any recorded --out and point at the new directory
        cleaned, skip = [], False
        for a in argv:
            if skip:
                skip = False
                continue
            if a == "--out":
                skip = True
                continue
            if a.startswith("--out="):
                continue
            cleaned.append(a)
        argv = cleaned + ["--out", args.out]
    return argv


_INPUT_ERRORS = (ConfigError, MissingColumn, ParseError, FileNotFoundError, DimensionMismatch,
                 NonFiniteInput, TooFewRows, TooManyColumns, InsufficientData)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            argv = _rerun_argv(args)
            args = parser.parse_args(argv)
        return _run(argv, args)
    except _INPUT_ERRORS as exc:
        print(f"confma: error: {exc}", file=sys.stderr)
        return 1
    except (ConfmaError, np.linalg.LinAlgError, ArithmeticError, OSError) as exc:
        print(f"confma: runtime failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"confma: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
