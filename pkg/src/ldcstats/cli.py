"""Command-line entry point: ``ldcstats {simulate,distances,ztest,model-compare}``."""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

import numpy as np

from .crossnobis import PartitionedPatterns, crossnobis_distances, estimate_sigma_k
from .glm import GlsProjector, TemporalCovSpec, temporal_cov
from .inference import DegenerateContrastError, NullSpec, null_v, pair_contrast, plugin_v, z_test
from .io import (MatrixFileError, RunConfigError, check_output_dir, format_float, load_run_config,
                 read_matrix, write_matrix)
from .model_eval import METHODS, RepModel, UndefinedScoreError, select_model
from .prewhiten import estimate_sigma_p, fit_spatial_cov, split_sigma_r
from .rdm import DimensionError
from .simulate.experiments import EXPERIMENTS, ConfigError, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


class UsageError(ValueError):
    pass


def _write_summary(path: Path, items) -> None:
    lines = []
    for key, value in items:
        if isinstance(value, (float, np.floating)):
            value = format_float(value)
        elif isinstance(value, (list, tuple)):
            value = ", ".join(format_float(v) if isinstance(v, float) else str(v) for v in value)
        lines.append(f"{key} = {value}\n")
    path.write_text("".join(lines), encoding="utf-8")


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    config, seed, kind, out_dir = None, args.seed, args.kind, args.out_dir
    if args.config is not None:
        rc = load_run_config(args.config)
        if rc.kind is not None and kind is not None and rc.kind != kind:
            raise UsageError(f"--kind {kind} conflicts with kind = {rc.kind} in the config")
        kind = kind or rc.kind
        seed = seed if seed is not None else rc.seed
        out_dir = out_dir or rc.out_dir
        config = rc.experiment_config()
    if kind is None:
        raise UsageError("no experiment kind given (--kind or [run] kind)")
    if out_dir is None:
        raise UsageError("no output directory given (--out-dir or [paths] out_dir)")
    seed = 0 if seed is None else seed
    out = check_output_dir(out_dir)
    result = run_experiment(kind, config, seed)
    for name, table in sorted(result.tables.items()):
        write_matrix(out / f"{name}.ldcm", table)
    if result.patterns is not None:
        pdir = check_output_dir(out / "patterns")
        for m, U in enumerate(result.patterns):
            write_matrix(pdir / f"partition_{m}.ldcm", U)
    items = [("kind", kind), ("seed", seed)]
    items += [(f"config.{k}", v) for k, v in sorted(result.config.items())]
    items += [(f"result.{k}", v) for k, v in sorted(result.summary.items())]
    _write_summary(out / "summary.txt", items)
    print(f"wrote {len(result.tables)} tables to {out}")
    return EXIT_OK


# -- distances ----------------------------------------------------------------

def _first_level(args):
    if args.design is None or len(args.design) != len(args.timeseries):
        raise UsageError("--timeseries needs one --design file per run")
    if args.conditions is None:
        raise UsageError("--timeseries needs --conditions (number of condition columns)")
    K = args.conditions
    temporal = TemporalCovSpec(kind=args.temporal)
    betas, residuals, Q = [], [], None
    for yfile, xfile in zip(args.timeseries, args.design):
        Y, X = read_matrix(yfile).data, read_matrix(xfile).data
        if X.shape[0] != Y.shape[0]:
            raise DimensionError(f"{yfile} has {Y.shape[0]} samples but {xfile} has {X.shape[0]} rows")
        if Q is not None and X.shape[1] - K != Q:
            raise DimensionError("designs differ in their number of nuisance columns")
        Q = X.shape[1] - K
        fit = GlsProjector(X, temporal_cov(temporal, X.shape[0])).fit(Y)
        betas.append(fit.betas[:K])
        residuals.append(fit.residuals)
    spatial = fit_spatial_cov(estimate_sigma_p(residuals, K, Q), args.h)
    U = PartitionedPatterns.from_list([b @ spatial.whitener for b in betas])
    trace = split_sigma_r(residuals, K, Q, args.h, spatial=spatial).trace_RR
    return U, trace


def cmd_distances(args) -> int:
    if (args.patterns is None) == (args.timeseries is None):
        raise UsageError("give exactly one of --patterns or --timeseries")
    if args.patterns is not None:
        U = PartitionedPatterns.from_list([read_matrix(f).data for f in args.patterns])
        trace = float(U.P) if args.trace_rr is None else args.trace_rr
    else:
        U, trace = _first_level(args)
    d = crossnobis_distances(U)
    sigma_k = estimate_sigma_k(U).sigma_K
    V = plugin_v(d, sigma_k, trace, U.M, U.P).V
    out = check_output_dir(args.out)
    write_matrix(out / "distances.ldcm", d[None])
    write_matrix(out / "sigma_k.ldcm", sigma_k)
    write_matrix(out / "V.ldcm", V)
    write_matrix(out / "cov_meta.ldcm", np.array([[U.M, U.P, trace]], dtype=float))
    _write_summary(out / "summary.txt", [("M", U.M), ("K", U.K), ("P", U.P), ("trace_RR", trace)]
                   + [(f"d[{j + 1}]", float(x)) for j, x in enumerate(d)])
    print(f"wrote {d.size} distances to {out}")
    return EXIT_OK


# -- tests and model comparison -----------------------------------------------

_CONTRAST = re.compile(r"^\s*(\d+)\s*(?:-\s*(\d+)\s*)?$")


def parse_contrast(text: str) -> tuple[int, int | None]:
    """``"j"`` or ``"j-l"`` with 1-based indices, returned 0-based."""
    match = _CONTRAST.match(text)
    if not match:
        raise UsageError(f"malformed contrast {text!r}; expected 'j' or 'j-l'")
    j = int(match.group(1)) - 1
    l = None if match.group(2) is None else int(match.group(2)) - 1
    if j < 0 or (l is not None and l < 0):
        raise UsageError("contrast indices start at 1")
    return j, l


def _read_distances(path) -> np.ndarray:
    d = read_matrix(path).data
    if d.shape[0] != 1:
        raise DimensionError(f"{path} must hold a single row of distances")
    return d[0]


def _cov_inputs(directory):
    directory = Path(directory)
    sigma_k = read_matrix(directory / "sigma_k.ldcm").data
    meta = read_matrix(directory / "cov_meta.ldcm").data.ravel()
    if meta.size != 3:
        raise DimensionError("cov_meta must hold [M, P, trace_RR]")
    return {"sigma_k": sigma_k, "M": int(meta[0]), "P": int(meta[1]), "trace_RR": float(meta[2])}


def cmd_ztest(args) -> int:
    d = _read_distances(args.distances)
    j, l = parse_contrast(args.contrast)
    if j >= d.size or (l is not None and l >= d.size):
        raise UsageError(f"contrast index out of range for D={d.size}")
    c = pair_contrast(d.size, j, l)
    cov = Path(args.cov)
    if cov.is_dir():
        if args.null == "equalized":
            if l is None:
                raise UsageError("the equalized null needs a difference contrast 'j-l'")
            spec = NullSpec("equalized", (j, l))
        else:
            spec = NullSpec("zero")
        inputs = _cov_inputs(cov)
        V = null_v(d, spec, inputs["sigma_k"], inputs["trace_RR"], inputs["M"], inputs["P"]).V
    else:
        if args.null == "equalized":
            raise UsageError("the equalized null needs covariance inputs (a directory), not a fixed V")
        spec = NullSpec("zero")
        V = read_matrix(cov).data
    res = z_test(d, c, V, spec, two_sided=args.two_sided)
    print(f"z = {res.z:.6g}")
    print(f"p = {res.p_value:.6g}")
    return EXIT_OK


def cmd_model_compare(args) -> int:
    d = _read_distances(args.distances)
    models = []
    for f in args.models:
        m = read_matrix(f).data
        if m.shape[0] != 1:
            raise DimensionError(f"{f} must hold a single row")
        models.append(RepModel(m[0], Path(f).stem))
    cov = {}
    if args.method == "loglik":
        if args.cov_inputs is None:
            raise UsageError("loglik needs --cov-inputs")
        cov = _cov_inputs(args.cov_inputs)
    sel = select_model(d, models, args.method, **cov)
    for mdl, score in zip(models, sel.scores):
        line = f"{mdl.name}: {args.method} = {format_float(score.value)}"
        if args.method == "loglik":
            line += f" s_hat = {format_float(score.s_hat)} iterations = {score.iterations}"
        print(line)
    print(f"winner = {models[sel.winner].name}")
    print(f"tie = {'yes' if sel.tie else 'no'}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldcstats", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a Monte-Carlo experiment and write its tables")
    p.add_argument("--kind", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("distances", help="crossnobis distances and their predicted covariance")
    p.add_argument("--patterns", nargs="+", help="one prewhitened K x P matrix per partition")
    p.add_argument("--timeseries", nargs="+", help="one T x P data matrix per run")
    p.add_argument("--design", nargs="+", help="one T x (K + Q) design matrix per run")
    p.add_argument("--conditions", type=int, help="number of condition columns in each design")
    p.add_argument("--temporal", default="identity", choices=["identity", "double_exponential"])
    p.add_argument("--h", type=float, default=0.4, help="shrinkage toward the diagonal")
    p.add_argument("--trace-rr", type=float, help="tr(S_R S_R) for --patterns input (default P)")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_distances)

    p = sub.add_parser("ztest", help="z-test on one distance or a difference of two")
    p.add_argument("--distances", type=Path, required=True)
    p.add_argument("--cov", required=True, help="V matrix file, or a directory written by 'distances'")
    p.add_argument("--contrast", required=True, help="'j' or 'j-l' (1-based)")
    p.add_argument("--null", choices=["zero", "equalized"], default="zero")
    p.add_argument("--two-sided", action="store_true")
    p.set_defaults(func=cmd_ztest)

    p = sub.add_parser("model-compare", help="score candidate models against estimated distances")
    p.add_argument("--distances", type=Path, required=True)
    p.add_argument("--cov-inputs", type=Path, help="directory written by 'distances'")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--method", choices=METHODS, default="loglik")
    p.set_defaults(func=cmd_model_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, MatrixFileError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (UsageError, ConfigError, RunConfigError, DimensionError, DegenerateContrastError,
            UndefinedScoreError, ValueError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
