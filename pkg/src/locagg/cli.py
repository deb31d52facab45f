"""``locagg`` command line.

Exit codes: 0 success, 1 invalid input, 2 no convergence (or a numerical
failure in a local solve), 3 file I/O or format error, 4 network error.
Every subcommand accepts ``--config FILE`` with ``key=value`` lines named
after the long flags; flags given on the command line win over the file.
"""

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from . import io as lio
from .admm import Adapt, AdmmConfig, PenaltyConfig, fit
from .bench import RhoBenchSpec, bench_kernels, bench_rho_schemes
from .data import SimulationSpec, holdout_spec, make_folds, simulate
from .errors import FormatError, LocaggError, NetworkError, SolverError, ValidationError
from .families import Family
from .model import FittedModel
from .penalties import chain_graph, grid_graph
from .selection import (
    cv_algorithm_path,
    evaluate,
    lambda_max,
    path_overlap,
    predict_ensemble,
    regularization_path,
    select_local_lambda,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3
EXIT_NETWORK = 4


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a finite number > 0, got {text}")
    return v


def _float_list(text):
    try:
        vals = [_nonneg_float(t) for t in text.split(",") if t.strip()]
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"in list {text!r}: {exc}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _auto_or_float(text):
    return "auto" if text == "auto" else _nonneg_float(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


# ---------------------------------------------------------------- parser

def _add_fit_flags(p, lambda_agg_default="0"):
    p.add_argument("--data", help="dataset file (LAGG binary)")
    p.add_argument("--graph", help="graph file (LAGL binary)")
    p.add_argument("--lambda-agg", type=_auto_or_float, default=lambda_agg_default,
                   help="aggregation weight, or 'auto' for the lambda_max heuristic")
    p.add_argument("--lambda-sm", type=_nonneg_float, default=0.0, help="temporal smoothness weight")
    p.add_argument("--lambda-sp", type=_nonneg_float, default=0.0, help="group-lasso weight")
    p.add_argument("--rho", type=_positive_float, default=1.0, help="initial penalty parameter")
    p.add_argument("--adapt", choices=[a.value for a in Adapt], default="vector")
    p.add_argument("--mu", type=_positive_float, default=10.0)
    p.add_argument("--tau-incr", type=_positive_float, default=2.0)
    p.add_argument("--tau-decr", type=_positive_float, default=2.0)
    p.add_argument("--freeze-after", type=int, default=1000)
    p.add_argument("--eps-abs", type=_positive_float, default=1e-6)
    p.add_argument("--eps-rel", type=_positive_float, default=1e-4)
    p.add_argument("--max-iters", type=_positive_int, default=5000)
    p.add_argument("--min-iters", type=int, default=0)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="parallel width for local solves (default: LOCAGG_THREADS or 1)")


def _add_common(p):
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = _Parser(prog="locagg", description="Local-Aggregate GLMs fit by distributed ADMM.")
    parser.add_argument("--version", action="version", version=f"locagg {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("simulate", help="simulate a tensor-covariate dataset")
    p.add_argument("--n", type=_positive_int)
    p.add_argument("--tau", type=_positive_int)
    p.add_argument("--L", type=_positive_int)
    p.add_argument("--rank", type=_positive_int, default=2)
    p.add_argument("--theta-t", type=_nonneg_float, default=200.0)
    p.add_argument("--theta-l", type=_nonneg_float, default=2.0)
    p.add_argument("--snr", type=_positive_float, default=10.0)
    p.add_argument("--family", choices=["gaussian", "binomial"], default="gaussian")
    p.add_argument("--spatial", choices=["blocks", "smooth"], default="blocks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="dataset output file")
    p.add_argument("--truth-out", help="also write the calibrated true signal")
    p.add_argument("--test-n", type=_positive_int, help="also simulate an independent test set")
    p.add_argument("--test-out", help="test set output file (with --test-n)")
    p.add_argument("--csv-dir", help="also export loc_<l>.csv and y.csv into this directory")
    _add_common(p)

    p = sub.add_parser("graph", help="build a graph Laplacian file")
    p.add_argument("--coords", help="coordinates file: 'l x y [z]' or 'l azimuth elevation'")
    p.add_argument("--edges", help="edge list file: 'l m weight' lines")
    p.add_argument("--grid", type=_positive_int, help="side of a 4-neighbour grid graph")
    p.add_argument("--chain", type=_positive_int, help="number of locations on a chain graph")
    p.add_argument("--n-locations", type=_positive_int, help="location count for --edges")
    p.add_argument("--theta", type=_positive_float, help="kernel bandwidth for --coords")
    p.add_argument("--metric", choices=["euclidean", "polar"], default="euclidean")
    p.add_argument("--out")
    _add_common(p)

    p = sub.add_parser("fit", help="fit a Local-Aggregate model")
    _add_fit_flags(p)
    p.add_argument("--record-path", action="store_true", help="store every iterate in the model")
    p.add_argument("--out", help="model output file")
    p.add_argument("--trace-csv", help="per-iteration residuals, objective and rho")
    p.add_argument("--coef-csv", help="coefficients by time and location")
    p.add_argument("--overlap-csv", help="algorithm path vs regularization path (needs --record-path)")
    p.add_argument("--overlap-grid", type=_positive_int, default=8,
                   help="number of lambda_agg values for --overlap-csv")
    _add_common(p)

    p = sub.add_parser("cv", help="algorithm-path cross-validation")
    _add_fit_flags(p, lambda_agg_default="auto")
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--lambda-max", type=_auto_or_float, default=None,
                   help="alias for --lambda-agg in this command")
    p.add_argument("--seed", type=int, default=0, help="fold assignment seed")
    p.add_argument("--score", choices=["default", "deviance"], default="default")
    p.add_argument("--lambda-sm-grid", type=_float_list,
                   help="select lambda_sm per location over this list first")
    p.add_argument("--lambda-sp-grid", type=_float_list,
                   help="select lambda_sp per location over this list first")
    p.add_argument("--out", help="model output file")
    p.add_argument("--curve-csv", help="CV error by iterate")
    p.add_argument("--coef-csv")
    _add_common(p)

    p = sub.add_parser("predict", help="ensemble predictions for a dataset")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--out", help="predictions CSV")
    _add_common(p)

    p = sub.add_parser("eval", help="prediction error and location detection")
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--truth", help="true signal file (LAGS) for coefficient metrics")
    p.add_argument("--score", choices=["default", "deviance"], default="default")
    p.add_argument("--report", help="key=value report file (default: stdout)")
    _add_common(p)

    p = sub.add_parser("worker", help="serve local solves for a coordinator")
    p.add_argument("--listen", default="127.0.0.1:0", help="host:port (port 0 picks one)")
    p.add_argument("--max-sessions", type=_positive_int)
    p.add_argument("--threads", type=_positive_int)
    _add_common(p)

    p = sub.add_parser("coordinate", help="fit using remote workers")
    p.add_argument("--workers", help="comma-separated host:port list")
    p.add_argument("--timeout", type=_positive_float, default=60.0)
    _add_fit_flags(p)
    p.add_argument("--out", help="model output file")
    p.add_argument("--trace-csv")
    _add_common(p)

    p = sub.add_parser("bench", help="rho-scheme or kernel benchmarks")
    p.add_argument("--kernels", action="store_true", help="compare compiled and Python kernels")
    p.add_argument("--seeds", type=_positive_int, default=10)
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--tau", type=_positive_int, default=30)
    p.add_argument("--L", type=_positive_int, default=16)
    p.add_argument("--family", choices=["gaussian", "binomial"], default="gaussian")
    p.add_argument("--lambda-agg", type=_nonneg_float, default=100.0)
    p.add_argument("--lambda-sm", type=_nonneg_float, default=1.0)
    p.add_argument("--lambda-sp", type=_nonneg_float, default=0.0)
    p.add_argument("--max-iters", type=_positive_int, default=20000)
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall times so repeated runs give identical CSV")
    p.add_argument("--out", help="CSV output (default: stdout)")
    _add_common(p)
    return parser


# ---------------------------------------------------------------- config merge

def _apply_config(parser, argv):
    """Parse twice: once to find ``--config``, again with its values as defaults."""
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    values = lio.read_config(path)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in values.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{path}: unknown option {key!r} for '{args.command}'")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = _bool(raw)
        elif action.type is not None:
            try:
                defaults[dest] = action.type(raw)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{path}: {key}: {exc}") from None
        else:
            if action.choices is not None and raw not in action.choices:
                raise UsageError(f"{path}: {key}: {raw!r} is not one of {list(action.choices)}")
            defaults[dest] = raw
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(args, *names):
    for name in names:
        if getattr(args, name.replace("-", "_")) in (None, ""):
            raise UsageError(f"{args.command}: missing required flag --{name}")


# ---------------------------------------------------------------- helpers

def _admm_config(args, record_path=False):
    return AdmmConfig(rho_init=args.rho, adapt=args.adapt, mu=args.mu, tau_incr=args.tau_incr,
                      tau_decr=args.tau_decr, freeze_after=args.freeze_after,
                      eps_abs=args.eps_abs, eps_rel=args.eps_rel, max_iters=args.max_iters,
                      min_iters=args.min_iters, record_path=record_path)


def _resolve_lambda_agg(value, dataset, graph):
    return lambda_max(dataset, graph) if value == "auto" else float(value)


def _write_trace(path, trace):
    rows = []
    for k in range(len(trace)):
        rho = trace.rho[k]
        rows.append((k + 1, float(trace.r_norm[k]), float(trace.s_norm[k]),
                     float(trace.objective[k]), float(np.min(rho)), float(np.max(rho))))
    lio.write_csv(path, ["iterate", "r_norm", "s_norm", "objective", "rho_min", "rho_max"], rows)


def _write_coefs(path, B):
    rows = [(t, l, float(B[t, l])) for l in range(B.shape[1]) for t in range(B.shape[0])]
    lio.write_csv(path, ["time", "location", "coefficient"], rows)


def _finish_fit(model, out):
    if out:
        lio.save_model(model, out)
    status = "converged" if model.converged else "did not converge"
    print(f"{status} after {model.iterate} iterations", file=sys.stderr)
    return EXIT_OK if model.converged else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    _require(args, "n", "tau", "L", "out")
    if args.test_out and not args.test_n:
        raise UsageError("simulate: --test-out needs --test-n")
    spec = SimulationSpec(n=args.n, tau=args.tau, L=args.L, rank=args.rank,
                          theta_t=args.theta_t, theta_l=args.theta_l, snr=args.snr,
                          family=args.family, seed=args.seed, spatial=args.spatial)
    ds, signal = simulate(spec)
    lio.save_dataset(ds, args.out)
    if args.truth_out:
        lio.save_signal(signal, args.truth_out)
    if args.csv_dir:
        os.makedirs(args.csv_dir, exist_ok=True)
        lio.export_csv(ds, args.csv_dir)
    if args.test_n:
        _require(args, "test-out")
        test, _ = simulate(holdout_spec(spec, args.test_n), signal)
        lio.save_dataset(test, args.test_out)
    return EXIT_OK


def cmd_graph(args):
    _require(args, "out")
    sources = [s for s in ("coords", "edges", "grid", "chain") if getattr(args, s) is not None]
    if len(sources) != 1:
        raise UsageError("graph: give exactly one of --coords, --edges, --grid, --chain")
    if args.coords:
        _require(args, "theta")
        graph = lio.graph_from_coords_file(args.coords, args.theta, args.metric)
    elif args.edges:
        graph = lio.read_edge_list(args.edges, args.n_locations)
    elif args.grid:
        graph = grid_graph(args.grid)
    else:
        graph = chain_graph(args.chain)
    lio.save_graph(graph, args.out)
    return EXIT_OK


def cmd_fit(args):
    _require(args, "data", "graph")
    if args.overlap_csv and not args.record_path:
        raise UsageError("fit: --overlap-csv needs --record-path")
    ds = lio.load_dataset(args.data)
    graph = lio.load_graph(args.graph)
    lam = _resolve_lambda_agg(args.lambda_agg, ds, graph)
    penalty = PenaltyConfig(lam, args.lambda_sm, args.lambda_sp)
    config = _admm_config(args, args.record_path)
    state, trace = fit(ds, graph, penalty, config, threads=args.threads)
    model = FittedModel.from_fit(state, trace, ds, penalty)
    if args.trace_csv:
        _write_trace(args.trace_csv, trace)
    if args.coef_csv:
        _write_coefs(args.coef_csv, model.B)
    if args.overlap_csv:
        top = max(lam, 1e-8)
        lambdas = np.geomspace(top * 1e-3, top, args.overlap_grid)
        reg = regularization_path(ds, graph, penalty, lambdas, config, threads=args.threads)
        lio.write_csv(args.overlap_csv, ["iterate", "nearest_lambda_agg", "distance", "relative"],
                      path_overlap(trace.iterates, reg, lambdas))
    return _finish_fit(model, args.out)


def cmd_cv(args):
    _require(args, "data", "graph")
    ds = lio.load_dataset(args.data)
    graph = lio.load_graph(args.graph)
    lam_value = args.lambda_max if args.lambda_max is not None else args.lambda_agg
    lam = _resolve_lambda_agg(lam_value, ds, graph)
    folds = make_folds(ds.n, args.folds, args.seed)
    lam_sm, lam_sp = args.lambda_sm, args.lambda_sp
    if args.lambda_sm_grid or args.lambda_sp_grid:
        sm_grid = args.lambda_sm_grid or [args.lambda_sm]
        sp_grid = args.lambda_sp_grid or [args.lambda_sp]
        grid = [(a, b) for a in sm_grid for b in sp_grid]
        choice = select_local_lambda(ds, grid, folds, threads=args.threads)
        lam_sm, lam_sp = choice.lambda_sm, choice.lambda_sp
    penalty = PenaltyConfig(lam, lam_sm, lam_sp)
    result = cv_algorithm_path(ds, graph, penalty, _admm_config(args), folds, lambda_agg=lam,
                               score=args.score, threads=args.threads)
    if args.curve_csv:
        rows = [(k + 1, float(e)) for k, e in enumerate(result.cv_curve)]
        lio.write_csv(args.curve_csv, ["iterate", "cv_error"], rows)
    if args.coef_csv:
        _write_coefs(args.coef_csv, result.final_model.B)
    if args.out:
        lio.save_model(result.final_model, args.out)
    print(f"lambda_agg={lam!r} k_opt={result.k_opt} cv_error={float(result.cv_curve[result.k_opt - 1])!r}")
    return EXIT_OK


def cmd_predict(args):
    _require(args, "model", "data", "out")
    model = lio.load_model(args.model)
    ds = lio.load_dataset(args.data)
    pred = predict_ensemble(model, ds)
    if model.family is Family.BINOMIAL:
        rows = [(i, float(m), int(c)) for i, (m, c) in enumerate(zip(pred.mean, pred.labels))]
        lio.write_csv(args.out, ["subject", "probability", "label"], rows)
    else:
        lio.write_csv(args.out, ["subject", "prediction"],
                      [(i, float(m)) for i, m in enumerate(pred.mean)])
    return EXIT_OK


def cmd_eval(args):
    _require(args, "model", "data")
    model = lio.load_model(args.model)
    ds = lio.load_dataset(args.data)
    truth = lio.load_signal(args.truth) if args.truth else None
    report = evaluate(model, ds, truth, args.score).as_dict()
    report["score"] = args.score
    report["iterate"] = model.iterate
    report["converged"] = int(model.converged)
    if args.report:
        lio.write_report(args.report, report)
    else:
        for k, v in report.items():
            print(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    return EXIT_OK


def cmd_worker(args):
    from .dist.protocol import parse_address
    from .dist.worker import Worker

    host, port = parse_address(args.listen)
    try:
        worker = Worker(host, port, threads=args.threads)
    except OSError as exc:
        raise NetworkError(f"cannot listen on {args.listen}: {exc.strerror}") from exc
    print(f"listening on {worker.address}", flush=True)
    try:
        worker.serve(args.max_sessions)
    except KeyboardInterrupt:
        pass
    finally:
        worker.close()
    return EXIT_OK


def cmd_coordinate(args):
    from .dist.coordinator import fit_distributed

    _require(args, "workers", "data", "graph")
    workers = [w.strip() for w in args.workers.split(",") if w.strip()]
    ds = lio.load_dataset(args.data)
    graph = lio.load_graph(args.graph)
    lam = _resolve_lambda_agg(args.lambda_agg, ds, graph)
    penalty = PenaltyConfig(lam, args.lambda_sm, args.lambda_sp)
    state, trace, _ = fit_distributed(ds, graph, penalty, _admm_config(args), workers,
                                      timeout=args.timeout)
    model = FittedModel.from_fit(state, trace, ds, penalty)
    if args.trace_csv:
        _write_trace(args.trace_csv, trace)
    return _finish_fit(model, args.out)


def _emit_csv(out, header, rows):
    if out:
        lio.write_csv(out, header, rows)
        return
    import csv

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def cmd_bench(args):
    if args.kernels:
        rows = bench_kernels()
        header = ["backend", "family", "n", "tau", "seconds", "max_abs_diff"]
        if args.no_timing:
            rows = [r[:4] + ("",) + r[5:] for r in rows]
        _emit_csv(args.out, header, rows)
        return EXIT_OK
    spec = RhoBenchSpec(n=args.n, tau=args.tau, L=args.L, family=args.family,
                        lambda_agg=args.lambda_agg, lambda_sm=args.lambda_sm,
                        lambda_sp=args.lambda_sp, max_iters=args.max_iters)
    seeds = range(args.first_seed, args.first_seed + args.seeds)
    rows = []
    for seed, scheme, iters, secs, obj, conv in bench_rho_schemes(spec, seeds):
        rows.append((seed, scheme, iters, "" if args.no_timing else secs, obj, int(conv)))
    _emit_csv(args.out, ["seed", "scheme", "iterations", "seconds", "objective", "converged"], rows)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "graph": cmd_graph,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "worker": cmd_worker,
    "coordinate": cmd_coordinate,
    "bench": cmd_bench,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_INVALID
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NetworkError as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        name = exc.filename if exc.filename is not None else ""
        print(f"error: {name}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except LocaggError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
