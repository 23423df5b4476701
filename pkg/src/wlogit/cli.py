"""Command-line interface: ``wlogit {fit,cv,loocv,weights,simulate,bounds}``.

Exit codes: 0 success, 1 usage/input error, 2 numerical non-convergence.
Results go to files (or stdout for ``bounds``); diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import io as wio
from .core import Dataset
from .sim import METHODS, STUDY_GRID, SimConfig, run_simulation
from .solver import SeparationError, fit
from .theory import (
    BoundInputs,
    beta_min_threshold,
    failure_probability,
    l1_error_bounds,
    prediction_error_bounds,
    s_constant,
)
from .tuning import LossKind, cross_validate, default_path, loocv, theoretical_lambda_floor, threshold_coefficients
from .weights import Scheme, WeightConfig, WeightVector, compute_weights, normalize

log = logging.getLogger("wlogit")

EXIT_OK, EXIT_INPUT, EXIT_NONCONV = 0, 1, 2


class UsageError(Exception):
    pass


def _default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _add_data_args(sp):
    sp.add_argument("--data", required=True, help="CSV file, response in the first column by default")
    sp.add_argument("--response", default="0", help="response column: 0-based index or header name")
    sp.add_argument("--delimiter", default=",")
    sp.add_argument("--no-header", action="store_true")
    sp.add_argument("--na", choices=["error", "droprow"], default="error")
    sp.add_argument("--label-map", help='map text labels, e.g. "ALL=1,AML=0"')


def _add_solver_args(sp):
    sp.add_argument("--config", help="JSON run config (solver/weights/tuning sections)")
    sp.add_argument("--intercept", action="store_true", help="fit an unpenalized intercept")
    sp.add_argument("--max-iter", type=int)
    sp.add_argument("--tol-kkt", type=float)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=None)


def _add_weight_args(sp, flag="--weights"):
    sp.add_argument(flag, dest="scheme", choices=[s.value for s in Scheme], default="uniform")
    sp.add_argument("--r", type=float, default=None, help="concentration exponent for type1/type2")
    sp.add_argument("--pilot-lambda", type=float, default=None,
                    help="fixed lambda for the type4 pilot Lasso (default: CV-selected)")
    sp.add_argument("--k", type=int, default=None, help="CV folds")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wlogit", description="Weighted-Lasso sparse logistic regression")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="fit at one lambda (or the CV-selected one)")
    _add_data_args(sp)
    _add_weight_args(sp)
    _add_solver_args(sp)
    sp.add_argument("--lambda", dest="lam", default="cv", help='penalty level or "cv"')
    sp.add_argument("--limit", type=float, default=0.0, help="threshold reported coefficients")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("cv", help="k-fold cross-validation over the lambda path")
    _add_data_args(sp)
    _add_weight_args(sp)
    _add_solver_args(sp)
    sp.add_argument("--loss", choices=[k.value for k in LossKind], default=None)
    sp.add_argument("--n-lambda", type=int, default=None)
    sp.add_argument("--min-ratio", type=float, default=None)
    sp.add_argument("--out", required=True, help="JSON report path")
    sp.add_argument("--csv", help="also write the per-lambda table as CSV")

    sp = sub.add_parser("loocv", help="leave-one-out model size and misclassification")
    _add_data_args(sp)
    _add_weight_args(sp)
    _add_solver_args(sp)
    sp.add_argument("--lambda", dest="lam", default="cv", help='penalty level or "cv" (per held-out fit)')
    sp.add_argument("--limit", type=float, default=1e-4)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("weights", help="compute penalty weights")
    _add_data_args(sp)
    _add_weight_args(sp, "--scheme")
    _add_solver_args(sp)
    sp.add_argument("--raw", action="store_true", help="do not normalize to sum p")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("simulate", help="Monte-Carlo comparison of the five estimators")
    sp.add_argument("--pattern", choices=["1", "2"], default="1")
    sp.add_argument("--p", type=int, default=50)
    sp.add_argument("--rho", type=float, default=0.3)
    sp.add_argument("--replicates", type=int, default=100)
    sp.add_argument("--n-train", type=int, default=100)
    sp.add_argument("--n-test", type=int, default=200)
    sp.add_argument("--methods", default=",".join(METHODS))
    sp.add_argument("--grid", action="store_true", help="sweep pattern x p x rho as in the original study")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=None)
    sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("bounds", help="oracle-inequality calculators")
    sp.add_argument("--L", type=float, default=1.0)
    sp.add_argument("--B", type=float, default=1.0)
    sp.add_argument("--A", type=float, default=1.0)
    sp.add_argument("--lambda", dest="lam", type=float, default=None, help="default: theoretical floor")
    sp.add_argument("--dstar", type=int, default=9)
    sp.add_argument("--k", type=float, default=0.5)
    sp.add_argument("--eps", type=float, default=0.0)
    sp.add_argument("--wmin", type=float, default=1.0)
    sp.add_argument("--wmax", type=float, default=None)
    sp.add_argument("--wh-sq", type=float, default=None, help="sum of squared support weights (default d*)")
    sp.add_argument("--n", type=int, default=100)
    sp.add_argument("--p", type=int, default=50)
    sp.add_argument("--delta", type=float, default=None)
    sp.add_argument("--B-star", dest="B_star", type=float, default=None)
    return ap


def _load_data(a) -> Dataset:
    resp = int(a.response) if a.response.lstrip("-").isdigit() else a.response
    spec = wio.CsvSpec(
        a.data,
        response_column=resp,
        delimiter=a.delimiter,
        has_header=not a.no_header,
        na_policy=a.na,
        label_map=wio.parse_label_map(a.label_map) if a.label_map else None,
    )
    return wio.load_csv(spec)


def _run_config(a) -> wio.RunConfig:
    rc = wio.load_run_config(a.config) if getattr(a, "config", None) else wio.RunConfig()
    solver = rc.solver
    over = {}
    if getattr(a, "intercept", False):
        over["fit_intercept"] = True
    if getattr(a, "max_iter", None) is not None:
        over["max_iter"] = a.max_iter
    if getattr(a, "tol_kkt", None) is not None:
        over["tol_kkt"] = a.tol_kkt
    if over:
        solver = replace(solver, **over)
    wcfg = rc.weights
    if getattr(a, "r", None) is not None or getattr(a, "pilot_lambda", None) is not None:
        wcfg = WeightConfig(
            r=a.r if a.r is not None else wcfg.r,
            lasso_pilot_lambda=a.pilot_lambda if a.pilot_lambda is not None else wcfg.lasso_pilot_lambda,
            zero_floor=wcfg.zero_floor,
        )
    tuning = rc.tuning
    tover = {}
    if getattr(a, "k", None) is not None:
        tover["k"] = a.k
    if getattr(a, "loss", None) is not None:
        tover["loss"] = a.loss
    if getattr(a, "n_lambda", None) is not None:
        tover["n_lambda"] = a.n_lambda
    if getattr(a, "min_ratio", None) is not None:
        tover["min_ratio"] = a.min_ratio
    if tover:
        tuning = replace(tuning, **tover)
    return replace(rc, solver=solver, weights=wcfg, tuning=tuning)


def _cv_lambda(data, w, rc, seed, jobs):
    path = default_path(data, w, rc.tuning.n_lambda, rc.tuning.min_ratio, rc.solver.fit_intercept)
    k = min(rc.tuning.k, data.n)
    return cross_validate(data, w, path, k, rc.tuning.loss, seed, rc.solver, jobs=jobs)


def _weights(data, scheme, rc, seed, jobs, normalized=True) -> WeightVector:
    scheme = Scheme(scheme)
    pilot = None
    if scheme is Scheme.TYPE4:
        uniform = WeightVector.uniform(data.p)
        lam = rc.weights.lasso_pilot_lambda
        if lam is None:
            lam = _cv_lambda(data, uniform, rc, seed, jobs).lambda_opt
        pilot = fit(data, uniform, lam, rc.solver).coef
    w = compute_weights(scheme, data, rc.weights, pilot)
    return normalize(w) if normalized else w


def _jobs(a) -> int:
    j = a.jobs if a.jobs is not None else _default_jobs()
    if j < 1:
        raise UsageError("--jobs must be >= 1")
    return j


def _parse_lambda(text):
    if text == "cv":
        return None
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f'--lambda must be a number or "cv", got {text!r}') from None
    if v < 0:
        raise UsageError("--lambda must be >= 0")
    return v


def cmd_fit(a) -> int:
    lam = _parse_lambda(a.lam)
    data = _load_data(a)
    rc = _run_config(a)
    jobs = _jobs(a)
    w = _weights(data, a.scheme, rc, a.seed, jobs)
    if lam is None:
        lam = _cv_lambda(data, w, rc, a.seed, jobs).lambda_opt
    res = fit(data, w, lam, rc.solver)
    doc = wio.to_jsonable(res)
    _, supp = threshold_coefficients(res.coef, a.limit)
    doc["limit"] = a.limit
    doc["support"] = [j + 1 for j in supp.indices]
    Path(a.out).write_text(wio._encode(doc) + "\n", encoding="utf-8")
    if not res.converged:
        log.warning("solver did not converge (kkt violation %.3g)", res.kkt_max_violation)
        return EXIT_NONCONV
    return EXIT_OK


def cmd_cv(a) -> int:
    data = _load_data(a)
    rc = _run_config(a)
    jobs = _jobs(a)
    w = _weights(data, a.scheme, rc, a.seed, jobs)
    rep = _cv_lambda(data, w, rc, a.seed, jobs)
    wio.write_report(rep, a.out, "json")
    if a.csv:
        wio.write_report(rep, a.csv, "csv")
    if rep.fold_failures:
        log.warning("%d fold path(s) stopped early on diverging iterates", rep.fold_failures)
    return EXIT_OK


def cmd_loocv(a) -> int:
    lam = _parse_lambda(a.lam)
    data = _load_data(a)
    rc = _run_config(a)
    jobs = _jobs(a)
    w = _weights(data, a.scheme, rc, a.seed, jobs)
    summ = loocv(data, w, lam, a.limit, rc.solver, inner_k=rc.tuning.k, seed=a.seed, jobs=jobs)
    doc = wio.to_jsonable(summ)
    doc.update({"scheme": a.scheme, "limit": a.limit, "lambda": lam})
    Path(a.out).write_text(wio._encode(doc) + "\n", encoding="utf-8")
    if summ.n_failed:
        log.warning("%d held-out fit(s) did not converge and were excluded", summ.n_failed)
        return EXIT_NONCONV
    return EXIT_OK


def cmd_weights(a) -> int:
    data = _load_data(a)
    rc = _run_config(a)
    w = _weights(data, a.scheme, rc, a.seed, _jobs(a), normalized=not a.raw)
    Path(a.out).write_text(wio.dumps(w), encoding="utf-8")
    return EXIT_OK


def _sim_name(pattern, p, rho) -> str:
    return f"sim_pattern{pattern}_p{p}_rho{rho:g}"


def cmd_simulate(a) -> int:
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = _jobs(a)
    methods = tuple(m.strip() for m in a.methods.split(",") if m.strip())
    if a.grid:
        configs = [(pat.value, p, rho) for pat, p, rho in STUDY_GRID]
    else:
        configs = [(a.pattern, a.p, a.rho)]
    summary = []
    for pattern, p, rho in configs:
        try:
            cfg = SimConfig(a.n_train, a.n_test, p, rho, pattern, a.replicates, a.seed, methods)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        log.info("simulating pattern=%s p=%d rho=%g (%d replicates)", pattern, p, rho, a.replicates)
        rep = run_simulation(cfg, jobs=jobs)
        name = _sim_name(pattern, p, rho)
        wio.write_report(rep, out / f"{name}.json", "json")
        wio.write_report(rep, out / f"{name}.csv", "csv")
        summary.extend(wio.sim_csv_rows(rep))
    wio.write_csv_rows(summary, wio.SIM_CSV_COLUMNS, out / "summary.csv")
    return EXIT_OK


def cmd_bounds(a) -> int:
    wmax = a.wmax if a.wmax is not None else a.wmin
    lam = a.lam if a.lam is not None else theoretical_lambda_floor(a.L, a.A, a.wmin, a.n, a.p)
    inp = BoundInputs(a.L, a.B, a.A, lam, a.dstar, a.k, a.eps, a.wmin, wmax, a.wh_sq, a.n, a.p)
    doc = {
        "inputs": {
            "L": a.L, "B": a.B, "A": a.A, "lambda": lam, "d_star": a.dstar, "k": a.k, "eps_n": a.eps,
            "w_min": a.wmin, "w_max": wmax, "wh_sq": inp.wh_sq, "n": a.n, "p": a.p,
        },
        "s": s_constant(a.L, a.B),
        "lambda_floor": inp.lambda_floor,
        "lambda_below_floor": lam < inp.lambda_floor,
        "l1_error": l1_error_bounds(inp),
        "prediction_error": prediction_error_bounds(inp, a.B_star),
        "beta_min": beta_min_threshold(inp, a.delta),
        "failure_probability": failure_probability(a.p, a.A),
    }
    sys.stdout.write(wio._encode(doc) + "\n")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "cv": cmd_cv,
    "loocv": cmd_loocv,
    "weights": cmd_weights,
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if a.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return COMMANDS[a.command](a)
    except (UsageError, wio.InputError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except SeparationError as exc:
        log.error("%s", exc)
        return EXIT_NONCONV
    finally:
        logging.captureWarnings(False)


if __name__ == "__main__":
    sys.exit(main())
