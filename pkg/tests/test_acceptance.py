"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a PASS/FAIL line; the lines are printed together at the
end of the pytest run (see ``conftest.py``). Running this file directly with
``python tests/test_acceptance.py`` prints the same lines.
"""
import math
import os
import random
import time

import numpy as np
import pytest

from conftest import make_data
from wlogit.cli import main as cli_main
from wlogit.core import Coefficients, Dataset, SupportSet, gradient, neg_log_likelihood
from wlogit.io import save_csv
from wlogit.sim import Pattern, SimConfig, beta_star, gen_ar1_gaussian, gen_responses, run_simulation
from wlogit.solver import SolverConfig, fit, fit_by_transform, kkt_residuals
from wlogit.theory import (
    BoundInputs,
    beta_min_threshold,
    cone_slack,
    estimate_stabil_constants,
    l1_error_bounds,
    prediction_error_bounds,
    s_constant,
    sample_weighted_cone,
    score_sup_norm,
)
from wlogit.tuning import cross_validate, default_path, lambda_max
from wlogit.weights import Scheme, WeightConfig, WeightVector, compute_weights, mcdiarmid_tail_bound, normalize

RESULTS = []


def record(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}"
    RESULTS.append(line)
    return ok


def random_weights(p, rng):
    return normalize(WeightVector(rng.uniform(0.5, 2.0, p)))


# 1 -------------------------------------------------------------------------


def grid_min(data, w, lam):
    g = np.linspace(-10.0, 10.0, 401)
    b1, b2 = np.meshgrid(g, g, indexing="ij")
    eta = data.x[:, 0, None, None] * b1 + data.x[:, 1, None, None] * b2
    loss = np.mean(np.logaddexp(0.0, eta) - data.y[:, None, None] * eta, axis=0)
    return float((loss + lam * (w.w[0] * np.abs(b1) + w.w[1] * np.abs(b2))).min())


def test_c01_grid_oracle():
    # one-time kernel compilation is not part of the budget
    fit(make_data(5, 2, 0), WeightVector.uniform(2), 0.1)
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = -math.inf
    for seed in range(10):
        d = make_data(20, 2, seed, beta=rng.uniform(-2, 2, 2))
        w = random_weights(2, rng)
        lam = rng.uniform(0.01, 0.2)
        res = fit(d, w, lam)
        worst = max(worst, res.objective - grid_min(d, w, lam))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 5.0
    assert record(1, ok, f"max(objective - grid min) = {worst:.3e} (<= 1e-6), runtime {elapsed:.2f}s (< 5s)")


# 2 -------------------------------------------------------------------------


def test_c02_kkt_certification():
    rng = np.random.default_rng(202)
    checked, worst = 0, 0.0
    for trial in range(40):
        n, p = int(rng.integers(20, 120)), int(rng.integers(2, 60))
        d = make_data(n, p, 2000 + trial)
        for scheme in (Scheme.UNIFORM, Scheme.TYPE1, Scheme.TYPE2, Scheme.TYPE3):
            w = normalize(compute_weights(scheme, d, WeightConfig()))
            lm = lambda_max(d, w)
            for frac in (1.5, 0.7, 0.2, 0.05):
                for route in (fit, fit_by_transform):
                    res = route(d, w, frac * lm)
                    if res.converged:
                        checked += 1
                        worst = max(worst, float(np.max(kkt_residuals(d, res))))
    # fits produced through the path and CV machinery
    d = make_data(80, 20, 7)
    w = WeightVector.uniform(20)
    cv = cross_validate(d, w, default_path(d, w, n_lambda=30), k=5, seed=1)
    res = fit(d, w, cv.lambda_opt)
    checked += 1
    worst = max(worst, float(np.max(kkt_residuals(d, res))))
    ok = worst <= 1e-6 and checked > 0
    assert record(2, ok, f"{checked} converged fits, max KKT residual {worst:.3e} (<= 1e-6)")


# 3 -------------------------------------------------------------------------


def test_c03_gradient_finite_differences():
    rng = np.random.default_rng(303)
    worst = 0.0
    h = 1e-6
    for trial in range(100):
        n, p = int(rng.integers(5, 60)), int(rng.integers(1, 10))
        d = make_data(n, p, 3000 + trial)
        beta = rng.standard_normal(p)
        g = gradient(d, Coefficients(beta))
        fd = np.empty(p)
        for j in range(p):
            e = np.zeros(p)
            e[j] = h
            fd[j] = (neg_log_likelihood(d, Coefficients(beta + e)) - neg_log_likelihood(d, Coefficients(beta - e))) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd - g)) / max(np.max(np.abs(g)), 1e-12)))
    assert record(3, worst <= 1e-5, f"max relative FD mismatch {worst:.3e} over 100 instances (<= 1e-5)")


# 4 -------------------------------------------------------------------------


def test_c04_route_equivalence():
    # both routes solved to a tight KKT tolerance so that coefficient
    # differences reflect the transformation, not the stopping rule
    cfg = SolverConfig(tol_kkt=1e-9)
    rng = np.random.default_rng(404)
    worst_b, worst_f = 0.0, 0.0
    for trial in range(20):
        n, p = int(rng.integers(20, 101)), int(rng.integers(2, 51))
        d = make_data(n, p, 4000 + trial)
        w = random_weights(p, rng)
        lam = rng.uniform(0.05, 0.8) * lambda_max(d, w)
        a, b = fit(d, w, lam, cfg), fit_by_transform(d, w, lam, cfg)
        worst_b = max(worst_b, float(np.max(np.abs(a.beta - b.beta))))
        worst_f = max(worst_f, abs(a.objective - b.objective))
    ok = worst_b <= 1e-5 and worst_f <= 1e-8
    assert record(4, ok, f"max |beta diff| {worst_b:.3e} (<= 1e-5), max |objective diff| {worst_f:.3e} (<= 1e-8)")


# 5 -------------------------------------------------------------------------


def test_c05_weight_bound_consistency():
    rng = np.random.default_rng(505)
    worst = 0.0
    for _ in range(50):
        n, p = int(rng.integers(10, 500)), int(rng.integers(2, 300))
        r = float(rng.uniform(0.2, 3.0))
        x = rng.standard_normal((n, p)) * rng.uniform(0.1, 10)
        y = np.zeros(n)
        y[0] = 1.0
        d = Dataset(x, y)
        w = compute_weights(Scheme.TYPE1, d, WeightConfig(r=r))
        col_max = np.max(np.abs(x), axis=0)
        for j in range(p):
            got = mcdiarmid_tail_bound(n, p, w.w[j], col_max[j])
            worst = max(worst, abs(got - p ** (-r)))
    assert record(5, worst <= 1e-12, f"max |bound - p^-r| {worst:.3e} over 50 tuples (<= 1e-12)")


# 6 -------------------------------------------------------------------------


def test_c06_s_constant_sharpness():
    rng = random.Random(606)
    ok_sweep = True
    for _ in range(100):
        L, B = rng.uniform(0.01, 3.0), rng.uniform(0.01, 3.0)
        ok_sweep &= s_constant(L, B) > (1 + math.exp(L * B)) ** -4
    gap = abs(s_constant(1e-4, 1e-4) - 0.125)
    ok = ok_sweep and gap <= 1e-6
    assert record(6, ok, f"s > (1+e^LB)^-4 on 100 points: {ok_sweep}; |s(1e-4,1e-4) - 1/8| = {gap:.3e} (<= 1e-6)")


# 7 -------------------------------------------------------------------------

SIM_CONFIGS = [(Pattern.PATTERN1, 50, 0.3), (Pattern.PATTERN2, 50, 0.3), (Pattern.PATTERN1, 100, 0.5)]
SIM_SEED = 0


def ordering_checks(pm):
    l1 = {m: pm[m]["l1_error_mean"] for m in pm}
    pe = {m: pm[m]["pred_error_rms"] for m in pm}
    return {
        "l1 TypeII <= TypeI": l1["type2"] <= l1["type1"],
        "l1 TypeII < Lasso": l1["type2"] < l1["lasso"],
        "l1 TypeIV max": l1["type4"] == max(l1.values()),
        "pred TypeI < Lasso": pe["type1"] < pe["lasso"],
        "pred TypeII < Lasso": pe["type2"] < pe["lasso"],
        "pred TypeIII < Lasso": pe["type3"] < pe["lasso"],
    }


def test_c07_table_ordering():
    jobs = min(4, os.cpu_count() or 1)
    t0 = time.perf_counter()
    parts, all_ok = [], True
    for pattern, p, rho in SIM_CONFIGS:
        cfg = SimConfig(p=p, rho=rho, pattern=pattern, n_replicates=100, seed=SIM_SEED)
        rep = run_simulation(cfg, jobs=jobs)
        checks = ordering_checks(rep.per_method)
        failed = [k for k, v in checks.items() if not v]
        all_ok &= not failed
        l1 = ", ".join(f"{m}={rep.per_method[m]['l1_error_mean']:.4f}" for m in cfg.methods)
        pe = ", ".join(f"{m}={rep.per_method[m]['pred_error_rms']:.3f}" for m in cfg.methods)
        tag = "ok" if not failed else "violated: " + "; ".join(failed)
        parts.append(f"(pattern {pattern.value}, p={p}, rho={rho}) {tag} | l1 {l1} | pred {pe}")
    elapsed = time.perf_counter() - t0
    all_ok &= elapsed < 600
    detail = f"seed {SIM_SEED}, {elapsed:.0f}s at jobs={jobs}\n      " + "\n      ".join(parts)
    assert record(7, all_ok, detail)


# 8 -------------------------------------------------------------------------


def test_c08_score_scaling():
    p, rho = 50, 0.3
    bstar = beta_star(Pattern.PATTERN1, p)
    medians = []
    for n in (100, 1000, 10_000):
        vals = []
        for seed in range(20):
            sx, sy = np.random.SeedSequence([808, n, seed]).spawn(2)
            x = gen_ar1_gaussian(n, p, rho, sx)
            y = gen_responses(x, bstar, sy)
            vals.append(score_sup_norm(Dataset(x, y), bstar))
        medians.append(float(np.median(vals)))
    ratios = [medians[0] / medians[1], medians[1] / medians[2]]
    target = math.sqrt(10)
    ok = all(target / 3 <= r <= 3 * target for r in ratios)
    assert record(8, ok, f"median sup-norm {medians[0]:.4f}, {medians[1]:.4f}, {medians[2]:.4f}; "
                         f"step ratios {ratios[0]:.3f}, {ratios[1]:.3f} (sqrt(10) = {target:.3f}, factor 3)")


# 9 -------------------------------------------------------------------------


def test_c09_cone_sampler():
    rng = np.random.default_rng(909)
    p = 20
    w = random_weights(p, rng)
    H = SupportSet((0, 3, 5, 11))
    b = sample_weighted_cone(p, H, w, 3.0, 0.05, 100_000, seed=9)
    slack = float(cone_slack(b, H, w, 3.0, 0.05).min())
    rep = estimate_stabil_constants(np.eye(p), H, w, 3.0, 0.0, 100_000, seed=9)
    ok = b.shape[0] == 100_000 and slack >= -1e-12 and rep.c1_hat >= 1 - 1e-10
    assert record(9, ok, f"min slack {slack:.3e} over 1e5 samples (>= -1e-12); identity c1_hat {rep.c1_hat:.6f} (>= 1 - 1e-10)")


# 10 ------------------------------------------------------------------------


def scalar_reference(L, B, lam, d, k, eps, w_min, wh2):
    e = math.exp(L * B)
    s = e / (2 * (1 + e) ** 2)
    return (
        2 * lam * d / (s * k * w_min) + (lam + 2 * s) / (lam * w_min) * eps,
        2 * lam * wh2 / (s * k * w_min) + (lam + 2 * s) / (lam * w_min) * eps,
        3 * lam * lam * d / (s * s * k) + (2 * lam / s + 3) * eps,
        3 * lam * lam * wh2 / (s * s * k) + (2 * lam / s + 3) * eps,
        4 * lam * d / (2 * s * k) + (lam + 2 * s) / lam * eps,
    )


def test_c10_bound_calculators():
    rng = random.Random(1010)
    worst = 0.0
    for _ in range(100):
        L, B = rng.uniform(0.05, 4), rng.uniform(0.05, 4)
        lam, d, k = rng.uniform(1e-3, 20), rng.randint(0, 50), rng.uniform(0.01, 1)
        eps, w_min, wh2 = rng.uniform(0, 2), rng.uniform(0.05, 1), rng.uniform(0, 50)
        inp = BoundInputs(L=L, B=B, A=1, lam=lam, d_star=d, k=k, eps_n=eps, w_min=w_min, w_max=2 * w_min, wh_sq=wh2)
        l1, pr = l1_error_bounds(inp), prediction_error_bounds(inp)
        got = (l1["weighted_stabil_bound"], l1["stabil_bound"], pr["weighted_stabil_bound"], pr["stabil_bound"],
               beta_min_threshold(inp)["B0"])
        for g, want in zip(got, scalar_reference(L, B, lam, d, k, eps, w_min, wh2)):
            worst = max(worst, abs(g - want) / max(1.0, abs(want)))
    assert record(10, worst <= 1e-12, f"max relative deviation from scalar script {worst:.3e} over 100 tuples (<= 1e-12)")


# 11 ------------------------------------------------------------------------


def test_c11_cli_determinism(tmp_path, capsys):
    data = tmp_path / "data.csv"
    save_csv(make_data(40, 6, 11), data)
    small = tmp_path / "small.csv"
    save_csv(make_data(12, 4, 12), small)
    invocations = {
        "fit": ["fit", "--data", data, "--weights", "type4", "--seed", 3, "--out", "{out}/fit.json"],
        "cv": ["cv", "--data", data, "--weights", "type2", "--k", 5, "--n-lambda", 20, "--seed", 3,
               "--out", "{out}/cv.json", "--csv", "{out}/cv.csv"],
        "loocv": ["loocv", "--data", small, "--weights", "type1", "--seed", 3, "--out", "{out}/loocv.json"],
        "weights": ["weights", "--data", data, "--scheme", "type4", "--seed", 3, "--out", "{out}/w.json"],
        "simulate": ["simulate", "--p", 12, "--replicates", 4, "--n-train", 40, "--n-test", 20, "--seed", 3,
                     "--out", "{out}/sim"],
    }
    outputs, codes = {}, []
    for jobs in (1, 8):
        for rep in (0, 1):
            out = tmp_path / f"j{jobs}r{rep}"
            out.mkdir()
            for name, args in invocations.items():
                argv = [str(a).replace("{out}", str(out)) for a in args] + ["--jobs", str(jobs)]
                codes.append(cli_main(argv))
            codes.append(cli_main(["bounds", "--lambda", "7"]))
            (out / "bounds.json").write_text(capsys.readouterr().out)
            outputs[(jobs, rep)] = {
                str(f.relative_to(out)): f.read_bytes() for f in sorted(out.rglob("*")) if f.is_file()
            }
    base = outputs[(1, 0)]
    same = all(outputs[key] == base for key in outputs)
    ok = same and all(c == 0 for c in codes) and len(base) >= 8
    assert record(11, ok, f"{len(base)} output files byte-identical across repeats at --jobs 1 and 8: {same}; "
                          f"exit codes {sorted(set(codes))}")


if __name__ == "__main__":
    import sys

    raise SystemExit(pytest.main([__file__, "-q", *sys.argv[1:]]))
