"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line.

Tolerances are fixed up front and are never tuned to the observed output.
"""
import math
import time

import numpy as np
import pytest
from scipy import stats

from pqmle import (ArchXDataset, Family, PenaltySpec, TrueParams, maximize_penalized,
                   sandwich_covariance, score, simulate_archx)
from pqmle.archmodel import LocationModel, ParamVector, loglik
from pqmle.empirics import (Garch11Params, implied_acf_arch, implied_acf_garch,
                            simulated_acf_arch, simulated_acf_garch, simulate_arch)
from pqmle.montecarlo import ScenarioConfig, average_error, round1, run_scenario
from pqmle.penalties import penalty_deriv, penalty_value
from pqmle.selection import find_lambda_max, gss_select

pytestmark = pytest.mark.slow


def test_closed_form_location_estimators(acceptance_line):
    t0 = time.perf_counter()
    worst = {"lasso": 0.0, "hard": 0.0}
    for k in range(1, 21):
        xbar = k / 10
        model = LocationModel(np.full(4, xbar))
        xm = float(np.mean(model.x))
        for j in range(1, 21):
            lam = j / 20
            # the hard-threshold formula is the local maximiser reached from the QMLE
            start = np.array([max(xm, 0.0)])
            f = maximize_penalized(model, PenaltySpec(Family.LASSO, lam), init=start, restarts=0)
            worst["lasso"] = max(worst["lasso"], abs(f.theta[0] - (xm - lam) * (xm > lam)))
            f = maximize_penalized(model, PenaltySpec(Family.HARD, lam), init=start, restarts=0)
            worst["hard"] = max(worst["hard"], abs(f.theta[0] - xm * (xm > lam)))
    elapsed = time.perf_counter() - t0
    ok = worst["lasso"] <= 1e-8 and worst["hard"] <= 1e-8 and elapsed < 10
    acceptance_line(1, ok, f"max|err| lasso={worst['lasso']:.2e} hard={worst['hard']:.2e} "
                           f"(tol 1e-8), {elapsed:.1f}s (< 10s)")
    assert ok


def test_average_error_exact_arithmetic(acceptance_line):
    value = average_error((1.9, 61.5, 0.8, 52.6), (3, 3, 3, 3))
    printed = round1(value)
    ok = abs(value - 22.15) < 1e-12 and printed == "22.1"
    acceptance_line(2, ok, f"average error {value!r}, rounded {printed} (expect 22.15 -> 22.1)")
    assert ok


def test_derivatives(acceptance_line):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    truth = TrueParams(0.0, 0.2, [0.15, 0.15, 0.1, 0, 0, 0], [0.15, 0.15, 0.1, 0, 0, 0])
    data = simulate_archx(truth, 1000, seed=rng)
    worst_score = 0.0
    for _ in range(100):
        theta = np.concatenate([[rng.normal(0, 0.1), rng.uniform(0.1, 1.0)],
                                rng.uniform(0.01, 0.2, size=12)])
        g = score(theta, data)
        fd = np.empty_like(g)
        for i in range(theta.size):
            h = 1e-6 * max(1.0, abs(theta[i]))
            up, dn = theta.copy(), theta.copy()
            up[i] += h
            dn[i] -= h
            fd[i] = (loglik(up, data) - loglik(dn, data)) / (2 * h)
        worst_score = max(worst_score, np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1.0))

    worst_pen = 0.0
    h = 1e-8
    for fam in Family:
        for lam in (0.1, 0.5, 1.3):
            spec = PenaltySpec(fam, lam)
            pts = np.concatenate([[0.0, lam, 3.7 * lam], rng.uniform(0, 6 * lam, size=200)])
            fd = (penalty_value(spec, pts + h) - penalty_value(spec, pts)) / h
            worst_pen = max(worst_pen, float(np.max(np.abs(penalty_deriv(spec, pts) - fd))))
    elapsed = time.perf_counter() - t0
    ok = worst_score < 1e-5 and worst_pen < 1e-6 and elapsed < 30
    acceptance_line(3, ok, f"score rel err {worst_score:.2e} (< 1e-5), penalty deriv err "
                           f"{worst_pen:.2e} (< 1e-6), {elapsed:.1f}s (< 30s)")
    assert ok


def test_boundary_mass(acceptance_line):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    zeros = 0
    reps = 2000
    for _ in range(reps):
        model = LocationModel(rng.standard_normal(2000))
        fit = maximize_penalized(model, PenaltySpec(Family.LASSO, 0.0))
        zeros += fit.theta[0] == 0.0
    frac = 100 * zeros / reps
    elapsed = time.perf_counter() - t0
    ok = abs(frac - 50) <= 4 and elapsed < 60
    acceptance_line(4, ok, f"exact-zero share {frac:.1f}% (50 +/- 4), {elapsed:.1f}s (< 60s)")
    assert ok


@pytest.fixture(scope="module")
def table1_run():
    cfg = ScenarioConfig(n=1000, alpha=[0.15, 0.15, 0.10, 0, 0, 0], xi=[0.15, 0.15, 0.10, 0, 0, 0],
                         rho=0.8, replications=200, seed=20240501,
                         estimators=["arch_qmle", "oracle_qmle", "p_scad", "pgss_scad"],
                         ic_kinds=["bic"])
    t0 = time.perf_counter()
    report = run_scenario(cfg)
    return report, time.perf_counter() - t0


def test_table1_mini_replication(acceptance_line, table1_run):
    report, elapsed = table1_run
    ps = report.row("p_scad", "bic")
    qm = report.row("arch_qmle", "")
    oq = report.row("oracle_qmle", "")
    checks = [
        ("P-SCAD CZ_a", ps.cz_alpha, 97.2, 5), ("P-SCAD CZ_x", ps.cz_xi, 99.4, 5),
        ("P-SCAD AE", ps.average_error, 5.3, 2), ("QMLE CZ_a", qm.cz_alpha, 59.1, 5),
        ("QMLE AE", qm.average_error, 22.3, 2), ("Oracle AE", oq.average_error, 0.1, 2),
    ]
    ok = all(abs(v - target) <= tol for _, v, target, tol in checks) and elapsed < 7200
    detail = ", ".join(f"{name}={v:.1f} ({target}+/-{tol})" for name, v, target, tol in checks)
    acceptance_line(5, ok, f"{detail}; {elapsed:.0f}s")
    assert ok


def test_gss_agrees_with_grid(acceptance_line, table1_run):
    report, _ = table1_run
    agree = 0
    fewer = True
    for rec in report.records:
        grid = rec["diag"][("p_scad", "bic")]
        gss = rec["diag"][("pgss_scad", "bic")]
        agree += grid["d_hat"] == gss["d_hat"]
        fewer &= gss["evaluations"] < grid["evaluations"]
    share = 100 * agree / len(report.records)
    max_evals = max(r["diag"][("pgss_scad", "bic")]["evaluations"] for r in report.records)
    ok = share >= 90 and fewer
    acceptance_line(8, ok, f"d_hat agreement {share:.1f}% (>= 90), max GSS optimizations "
                           f"{max_evals} (< 100 every replication: {fewer})")
    assert ok


@pytest.fixture(scope="module")
def sparsity_runs():
    truth = TrueParams(0.0, 0.7, [0.3, 0.0], [])
    out = {}
    t0 = time.perf_counter()
    for n in (500, 1000, 2000):
        spec = PenaltySpec(Family.SCAD, 0.5 * n ** (-1 / 3))
        runs = []
        for rep in range(500):
            rng = np.random.default_rng(np.random.SeedSequence(606, spawn_key=(n, rep)))
            data = simulate_archx(truth, n, seed=rng)
            runs.append((data, maximize_penalized(data, spec)))
        out[n] = runs
    return out, time.perf_counter() - t0


def test_sparsity_consistency(acceptance_line, sparsity_runs):
    runs, elapsed = sparsity_runs
    frac = {n: 100 * np.mean([f.theta[3] == 0.0 for _, f in r]) for n, r in runs.items()}
    monotone = frac[1000] >= frac[500] - 3 and frac[2000] >= frac[1000] - 3
    ok = monotone and frac[2000] >= 90 and elapsed < 900
    acceptance_line(6, ok, "P(beta2_hat = 0) " + ", ".join(f"n={n}: {v:.1f}%" for n, v in frac.items())
                    + f" (non-decreasing +/-3pp, >= 90 at n=2000), {elapsed:.0f}s")
    assert ok


def test_oracle_property(acceptance_line, sparsity_runs):
    runs, _ = sparsity_runs
    t0 = time.perf_counter()
    z = []
    for data, fit in runs[2000]:
        cov = sandwich_covariance(fit.theta, data)
        z.append((fit.theta[2] - 0.3) / math.sqrt(cov[2, 2]))
    z = np.asarray(z)
    coverage = 100 * np.mean(np.abs(z) <= stats.norm.ppf(0.975))
    ks_p = stats.kstest(z, "norm").pvalue
    elapsed = time.perf_counter() - t0
    ok = 92 <= coverage <= 98 and ks_p > 0.01
    acceptance_line(7, ok, f"95% coverage {coverage:.1f}% ([92, 98]), KS p={ks_p:.3f} (> 0.01), "
                           f"{elapsed:.0f}s plus shared fits")
    assert ok


def test_implied_acf(acceptance_line):
    t0 = time.perf_counter()
    arch = ParamVector(0.0, 0.7, [0.3], [])
    a_imp = implied_acf_arch(arch, 20, probe=False)
    a_sim = simulated_acf_arch(arch, 20, n=1_000_000, seed=91)
    garch = Garch11Params(0.05, 0.05, 0.90)
    g_imp = implied_acf_garch(garch, 20)
    g_sim = simulated_acf_garch(garch, 20, n=1_000_000, seed=92)
    err_a = float(np.max(np.abs(a_imp[1:] - a_sim[1:])))
    err_g = float(np.max(np.abs(g_imp[1:] - g_sim[1:])))
    ratio_err = float(np.max(np.abs(g_imp[2:] / g_imp[1:-1] - 0.95)))
    elapsed = time.perf_counter() - t0
    ok = err_a <= 0.015 and err_g <= 0.015 and ratio_err <= 1e-10 and elapsed < 120
    acceptance_line(9, ok, f"max|implied - simulated| ARCH={err_a:.4f} GARCH={err_g:.4f} "
                           f"(<= 0.015), ratio err {ratio_err:.1e} (<= 1e-10), {elapsed:.0f}s")
    assert ok


def test_long_lag_recovery(acceptance_line):
    t0 = time.perf_counter()
    true_lags = {1, 2, 3, 33, 56}
    alpha = np.zeros(80)
    alpha[[0, 1, 2, 32, 55]] = [0.2, 0.15, 0.1, 0.1, 0.1]
    assert np.sum(alpha**3) < 1 / 15
    scad = PenaltySpec(Family.SCAD)
    hits = 0
    reps = 50
    for rep in range(reps):
        seed = np.random.SeedSequence(2024, spawn_key=(rep,))
        x = simulate_arch(alpha, 0.35, 5000, seed=np.random.default_rng(seed))
        data = ArchXDataset(x, p=80)
        lam_max = find_lambda_max(data, scad)
        fit = gss_select(data, scad, lam_max, "bic").penalized_fit
        chosen = {j + 1 for j in range(80) if fit.beta[j] > 0}
        hits += len(chosen & true_lags) >= 4 and len(chosen - true_lags) <= 8
    share = 100 * hits / reps
    elapsed = time.perf_counter() - t0
    ok = share >= 80 and elapsed < 3600
    acceptance_line(10, ok, f"{share:.0f}% of {reps} replications recover >= 4/5 lags with <= 8 "
                            f"false positives (>= 80), {elapsed:.0f}s (< 3600s)")
    assert ok
