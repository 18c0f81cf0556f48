"""Returns data pipeline: price ingestion, penalised long-lag ARCH, a GARCH(1,1)
benchmark, and autocorrelation functions of squared returns."""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .archmodel import ArchXDataset, ArchXModel, ParamVector, variance_path
from .penalties import Family, PenaltySpec
from .selection import IcKind, PostCache, build_grid, find_lambda_max, fit_path, gss_select, ic_value

log = logging.getLogger(__name__)


class DataError(ValueError):
    def __init__(self, msg: str, row: Optional[int] = None):
        super().__init__(msg if row is None else f"row {row}: {msg}")
        self.row = row


@dataclass
class ReturnsSeries:
    dates: list
    x: np.ndarray
    scale: float = 100.0
    prices: Optional[np.ndarray] = None
    price_dates: Optional[list] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if len(self.dates) != self.x.size:
            raise ValueError("dates and returns differ in length")
        if not np.all(np.isfinite(self.x)):
            raise ValueError("returns must be finite")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")

    @property
    def n(self) -> int:
        return self.x.size


def _parse_date(text: str, fmt: Optional[str]) -> dt.date:
    text = text.strip()
    if fmt:
        return dt.datetime.strptime(text, fmt).date()
    return dt.date.fromisoformat(text)


def load_prices_csv(path, date_col: str = "date", price_col: str = "price",
                    date_format: Optional[str] = None, scale: float = 100.0) -> ReturnsSeries:
    """Read (date, price) rows and return ``scale * diff(log price)``.

    Row numbers in errors count the header as row 1.
    """
    dates, prices = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or date_col not in reader.fieldnames \
                or price_col not in reader.fieldnames:
            raise DataError(f"columns {date_col!r} and {price_col!r} required, "
                            f"found {reader.fieldnames}", 1)
        for i, rec in enumerate(reader, start=2):
            try:
                d = _parse_date(rec[date_col], date_format)
                price = float(rec[price_col])
            except (ValueError, TypeError, AttributeError) as exc:
                raise DataError(f"cannot parse ({rec.get(date_col)!r}, {rec.get(price_col)!r}): {exc}",
                                i) from None
            if not (price > 0 and math.isfinite(price)):
                raise DataError(f"price must be positive, got {price}", i)
            if dates and d <= dates[-1]:
                raise DataError(f"date {d} does not follow {dates[-1]}", i)
            dates.append(d)
            prices.append(price)
    if len(prices) < 2:
        raise DataError("need at least two prices")
    p = np.asarray(prices)
    x = scale * np.diff(np.log(p))
    return ReturnsSeries(dates[1:], x, scale, p, dates)


def empirical_acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag``."""
    z = np.asarray(series, dtype=float)
    if z.size <= max_lag:
        raise ValueError(f"series of length {z.size} too short for {max_lag} lags")
    z = z - z.mean()
    denom = float(z @ z)
    if denom == 0.0:
        raise ValueError("constant series has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for h in range(1, max_lag + 1):
        out[h] = float(z[:-h] @ z[h:]) / denom
    return out


# GARCH(1,1) benchmark

@dataclass
class Garch11Params:
    omega_g: float
    arch_coef: float
    garch_coef: float
    mu: float = 0.0
    loglik: float = float("nan")
    converged: bool = True

    def __post_init__(self):
        if not self.omega_g > 0:
            raise ValueError("omega_g must be positive")
        if self.arch_coef < 0 or self.garch_coef < 0:
            raise ValueError("GARCH coefficients must be non-negative")

    @property
    def persistence(self) -> float:
        return self.arch_coef + self.garch_coef

    def fourth_moment_ok(self, kappa: float = 3.0) -> bool:
        a, g = self.arch_coef, self.garch_coef
        return kappa * a * a + 2 * a * g + g * g < 1


def _garch_filter(params, x, s0, grad: bool = False):
    mu, om, a, g = params
    e = x - mu
    e2 = e * e
    n = x.size
    u = om + a * e2[:-1]
    sig2 = np.empty(n)
    sig2[0] = s0
    sig2[1:] = lfilter([1.0], [1.0, -g], u, zi=[g * s0])[0]
    if not grad:
        return sig2, e
    den = [1.0, -g]
    d = np.zeros((n, 4))
    d[1:, 0] = lfilter([1.0], den, -2.0 * a * e[:-1])
    d[1:, 1] = lfilter([1.0], den, np.ones(n - 1))
    d[1:, 2] = lfilter([1.0], den, e2[:-1])
    d[1:, 3] = lfilter([1.0], den, sig2[:-1])
    return sig2, e, d


def garch11_variance(params: Garch11Params, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s0 = float(np.var(x))
    return _garch_filter((params.mu, params.omega_g, params.arch_coef, params.garch_coef), x, s0)[0]


def fit_garch11(series) -> Garch11Params:
    """Gaussian QMLE of GARCH(1,1); the first variance is the sample variance."""
    x = np.asarray(series.x if isinstance(series, ReturnsSeries) else series, dtype=float)
    n = x.size
    if n < 100:
        raise ValueError(f"GARCH(1,1) fit needs at least 100 observations, got {n}")
    s0 = float(np.var(x))

    def negll(par):
        sig2, e, d = _garch_filter(par, x, s0, grad=True)
        if np.any(sig2 <= 0) or not np.all(np.isfinite(sig2)):
            return 1e10, np.zeros(4)
        ll = -0.5 * np.sum(np.log(sig2) + e * e / sig2)
        w = -0.5 * (1 / sig2 - e * e / sig2**2)
        g = d.T @ w
        g[0] += np.sum(e / sig2)
        return -ll / n, -g / n

    best = None
    for a0, g0 in ((0.05, 0.90), (0.10, 0.80), (0.20, 0.50)):
        start = np.array([x.mean(), s0 * (1 - a0 - g0), a0, g0])
        with warnings.catch_warnings():
            # SLSQP clips its own trial steps back into the bounds and says so
            warnings.filterwarnings("ignore", "Values in x were outside bounds", RuntimeWarning)
            res = minimize(negll, start, jac=True, method="SLSQP",
                           bounds=[(None, None), (1e-8 * s0, None), (0.0, 1.0), (0.0, 1.0)],
                           constraints=[{"type": "ineq", "fun": lambda p: 1.0 - 1e-6 - p[2] - p[3],
                                         "jac": lambda p: np.array([0.0, 0.0, -1.0, -1.0])}],
                           options={"maxiter": 1000, "ftol": 1e-12})
        if best is None or res.fun < best.fun:
            best = res
    if not best.success:
        raise RuntimeError(f"GARCH(1,1) fit did not converge: {best.message}")
    mu, om, a, g = best.x
    return Garch11Params(float(om), float(max(a, 0.0)), float(max(g, 0.0)), float(mu),
                         loglik=float(-best.fun * n), converged=True)


def simulate_garch11(params: Garch11Params, n: int, seed=None, burn: int = 1000) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n + burn)
    om, a, g = params.omega_g, params.arch_coef, params.garch_coef
    s2 = om / max(1 - a - g, 1e-6)
    out = np.empty(n + burn)
    for t in range(n + burn):
        eps = math.sqrt(s2) * z[t]
        out[t] = eps
        s2 = om + a * eps * eps + g * s2
    return params.mu + out[burn:]


def simulate_arch(alpha, omega: float, n: int, seed=None, burn: int = 1000, mu: float = 0.0):
    """Pure ARCH(p) path with Gaussian innovations."""
    alpha = np.asarray(alpha, dtype=float)
    rng = np.random.default_rng(seed)
    p = alpha.size
    z = rng.standard_normal(n + burn)
    if p == 0:
        return mu + math.sqrt(omega) * z[burn:]
    nz = np.flatnonzero(alpha)
    lags = nz + 1
    coef = alpha[nz]
    e2 = np.zeros(n + burn + p)
    out = np.empty(n + burn)
    sqrt = math.sqrt
    for t in range(n + burn):
        s2 = omega + float(coef @ e2[t + p - lags])
        eps = sqrt(s2) * z[t]
        out[t] = eps
        e2[t + p] = eps * eps
    return mu + out[burn:]


def fourth_moment_probe(x, blocks: int = 8) -> bool:
    """Heuristic check that ``x`` has a finite fourth moment.

    Flags failure when a single observation carries more than 10% of
    ``sum(x^4)`` or the running mean of ``x^4`` keeps climbing across blocks.
    """
    x4 = (np.asarray(x) - np.mean(x)) ** 4
    total = x4.sum()
    if not np.isfinite(total) or total == 0:
        return False
    if x4.max() / total > 0.10:
        return False
    means = [x4[: (k * x4.size) // blocks].mean() for k in range(1, blocks + 1)]
    return means[-1] <= 2.0 * float(np.median(means[: blocks // 2]))


def _ar_acf(coef, max_lag: int) -> np.ndarray:
    """Autocorrelations of a stationary AR(p) from its coefficients."""
    coef = np.asarray(coef, dtype=float)
    p = coef.size
    rho = np.zeros(max(max_lag, p) + 1)
    rho[0] = 1.0
    if p:
        A = np.eye(p)
        c = np.zeros(p)
        for h in range(1, p + 1):
            for i in range(1, p + 1):
                k = abs(h - i)
                if k == 0:
                    c[h - 1] += coef[i - 1]
                else:
                    A[h - 1, k - 1] -= coef[i - 1]
        rho[1:p + 1] = np.linalg.solve(A, c)
        for h in range(p + 1, rho.size):
            rho[h] = coef @ rho[h - p:h][::-1]
    return rho[:max_lag + 1]


def implied_acf_arch(theta, max_lag: int, probe: bool = True, sim_n: int = 1_000_000,
                     seed: int = 12345) -> np.ndarray:
    """ACF of squared returns implied by an ARCH(p) fit, lags ``0..max_lag``.

    Uses the AR(p) representation of the squared process; falls back to a
    long simulation when the lag polynomial is explosive or the fourth-moment
    probe fails.
    """
    if not isinstance(theta, ParamVector):
        raise TypeError("theta must be a ParamVector")
    if np.any(theta.xi > 0):
        raise ValueError("implied ACF is defined for pure ARCH fits only")
    alpha = theta.alpha
    if alpha.sum() >= 1:
        warnings.warn("squared-process AR polynomial is explosive; using simulation")
        return simulated_acf_arch(theta, max_lag, sim_n, seed)
    if probe and alpha.sum() > 0:
        x = simulate_arch(alpha, theta.omega, 100_000, seed=seed)
        if not fourth_moment_probe(x):
            warnings.warn("fourth moment looks infinite; using simulation")
            return simulated_acf_arch(theta, max_lag, sim_n, seed)
    return _ar_acf(alpha, max_lag)


def simulated_acf_arch(theta: ParamVector, max_lag: int, n: int = 1_000_000, seed: int = 12345):
    x = simulate_arch(theta.alpha, theta.omega, n, seed=seed)
    return empirical_acf(x**2, max_lag)


def implied_acf_garch(params: Garch11Params, max_lag: int, sim_n: int = 1_000_000,
                      seed: int = 12345) -> np.ndarray:
    """Closed-form GARCH(1,1) squared-return ACF, lags ``0..max_lag``."""
    a, g = params.arch_coef, params.garch_coef
    if a + g >= 1 or not params.fourth_moment_ok():
        warnings.warn("GARCH fourth moment not finite; using simulation")
        return simulated_acf_garch(params, max_lag, sim_n, seed)
    rho = np.empty(max_lag + 1)
    rho[0] = 1.0
    if max_lag >= 1:
        r1 = a * (1 - a * g - g * g) / (1 - 2 * a * g - g * g)
        rho[1:] = r1 * (a + g) ** np.arange(max_lag)
    return rho


def simulated_acf_garch(params: Garch11Params, max_lag: int, n: int = 1_000_000, seed: int = 12345):
    x = simulate_garch11(params, n, seed=seed) - params.mu
    return empirical_acf(x**2, max_lag)


# pipeline

@dataclass
class EmpiricsResult:
    series: ReturnsSeries
    data: ArchXDataset
    theta: ParamVector
    lam: float
    lambda_max: float
    selected_lags: list
    criteria: dict
    garch: Garch11Params
    evaluations: int
    meta: dict = field(default_factory=dict)


def fit_long_arch(series: ReturnsSeries, p: int = 130, family="scad", kind="bic",
                  method: str = "gss", grid_points: int = 100, presample_value=None,
                  **fit_kw):
    """Penalised ARCH(p) with the penalty level chosen by the modified criterion."""
    data = ArchXDataset(series.x, p=p, presample_value=presample_value)
    model = ArchXModel(data)
    fam = PenaltySpec(Family.parse(family))
    lam_max = find_lambda_max(model, fam, **fit_kw)
    cache = PostCache(model)
    if method == "gss":
        res = gss_select(model, fam, lam_max, kind, post_cache=cache, **fit_kw)
        pen, post, lam, evals = res.penalized_fit, res.fit, res.lam, res.evaluations
    elif method == "grid":
        path = fit_path(model, fam, build_grid(lam_max, grid_points), kind, True,
                        post_cache=cache, **fit_kw)
        pen, post, lam, evals = path.chosen_fit, path.chosen_post_fit, path.chosen_lambda, grid_points
    else:
        raise ValueError(f"unknown selection method {method!r}")
    return data, model, pen, post, lam, lam_max, evals


def run_empirics(series: ReturnsSeries, p: int = 130, family="scad", kind="bic",
                 method: str = "gss", max_lag: int = 200, presample_value=None,
                 **fit_kw) -> EmpiricsResult:
    data, model, pen, post, lam, lam_max, evals = fit_long_arch(
        series, p, family, kind, method, presample_value=presample_value, **fit_kw)
    theta = model.unpack(post.theta)
    lags = [int(j) + 1 for j in np.flatnonzero(theta.alpha > 0)]
    criteria = {k.value: ic_value(post.loglik, pen.d_hat, k, data.n) for k in IcKind}
    garch = fit_garch11(series)
    meta = {"scale": series.scale, "presample_value": data.presample_value, "p": p,
            "family": Family.parse(family).value, "ic": IcKind.parse(kind).value,
            "method": method, "n": data.n}
    return EmpiricsResult(series, data, theta, lam, lam_max, lags, criteria, garch, evals, meta)


def _fmt(v) -> str:
    return repr(float(v))


def emit_figure_data(series: ReturnsSeries, arch_theta: ParamVector, garch: Garch11Params,
                     max_lag: int, outdir, data: Optional[ArchXDataset] = None,
                     acf_kw: Optional[dict] = None) -> dict:
    """Write plot-ready CSVs for the returns, variance and ACF panels."""
    os.makedirs(outdir, exist_ok=True)
    acf_kw = acf_kw or {}
    if data is None:
        data = ArchXDataset(series.x, p=arch_theta.p)
    paths = {}

    if series.prices is not None:
        paths["A"] = os.path.join(outdir, "panel_a_prices.csv")
        with open(paths["A"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "price"])
            for d, v in zip(series.price_dates, series.prices):
                w.writerow([d.isoformat(), _fmt(v)])

    paths["B"] = os.path.join(outdir, "panel_b_returns.csv")
    with open(paths["B"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "return"])
        for d, v in zip(series.dates, series.x):
            w.writerow([d.isoformat(), _fmt(v)])

    arch_var = variance_path(arch_theta, data)
    garch_var = garch11_variance(garch, series.x)
    paths["C"] = os.path.join(outdir, "panel_c_volatility.csv")
    with open(paths["C"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "arch_variance", "garch_variance"])
        for d, a, g in zip(series.dates, arch_var, garch_var):
            w.writerow([d.isoformat(), _fmt(a), _fmt(g)])

    emp = empirical_acf((series.x - series.x.mean()) ** 2, max_lag)
    arch_acf = implied_acf_arch(arch_theta, max_lag, **acf_kw)
    garch_acf = implied_acf_garch(garch, max_lag, **{k: v for k, v in acf_kw.items()
                                                    if k in ("sim_n", "seed")})
    paths["D"] = os.path.join(outdir, "panel_d_acf.csv")
    with open(paths["D"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lag", "empirical", "arch", "garch"])
        for h in range(1, max_lag + 1):
            w.writerow([h, _fmt(emp[h]), _fmt(arch_acf[h]), _fmt(garch_acf[h])])
    return paths


def write_summary(result: EmpiricsResult, path) -> dict:
    """JSON summary; schema documented in the README."""
    th = result.theta
    doc = {
        "n": result.data.n,
        "p": th.p,
        "lambda": result.lam,
        "lambda_max": result.lambda_max,
        "penalized_evaluations": result.evaluations,
        "selected_lags": result.selected_lags,
        "d_nonzero": len(result.selected_lags),
        "loadings": {str(l): float(th.alpha[l - 1]) for l in result.selected_lags},
        "mu": th.mu,
        "omega": th.omega,
        "criteria": result.criteria,
        "garch": {"mu": result.garch.mu, "omega": result.garch.omega_g,
                  "arch": result.garch.arch_coef, "garch": result.garch.garch_coef,
                  "loglik": result.garch.loglik},
        "metadata": result.meta,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
    return doc
