"""Monte Carlo scenarios: simulate ARCH-X data, run a roster of selection
procedures and tabulate how often zero and non-zero loadings are classified
correctly."""
from __future__ import annotations

import configparser
import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .archmodel import ArchXModel, TrueParams, simulate_archx
from .optimizer import FitResult, post_estimate, unpenalized_qmle
from .penalties import Family, PenaltySpec
from .selection import (IcKind, PostCache, build_grid, find_lambda_max, fit_path,
                        gss_select, ic_value)

log = logging.getLogger(__name__)

ROSTER = ("arch_qmle", "oracle_qmle", "lasso", "scad", "p_lasso", "p_scad",
          "pgss_lasso", "pgss_scad", "exhaustive")
NO_IC = ("arch_qmle", "oracle_qmle")
LABELS = {"arch_qmle": "ARCH QMLE", "oracle_qmle": "Oracle QMLE", "lasso": "LASSO",
          "scad": "SCAD", "p_lasso": "P-LASSO", "p_scad": "P-SCAD",
          "pgss_lasso": "PGSS-LASSO", "pgss_scad": "PGSS-SCAD", "exhaustive": "Exhaustive"}
ALIASES = {"oracle": "oracle_qmle", "qmle": "arch_qmle", "arch": "arch_qmle",
           "pgss": "pgss_scad", "gss": "pgss_scad"}
COLUMNS = ("False alpha=0", "True alpha=0", "False xi=0", "True xi=0", "Average error")
FAIL_FLAG = 0.10


class ConfigError(ValueError):
    def __init__(self, fieldname: str, msg: str):
        super().__init__(f"{fieldname}: {msg}")
        self.field = fieldname


@dataclass
class ScenarioConfig:
    n: int
    alpha: Sequence[float]
    xi: Sequence[float]
    rho: float = 0.8
    replications: int = 200
    seed: int = 0
    estimators: Sequence[str] = ("arch_qmle", "oracle_qmle", "p_scad")
    ic_kinds: Sequence[str] = ("bic",)
    mu: float = 0.0
    omega: Optional[float] = None
    grid_points: int = 100
    restarts: Optional[int] = None
    workers: int = 1
    max_dbeta: int = 14
    burn: int = 500

    def __post_init__(self):
        self.alpha = [float(v) for v in self.alpha]
        self.xi = [float(v) for v in self.xi]
        names = [e.strip().lower().replace("-", "_") for e in self.estimators]
        self.estimators = [ALIASES.get(e, e) for e in names]
        self.ic_kinds = [IcKind.parse(k).value for k in self.ic_kinds]
        bad = [e for e in self.estimators if e not in ROSTER]
        if bad:
            raise ConfigError("estimators", f"unknown estimator(s) {bad}; roster is {list(ROSTER)}")
        if self.replications < 1:
            raise ConfigError("replications", "must be >= 1")
        if self.n < 8:
            raise ConfigError("n", "must be >= 8")
        if any(v < 0 for v in self.alpha + self.xi):
            raise ConfigError("alpha", "loadings must be non-negative")
        if not -1 < self.rho < 1:
            raise ConfigError("rho", "must lie in (-1, 1)")
        if self.omega is None:
            self.omega = 1.0 - sum(self.alpha) - sum(self.xi)
        if not self.omega > 0:
            raise ConfigError("omega", f"must be positive, got {self.omega}")
        if sum(a**3 for a in self.alpha) >= 1 / 15:
            raise ConfigError("alpha", "moment condition sum(alpha^3) < 1/15 violated")

    @property
    def p(self) -> int:
        return len(self.alpha)

    @property
    def q(self) -> int:
        return len(self.xi)

    @property
    def true_params(self) -> TrueParams:
        return TrueParams(self.mu, self.omega, self.alpha, self.xi)

    def resolved(self) -> dict:
        out = asdict(self)
        out["p"], out["q"] = self.p, self.q
        return out

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        if "scenario" not in parser:
            raise ConfigError("[scenario]", "section missing")
        return cls.from_mapping(dict(parser["scenario"]))

    @classmethod
    def from_mapping(cls, raw: dict) -> "ScenarioConfig":
        """Build from string values as found in a ``[scenario]`` section.

        Keys: n, alpha, xi (comma lists), rho, replications, seed, estimators,
        ic, mu, omega, grid_points, restarts, workers, max_dbeta, burn.
        """
        known = {"n", "alpha", "xi", "rho", "replications", "seed", "estimators", "ic", "mu",
                 "omega", "grid_points", "restarts", "workers", "max_dbeta", "burn"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown key")
        for key in ("n", "alpha", "xi"):
            if key not in raw:
                raise ConfigError(key, "required key missing")

        def conv(key, fn, default=None):
            if key not in raw or str(raw[key]).strip() == "":
                return default
            try:
                return fn(str(raw[key]).strip())
            except ValueError:
                raise ConfigError(key, f"cannot parse {raw[key]!r}") from None

        def floats(s):
            return [float(v) for v in s.split(",") if v.strip()]

        def names(s):
            return [v.strip() for v in s.split(",") if v.strip()]

        kw = dict(
            n=conv("n", int), alpha=conv("alpha", floats), xi=conv("xi", floats),
            rho=conv("rho", float, 0.8), replications=conv("replications", int, 200),
            seed=conv("seed", int, 0), estimators=conv("estimators", names, ["p_scad"]),
            ic_kinds=conv("ic", names, ["bic"]), mu=conv("mu", float, 0.0),
            omega=conv("omega", float), grid_points=conv("grid_points", int, 100),
            restarts=conv("restarts", int), workers=conv("workers", int, 1),
            max_dbeta=conv("max_dbeta", int, 14), burn=conv("burn", int, 500))
        try:
            return cls(**kw)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("ic", str(exc)) from None


def _zero_set(item) -> frozenset:
    if isinstance(item, FitResult):
        return item.zero_set
    return frozenset(int(j) for j in item)


def classification_rates(fits, truth: TrueParams) -> tuple:
    """``(FZ_alpha, CZ_alpha, FZ_xi, CZ_xi)`` in percent.

    ``fits`` holds FitResults or zero-index collections (0-based into the
    loadings). A block without non-zero (zero) true loadings reports FZ = 0
    (CZ = 100).
    """
    beta = truth.beta
    p = truth.p
    counts = np.zeros(4)
    totals = np.zeros(4)
    for item in fits:
        zeros = _zero_set(item)
        for j, b in enumerate(beta):
            blk = 0 if j < p else 2
            slot = blk if b > 0 else blk + 1
            totals[slot] += 1
            counts[slot] += j in zeros
    rates = []
    for k in range(4):
        if totals[k] == 0:
            rates.append(0.0 if k % 2 == 0 else 100.0)
        else:
            rates.append(100.0 * counts[k] / totals[k])
    return tuple(rates)


def _exact(v) -> Fraction:
    return Fraction(repr(float(v)))


def average_error(rates, dims) -> float:
    """Dimension-weighted misclassification percentage.

    ``rates = (FZ_a, CZ_a, FZ_x, CZ_x)``, ``dims = (dim a^N, dim a^Z, dim xi^N, dim xi^Z)``.
    Evaluated in rational arithmetic on the decimal values of the inputs.
    """
    fz_a, cz_a, fz_x, cz_x = (_exact(r) for r in rates)
    na, za, nx, zx = (int(d) for d in dims)
    total = na + za + nx + zx
    if total == 0:
        return 0.0
    num = na * fz_a + za * (100 - cz_a) + nx * fz_x + zx * (100 - cz_x)
    return float(num / total)


@dataclass
class ReportRow:
    estimator: str
    ic: str
    fz_alpha: float
    cz_alpha: float
    fz_xi: float
    cz_xi: float
    average_error: float
    replications_used: int
    failures: int

    @property
    def label(self) -> str:
        return LABELS.get(self.estimator, self.estimator)


@dataclass
class MCReport:
    rows: list
    dims: tuple
    config: dict
    records: list = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        total = self.config.get("replications", 0) or 1
        return any(r.failures / total > FAIL_FLAG for r in self.rows)

    def row(self, estimator: str, ic: str = "") -> ReportRow:
        for r in self.rows:
            if r.estimator == estimator and r.ic == ic:
                return r
        raise KeyError((estimator, ic))


def _rep_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(rep,)))


def exhaustive_search(data, kind="bic", max_dbeta: int = 14) -> FitResult:
    """Restricted QMLE for every zero pattern, keeping the criterion minimiser."""
    model = data if isinstance(data, ArchXModel) else ArchXModel(data)
    d_beta = model.d_beta
    if d_beta > max_dbeta:
        raise ValueError(f"exhaustive search over 2^{d_beta} = {2**d_beta} models refused "
                         f"(max_dbeta={max_dbeta})")
    kind = IcKind.parse(kind)
    best, best_val = None, math.inf
    # sparsest patterns first so that ties keep the smaller model
    for k in range(d_beta, -1, -1):
        for zeros in itertools.combinations(range(d_beta), k):
            fit = post_estimate(model, zeros)
            if not fit.converged:
                continue
            val = ic_value(fit.loglik, model.d_gamma + d_beta - k, kind, model.n)
            if val < best_val:
                best, best_val = fit, val
    if best is None:
        raise RuntimeError("no restricted fit converged")
    best.extra["ic"] = best_val
    best.extra["models"] = 2**d_beta
    return best


def run_replication(config: ScenarioConfig, rep: int) -> dict:
    """One replication: returns zero sets per (estimator, ic); None marks a failure."""
    rng = _rep_rng(config.seed, rep)
    truth = config.true_params
    data = simulate_archx(truth, config.n, rho=config.rho, seed=rng, burn=config.burn)
    model = ArchXModel(data)
    fit_kw = {"restarts": config.restarts, "seed": rng}
    out: dict = {}
    diag: dict = {}

    def record(key, fn):
        try:
            fit = fn()
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            log.debug("rep %d %s failed: %s", rep, key, exc)
            out[key] = None
            return
        out[key] = sorted(fit.active_zero) if fit.converged else None

    est = set(config.estimators)
    if "arch_qmle" in est:
        record(("arch_qmle", ""), lambda: unpenalized_qmle(model))
    if "oracle_qmle" in est:
        record(("oracle_qmle", ""), lambda: post_estimate(model, truth.zero_index))

    for fam_name in ("lasso", "scad"):
        wanted = [e for e in (fam_name, "p_" + fam_name, "pgss_" + fam_name) if e in est]
        if not wanted:
            continue
        family = PenaltySpec(Family.parse(fam_name))
        try:
            lam_max = find_lambda_max(model, family, **fit_kw)
        except RuntimeError:
            for e in wanted:
                for ic in config.ic_kinds:
                    out[(e, ic)] = None
            continue
        cache = PostCache(model)
        path = None
        if fam_name in est or "p_" + fam_name in est:
            try:
                path = fit_path(model, family, build_grid(lam_max, config.grid_points),
                                use_post="p_" + fam_name in est, post_cache=cache, **fit_kw)
            except RuntimeError:
                path = None
        for ic in config.ic_kinds:
            for e, use_post in ((fam_name, False), ("p_" + fam_name, True)):
                if e not in est:
                    continue
                if path is None:
                    out[(e, ic)] = None
                    continue
                try:
                    sel = path.select(ic, use_post)
                    out[(e, ic)] = sorted(sel.chosen_fit.active_zero)
                    diag[(e, ic)] = {"d_hat": sel.chosen_fit.d_hat, "lambda": sel.chosen_lambda,
                                     "evaluations": len(path.grid)}
                except RuntimeError:
                    out[(e, ic)] = None
            e = "pgss_" + fam_name
            if e in est:
                try:
                    g = gss_select(model, family, lam_max, ic, post_cache=cache, **fit_kw)
                    out[(e, ic)] = sorted(g.penalized_fit.active_zero)
                    diag[(e, ic)] = {"d_hat": g.penalized_fit.d_hat, "lambda": g.lam,
                                     "evaluations": g.evaluations}
                except RuntimeError:
                    out[(e, ic)] = None
    if "exhaustive" in est:
        for ic in config.ic_kinds:
            record(("exhaustive", ic), lambda: exhaustive_search(model, ic, config.max_dbeta))
    return {"rep": rep, "zeros": out, "diag": diag}


def _row_keys(config: ScenarioConfig):
    keys = []
    for e in ROSTER:
        if e not in config.estimators:
            continue
        if e in NO_IC:
            keys.append((e, ""))
        else:
            keys.extend((e, ic) for ic in config.ic_kinds)
    return keys


def aggregate(config: ScenarioConfig, records: list) -> MCReport:
    """Turn per-replication zero sets into rates; independent of record order."""
    truth = config.true_params
    p = truth.p
    beta = truth.beta
    dims = (int(np.sum(beta[:p] > 0)), int(np.sum(beta[:p] == 0)),
            int(np.sum(beta[p:] > 0)), int(np.sum(beta[p:] == 0)))
    rows = []
    for key in _row_keys(config):
        sets = [r["zeros"].get(key) for r in records]
        ok = [s for s in sets if s is not None]
        failures = len(sets) - len(ok)
        if ok:
            rates = classification_rates(ok, truth)
        else:
            rates = (math.nan,) * 4
        avg = average_error(rates, dims) if ok else math.nan
        rows.append(ReportRow(key[0], key[1], *rates, avg, len(ok), failures))
    return MCReport(rows, dims, config.resolved(), sorted(records, key=lambda r: r["rep"]))


def _run_one(args):
    config, rep = args
    return run_replication(config, rep)


def run_scenario(config: ScenarioConfig, workers: Optional[int] = None) -> MCReport:
    workers = config.workers if workers is None else workers
    jobs = [(config, rep) for rep in range(config.replications)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_one, jobs, chunksize=1))
    else:
        records = [_run_one(j) for j in jobs]
    report = aggregate(config, records)
    if report.flagged:
        log.warning("more than %.0f%% of fits failed for some estimator", 100 * FAIL_FLAG)
    return report


def round1(value: float) -> str:
    """One decimal, ties away from zero, applied to the exact binary value."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return str(Decimal(float(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def emit_table(report: MCReport, fmt: str = "csv") -> str:
    header = ["Estimator", "IC", *COLUMNS]
    body = []
    for r in report.rows:
        body.append([r.label, r.ic.upper(), *(round1(v) for v in
                     (r.fz_alpha, r.cz_alpha, r.fz_xi, r.cz_xi, r.average_error))])
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(body)
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join(["---", "---"] + ["---:"] * len(COLUMNS)) + "|"]
        lines += ["| " + " | ".join(row) + " |" for row in body]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown table format {fmt!r}")
