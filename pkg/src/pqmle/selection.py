"""Choosing the penalty level: information criteria over a lambda grid, with
or without post-estimation, and a golden-section search on the modified
criterion."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .archmodel import as_model
from .optimizer import FitResult, maximize_penalized, post_estimate
from .penalties import PenaltySpec

PHI = (1.0 + math.sqrt(5.0)) / 2.0
GSS_MAX_ITER = 200


class IcKind(str, enum.Enum):
    AIC = "aic"
    HQIC = "hqic"
    BIC = "bic"

    @classmethod
    def parse(cls, name) -> "IcKind":
        if isinstance(name, IcKind):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ValueError(f"unknown information criterion {name!r}") from None

    def g(self, n: int) -> float:
        if self is IcKind.AIC:
            return 2.0
        if self is IcKind.HQIC:
            if n < 8:
                raise ValueError(f"HQIC needs n >= 8, got n={n}")
            return 2.0 * math.log(math.log(n))
        return math.log(n)


def ic_value(loglik: float, d_hat: int, kind, n: int) -> float:
    return -2.0 * loglik + d_hat * IcKind.parse(kind).g(n)


def build_grid(lambda_max: float, m: int = 100, span: float = 1e-4) -> np.ndarray:
    """Zero followed by ``m - 1`` log-spaced points ending at ``lambda_max``."""
    if m < 3:
        raise ValueError("grid needs at least 3 points")
    if not lambda_max > 0:
        raise ValueError("lambda_max must be positive")
    return np.concatenate([[0.0], np.geomspace(lambda_max * span, lambda_max, m - 1)])


def find_lambda_max(data, family: PenaltySpec, rel_tol: float = 0.05, safety: float = 1.1,
                    cap: float = 1e6, **fit_kw) -> float:
    """Smallest penalty level that zeroes every loading, inflated by ``safety``.

    The starting guess is the largest per-observation score of a loading at
    the all-zero restricted fit, which is exact for the first-order condition
    at zero; doubling and bisection on actual fits then refine it.
    """
    model = as_model(data)
    d_g = model.d_gamma
    base = post_estimate(model, range(model.d_beta))
    guess = float(np.max(model.score(base.theta)[d_g:]) / model.n) if model.d_beta else 0.0
    guess = max(guess, 1e-8)

    def all_zero(lam):
        return maximize_penalized(model, family.with_lambda(lam), **fit_kw).n_nonzero == 0

    hi = guess
    if all_zero(hi):
        lo = hi / 2
        while all_zero(lo):
            hi, lo = lo, lo / 2
            if lo < 1e-12:
                return safety * hi
    else:
        lo = hi
        hi = 2 * hi
        while not all_zero(hi):
            lo, hi = hi, 2 * hi
            if hi > cap:
                raise RuntimeError(f"loadings still non-zero at lambda={hi:.3g}; data look pathological")
    while (hi - lo) / hi > rel_tol:
        mid = 0.5 * (lo + hi)
        if all_zero(mid):
            hi = mid
        else:
            lo = mid
    return safety * hi


def _argmin_prefer_sparse(values, usable) -> int:
    best = None
    for i in range(len(values) - 1, -1, -1):
        if usable[i] and (best is None or values[i] < values[best]):
            best = i
    if best is None:
        raise RuntimeError("no converged fit to select from")
    return best


@dataclass
class PathResult:
    grid: np.ndarray
    fits: list
    n: int
    d_gamma: int
    post_fits: Optional[list] = None
    kind: IcKind = IcKind.BIC
    use_post: bool = False
    ic: np.ndarray = field(default=None)
    icm: Optional[np.ndarray] = None
    chosen_index: int = -1

    @property
    def d_hat(self) -> np.ndarray:
        return np.array([f.d_hat for f in self.fits])

    def criteria(self, kind, use_post: bool):
        kind = IcKind.parse(kind)
        src = self.post_fits if use_post else self.fits
        if src is None:
            raise ValueError("path was fitted without post-estimation")
        vals = np.array([ic_value(p.loglik, f.d_hat, kind, self.n)
                         for p, f in zip(src, self.fits)])
        usable = [f.converged and p.converged for p, f in zip(src, self.fits)]
        return vals, usable

    def select(self, kind, use_post: bool) -> "PathResult":
        """Re-run the argmin for another criterion without refitting."""
        kind = IcKind.parse(kind)
        ic, usable_ic = self.criteria(kind, False)
        icm = None
        if self.post_fits is not None:
            icm, usable_m = self.criteria(kind, True)
        if use_post:
            chosen = _argmin_prefer_sparse(icm, usable_m)
        else:
            chosen = _argmin_prefer_sparse(ic, usable_ic)
        return PathResult(self.grid, self.fits, self.n, self.d_gamma, self.post_fits,
                          kind, use_post, ic, icm, chosen)

    @property
    def chosen_lambda(self) -> float:
        return float(self.grid[self.chosen_index])

    @property
    def chosen_fit(self) -> FitResult:
        return self.fits[self.chosen_index]

    @property
    def chosen_post_fit(self) -> Optional[FitResult]:
        return None if self.post_fits is None else self.post_fits[self.chosen_index]


class PostCache:
    """Post-estimates keyed by zero set; the modified criterion only depends
    on ``lambda`` through the zero set, so one refit per set suffices."""

    def __init__(self, model):
        self.model = model
        self.store: dict = {}
        self.refits = 0

    def get(self, fit: FitResult) -> FitResult:
        key = fit.zero_set
        if key not in self.store:
            self.store[key] = post_estimate(self.model, sorted(key), init=fit.theta)
            self.refits += 1
        return self.store[key]


def fit_path(data, family: PenaltySpec, grid, kind="bic", use_post: bool = True,
             warm_start: bool = True, post_cache: Optional[PostCache] = None, **fit_kw) -> PathResult:
    model = as_model(data)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    fits = []
    init = None
    for lam in grid:
        fit = maximize_penalized(model, family.with_lambda(lam), init=init, **fit_kw)
        fits.append(fit)
        if warm_start:
            init = fit.theta
    post = None
    if use_post:
        cache = post_cache or PostCache(model)
        post = [cache.get(f) for f in fits]
    path = PathResult(grid, fits, model.n, model.d_gamma, post)
    return path.select(kind, use_post)


@dataclass
class GssResult:
    lam: float
    fit: FitResult
    penalized_fit: FitResult
    icm: float
    evaluations: int
    iterations: int
    trace: list
    windows: list


def gss_select(data, family: PenaltySpec, lambda_max: float, kind="bic",
               post_cache: Optional[PostCache] = None, fit_cache: Optional[dict] = None,
               max_iter: int = GSS_MAX_ITER, window_tol: float = 1e-10, **fit_kw) -> GssResult:
    """Golden-section search for the minimiser of the modified criterion.

    Starts from ``{0, (2-phi) lm, (phi-1) lm, lm}``. A minimum on the left
    pair inserts ``(2-phi) a1 + (phi-1) a2`` and drops ``a4``; otherwise
    ``(phi-1) a3 + (2-phi) a4`` is inserted and ``a1`` dropped. Stops once the
    outer points differ by at most one estimated non-zero parameter.
    """
    model = as_model(data)
    kind = IcKind.parse(kind)
    cache = post_cache or PostCache(model)
    fits = {} if fit_cache is None else fit_cache
    evaluated = {}
    trace = []

    def evaluate(lam):
        if lam in evaluated:
            return evaluated[lam]
        if lam in fits:
            fit = fits[lam]
        else:
            near = min(fits, key=lambda v: abs(v - lam)) if fits else None
            init = fits[near].theta if near is not None else None
            fit = maximize_penalized(model, family.with_lambda(lam), init=init, **fit_kw)
            fits[lam] = fit
        post = cache.get(fit)
        ok = fit.converged and post.converged
        val = ic_value(post.loglik, fit.d_hat, kind, model.n) if ok else math.inf
        evaluated[lam] = (val, fit, post)
        trace.append((lam, fit.d_hat, val))
        return evaluated[lam]

    pts = [0.0, (2 - PHI) * lambda_max, (PHI - 1) * lambda_max, float(lambda_max)]
    for lam in pts:
        evaluate(lam)
    windows = [pts[3] - pts[0]]
    it = 0
    while True:
        d = [evaluated[v][1].d_hat for v in pts]
        if d[0] - d[3] <= 1 or pts[3] - pts[0] <= window_tol * lambda_max:
            break
        if it >= max_iter:
            raise RuntimeError(f"golden-section search did not stop after {max_iter} iterations")
        vals = [evaluated[v][0] for v in pts]
        # the left pair is checked first, so a tie across the pairs goes left
        if min(vals[:2]) <= min(vals[2:]):
            b = (2 - PHI) * pts[0] + (PHI - 1) * pts[1]
            pts = [pts[0], b, pts[1], pts[2]]
            evaluate(b)
        else:
            c = (PHI - 1) * pts[2] + (2 - PHI) * pts[3]
            pts = [pts[1], pts[2], c, pts[3]]
            evaluate(c)
        windows.append(pts[3] - pts[0])
        it += 1
    vals = [evaluated[v][0] for v in pts]
    best = max(i for i in range(4) if vals[i] == min(vals))
    val, fit, post = evaluated[pts[best]]
    if not math.isfinite(val):
        raise RuntimeError("golden-section search found no converged fit")
    return GssResult(pts[best], post, fit, val, len(evaluated), it, trace, windows)
