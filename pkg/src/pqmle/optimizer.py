"""Box-constrained maximisation of the penalised quasi-likelihood.

The criterion is ``Q_n(theta) = L_n(theta) - n * sum_j p(beta_j; lambda)``.
Every penalty family is continuously differentiable on ``[0, inf)`` once
the derivative at zero is taken from the right, so a projected quasi-Newton
method on the box handles the kinks: coordinates reaching zero are pinned
there by the projection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import minimize

from .archmodel import NumericError, as_model
from .penalties import Family, PenaltySpec, SpecLike, expand_specs, total_penalty

log = logging.getLogger(__name__)

BETA_UPPER = 10.0
KKT_TOL = 1e-5
DEFAULT_RESTARTS = 3


def default_tol_zero(beta_upper: float = BETA_UPPER) -> float:
    return 1e-7 * (1.0 + abs(beta_upper))


@dataclass
class FitResult:
    theta: np.ndarray
    active_zero: tuple
    loglik: float
    objective: float
    converged: bool
    iterations: int
    restarts_used: int
    d_gamma: int
    lam: float = 0.0
    n: int = 0
    message: str = ""
    kkt_violation: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def beta(self) -> np.ndarray:
        return self.theta[self.d_gamma:]

    @property
    def gamma(self) -> np.ndarray:
        return self.theta[:self.d_gamma]

    @property
    def n_nonzero(self) -> int:
        return self.beta.size - len(self.active_zero)

    @property
    def d_hat(self) -> int:
        """Estimated number of non-zero parameters, unpenalised block included."""
        return self.d_gamma + self.n_nonzero

    @property
    def zero_set(self) -> frozenset:
        return frozenset(self.active_zero)

    def to_dict(self) -> dict:
        return {
            "theta": [float(v) for v in self.theta],
            "active_zero": [int(i) for i in self.active_zero],
            "loglik": float(self.loglik),
            "penalized_objective": float(self.objective),
            "lambda": float(self.lam),
            "d_hat": int(self.d_hat),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "restarts_used": int(self.restarts_used),
            "kkt_violation": float(self.kkt_violation),
        }


def extract_active_zero(beta, tol_zero: float) -> tuple:
    """Indices (0-based) of loadings below ``tol_zero`` or exactly at zero."""
    beta = np.asarray(beta, dtype=float)
    return tuple(int(j) for j in np.flatnonzero((beta < tol_zero) | (beta == 0.0)))


def penalized_objective(data, spec: SpecLike, theta) -> float:
    model = as_model(data)
    theta = np.asarray(theta, dtype=float)
    pen, _ = total_penalty(spec, theta[model.d_gamma:])
    return model.loglik(theta) - model.n * pen


class _Problem:
    """Scaled negative criterion ``-Q_n / n`` and its gradient."""

    def __init__(self, model, spec: SpecLike):
        self.model = model
        self.spec = spec
        self.n = model.n
        self.d_gamma = model.d_gamma
        self.evals = 0

    def value_grad(self, theta):
        self.evals += 1
        try:
            ll, sc = self.model.loglik_and_score(theta)
        except NumericError:
            return 1e30, np.zeros_like(theta)
        pen, dpen = total_penalty(self.spec, np.maximum(theta[self.d_gamma:], 0.0))
        g = sc.copy()
        g[self.d_gamma:] -= self.n * dpen
        return -(ll - self.n * pen) / self.n, -g / self.n

    def objective(self, theta):
        return -self.value_grad(theta)[0] * self.n

    def kkt_violation(self, theta, lb, ub) -> float:
        """Largest first-order violation, per observation."""
        _, g = self.value_grad(theta)
        up = -g  # ascent direction of Q_n / n
        viol = np.abs(up)
        at_lb = theta <= lb
        at_ub = theta >= ub
        fixed = lb == ub
        viol = np.where(at_lb & ~fixed, np.maximum(up, 0.0), viol)
        viol = np.where(at_ub & ~fixed, np.maximum(-up, 0.0), viol)
        viol = np.where(fixed, 0.0, viol)
        return float(np.max(viol)) if viol.size else 0.0


def _clamp(theta, lb, ub, d_gamma, tol_zero):
    theta = np.clip(theta, lb, ub)
    beta = theta[d_gamma:]
    small = (beta < tol_zero) & (lb[d_gamma:] == 0.0)
    beta[small] = 0.0
    return theta


def _local(problem: _Problem, x0, lb, ub, tol_zero, max_iter, passes: int = 4):
    bounds = list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)))
    theta = _clamp(np.asarray(x0, dtype=float), lb, ub, problem.d_gamma, tol_zero)
    iters = 0
    viol = np.inf
    msg = ""
    for _ in range(passes):
        res = minimize(problem.value_grad, theta, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": max_iter, "ftol": 1e-10, "gtol": 1e-6, "maxcor": 20})
        iters += int(getattr(res, "nit", 0))
        msg = str(res.message)
        cand = _clamp(res.x, lb, ub, problem.d_gamma, tol_zero)
        if problem.value_grad(cand)[0] <= problem.value_grad(theta)[0] + 1e-14:
            theta = cand
        viol = problem.kkt_violation(theta, lb, ub)
        if viol < KKT_TOL:
            break
        if iters >= max_iter:
            break
    return theta, iters, viol, msg


def _kink_escape(problem: _Problem, theta, lb, ub):
    """Probe loadings sitting exactly on a penalty kink.

    The penalised criterion can have a zero gradient at ``b = lambda`` (or
    ``a * lambda``) while curving upwards on one side, so the local solver
    stops on a saddle. Returns an improved nearby point, or None.
    """
    d_g = problem.d_gamma
    specs = expand_specs(problem.spec, theta.size - d_g)
    f0 = problem.value_grad(theta)[0]
    for j, s in enumerate(specs):
        if s.family is Family.LASSO or s.lam <= 0:
            continue
        b = theta[d_g + j]
        kinks = (s.lam,) if s.family is Family.HARD else (s.lam, s.scad_a * s.lam)
        if min(abs(b - k) for k in kinks) > 1e-9 * (1.0 + b):
            continue
        h = 1e-4 * (1.0 + b)
        for step in (-h, h):
            cand = theta.copy()
            cand[d_g + j] = np.clip(b + step, lb[d_g + j], ub[d_g + j])
            if problem.value_grad(cand)[0] < f0 - 1e-15:
                return cand
    return None


def _needs_restarts(spec: SpecLike) -> bool:
    specs = [spec] if isinstance(spec, PenaltySpec) else list(spec)
    return any(s.family is not Family.LASSO and s.lam > 0 for s in specs)


def maximize_penalized(data, spec: SpecLike, init=None, beta_upper: float = BETA_UPPER,
                       tol_zero: Optional[float] = None, restarts: Optional[int] = None,
                       seed=0, fixed_zero: Iterable[int] = (), max_iter: int = 500) -> FitResult:
    """Local maximiser of the penalised criterion over the parameter box.

    ``data`` is an :class:`ArchXDataset` or any model exposing
    ``loglik_and_score``. Loadings in ``fixed_zero`` are held at zero.
    Non-convex penalties get ``restarts`` extra jittered starts and the best
    converged criterion value is kept.
    """
    model = as_model(data)
    d_g = model.d_gamma
    lb = np.asarray(model.lower_bounds(), dtype=float).copy()
    ub = np.asarray(model.upper_bounds(beta_upper), dtype=float).copy()
    for j in fixed_zero:
        ub[d_g + int(j)] = 0.0
    tol_zero = default_tol_zero(beta_upper) if tol_zero is None else float(tol_zero)

    x0 = model.default_init() if init is None else np.asarray(
        init.to_array() if hasattr(init, "to_array") else init, dtype=float)
    x0 = model.check(x0)
    if np.any(x0 < lb) or np.any(x0[d_g:] > beta_upper):
        raise ValueError("initial value is outside the parameter box")
    x0 = np.clip(x0, lb, ub)

    problem = _Problem(model, spec)
    if restarts is None:
        restarts = DEFAULT_RESTARTS if _needs_restarts(spec) else 0
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    starts = [x0]
    for _ in range(int(restarts)):
        jit = x0.copy()
        b = jit[d_g:]
        b *= rng.uniform(0.5, 1.5, size=b.size)
        b += rng.uniform(0.0, 0.05, size=b.size)
        starts.append(np.clip(jit, lb, ub))

    init_obj = problem.objective(x0)
    best = None
    total_iter = 0
    for theta0 in starts:
        theta, iters, viol, msg = _local(problem, theta0, lb, ub, tol_zero, max_iter)
        total_iter += iters
        for _ in range(3):
            nudged = _kink_escape(problem, theta, lb, ub)
            if nudged is None:
                break
            theta, iters, viol, msg = _local(problem, nudged, lb, ub, tol_zero, max_iter)
            total_iter += iters
        obj = problem.objective(theta)
        cand = (viol < KKT_TOL, obj, theta, viol, msg)
        if best is None or (cand[0], cand[1]) > (best[0], best[1]):
            best = cand
    ok, obj, theta, viol, msg = best
    if obj < init_obj - 1e-10:
        # never hand back something worse than the start
        theta = _clamp(x0, lb, ub, d_g, 0.0)
        obj = problem.objective(theta)
        viol = problem.kkt_violation(theta, lb, ub)
        ok = viol < KKT_TOL
    zero = extract_active_zero(theta[d_g:], tol_zero)
    theta = theta.copy()
    theta[d_g + np.asarray(zero, dtype=int)] = 0.0
    lam = spec.lam if isinstance(spec, PenaltySpec) else float("nan")
    if not ok:
        log.debug("fit not converged (kkt %.3g): %s", viol, msg)
    return FitResult(theta=theta, active_zero=zero, loglik=model.loglik(theta),
                     objective=obj, converged=bool(ok), iterations=total_iter,
                     restarts_used=len(starts) - 1, d_gamma=d_g, lam=lam, n=model.n,
                     message=msg, kkt_violation=viol)


def post_estimate(data, zero_set: Iterable[int], init=None,
                  beta_upper: float = BETA_UPPER, tol_zero: Optional[float] = None) -> FitResult:
    """Unpenalised QMLE with the loadings in ``zero_set`` restricted to zero."""
    model = as_model(data)
    zero_set = sorted(int(j) for j in zero_set)
    if any(j < 0 or j >= model.d_beta for j in zero_set):
        raise ValueError(f"zero set {zero_set} outside 0..{model.d_beta - 1}")
    if init is None:
        init = model.default_init()
    init = np.asarray(init.to_array() if hasattr(init, "to_array") else init, dtype=float).copy()
    init[model.d_gamma + np.asarray(zero_set, dtype=int)] = 0.0
    spec = PenaltySpec(Family.LASSO, 0.0)
    return maximize_penalized(model, spec, init=init, beta_upper=beta_upper,
                              tol_zero=tol_zero, restarts=0, fixed_zero=zero_set)


def unpenalized_qmle(data, init=None, **kw) -> FitResult:
    return maximize_penalized(data, PenaltySpec(Family.LASSO, 0.0), init=init, restarts=0, **kw)
