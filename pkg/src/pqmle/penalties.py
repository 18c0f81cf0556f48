"""Penalty functions for non-negative coefficients.

All three families act on ``b >= 0`` only. Derivatives are taken from the
right, so kink points use the one-sided value.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np


class Family(str, enum.Enum):
    LASSO = "lasso"
    HARD = "hard"
    SCAD = "scad"

    @classmethod
    def parse(cls, name: Union[str, "Family"]) -> "Family":
        if isinstance(name, Family):
            return name
        key = name.strip().lower().replace("-", "").replace("_", "")
        aliases = {"lasso": cls.LASSO, "l1": cls.LASSO, "hard": cls.HARD,
                   "hardthreshold": cls.HARD, "scad": cls.SCAD}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown penalty family {name!r}") from None


@dataclass(frozen=True)
class PenaltySpec:
    family: Family
    lam: float = 0.0
    scad_a: float = 3.7

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if self.family is Family.SCAD and not self.scad_a > 2:
            raise ValueError(f"SCAD constant a must exceed 2, got {self.scad_a}")

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return replace(self, lam=float(lam))

    @property
    def is_convex(self) -> bool:
        return self.family is Family.LASSO or self.lam == 0.0


SpecLike = Union[PenaltySpec, Sequence[PenaltySpec]]


def _check_b(b) -> np.ndarray:
    arr = np.asarray(b, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("penalty argument must be non-negative")
    return arr


def _out(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


def penalty_value(spec: PenaltySpec, b):
    """Evaluate ``p(b; lambda)``; vectorised over ``b``."""
    x = _check_b(b)
    lam = spec.lam
    if spec.family is Family.LASSO:
        out = lam * x
    elif spec.family is Family.HARD:
        out = lam**2 - np.where(x < lam, (x - lam) ** 2, 0.0)
    else:
        a = spec.scad_a
        mid = (2 * a * lam * x - x**2 - lam**2) / (2 * (a - 1))
        out = np.where(x <= lam, lam * x,
                       np.where(x <= a * lam, mid, lam**2 * (a + 1) / 2))
    return _out(np.asarray(out, dtype=float), b)


def penalty_deriv(spec: PenaltySpec, b):
    """Right-derivative of the penalty in ``b``."""
    x = _check_b(b)
    lam = spec.lam
    if spec.family is Family.LASSO:
        out = np.full_like(x, lam)
    elif spec.family is Family.HARD:
        out = np.where(x < lam, 2 * (lam - x), 0.0)
    else:
        a = spec.scad_a
        out = np.where(x <= lam, lam, np.maximum(a * lam - x, 0.0) / (a - 1))
    # the SCAD branch x <= lam includes x == lam; at lam == 0 everything is zero
    if lam == 0.0:
        out = np.zeros_like(x)
    return _out(np.asarray(out, dtype=float), b)


def penalty_second_deriv(spec: PenaltySpec, b):
    """Second right-derivative of the penalty in ``b``."""
    x = _check_b(b)
    lam = spec.lam
    if spec.family is Family.LASSO:
        out = np.zeros_like(x)
    elif spec.family is Family.HARD:
        out = np.where(x < lam, -2.0, 0.0)
    else:
        a = spec.scad_a
        out = np.where((x >= lam) & (x < a * lam) & (lam > 0), 1.0 / (1.0 - a), 0.0)
    return _out(np.asarray(out, dtype=float), b)


def rate_constants(spec: PenaltySpec, beta_nonzero) -> tuple[float, float]:
    """Return ``(a_n, v_n)``: max absolute first and second derivatives over the
    non-zero true coefficients."""
    b = np.asarray(beta_nonzero, dtype=float).ravel()
    if b.size == 0:
        return 0.0, 0.0
    if np.any(b <= 0):
        raise ValueError("non-zero true coefficients must be strictly positive")
    a_n = float(np.max(np.abs(penalty_deriv(spec, b))))
    v_n = float(np.max(np.abs(penalty_second_deriv(spec, b))))
    return a_n, v_n


def expand_specs(spec: SpecLike, d_beta: int) -> list[PenaltySpec]:
    """Broadcast a shared spec to one spec per coefficient."""
    if isinstance(spec, PenaltySpec):
        return [spec] * d_beta
    specs = list(spec)
    if len(specs) != d_beta:
        raise ValueError(f"expected {d_beta} penalty specs, got {len(specs)}")
    return specs


def total_penalty(spec: SpecLike, beta: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum of penalties over ``beta`` and the per-coordinate right-derivatives."""
    beta = np.asarray(beta, dtype=float)
    if isinstance(spec, PenaltySpec):
        return float(np.sum(penalty_value(spec, beta))), np.asarray(
            penalty_deriv(spec, beta), dtype=float).reshape(beta.shape)
    specs = expand_specs(spec, beta.size)
    vals = np.array([penalty_value(s, v) for s, v in zip(specs, beta)])
    ders = np.array([penalty_deriv(s, v) for s, v in zip(specs, beta)])
    return float(vals.sum()), ders
