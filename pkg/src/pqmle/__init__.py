"""Penalized quasi-maximum likelihood for ARCH models with exogenous covariates."""
from .archmodel import (ArchXDataset, ArchXModel, NumericError, ParamVector, TrueParams,
                        loglik, sandwich_covariance, score, simulate_archx, variance_path)
from .optimizer import FitResult, maximize_penalized, post_estimate, unpenalized_qmle
from .penalties import Family, PenaltySpec, penalty_deriv, penalty_value, rate_constants
from .selection import IcKind, build_grid, find_lambda_max, fit_path, gss_select

__all__ = [
    "ArchXDataset", "ArchXModel", "NumericError", "ParamVector", "TrueParams", "loglik",
    "sandwich_covariance", "score", "simulate_archx", "variance_path", "FitResult",
    "maximize_penalized", "post_estimate", "unpenalized_qmle", "Family", "PenaltySpec",
    "penalty_deriv", "penalty_value", "rate_constants", "IcKind", "build_grid",
    "find_lambda_max", "fit_path", "gss_select",
]
