import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pqmle.archmodel import ArchXModel, LocationModel, TrueParams, simulate_archx
from pqmle.optimizer import maximize_penalized
from pqmle.penalties import Family, PenaltySpec
from pqmle.selection import (PHI, IcKind, PostCache, _argmin_prefer_sparse, build_grid,
                             find_lambda_max, fit_path, gss_select, ic_value)

SCAD = PenaltySpec(Family.SCAD)
LASSO = PenaltySpec(Family.LASSO)
TABLE1 = TrueParams(0.0, 0.2, [0.15, 0.15, 0.10, 0, 0, 0], [0.15, 0.15, 0.10, 0, 0, 0])


def test_ic_examples():
    assert ic_value(-100, 5, "aic", 1000) == pytest.approx(210)
    assert ic_value(-100, 5, "bic", 1000) == pytest.approx(200 + 5 * math.log(1000))
    assert ic_value(-100, 5, "hqic", 1000) == pytest.approx(200 + 10 * math.log(math.log(1000)))
    with pytest.raises(ValueError):
        IcKind.HQIC.g(7)
    with pytest.raises(ValueError):
        IcKind.parse("dic")


@given(st.floats(-1e4, 0), st.integers(0, 50), st.integers(8, 10**6))
def test_bic_minus_aic(ll, d, n):
    diff = ic_value(ll, d, "bic", n) - ic_value(ll, d, "aic", n)
    assert diff == pytest.approx(d * (math.log(n) - 2), abs=1e-9 * max(1.0, abs(ll)))


def test_grid_construction():
    assert np.allclose(build_grid(1.0, 3), [0.0, 1e-4, 1.0])
    g = build_grid(2.5, 100)
    assert g.size == 100 and g[-1] == pytest.approx(2.5)
    assert np.all(np.diff(g) > 0)
    ratios = g[2:] / g[1:-1]
    assert np.allclose(ratios, ratios[0], rtol=1e-12)
    with pytest.raises(ValueError):
        build_grid(0.0, 10)
    with pytest.raises(ValueError):
        build_grid(1.0, 2)


def test_argmin_prefers_larger_lambda_on_ties():
    assert _argmin_prefer_sparse([3.0, 1.0, 1.0, 2.0], [True] * 4) == 2
    assert _argmin_prefer_sparse([3.0, 1.0, 1.0], [True, True, False]) == 1
    with pytest.raises(RuntimeError):
        _argmin_prefer_sparse([1.0], [False])


def test_lambda_max_location_model():
    rng = np.random.default_rng(0)
    x = rng.normal(1.3, 1.0, 200)
    xbar = float(np.mean(x))
    lam_max = find_lambda_max(LocationModel(x), LASSO)
    assert xbar <= lam_max / 1.1 <= xbar / 0.95
    scaled = find_lambda_max(LocationModel(3.0 * x), LASSO)
    assert scaled == pytest.approx(3.0 * lam_max, rel=1e-9)


def test_lambda_max_brackets_on_pure_noise():
    noise = TrueParams(0.0, 1.0, [0.0] * 4, [0.0] * 2)
    some_active = 0
    for seed in range(10):
        model = ArchXModel(simulate_archx(noise, 500, seed=seed))
        lam_max = find_lambda_max(model, LASSO)
        assert math.isfinite(lam_max)
        assert maximize_penalized(model, LASSO.with_lambda(lam_max)).n_nonzero == 0
        some_active += maximize_penalized(model, LASSO.with_lambda(0.5 * lam_max / 1.1)).n_nonzero > 0
    assert some_active >= 5


@pytest.fixture(scope="module")
def table1_model():
    return ArchXModel(simulate_archx(TABLE1, 1000, seed=77))


@pytest.fixture(scope="module")
def table1_path(table1_model):
    lam_max = find_lambda_max(table1_model, SCAD)
    return lam_max, fit_path(table1_model, SCAD, build_grid(lam_max, 50), "bic", True)


def test_path_criteria_are_consistent(table1_path, table1_model):
    _, path = table1_path
    n = table1_model.n
    for i, (f, p) in enumerate(zip(path.fits, path.post_fits)):
        assert path.ic[i] == pytest.approx(ic_value(f.loglik, f.d_hat, "bic", n), abs=1e-12)
        assert path.icm[i] == pytest.approx(ic_value(p.loglik, f.d_hat, "bic", n), abs=1e-12)
        assert 2 <= f.d_hat <= 14
    for i in range(len(path.fits) - 1):
        if path.fits[i].zero_set == path.fits[i + 1].zero_set:
            assert path.icm[i] == path.icm[i + 1]


def test_reselect_without_refitting(table1_path):
    _, path = table1_path
    for kind in ("aic", "hqic", "bic"):
        for use_post in (False, True):
            sel = path.select(kind, use_post)
            vals = sel.icm if use_post else sel.ic
            assert vals[sel.chosen_index] == np.min(vals)
            assert 2 <= sel.chosen_fit.d_hat <= 14
    assert path.select("aic", True).chosen_fit.d_hat >= path.select("bic", True).chosen_fit.d_hat


def test_two_point_grid(table1_model, table1_path):
    lam_max, _ = table1_path
    path = fit_path(table1_model, SCAD, [0.0, lam_max], "bic", True)
    assert path.fits[1].n_nonzero == 0
    best = int(np.argmin(path.icm[::-1]))
    assert path.chosen_index == 1 - best


def test_gss_starting_points_and_windows(table1_model, table1_path):
    lam_max, path = table1_path
    g = gss_select(table1_model, SCAD, 1.0, "bic")
    assert [t[0] for t in g.trace[:4]] == pytest.approx([0.0, 2 - PHI, PHI - 1, 1.0])
    g = gss_select(table1_model, SCAD, lam_max, "bic")
    w = np.asarray(g.windows)
    assert np.allclose(w[1:] / w[:-1], 1 / PHI)
    assert g.evaluations < 50
    assert g.icm == pytest.approx(ic_value(g.fit.loglik, g.penalized_fit.d_hat, "bic", table1_model.n))


def test_gss_finds_empty_model_under_pure_noise():
    noise = TrueParams(0.0, 1.0, [0.0] * 3, [0.0] * 3)
    model = ArchXModel(simulate_archx(noise, 3000, seed=5))
    lam_max = find_lambda_max(model, SCAD)
    cache = PostCache(model)
    g = gss_select(model, SCAD, lam_max, "bic", post_cache=cache)
    path = fit_path(model, SCAD, build_grid(lam_max, 100), "bic", True, post_cache=cache)
    assert g.penalized_fit.d_hat == path.chosen_fit.d_hat == 2


def test_path_regularity():
    monotone = 0
    reps = 10
    for seed in range(reps):
        model = ArchXModel(simulate_archx(TABLE1, 1000, seed=500 + seed))
        lam_max = find_lambda_max(model, SCAD)
        d = fit_path(model, SCAD, build_grid(lam_max, 40), "bic", False).d_hat
        monotone += bool(np.all(np.diff(d) <= 0))
    assert monotone >= 0.95 * reps


def test_fit_path_rejects_unsorted_grid(table1_model):
    with pytest.raises(ValueError):
        fit_path(table1_model, SCAD, [0.1, 0.05, 0.2])
