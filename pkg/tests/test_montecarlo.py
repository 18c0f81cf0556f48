import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pqmle.archmodel import ArchXModel, TrueParams, simulate_archx
from pqmle.montecarlo import (ConfigError, ScenarioConfig, average_error, classification_rates,
                              emit_table, exhaustive_search, round1, run_replication, run_scenario)
from pqmle.penalties import Family, PenaltySpec
from pqmle.selection import build_grid, find_lambda_max, fit_path

SMALL = dict(n=300, alpha=[0.2, 0.0], xi=[0.2, 0.0], rho=0.5, replications=4, seed=7)


def test_classification_rates_examples():
    truth = TrueParams(0.0, 0.85, [0.15, 0.0], [])
    assert classification_rates([[0, 1]], truth) == (100.0, 100.0, 0.0, 100.0)
    # fits (0.1, 0) and (0.2, 0.05): zero sets {1} and {}
    assert classification_rates([[1], []], truth) == (0.0, 50.0, 0.0, 100.0)


def test_average_error_examples():
    assert average_error((1.9, 61.5, 0.8, 52.6), (3, 3, 3, 3)) == pytest.approx(22.15, abs=1e-12)
    assert average_error((0, 100, 0, 100), (3, 3, 3, 3)) == 0.0
    assert average_error((100, 0, 100, 0), (3, 3, 3, 3)) == 100.0
    assert average_error((50, 50, 50, 50), (0, 0, 0, 0)) == 0.0


@given(st.tuples(*[st.floats(0, 100)] * 4), st.tuples(*[st.integers(0, 20)] * 4))
def test_average_error_is_a_percentage(rates, dims):
    v = average_error(rates, dims)
    assert -1e-9 <= v <= 100 + 1e-9


def test_round1_is_half_up_on_exact_binary_value():
    assert round1(0.25) == "0.3"
    assert round1(0.75) == "0.8"
    assert round1(22.15) == "22.1"  # 22.15 is stored just below the tie
    assert round1(22.150000000000002) == "22.2"
    assert round1(math.nan) == "nan"


def test_oracle_never_misses_zeros():
    cfg = ScenarioConfig(**SMALL, estimators=["oracle"])
    rep = run_scenario(cfg)
    row = rep.row("oracle_qmle")
    assert row.cz_alpha == row.cz_xi == 100.0
    assert row.fz_alpha == row.fz_xi == 0.0


def test_scenario_is_deterministic_and_order_free():
    cfg = ScenarioConfig(**SMALL, estimators=["arch_qmle", "p_lasso", "pgss_scad"], grid_points=20)
    a = run_scenario(cfg)
    b = run_scenario(cfg)
    assert emit_table(a) == emit_table(b)
    assert a.records == b.records
    single = run_replication(cfg, 2)
    assert single == a.records[2]


def test_emit_table_formats():
    cfg = ScenarioConfig(**SMALL, estimators=["arch_qmle"])
    rep = run_scenario(cfg)
    text = emit_table(rep, "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert len(rows) == 2
    assert rows[0][0] == "Estimator" and rows[1][0] == "ARCH QMLE"
    assert all(len(v.split(".")[-1]) == 1 for v in rows[1][2:])
    md = emit_table(rep, "markdown").splitlines()
    assert md[0].startswith("| Estimator") and len(md) == 3
    with pytest.raises(ValueError):
        emit_table(rep, "html")


def test_exhaustive_single_loading():
    data = simulate_archx(TrueParams(0.0, 0.7, [0.3]), 400, seed=1)
    best = exhaustive_search(data, "bic")
    assert best.extra["models"] == 2
    assert best.active_zero == ()


def test_exhaustive_dominates_path_selection():
    model = ArchXModel(simulate_archx(TrueParams(0.0, 0.5, [0.2, 0.0, 0.1], [0.2]), 600, seed=4))
    best = exhaustive_search(model, "bic")
    scad = PenaltySpec(Family.SCAD)
    path = fit_path(model, scad, build_grid(find_lambda_max(model, scad), 30), "bic", True)
    assert best.extra["ic"] <= np.min(path.icm) + 1e-9


def test_exhaustive_recovers_zero_pattern():
    truth = TrueParams(0.0, 0.7, [0.3, 0.0])
    right = sum(exhaustive_search(simulate_archx(truth, 2000, seed=s), "bic").active_zero == (1,)
                for s in range(200))
    assert right >= 180


def test_exhaustive_refuses_large_models():
    model = ArchXModel(simulate_archx(TrueParams(0.0, 0.5, [0.0] * 15), 100, seed=0))
    with pytest.raises(ValueError):
        exhaustive_search(model, "bic", max_dbeta=14)


def test_config_file_parsing(tmp_path):
    path = tmp_path / "s.cfg"
    path.write_text("[scenario]\nn = 500\nalpha = 0.1, 0\nxi = 0.2\nestimators = oracle, p_scad\n"
                    "ic = bic, aic\n")
    cfg = ScenarioConfig.from_file(path)
    assert cfg.estimators == ["oracle_qmle", "p_scad"]
    assert cfg.ic_kinds == ["bic", "aic"]
    assert cfg.omega == pytest.approx(0.7)
    assert cfg.resolved()["p"] == 2


@pytest.mark.parametrize("body,field", [
    ("n = 500\nalpha = 0.1\n", "xi"),
    ("n = 500\nalpha = 0.1\nxi = 0\ncolour = red\n", "colour"),
    ("n = many\nalpha = 0.1\nxi = 0\n", "n"),
    ("n = 500\nalpha = 0.1\nxi = 0\nestimators = magic\n", "estimators"),
    ("n = 500\nalpha = 0.5, 0.5\nxi = 0\n", "omega"),
    ("n = 500\nalpha = 0.1\nxi = 0\nrho = 1.5\n", "rho"),
])
def test_config_errors_name_the_field(tmp_path, body, field):
    path = tmp_path / "bad.cfg"
    path.write_text("[scenario]\n" + body)
    with pytest.raises(ConfigError) as err:
        ScenarioConfig.from_file(path)
    assert err.value.field == field
