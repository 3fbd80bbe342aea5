import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrbound.bound_core import BoundError, ModelParams
from lrbound.lightcone import (
    Branch,
    LightconeQuery,
    Method,
    Which,
    alpha_m,
    beta_tilde,
    curve,
    curve_from_csv,
    curve_to_csv,
    curve_to_json,
    exponent,
    lc_exponent_numeric,
    sigma_optima,
)


def value(alpha, dim, method, which):
    return exponent(LightconeQuery(alpha, dim, method, which)).value


# ----------------------------------------------------------- closed forms


@pytest.mark.parametrize("alpha,expected", [(2.0, 3.0), (3.0, 2.0)])
def test_lc1_values(alpha, expected):
    for m in Method:
        assert value(alpha, 1, m, "LC1") == pytest.approx(expected)


def test_lc1_linear_limit():
    assert value(1e9, 1, "this_work", "LC1") == pytest.approx(1.0, abs=1e-8)


def test_lc1_optimizer_sigma():
    r = exponent(LightconeQuery(2.0, 1, "this_work", "LC1"))
    assert r.optimizer_sigma == pytest.approx(2 / 3)


def test_lc2_examples():
    assert value(4.0, 1, "matsuta", "LC2") == pytest.approx(3.0, abs=1e-12)
    assert value(1.5, 1, "matsuta", "LC2") is None
    assert value(2.0, 1, "this_work", "LC2") == pytest.approx(6 + 4 * math.sqrt(2), abs=1e-12)
    assert value(2.0, 1, "foss_feig", "LC2") == pytest.approx(5.0, abs=1e-12)


def test_foss_feig_at_four():
    # (a + d)/a (a + 1)/(a - d) + 1/a at a = 4, d = 1
    assert value(4.0, 1, "foss_feig", "LC2") == pytest.approx(7 / 3, abs=1e-12)


def test_branch_labels():
    assert exponent(LightconeQuery(2.0, 1)).branch is Branch.POLY_MIN
    assert exponent(LightconeQuery(5.0, 1)).branch is Branch.EXP_POLY


def test_alpha_m_d1():
    assert alpha_m(1) == pytest.approx((3 + math.sqrt(17)) / 2, abs=1e-12)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_branch_continuity(d):
    a = alpha_m(d)
    assert abs(beta_tilde(a, d) - (a + 2) / (a - 2 * d)) < 1e-9


def test_alpha_m_large_d_limit():
    assert alpha_m(10**8) / 10**8 == pytest.approx(3.0, abs=1e-6)


def test_sigma_optima_values():
    s1, s2, s3 = sigma_optima(2.0, 1)
    assert s1 == pytest.approx(2 / 3)
    assert s2 == pytest.approx(1.0)
    assert s3 == pytest.approx(1.5 - math.sqrt(2) / 2)


@given(st.integers(1, 3), st.floats(0.01, 20.0))
def test_sigma_min_in_window(d, excess):
    a = d + excess
    s1, _, smin = sigma_optima(a, d)
    assert s1 < smin < 1


def test_query_needs_alpha_above_d():
    with pytest.raises(BoundError):
        LightconeQuery(1.0, 1)


# --------------------------------------------------------------- ordering


@settings(max_examples=200)
@given(st.integers(1, 3), st.floats(1e-3, 30.0))
def test_ordering(d, excess):
    a = d + excess
    tw, ff, m = (value(a, d, meth, "LC2") for meth in ("this_work", "foss_feig", "matsuta"))
    if a > 2 * d:
        assert ff <= tw + 1e-12
        assert tw <= m + 1e-12
        if a >= alpha_m(d):
            assert tw == pytest.approx(m, abs=1e-9)
    else:
        assert ff < tw
        assert m is None
    for meth in Method:
        lc2 = value(a, d, meth, "LC2")
        if lc2 is not None:
            assert lc2 >= value(a, d, meth, "LC1") - 1e-12


def test_matsuta_pole():
    assert value(2.001, 1, "matsuta", "LC2") > 1e3


# --------------------------------------------------------------- numerics


def test_numeric_lc1():
    r = lc_exponent_numeric(ModelParams(2.0, 1), "LC1", n_max=6)
    assert r.value == pytest.approx(3.0, abs=1e-3)


def test_numeric_lc2_high_alpha():
    r = lc_exponent_numeric(ModelParams(5.0, 1), "LC2", n_max=6)
    assert r.value == pytest.approx(7 / 3, abs=1e-3)
    assert r.branch is Branch.EXP_POLY


def test_numeric_lc2_single_step_absent():
    assert not lc_exponent_numeric(ModelParams(2.0, 1), "LC2", n_max=1).exists


def test_numeric_lc2_poly_minimum():
    r = lc_exponent_numeric(ModelParams(2.0, 1), "LC2")
    assert r.value == pytest.approx(6 + 4 * math.sqrt(2), abs=1e-3)
    assert r.branch is Branch.POLY_MIN
    assert r.optimizer_sigma == pytest.approx(sigma_optima(2.0, 1)[2], abs=1e-3)


@pytest.mark.parametrize("alpha", np.linspace(2.2, 8.0, 8))
def test_numeric_lc2_two_dims(alpha):
    r = lc_exponent_numeric(ModelParams(float(alpha), 2), "LC2")
    assert r.value == pytest.approx(value(float(alpha), 2, "this_work", "LC2"), abs=1e-3)


# ------------------------------------------------------------------ curve


def test_curve_rows_and_csv():
    rows = curve(1, 1.05, 8.0, 140, "LC2")
    text = curve_to_csv(rows)
    assert text.splitlines()[0] == "alpha,this_work,foss_feig,matsuta"
    back = curve_from_csv(text)
    assert [r.alpha for r in back] == [r.alpha for r in rows]
    at4 = [r for r in rows if abs(r.alpha - 4.0) < 1e-12][0]
    assert (at4.this_work, at4.foss_feig, at4.matsuta) == pytest.approx((3.0, 7 / 3, 3.0))
    for r in rows:
        if r.alpha <= 2:
            assert r.matsuta is None
    for line in text.splitlines()[1:]:
        alpha = float(line.split(",")[0])
        if alpha <= 2:
            assert line.endswith(",")


def test_curve_lc1_columns_equal():
    for r in curve(1, 1.1, 8.0, 20, "LC1"):
        assert r.this_work == r.foss_feig == r.matsuta


def test_curve_json_nulls():
    data = json.loads(curve_to_json(curve(1, 1.5, 3.0, 4, "LC2"), dim=1))
    assert data["rows"][0]["matsuta"] is None
    assert data["dim"] == 1


def test_curve_rejects_alpha_min():
    with pytest.raises(BoundError):
        curve(1, 1.0, 3.0, 5, "LC2")


def test_enums_round_trip():
    assert Which("LC2") is Which.LC2 and Method("matsuta") is Method.MATSUTA
