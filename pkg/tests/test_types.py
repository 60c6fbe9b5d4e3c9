import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from prfpoly.types import (DOHRS, DPRS, CountTable, FiniteParams, Grid, InitialMeasure,
                           ScaledParams, default_grid, phi1, scale_map)


@pytest.mark.parametrize("fp, expected", [
    (FiniteParams(100, 0.01, 0.02, 10000), (1.0, 2.0, 1.0)),
    (FiniteParams(2, 0.0, 0.0, 0), (0.0, 0.0, 0.0)),
    (FiniteParams(200, 0.005, 0.005, 8000), (0.2, 1.0, 1.0)),
])
def test_scale_map_examples(fp, expected):
    b = scale_map(fp)
    assert (b.t, b.theta, b.gamma) == pytest.approx(expected, rel=1e-14, abs=0)


@given(N=st.integers(2, 2000), t=st.floats(0, 5), theta=st.floats(0, 50),
       gamma=st.floats(-40, 40))
def test_scale_round_trip(N, t, theta, gamma):
    assume(1 + gamma / N > 0)
    b = ScaledParams(t, theta, gamma)
    fp = FiniteParams.from_scaled(N, b)
    back = scale_map(fp)
    assert back.theta == pytest.approx(theta, rel=1e-12, abs=1e-300)
    assert back.gamma == pytest.approx(gamma, rel=1e-12, abs=1e-300)
    # k is rounded to an integer number of steps
    assert abs(back.t - t) <= 0.5 / N ** 2 + 1e-12


@pytest.mark.parametrize("kw", [dict(t=-1, theta=1), dict(t=1, theta=-0.1),
                                dict(t=1, theta=1, gamma=math.inf), dict(t=math.nan, theta=1)])
def test_scaled_params_validation(kw):
    with pytest.raises(ValueError):
        ScaledParams(**kw)


@pytest.mark.parametrize("kw", [dict(N=1), dict(N=10, sigma=-1.0), dict(N=10, mu=-1e-3),
                                dict(N=10, k=-1), dict(N=10.5)])
def test_finite_params_validation(kw):
    with pytest.raises(ValueError):
        FiniteParams(**kw)


def test_json_round_trips():
    b = ScaledParams(0.3, 2.0, -1.5)
    assert ScaledParams.from_dict(json.loads(json.dumps(b.to_dict()))) == b
    fp = FiniteParams(50, 0.02, 0.01, 77)
    assert FiniteParams.from_dict(json.loads(json.dumps(fp.to_dict()))) == fp
    g = Grid.uniform(16, 0.01)
    assert Grid.from_dict(json.loads(json.dumps(g.to_dict()))) == g
    for nu in (InitialMeasure.zero(), InitialMeasure.equilibrium(2.0, 1.0),
               InitialMeasure.tabulated([0, 0.5, 1], [1.0, 0.5, 0.0])):
        back = InitialMeasure.from_dict(json.loads(json.dumps(nu.to_dict())))
        x = np.linspace(0, 1, 11)
        assert back.kind == nu.kind
        np.testing.assert_allclose(back.x_density(x), nu.x_density(x))
    t = CountTable(DOHRS, 5, 7, {"K_s": 1, "O_s": 2, "H_s": 0, "K_r": 3, "O_r": 4, "H_r": 1})
    assert CountTable.from_dict(json.loads(json.dumps(t.to_dict()))) == t


def test_grid_validation_and_refinement():
    with pytest.raises(ValueError):
        Grid(np.linspace(0, 1, 5))
    with pytest.raises(ValueError):
        Grid(np.linspace(0.1, 1, 20))
    with pytest.raises(ValueError):
        Grid(np.array([0, 0.2, 0.1] + list(np.linspace(0.3, 1, 8))))
    with pytest.raises(ValueError):
        Grid.uniform(16, 0.0)
    g = Grid.uniform(16, 0.01)
    r = g.refined()
    assert r.J == 32 and r.dt == 0.005 and r.is_uniform
    np.testing.assert_array_equal(r.nodes[::2], g.nodes)
    assert default_grid(0.1).dt == pytest.approx(0.1 / 200)
    assert default_grid(2.0).dt == 1e-3


def test_phi1_series_branch():
    z = np.array([-1e-9, 0.0, 1e-9, 1e-3, -2.0, 5.0])
    ref = np.where(z == 0, 1.0, -np.expm1(-z) / np.where(z == 0, 1, z))
    np.testing.assert_allclose(phi1(z), ref, rtol=1e-12)
    assert phi1(0.0) == 1.0


@given(theta=st.floats(0, 20), gamma=st.floats(-30, 30))
@settings(max_examples=50)
def test_equilibrium_x_density_bounded(theta, gamma):
    nu = InitialMeasure.equilibrium(theta, gamma)
    x = np.linspace(0, 1, 101)
    v = nu.x_density(x)
    assert np.all(np.isfinite(v)) and np.all(v >= 0)
    # at x -> 0 the product tends to theta (s'(0) = 1)
    assert v[0] == pytest.approx(theta, rel=1e-12, abs=1e-300)


def test_equilibrium_density_formula():
    theta, g = 2.0, 1.5
    nu = InitialMeasure.equilibrium(theta, g)
    x = np.array([0.1, 0.4, 0.9])
    s = (1 - np.exp(-g * x)) / g
    s1 = (1 - np.exp(-g)) / g
    ref = theta * np.exp(g * x) * (s1 - s) / (x * (1 - x) * s1)
    np.testing.assert_allclose(nu.density(x), ref, rtol=1e-12)


def test_initial_measure_validation():
    with pytest.raises(ValueError):
        InitialMeasure("weird")
    with pytest.raises(ValueError):
        InitialMeasure.tabulated([0, 1], [1.0, -1.0])
    assert InitialMeasure.equilibrium(0.0).is_zero


def test_count_table_validation_and_collapse():
    c = {"K_s": 1, "O_s": 2, "H_s": 3, "K_r": 4, "O_r": 5, "H_r": 6}
    t = CountTable(DOHRS, 3, 4, c)
    d = t.to_dprs()
    assert d.layout == DPRS
    assert d.counts == {"K_s": 1, "V_s": 5, "K_r": 4, "V_r": 11}
    assert t.to_dprs(double_count_shared=True)["V_s"] == 8
    with pytest.raises(ValueError):
        CountTable(DOHRS, 3, 4, {**c, "H_r": -1})
    with pytest.raises(ValueError):
        CountTable(DPRS, 3, 4, c)
    with pytest.raises(ValueError):
        CountTable(DOHRS, 0, 4, c)
    # expected means may be real
    CountTable(DOHRS, 3, 4, {k: v + 0.5 for k, v in c.items()})
