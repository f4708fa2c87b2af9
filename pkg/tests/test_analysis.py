import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fleetsim import analysis as an
from fleetsim.geometry import C0


def brute_frontier(L, A=16.0, alpha=0.25, lam_h=39.0, nu=30.0, C_d=20000.0, C_v=2000.0, l_max=100):
    # independent evaluation straight from the formula, all depot counts up to l_max
    side = math.sqrt(A)
    best = math.inf
    for l in range(1, l_max + 1):
        r = math.isqrt(l)
        if r * r != l or l < L:
            continue
        H = C0 * side / r
        val = C_d * 4 * A / (9 * math.pi * H ** 2) + C_v * math.floor(2 * lam_h * H / (alpha * nu))
        best = min(best, val)
    return best


def test_load_factor():
    assert an.load_factor(0.65, 2.0, 0.25, 12) == pytest.approx(0.65 * 2 / 3)
    with pytest.raises(ValueError):
        an.load_factor(0.65, 2.0, 0.25, 0)


def test_min_delivery_time():
    assert an.min_delivery_time(16, 30, 1, H_star=1.53039) == pytest.approx(3.061, abs=1e-3)
    z = an.min_delivery_time(16, 30, 1)
    assert z < 3.061


def test_min_depots_and_vehicles():
    assert an.min_depots(16, 30, 3.061) == pytest.approx(4 * 16 / (9 * math.pi * 30 ** 2 * (3.061 / 60) ** 2))
    assert an.min_vehicles(0.65, 0.25, 3.0607829) == pytest.approx(15.916, abs=1e-3)


def test_tau_star():
    g, tau = an.aux_g_and_tau_star(an.MATTERNET)
    assert tau == pytest.approx(0.1691144, abs=1e-6)
    assert 60 * tau == pytest.approx(10.14, abs=0.01)
    p2 = an.PlanningParams(16, 0.25, 39.0, 30.0, 7 * 20000.0, 7 * 2000.0)
    assert an.aux_g_and_tau_star(p2)[1] == pytest.approx(tau, rel=1e-12)
    p3 = an.PlanningParams.make(A=16, alpha=0.25, nu_kmh=30, C_d=20000, C_v=2000, lambda_per_min=0.65)
    assert an.aux_g_and_tau_star(p3)[1] == pytest.approx(tau, rel=1e-12)


def test_g_stationary_point():
    g, _ = an.aux_g_and_tau_star(an.MATTERNET)
    ts = an.tau_stationary(an.MATTERNET)
    h = 1e-6 * ts
    assert abs(g(ts + h) - g(ts - h)) / (2 * h) < 1e-6 * float(g(ts)) / ts
    grid = np.linspace(0.01, 0.5, 200001)
    assert grid[np.argmin(g(grid))] == pytest.approx(ts, abs=1e-5)


def test_frontier_treads():
    pts = {p.L: p for p in an.frontier()}
    assert pts[1].T_tread == pytest.approx(3.061, abs=1e-3)
    assert pts[4].T_tread == pytest.approx(1.530, abs=1e-3)
    assert pts[1].K_term == 15 and pts[4].K_term == 7
    for L in (1, 4, 9, 16, 25):
        assert round(pts[L].I_min, 2) == round(brute_frontier(L), 2)
    assert pts[1].I_min == pytest.approx(49329.14, abs=0.01)
    assert pts[4].I_min == pytest.approx(91316.56, abs=0.01)


def test_frontier_strict_rounding():
    p1 = an.frontier(rounding="strict")[0]
    assert p1.K_term == 16
    with pytest.raises(ValueError):
        an.frontier(rounding="ceil")


def test_frontier_monotone():
    I = [p.I_min for p in an.frontier()]
    T = [p.T_tread for p in an.frontier()]
    assert all(a <= b for a, b in zip(I, I[1:]))
    assert all(a > b for a, b in zip(T, T[1:]))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e3, 1e5), st.floats(100, 1e4), st.floats(10, 100), st.floats(5, 80))
def test_frontier_matches_brute_force(C_d, C_v, lam_h, nu):
    p = an.PlanningParams(16.0, 0.25, lam_h, nu, C_d, C_v)
    for pt in an.frontier(p, l_max=49):
        assert pt.I_min == pytest.approx(
            brute_frontier(pt.L, lam_h=lam_h, nu=nu, C_d=C_d, C_v=C_v, l_max=49), rel=1e-12)


def test_unit_conversion():
    p = an.PlanningParams.make(A=16, alpha=0.25, nu_kmh=30, C_d=20000, C_v=2000, lambda_per_min=0.65)
    assert p.lambda_per_hour == pytest.approx(39.0)
    with pytest.raises(ValueError):
        an.PlanningParams.make(A=16, alpha=0.25, nu_kmh=30, C_d=1, C_v=1, lambda_per_min=1, lambda_per_hour=60)


def test_integer_envelope_strict():
    rows = an.integer_envelope()
    L1 = rows[0]
    assert L1[:1] == (1,) and L1[2] == 16 and L1[3] == 20000 + 16 * 2000
    for L, T, K, _ in rows:
        assert K > an.min_vehicles(0.65, 0.25, T)


def test_stability_necessary():
    assert an.stability_necessary(1.0, 1.0, 0.25, 12, 0.65)
    assert not an.stability_necessary(3.0, 3.0, 0.25, 12, 0.65)
    assert an.stability_necessary_generic(1.0, 30.0, 1, 0.5)


def test_impossible_region():
    reg = an.impossible_region(0.65, 0.25, 30.0, 16)
    assert reg["T_min"] == pytest.approx(0.7651957, abs=1e-6)
    assert reg["K_rho1"] == pytest.approx(0.65 * 2 * reg["T_min"] / 0.25)
    assert reg["rho"][4] == pytest.approx(reg["K_rho1"] / 4)
