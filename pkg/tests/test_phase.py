import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gwtree import phase as ph, recursion as rc
from gwtree.model import ParameterError


def test_beta_c_values():
    cp = ph.beta_c(0.4, 0.3)
    assert cp.b_c == pytest.approx(1.0297619047619, rel=1e-12)
    assert cp.beta_c == pytest.approx(0.0293276, abs=1e-7)
    assert ph.beta_c(0.5, 0.2).b_c == pytest.approx(1.3214286, abs=1e-7)
    assert ph.beta_c(0.3, 0.3).beta_c == 0.0


def test_beta_c_errors():
    with pytest.raises(ph.SupercriticalError):
        ph.beta_c(0.2, 0.3)
    with pytest.raises(ParameterError):
        ph.beta_c(0.5, 0.0)
    with pytest.raises(ParameterError):
        ph.beta_c(0.1, 0.95)


@settings(max_examples=60, deadline=None)
@given(p0=st.floats(0.05, 0.9), frac=st.floats(0.05, 0.95))
def test_double_root_at_beta_c(p0, frac):
    p2 = min(frac * p0, 1 - p0)
    if p2 < 1e-3:
        return
    cp = ph.beta_c(p0, p2)
    fp = ph.fixed_point([p0, 1 - p0 - p2, p2], cp.b_c, tol=1e-9)
    assert fp.exists and fp.double_root
    u, v = ph.critical_fixed_point(p0, p2)
    assert fp.v == pytest.approx(v, rel=1e-6)
    assert fp.u == pytest.approx(u, rel=1e-6)


def test_fixed_point_examples():
    fp = ph.fixed_point([0.4, 0.3, 0.3], ph.beta_c(0.4, 0.3).b_c)
    assert fp.exists and fp.double_root
    assert fp.u == pytest.approx(1.1311953, abs=1e-7)
    assert fp.v == pytest.approx(1.1428571, abs=1e-7)
    assert fp.spectral_radius == pytest.approx(1.0, abs=1e-6)
    fp = ph.fixed_point([0.5, 0.3, 0.2], 1.2)
    assert (fp.u, fp.v) == pytest.approx((1.0795800, 1.1307210), abs=1e-6)
    assert not fp.double_root and fp.spectral_radius < 1
    fp = ph.fixed_point([0.5, 0.3, 0.2], 1.0)
    assert (fp.u, fp.v) == pytest.approx((1.0, 1.0), abs=1e-12)


@pytest.mark.parametrize("p, b", [([0.5, 0.3, 0.2], 1.2), ([0.4, 0.3, 0.3], 1.01),
                                  ([0.6, 0.1, 0.3], 1.1)])
def test_fixed_point_is_attractor_from_one(p, b):
    fp = ph.fixed_point(p, b)
    assert np.allclose(rc.f_map((fp.u, fp.v), p, b), (fp.u, fp.v), rtol=0, atol=1e-12)
    assert fp.v >= fp.u >= 1
    s = rc.advance(p, b, 20000)
    assert (s.u, s.v) == pytest.approx((fp.u, fp.v), abs=1e-10)


def test_fixed_point_supercritical():
    assert ph.fixed_point([0.2, 0.4, 0.4], 1.5).reason == "supercritical"
    assert not ph.fixed_point([0.4, 0.3, 0.3], 1.2).exists
    with pytest.raises(ParameterError):
        ph.fixed_point([0.4, 0.3, 0.2, 0.1], 1.2)


@pytest.mark.parametrize("p0, p2", [(0.4, 0.3), (0.5, 0.2), (0.6, 0.15)])
def test_empirical_criticality(p0, p2):
    br = ph.empirical_criticality([p0, 1 - p0 - p2, p2], 1, 1.0, 2.0)
    assert br.hi - br.lo <= 1e-6
    assert br.estimate == pytest.approx(ph.beta_c(p0, p2).b_c, abs=1e-3)


def test_empirical_criticality_edge_and_errors():
    br = ph.empirical_criticality([0.3, 0.4, 0.3], 1, 1.0, 1.5)
    assert br.estimate == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(ParameterError):
        ph.empirical_criticality([0.4, 0.3, 0.3], 1, 1.0, 1.01)


def test_critical_scaling_short():
    res = ph.critical_scaling([0.4, 0.3, 0.3], 1, 20000)
    assert res.exponent == pytest.approx(-2.0, abs=0.15)
    assert res.n[0] == 1 and res.n[-1] == 20000


def test_critical_scaling_free_cases():
    res = ph.critical_scaling([0.3, 0.4, 0.3], 1, 10000, b=1.0)
    assert np.allclose(res.meanN, 1.0, rtol=1e-9)
    assert res.exponent == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ph.SupercriticalError):
        ph.critical_scaling([0.2, 0.4, 0.4], 1, 10000, b=1.0)


def test_fit_exact():
    x = np.arange(1.0, 20.0)
    f = ph.fit(x, 3 * x ** -2.0, "powerlaw")
    assert f.coefficients["exponent"] == pytest.approx(-2.0)
    assert f.coefficients["prefactor"] == pytest.approx(3.0)
    assert f.rms < 1e-12
    g = ph.fit(x, 0.5 - 2.0 / x, "gamma_delta")
    assert g.coefficients == pytest.approx({"gamma": 0.5, "delta": 2.0})
    b = 1 + np.linspace(0.05, 0.5, 8)
    h = ph.fit(b, -12.0 + 7.5 * np.log(b - 1), "log_linear")
    assert h.coefficients == pytest.approx({"intercept": -12.0, "slope": 7.5})


def test_fit_errors():
    with pytest.raises(ParameterError):
        ph.fit([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], "powerlaw")
    with pytest.raises(ParameterError):
        ph.fit([1.0, 2.0], [1.0, 2.0], "powerlaw")
    with pytest.raises(ParameterError):
        ph.fit([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], "cubic")


def test_scan_surface():
    grid = np.linspace(0.05, 0.95, 19)
    rows, skipped = ph.scan_surface(grid, grid)
    assert rows and skipped
    assert all(r.beta_c >= 0 for r in rows)
    diag = [r for r in rows if r.p0 == r.p2]
    assert diag and all(r.beta_c == 0 for r in diag)
    col = sorted((r for r in rows if r.p0 == 0.5), key=lambda r: r.p2)
    assert all(a.beta_c > b.beta_c for a, b in zip(col, col[1:]))
    _, sk = ph.scan_surface([0.1], [0.5])
    assert len(sk) == 1


def test_rho_reference():
    r = ph.rho(0.9, 1.1)
    assert r.converged
    assert r.loglog_rho == pytest.approx(-30.0, abs=1.0)
    assert r.lower <= r.rho <= r.upper
    assert r.psi == -r.log_rho
    inc, below = ph.check_s_sequence(r)
    assert inc and below


@pytest.mark.parametrize("p1", [0.3, 0.6, 0.9])
def test_rho_bounds_and_monotone(p1):
    res = ph.rho_sweep(p1, [1.1, 1.2, 1.5, 3.0])
    for r in res:
        assert r.converged and r.lower <= r.rho <= r.upper and r.rho > 1
        assert all(ph.check_s_sequence(r))
    assert all(a.log_rho <= b.log_rho for a, b in zip(res, res[1:]))


def test_rho_ratio_and_psi():
    r = ph.rho(0.6, 1.5)
    assert abs(r.Lv[-1] - r.Lu[-1] - math.log(1.5)) < 1e-8
    traj = rc.run([0.0, 0.6, 0.4], 1.5, 60, logspace=True)
    psi = traj.observables(1)["psi"][-1]
    assert psi == pytest.approx(r.psi, rel=1e-6)


def test_rho_errors():
    with pytest.raises(ParameterError):
        ph.rho(1.0, 1.2)
    with pytest.raises(ParameterError):
        ph.rho(0.5, 1.0)


def test_crossover_fits():
    f1 = ph.crossover_fit(0.9, 1.1, (10, 50))
    f2 = ph.crossover_fit(0.9, 1.1, (50, 1000))
    assert f1.coefficients["gamma"] == pytest.approx(0.145, abs=0.02)
    assert f1.coefficients["delta"] == pytest.approx(5.0, rel=0.15)
    assert f2.coefficients["gamma"] == pytest.approx(math.log(2), abs=0.01)
    assert f2.coefficients["delta"] == pytest.approx(30.0, rel=0.15)


def test_approach_fixed_point():
    fp = ph.fixed_point([0.5, 0.3, 0.2], 1.2)
    a = ph.approach_fixed_point([0.5, 0.3, 0.2], 1.2, (fp.u, fp.v), 1e-12, 10_000)
    assert a.reached and a.steps < 1000
