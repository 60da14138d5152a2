import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from exterior_maxwell.geometry import BlackHoleParams, tortoise_of_r
from exterior_maxwell.numerics import (
    AngularGrid,
    Grids,
    RadialGrid,
    bisect_root,
    cubic_interpolation_weights,
    d_rstar,
    d_rstar_sixth,
    fit_power_law,
    integrate_radial,
    integrate_sphere,
    interval_quadrature_weights,
    rk4_step,
    stable_timestep,
)

M1 = BlackHoleParams()


def grid(n=201, lo=-10.0, hi=10.0):
    return RadialGrid(lo, hi, n, M1)


def test_radial_grid_invariants():
    g = grid()
    assert g.spacing == pytest.approx(0.1)
    back = tortoise_of_r(g.r[g.rstar > -20], M1)
    assert np.max(np.abs(back - g.rstar[g.rstar > -20])) < 1e-12 * 20
    assert np.allclose(g.mu + g.lapse, 1.0, atol=1e-15)
    with pytest.raises(ValueError):
        RadialGrid(0.0, 1.0, 8, M1)
    with pytest.raises(ValueError):
        RadialGrid(1.0, 0.0, 32, M1)


def test_angular_grid_invariants():
    for n in (2, 7, 24):
        a = AngularGrid(n)
        assert abs(a.weights.sum() - 2.0) <= 1e-14
        assert np.all(np.abs(a.x) < 1.0)


def test_d_rstar_examples():
    g = grid()
    assert np.max(np.abs(d_rstar(np.ones(g.n_r), g))) < 1e-12
    assert np.max(np.abs(d_rstar(g.rstar**2, g) - 2 * g.rstar)) < 1e-10
    assert np.max(np.abs(d_rstar(g.rstar**4, g) - 4 * g.rstar**3)) < 1e-8
    with pytest.raises(ValueError):
        d_rstar(np.ones(5), g)


def test_d_rstar_fourth_order():
    errs = []
    for n in (101, 201, 401):
        g = grid(n)
        errs.append(np.max(np.abs(d_rstar(np.sin(g.rstar), g) - np.cos(g.rstar))))
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.15)
    assert math.log2(errs[1] / errs[2]) >= 3.9


def test_sixth_order_stencil():
    errs = []
    for n in (101, 201):
        g = grid(n)
        errs.append(np.nanmax(np.abs(d_rstar_sixth(np.sin(g.rstar), g) - np.cos(g.rstar))))
    assert math.log2(errs[0] / errs[1]) > 5.5


def test_d_rstar_axis_argument():
    g = grid()
    f = np.outer(np.sin(g.rstar), [1.0, 2.0, 3.0])
    assert np.allclose(d_rstar(f, g, axis=0), d_rstar(f.T, g, axis=1).T)


def test_integrate_sphere_examples():
    a = AngularGrid(12)
    assert integrate_sphere(np.ones(12), a) == pytest.approx(4 * math.pi, rel=1e-14)
    assert abs(integrate_sphere(a.x, a)) < 1e-14
    assert integrate_sphere(a.sin**2, a) == pytest.approx(8 * math.pi / 3, rel=1e-14)


@given(st.integers(2, 20), st.data())
def test_sphere_quadrature_exactness(n, data):
    a = AngularGrid(n)
    deg = data.draw(st.integers(0, 2 * n - 1))
    coeffs = np.zeros(deg + 1)
    coeffs[-1] = 1.0
    exact = 2 * math.pi * np.polynomial.polynomial.Polynomial(coeffs).integ()(1.0) * 2 if deg % 2 == 0 else 0.0
    got = integrate_sphere(a.x**deg, a)
    assert abs(got - exact) <= 1e-12 * max(1.0, abs(exact))


def test_sphere_quadrature_resolution_independence():
    f = lambda x: np.exp(np.cos(2 * np.arccos(x)))
    vals = [integrate_sphere(f(AngularGrid(n).x), AngularGrid(n)) for n in (24, 48)]
    assert abs(vals[0] - vals[1]) / vals[1] < 1e-10


def test_integrate_radial_trapezoid():
    g = grid()
    assert integrate_radial(np.ones(g.n_r), g) == pytest.approx(20.0, rel=1e-14)
    assert integrate_radial(np.ones(g.n_r), g, window=slice(0, 11)) == pytest.approx(1.0, rel=1e-14)


def test_cubic_interpolation_exact_for_cubics():
    g = grid()
    f = 1 + g.rstar - 0.3 * g.rstar**2 + 0.01 * g.rstar**3
    for x in (-10.0, -9.95, 0.123, 9.99, 10.0):
        idx, w = cubic_interpolation_weights(g, x)
        assert w.sum() == pytest.approx(1.0, abs=1e-14)
        assert w @ f[idx] == pytest.approx(1 + x - 0.3 * x * x + 0.01 * x**3, abs=1e-11)
    with pytest.raises(ValueError):
        cubic_interpolation_weights(g, 10.5)


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_interval_weights_exact_for_cubics(a, b):
    lo, hi = min(a, b), max(a, b)
    g = grid(41)
    f = 2 - g.rstar + 0.5 * g.rstar**2 - 0.02 * g.rstar**3
    F = lambda x: 2 * x - x * x / 2 + x**3 / 6 - 0.005 * x**4
    w = interval_quadrature_weights(g, lo, hi)
    assert w @ f == pytest.approx(F(hi) - F(lo), abs=1e-10)


def test_interval_weights_fourth_order_and_trapezoid_interior():
    errs = []
    for n in (51, 101, 201):
        g = grid(n)
        w = interval_quadrature_weights(g, -3.07, 4.91)
        errs.append(abs(w @ np.exp(np.sin(g.rstar)) - integrate.quad(lambda x: math.exp(math.sin(x)), -3.07, 4.91, epsabs=1e-14)[0]))
    assert math.log2(errs[1] / errs[2]) > 3.5
    g = grid(41)
    w = interval_quadrature_weights(g, g.rstar[0], g.rstar[-1])
    assert np.allclose(w[4:-4], g.spacing, rtol=1e-13)
    assert w.sum() == pytest.approx(g.rstar[-1] - g.rstar[0], rel=1e-14)
    with pytest.raises(ValueError):
        interval_quadrature_weights(g, -11.0, 0.0)


def test_rk4_examples():
    y = np.array([1.0])
    assert np.array_equal(rk4_step(y, lambda s: 0 * s, 0.1), y)
    # one classical step reproduces the degree-4 Taylor polynomial of e^-0.1
    one = rk4_step(y, lambda s: -s, 0.1)[0]
    assert one == pytest.approx(1 - 0.1 + 0.01 / 2 - 0.001 / 6 + 0.0001 / 24, abs=1e-15)
    assert abs(one - math.exp(-0.1)) <= 1.01 * 0.1**5 / 120
    # ten steps of 0.01 reach the stated 1e-8 accuracy
    s = y
    for _ in range(10):
        s = rk4_step(s, lambda u: -u, 0.01)
    assert s[0] == pytest.approx(math.exp(-0.1), abs=1e-8)
    with pytest.raises(ValueError):
        rk4_step(y, lambda s: -s, 0.0)
    with pytest.raises(FloatingPointError):
        rk4_step(y, lambda s: s * np.nan, 0.1)


def test_rk4_harmonic_oscillator_energy():
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    s = np.array([1.0, 0.0])
    dt = 0.01
    for _ in range(1000):
        s = rk4_step(s, lambda u: A @ u, dt)
    assert abs(0.5 * (s @ s) - 0.5) <= 1e-8
    assert s[0] == pytest.approx(math.cos(10.0), abs=1e-9)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_rk4_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(5, 5))
    s1, s2 = rng.normal(size=5), rng.normal(size=5)
    f = lambda u: A @ u
    lhs = rk4_step(a * s1 + b * s2, f, 0.05)
    rhs = a * rk4_step(s1, f, 0.05) + b * rk4_step(s2, f, 0.05)
    assert np.max(np.abs(lhs - rhs)) <= 1e-13 * max(1.0, np.max(np.abs(lhs)))


def test_stable_timestep():
    g = Grids(grid(), AngularGrid(8))
    dt = stable_timestep(g, 0.5)
    assert 0 < dt <= 0.5 * g.radial.spacing


def test_fit_power_law_examples():
    t = np.linspace(10, 100, 50)
    assert fit_power_law(t, 1 / t).exponent == pytest.approx(1.0, abs=1e-6)
    assert fit_power_law(t, 1 / t**2).exponent == pytest.approx(2.0, abs=1e-6)
    rng = np.random.default_rng(4)
    res = fit_power_law(t, 3 / t**1.5 + 1e-6 * rng.normal(size=t.size))
    assert res.exponent == pytest.approx(1.5, abs=1e-3)
    assert res.residual >= 0 and res.n_samples == 50
    assert fit_power_law(t, 3 / t**1.5, window=(20, 60)).n_samples < 50


def test_fit_power_law_errors():
    t = np.linspace(10, 100, 20)
    with pytest.raises(ValueError):
        fit_power_law(t, -1 / t)
    with pytest.raises(ValueError):
        fit_power_law(t[:5], 1 / t[:5])


@given(st.floats(0.1, 5.0), st.floats(0.01, 100.0))
def test_fit_recovers_exponent(k, amp):
    t = np.geomspace(1, 1000, 30)
    res = fit_power_law(t, amp * t**-k)
    assert res.exponent == pytest.approx(k, abs=1e-9)
    assert res.amplitude == pytest.approx(amp, rel=1e-8)


def test_bisect_root():
    assert bisect_root(lambda x: x * x - 2, 0, 2) == pytest.approx(math.sqrt(2), rel=1e-13)
