import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exterior_maxwell import geometry as geo
from exterior_maxwell.geometry import (
    BlackHoleParams,
    DomainError,
    DoubleNullPoint,
    FrameLabel,
    SpacetimePoint,
    christoffel_table,
    connection_coefficient,
    frame_covariant_derivative,
    kruskal_interval,
    kruskal_of_null,
    metric_components,
    penrose_of_kruskal,
    r_of_tortoise,
    tortoise_of_r,
)

M1 = BlackHoleParams(1.0)
HALF = BlackHoleParams(0.5)


def at_r(r, theta=1.0, t=0.0, p=M1):
    return SpacetimePoint(t, tortoise_of_r(r, p), theta)


# tortoise map


def test_tortoise_examples():
    assert tortoise_of_r(2.0, HALF) == pytest.approx(2.0, abs=1e-15)
    mp_val = mpmath.mpf("1.5") + mpmath.log(mpmath.mpf("0.5"))
    assert tortoise_of_r(1.5, HALF) == pytest.approx(float(mp_val), rel=1e-15)
    assert tortoise_of_r(4.0, M1) == pytest.approx(float(4 + 2 * mpmath.log(2)), rel=1e-15)


@pytest.mark.parametrize("r", [2.0, 1.0, 0.5])
def test_tortoise_rejects_horizon_and_interior(r):
    with pytest.raises(DomainError):
        tortoise_of_r(r, M1)


def test_inverse_examples():
    assert r_of_tortoise(2.0, HALF) == pytest.approx(2.0, rel=1e-13)
    assert r_of_tortoise(0.80685, HALF) == pytest.approx(1.5, abs=1e-5)
    assert r_of_tortoise(tortoise_of_r(1.5, HALF), HALF) == pytest.approx(1.5, abs=1e-9)


def test_inverse_deep_near_horizon_is_finite_and_monotone():
    rs = np.linspace(-400.0, -50.0, 200)
    gap = geo.horizon_gap_of_tortoise(rs, M1)
    assert np.all(gap > 0) and np.all(np.diff(gap) > 0)
    r = r_of_tortoise(rs, M1)
    assert np.all(r >= 2.0) and np.all(np.diff(r) >= 0)


@given(st.floats(min_value=1e-6, max_value=98.0), st.floats(min_value=0.25, max_value=4.0))
def test_round_trip_property(gap_units, mass):
    p = BlackHoleParams(mass)
    r = 2 * mass + 2 * mass * gap_units / 2
    back = r_of_tortoise(tortoise_of_r(r, p), p)
    assert abs(back - r) <= 1e-12 * r


@given(st.floats(min_value=-300, max_value=300), st.floats(min_value=1e-6, max_value=50))
def test_inverse_residual_and_monotone(rstar, step):
    r1 = r_of_tortoise(rstar, M1)
    r2 = r_of_tortoise(rstar + step, M1)
    assert r2 >= r1 > 2.0 or r1 == 2.0
    # r itself cannot resolve r - 2m near the horizon; the residual is checked on the gap
    gap = float(geo.horizon_gap_of_tortoise(rstar, M1))
    assert abs(2.0 + gap + 2.0 * math.log(gap) - rstar) <= 1e-12 * max(1.0, abs(rstar))
    assert geo.horizon_gap_of_tortoise(rstar + step, M1) > gap


# metric


def test_metric_examples():
    g, ginv = metric_components(at_r(3.0), M1, "tr*")
    assert g[0, 0] == pytest.approx(-1 / 3, rel=1e-13)
    assert g[1, 1] == pytest.approx(1 / 3, rel=1e-13)
    assert g[2, 2] == pytest.approx(9.0, rel=1e-13)
    assert g[3, 3] == pytest.approx(9.0 * math.sin(1.0) ** 2, rel=1e-13)
    g, _ = metric_components(at_r(4.0), M1, "vw")
    assert g[0, 0] == 0.0 and g[1, 1] == 0.0
    assert g[0, 1] == pytest.approx(-0.25, rel=1e-13)


@given(st.floats(2.001, 80.0), st.floats(0.05, math.pi - 0.05), st.sampled_from(["tr*", "vw", "tr"]))
def test_metric_inverse(r, theta, chart):
    g, ginv = metric_components(at_r(r, theta), M1, chart)
    assert np.max(np.abs(g @ ginv - np.eye(4))) <= 1e-14 * 4


def test_unknown_chart():
    with pytest.raises(ValueError):
        metric_components(at_r(4.0), M1, "xyz")


# connection


def test_connection_examples():
    pt = at_r(4.0)
    assert connection_coefficient("r", "theta", "theta", pt, M1) == pytest.approx(-2.0, rel=1e-13)
    assert connection_coefficient("t", "t", "rstar", pt, M1) == pytest.approx(0.0625, rel=1e-13)
    eq = at_r(4.0, theta=math.pi / 2)
    assert abs(connection_coefficient("phi", "theta", "phi", eq, M1)) < 1e-16


def test_connection_rejects_mixed_charts():
    with pytest.raises(ValueError):
        connection_coefficient("r", "v", "theta", at_r(4.0), M1)


@given(st.floats(2.001, 50.0), st.floats(0.05, 3.09), st.sampled_from(["tortoise", "schwarzschild", "null"]))
def test_connection_symmetric_in_lower_indices(r, theta, chart):
    G = christoffel_table(at_r(r, theta), M1, chart)
    assert np.array_equal(G, np.swapaxes(G, 1, 2))


def _christoffel_from_metric_oracle(r, theta):
    """Gamma from mpmath differentiation of the closed-form Schwarzschild metric in (t, r, theta, phi)."""
    mpmath.mp.dps = 40
    m = 1

    def metric(x):
        rr, th = x[1], x[2]
        lapse = 1 - 2 * m / rr
        return [[-lapse, 0, 0, 0], [0, 1 / lapse, 0, 0], [0, 0, rr**2, 0], [0, 0, 0, rr**2 * mpmath.sin(th) ** 2]]

    x0 = [mpmath.mpf(0), mpmath.mpf(r), mpmath.mpf(theta), mpmath.mpf(0)]
    g = mpmath.matrix(metric(x0))
    ginv = g**-1
    dg = [[[mpmath.mpf(0)] * 4 for _ in range(4)] for _ in range(4)]
    for c in (1, 2):
        for a in range(4):
            for b in range(4):
                def comp(s, a=a, b=b, c=c):
                    x = list(x0)
                    x[c] = x[c] + s
                    return metric(x)[a][b]
                dg[c][a][b] = mpmath.diff(comp, 0)
    out = np.zeros((4, 4, 4))
    for a in range(4):
        for b in range(4):
            for c in range(4):
                out[a, b, c] = float(sum(0.5 * ginv[a, d] * (dg[b][d][c] + dg[c][d][b] - dg[d][b][c]) for d in range(4)))
    return out


@pytest.mark.parametrize("r,theta", [(2.3, 0.7), (3.0, 1.2), (7.5, 2.5)])
def test_schwarzschild_table_matches_metric_oracle(r, theta):
    want = _christoffel_from_metric_oracle(r, theta)
    got = christoffel_table(at_r(r, theta), M1, "schwarzschild")
    assert np.max(np.abs(got - want)) <= 1e-12 * max(1.0, np.max(np.abs(want)))


# frame


def _frame_gram(r, theta):
    pt = at_r(r, theta)
    g, _ = metric_components(pt, M1, "tr*")
    vecs = [geo._frame_vector(lab, r, theta, M1)[0] for lab in (FrameLabel.T, FrameLabel.RSTAR, FrameLabel.THETA, FrameLabel.PHI)]
    E = np.array(vecs)
    return E @ g @ E.T


@given(st.floats(2.01, 60.0), st.floats(0.05, 3.09))
def test_frame_orthonormal(r, theta):
    assert np.max(np.abs(_frame_gram(r, theta) - np.diag([-1.0, 1, 1, 1]))) <= 1e-14 * 10


def test_null_frame_scalings():
    r, theta = 4.0, 1.0
    pt = at_r(r, theta)
    g, _ = metric_components(pt, M1, "tr*")
    v = geo._frame_vector(FrameLabel.V, r, theta, M1)[0]
    w = geo._frame_vector(FrameLabel.W, r, theta, M1)[0]
    lapse = 0.5
    # hatted v is d_v, hatted w is d_w / (1 - mu); g(d_v, d_w) = -(1 - mu)/2
    assert v @ g @ w == pytest.approx(-0.5, rel=1e-14)
    assert v @ g @ v == pytest.approx(0.0, abs=1e-15)
    assert (w * lapse) @ g @ v == pytest.approx(-lapse / 2, rel=1e-14)


def test_frame_examples():
    pt = at_r(4.0)
    assert np.allclose(frame_covariant_derivative(FrameLabel.RSTAR, FrameLabel.T, pt, M1), 0.0, atol=1e-16)
    got = frame_covariant_derivative(FrameLabel.THETA, FrameLabel.THETA, pt, M1)
    assert got[1] == pytest.approx(-math.sqrt(0.5) / 4, rel=1e-13)
    assert got[1] == pytest.approx(-0.17678, abs=1e-5)
    assert np.allclose(frame_covariant_derivative(FrameLabel.THETA, FrameLabel.PHI, pt, M1), 0.0, atol=1e-16)


@given(st.floats(2.01, 40.0), st.floats(0.1, 3.0), st.sampled_from(list(FrameLabel)[:4]))
def test_radial_derivative_of_frame_vanishes(r, theta, label):
    got = frame_covariant_derivative(FrameLabel.RSTAR, label, at_r(r, theta), M1)
    assert np.max(np.abs(got)) <= 1e-14 * 10


# Kruskal and Penrose


def test_kruskal_examples():
    kp = kruskal_of_null(DoubleNullPoint(4.0, -4.0, 1.0), M1)
    assert kp.vprime == pytest.approx(math.e, rel=1e-15)
    assert kp.wprime == pytest.approx(-math.e, rel=1e-15)
    assert kruskal_of_null(DoubleNullPoint(0.0, 3.0, 1.0), BlackHoleParams(2.5)).vprime == 1.0
    assert kp.vprime > 0 > kp.wprime


def test_kruskal_conformal_factor():
    r = 4.0
    rs = tortoise_of_r(r, M1)
    kp = kruskal_of_null(DoubleNullPoint(rs, -rs, 1.0), M1)
    assert kp.conformal_factor == pytest.approx(16.0 / r * math.exp(-r / 2), rel=1e-12)


def test_kruskal_interval_vanishes_at_horizon():
    vals = []
    for gap in (1e-2, 1e-4, 1e-6, 1e-8):
        rs = tortoise_of_r(2.0 + gap, M1)
        vals.append(abs(kruskal_interval(kruskal_of_null(DoubleNullPoint(rs, -rs, 1.0), M1))))
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-7


@given(st.floats(1e-6, 8.0), st.floats(-100.0, 100.0))
def test_kruskal_relation(gap, t):
    r = 2.0 + gap
    rs = tortoise_of_r(r, M1)
    kp = kruskal_of_null(DoubleNullPoint(t + rs, t - rs, 1.0), M1)
    r_back = r_of_tortoise(rs, M1)
    ref = math.exp(r_back / 2) * (r_back - 2)
    assert abs(kp.tprime**2 - kp.xprime**2 + ref) <= 1e-10 * ref * 10 + 1e-10 * kp.tprime**2
    assert abs(kruskal_interval(kp) + ref) <= 1e-10 * ref


def test_kruskal_saturation_flag():
    kp = kruskal_of_null(DoubleNullPoint(400.0, 390.0, 1.0), M1)
    assert kp.saturated and math.isfinite(kp.vprime)


def test_penrose_examples():
    kp = kruskal_of_null(DoubleNullPoint(0.0, 0.0, 1.0), M1)
    from exterior_maxwell.geometry import KruskalPoint

    assert penrose_of_kruskal(KruskalPoint(0.0, -1.0, -0.5, 0.5, 1.0), M1)[0] == 0.0
    assert penrose_of_kruskal(KruskalPoint(2.0, -1.0, 0.5, 1.5, 1.0), M1)[0] == pytest.approx(math.pi / 4, rel=1e-15)
    assert penrose_of_kruskal(KruskalPoint(1e300, -1.0, 0, 0, 1.0), M1)[0] == pytest.approx(math.pi / 2)
    vpp, wpp = penrose_of_kruskal(kp, M1)
    assert -math.pi / 2 < vpp < math.pi / 2 and -math.pi / 2 < wpp < math.pi / 2


@given(st.floats(-250, 250), st.floats(-250, 250))
def test_penrose_range(v, w):
    vpp, wpp = penrose_of_kruskal(kruskal_of_null(DoubleNullPoint(v, w, 1.0), M1), M1)
    assert -math.pi / 2 < vpp <= math.pi / 2 and -math.pi / 2 <= wpp < math.pi / 2
    assert -math.pi < vpp + wpp < math.pi
