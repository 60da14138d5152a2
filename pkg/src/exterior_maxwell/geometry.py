"""Closed-form Schwarzschild exterior geometry.

Charts used throughout the package:

* ``tortoise``      (t, rstar, theta, phi), metric (1-mu)(-dt^2 + drstar^2) + r^2 dOmega^2
* ``schwarzschild`` (t, r, theta, phi)
* ``null``          (v, w, theta, phi) with v = t + rstar, w = t - rstar

The tortoise coordinate is rstar = r + 2m ln(r - 2m), with the logarithm
taken literally (no 2m rescaling inside the log).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """Raised when a point lies on or inside the horizon."""


@dataclass(frozen=True)
class BlackHoleParams:
    mass: float = 1.0

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError(f"mass must be positive and finite, got {self.mass}")

    def mu(self, r):
        return 2.0 * self.mass / np.asarray(r, dtype=float)

    @property
    def horizon(self) -> float:
        return 2.0 * self.mass

    @property
    def photon_sphere(self) -> float:
        return 3.0 * self.mass


@dataclass(frozen=True)
class SpacetimePoint:
    t: float
    rstar: float
    theta: float
    phi: float = 0.0

    def to_null(self) -> "DoubleNullPoint":
        return DoubleNullPoint(self.t + self.rstar, self.t - self.rstar, self.theta, self.phi)


@dataclass(frozen=True)
class DoubleNullPoint:
    v: float
    w: float
    theta: float
    phi: float = 0.0

    def to_tortoise(self) -> SpacetimePoint:
        return SpacetimePoint(0.5 * (self.v + self.w), 0.5 * (self.v - self.w), self.theta, self.phi)


@dataclass(frozen=True)
class KruskalPoint:
    vprime: float
    wprime: float
    tprime: float
    xprime: float
    conformal_factor: float
    saturated: bool = False


class FrameLabel(enum.Enum):
    T = "t"
    RSTAR = "rstar"
    THETA = "theta"
    PHI = "phi"
    V = "v"
    W = "w"
    E1 = "e1"
    E2 = "e2"


# ---------------------------------------------------------------------------
# tortoise map


def tortoise_of_r(r, p: BlackHoleParams):
    """rstar = r + 2m ln(r - 2m); raises DomainError for r <= 2m."""
    r = np.asarray(r, dtype=float)
    gap = r - 2.0 * p.mass
    if np.any(~(gap > 0)):
        raise DomainError("tortoise coordinate requires r > 2m")
    out = r + 2.0 * p.mass * np.log(gap)
    return float(out) if out.ndim == 0 else out


def _log_gap_of_tortoise(rstar, m: float):
    """Solve for u = ln((r - 2m)/2m) given rstar.

    With y = (r - 2m)/2m the relation reads y + ln y = z where
    z = (rstar - 2m - 2m ln 2m)/2m.  In terms of u this is e^u + u = z,
    convex and increasing, so Newton started to the right of the root
    converges monotonically.  Bisection cleans up anything left over.
    """
    rstar = np.asarray(rstar, dtype=float)
    if np.any(~np.isfinite(rstar)):
        raise ValueError("rstar must be finite")
    z = (rstar - 2.0 * m - 2.0 * m * math.log(2.0 * m)) / (2.0 * m)
    u = np.where(z <= 1.0, z, np.log(np.maximum(z, 1.0)))
    for _ in range(60):
        eu = np.exp(u)
        step = (eu + u - z) / (eu + 1.0)
        u = u - step
        if np.all(np.abs(step) <= 1e-16 * np.maximum(1.0, np.abs(u))):
            break
    resid = np.exp(u) + u - z
    bad = np.abs(resid) > 1e-13 * np.maximum(1.0, np.abs(z))
    if np.any(bad):
        u = np.array(u, copy=True)
        for idx in zip(*np.nonzero(np.atleast_1d(bad))):
            zi = np.atleast_1d(z)[idx]
            lo, hi = min(zi, 0.0) - 1.0, max(zi, 1.0)
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if math.exp(mid) + mid > zi:
                    hi = mid
                else:
                    lo = mid
            np.atleast_1d(u)[idx] = 0.5 * (lo + hi)
    return u


def horizon_gap_of_tortoise(rstar, p: BlackHoleParams):
    """r - 2m as a function of rstar, computed without cancellation."""
    u = _log_gap_of_tortoise(rstar, p.mass)
    out = 2.0 * p.mass * np.exp(u)
    return float(out) if np.ndim(out) == 0 else out


def r_of_tortoise(rstar, p: BlackHoleParams):
    """Inverse of tortoise_of_r.  Deep in the throat r rounds to 2m(1 + eps)."""
    gap = horizon_gap_of_tortoise(rstar, p)
    r = 2.0 * p.mass + np.asarray(gap)
    r = np.maximum(r, np.nextafter(2.0 * p.mass, np.inf))
    return float(r) if np.ndim(r) == 0 else r


def lapse_of_tortoise(rstar, p: BlackHoleParams):
    """1 - mu = (r - 2m)/r evaluated from the horizon gap."""
    gap = np.asarray(horizon_gap_of_tortoise(rstar, p))
    out = gap / (2.0 * p.mass + gap)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# metric and connection

_CHARTS = {
    "tortoise": ("t", "rstar", "theta", "phi"),
    "schwarzschild": ("t", "r", "theta", "phi"),
    "null": ("v", "w", "theta", "phi"),
}
_ALIASES = {"r*": "rstar", "th": "theta", "ph": "phi", "θ": "theta", "φ": "phi"}


def _radius_and_angle(point, p: BlackHoleParams):
    if isinstance(point, DoubleNullPoint):
        point = point.to_tortoise()
    gap = float(horizon_gap_of_tortoise(point.rstar, p))
    r = 2.0 * p.mass + gap
    return r, point.theta, gap / r


def metric_components(point, p: BlackHoleParams, chart: str = "tr*"):
    """Return (g, g_inverse) as 4x4 arrays in the requested chart.

    ``chart`` is one of "tr*" (tortoise), "vw" (null) or "tr" (schwarzschild).
    """
    r, th, lapse = _radius_and_angle(point, p)
    s2 = math.sin(th) ** 2
    g = np.zeros((4, 4))
    ginv = np.zeros((4, 4))
    g[2, 2], g[3, 3] = r * r, r * r * s2
    ginv[2, 2], ginv[3, 3] = 1.0 / (r * r), 1.0 / (r * r * s2)
    if chart in ("tr*", "tortoise"):
        g[0, 0], g[1, 1] = -lapse, lapse
        ginv[0, 0], ginv[1, 1] = -1.0 / lapse, 1.0 / lapse
    elif chart in ("vw", "null"):
        g[0, 1] = g[1, 0] = -0.5 * lapse
        ginv[0, 1] = ginv[1, 0] = -2.0 / lapse
    elif chart in ("tr", "schwarzschild"):
        g[0, 0], g[1, 1] = -lapse, 1.0 / lapse
        ginv[0, 0], ginv[1, 1] = -1.0 / lapse, lapse
    else:
        raise ValueError(f"unknown chart {chart!r}")
    return g, ginv


def christoffel_table(point, p: BlackHoleParams, chart: str = "tortoise") -> np.ndarray:
    """Full table G[a, b, c] = Gamma^a_{bc} in the given chart."""
    r, th, lapse = _radius_and_angle(point, p)
    m = p.mass
    mu = 2.0 * m / r
    s, c = math.sin(th), math.cos(th)
    G = np.zeros((4, 4, 4))

    def put(a, b, cc, val):
        G[a, b, cc] = val
        G[a, cc, b] = val

    if chart == "tortoise":
        half = mu / (2.0 * r)
        put(0, 0, 1, half)
        put(1, 0, 0, half)
        put(1, 1, 1, half)
        put(1, 2, 2, -r)
        put(1, 3, 3, -r * s * s)
        put(2, 1, 2, lapse / r)
        put(3, 1, 3, lapse / r)
    elif chart == "schwarzschild":
        put(0, 0, 1, mu / (2.0 * r * lapse))
        put(1, 0, 0, lapse * mu / (2.0 * r))
        put(1, 1, 1, -mu / (2.0 * r * lapse))
        put(1, 2, 2, -lapse * r)
        put(1, 3, 3, -lapse * r * s * s)
        put(2, 1, 2, 1.0 / r)
        put(3, 1, 3, 1.0 / r)
    elif chart == "null":
        half = mu / (2.0 * r)
        put(0, 0, 0, half)
        put(1, 1, 1, -half)
        put(0, 2, 2, -r)
        put(1, 2, 2, r)
        put(0, 3, 3, -r * s * s)
        put(1, 3, 3, r * s * s)
        put(2, 0, 2, lapse / (2.0 * r))
        put(2, 1, 2, -lapse / (2.0 * r))
        put(3, 0, 3, lapse / (2.0 * r))
        put(3, 1, 3, -lapse / (2.0 * r))
    else:
        raise ValueError(f"unknown chart {chart!r}")
    put(2, 3, 3, -s * c)
    put(3, 2, 3, c / s)
    return G


def _resolve_chart(labels):
    labels = [_ALIASES.get(lab, lab) for lab in labels]
    present = set(labels)
    if present & {"v", "w"}:
        chart = "null"
    elif "r" in present:
        chart = "schwarzschild"
    else:
        chart = "tortoise"
    names = _CHARTS[chart]
    try:
        return chart, [names.index(lab) for lab in labels]
    except ValueError:
        raise ValueError(f"indices {labels} do not belong to a single chart") from None


def connection_coefficient(upper: str, lower1: str, lower2: str, point, p: BlackHoleParams) -> float:
    """Gamma^upper_{lower1 lower2}.

    Index labels pick the chart: any of "v"/"w" selects the null chart, "r"
    selects the schwarzschild chart, otherwise the tortoise chart
    ("t", "rstar", "theta", "phi").  Mixing charts is an error.
    """
    chart, (a, b, c) = _resolve_chart([upper, lower1, lower2])
    return float(christoffel_table(point, p, chart)[a, b, c])


# ---------------------------------------------------------------------------
# frames

_FRAME_ORDER = (FrameLabel.T, FrameLabel.RSTAR, FrameLabel.THETA, FrameLabel.PHI)


def _frame_vector(label: FrameLabel, r, th, p):
    """Tortoise-chart components of a frame vector and their d/drstar, d/dtheta."""
    m = p.mass
    mu = 2.0 * m / r
    lapse = 1.0 - mu
    sq = math.sqrt(lapse)
    s, c = math.sin(th), math.cos(th)
    comp = np.zeros(4)
    d_r = np.zeros(4)
    d_th = np.zeros(4)
    if label is FrameLabel.T:
        comp[0] = 1.0 / sq
        d_r[0] = -0.5 * mu / (r * sq)
    elif label is FrameLabel.RSTAR:
        comp[1] = 1.0 / sq
        d_r[1] = -0.5 * mu / (r * sq)
    elif label in (FrameLabel.THETA, FrameLabel.E1):
        comp[2] = 1.0 / r
        d_r[2] = -lapse / (r * r)
    elif label in (FrameLabel.PHI, FrameLabel.E2):
        comp[3] = 1.0 / (r * s)
        d_r[3] = -lapse / (r * r * s)
        d_th[3] = -c / (r * s * s)
    elif label is FrameLabel.V:
        comp[0] = comp[1] = 0.5
    elif label is FrameLabel.W:
        comp[0], comp[1] = 0.5 / lapse, -0.5 / lapse
        d = -0.5 * mu / (r * lapse)
        d_r[0], d_r[1] = d, -d
    else:
        raise ValueError(label)
    return comp, d_r, d_th


def frame_covariant_derivative(direction: FrameLabel, field_vector: FrameLabel, point, p: BlackHoleParams, connection=None):
    """nabla_direction field_vector, returned on the orthonormal frame (t, rstar, theta, phi).

    ``connection(point, p, chart)`` replaces christoffel_table when given.
    """
    r, th, lapse = _radius_and_angle(point, p)
    X, _, _ = _frame_vector(direction, r, th, p)
    Y, dY_r, dY_th = _frame_vector(field_vector, r, th, p)
    G = (connection or christoffel_table)(point, p, "tortoise")
    dY = np.zeros((4, 4))  # dY[a, b] = d_a Y^b
    dY[1] = dY_r
    dY[2] = dY_th
    coord = X @ dY + np.einsum("a,bac,c->b", X, G, Y)
    scale = np.array([math.sqrt(lapse), math.sqrt(lapse), r, r * math.sin(th)])
    return coord * scale


# ---------------------------------------------------------------------------
# compactified charts

_SATURATION = 300.0


def kruskal_of_null(point: DoubleNullPoint, p: BlackHoleParams) -> KruskalPoint:
    m = p.mass
    a, b = point.v / (4.0 * m), -point.w / (4.0 * m)
    saturated = abs(point.v) > _SATURATION * m or abs(point.w) > _SATURATION * m
    lim = _SATURATION / 4.0
    a_c, b_c = min(max(a, -lim), lim), min(max(b, -lim), lim)
    vp, wp = math.exp(a_c), -math.exp(b_c)
    rstar = 0.5 * (point.v - point.w)
    r = r_of_tortoise(rstar, p)
    conformal = 16.0 * m * m / r * math.exp(-r / (2.0 * m))
    return KruskalPoint(vp, wp, 0.5 * (vp + wp), 0.5 * (vp - wp), conformal, saturated)


def kruskal_interval(kp: KruskalPoint) -> float:
    """(t')^2 - (x')^2, evaluated as the product v' w' to avoid cancellation."""
    return kp.vprime * kp.wprime


def penrose_of_kruskal(kp: KruskalPoint, p: BlackHoleParams):
    return math.atan(kp.vprime / (2.0 * p.mass)), math.atan(kp.wprime / (2.0 * p.mass))
