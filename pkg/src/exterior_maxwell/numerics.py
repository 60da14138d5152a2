"""Grids, stencils, quadrature, time stepping and fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .geometry import BlackHoleParams, horizon_gap_of_tortoise


@dataclass(frozen=True)
class RadialGrid:
    """Uniform grid in the tortoise coordinate with cached radius tables."""

    rstar_min: float
    rstar_max: float
    n_r: int
    params: BlackHoleParams = BlackHoleParams()
    rstar: np.ndarray = field(init=False, repr=False, compare=False)
    r: np.ndarray = field(init=False, repr=False, compare=False)
    mu: np.ndarray = field(init=False, repr=False, compare=False)
    lapse: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_r < 16:
            raise ValueError("n_r must be at least 16")
        if not self.rstar_max > self.rstar_min:
            raise ValueError("rstar_max must exceed rstar_min")
        rs = np.linspace(self.rstar_min, self.rstar_max, self.n_r)
        gap = np.asarray(horizon_gap_of_tortoise(rs, self.params))
        m2 = 2.0 * self.params.mass
        r = m2 + gap
        object.__setattr__(self, "rstar", rs)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "mu", m2 / r)
        object.__setattr__(self, "lapse", gap / r)
        for arr in (rs, r, self.mu, self.lapse):
            arr.setflags(write=False)

    @property
    def spacing(self) -> float:
        return (self.rstar_max - self.rstar_min) / (self.n_r - 1)

    def index_window(self, lo: float, hi: float) -> slice:
        """Slice of grid indices whose rstar lies in [lo, hi]."""
        i0 = int(np.searchsorted(self.rstar, lo - 1e-12 * self.spacing, side="left"))
        i1 = int(np.searchsorted(self.rstar, hi + 1e-12 * self.spacing, side="right"))
        return slice(i0, i1)


@dataclass(frozen=True)
class AngularGrid:
    """Gauss-Legendre nodes in x = cos(theta)."""

    n_theta: int
    x: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    theta: np.ndarray = field(init=False, repr=False, compare=False)
    sin: np.ndarray = field(init=False, repr=False, compare=False)
    bary: np.ndarray = field(init=False, repr=False, compare=False)
    diff: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_theta < 2:
            raise ValueError("n_theta must be at least 2")
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        # barycentric weights for arbitrary nodes
        diffs = x[:, None] - x[None, :]
        np.fill_diagonal(diffs, 1.0)
        lam = 1.0 / np.prod(diffs, axis=1)
        lam /= np.max(np.abs(lam))
        D = (lam[None, :] / lam[:, None]) / diffs
        np.fill_diagonal(D, 0.0)
        np.fill_diagonal(D, -D.sum(axis=1))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "theta", np.arccos(x))
        object.__setattr__(self, "sin", np.sqrt(1.0 - x * x))
        object.__setattr__(self, "bary", lam)
        object.__setattr__(self, "diff", D)

    def interpolation_row(self, x0: float) -> np.ndarray:
        """Row vector L with L @ values = interpolant at x0 (barycentric form)."""
        d = x0 - self.x
        hit = np.nonzero(d == 0.0)[0]
        if hit.size:
            row = np.zeros(self.n_theta)
            row[hit[0]] = 1.0
            return row
        q = self.bary / d
        return q / q.sum()


@dataclass(frozen=True)
class Grids:
    radial: RadialGrid
    angular: AngularGrid

    @property
    def shape(self):
        return (self.radial.n_r, self.angular.n_theta)


@dataclass(frozen=True)
class FitResult:
    exponent: float
    amplitude: float
    residual: float
    n_samples: int = 0


# ---------------------------------------------------------------------------
# finite differences

_INTERIOR = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0


def d_rstar(samples, grid: RadialGrid, axis: int = 0) -> np.ndarray:
    """Fourth-order first derivative along the radial axis."""
    f = np.asarray(samples, dtype=float)
    if f.shape[axis] != grid.n_r:
        raise ValueError(f"expected {grid.n_r} radial samples, got {f.shape[axis]}")
    f = np.moveaxis(f, axis, 0)
    h = grid.spacing
    out = np.empty_like(f)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    head = f[:5]
    tail = f[-5:]
    out[0] = np.tensordot(_EDGE0, head, axes=1) / h
    out[1] = np.tensordot(_EDGE1, head, axes=1) / h
    out[-1] = -np.tensordot(_EDGE0, tail[::-1], axes=1) / h
    out[-2] = -np.tensordot(_EDGE1, tail[::-1], axes=1) / h
    return np.moveaxis(out, 0, axis)


def d_rstar_sixth(samples, grid: RadialGrid) -> np.ndarray:
    """Sixth-order centered derivative, used only for diagnostics.

    The three points at each edge are left as NaN.
    """
    f = np.asarray(samples, dtype=float)
    h = grid.spacing
    out = np.full_like(f, np.nan)
    out[3:-3] = (
        -f[:-6] + 9.0 * f[1:-5] - 45.0 * f[2:-4] + 45.0 * f[4:-2] - 9.0 * f[5:-1] + f[6:]
    ) / (60.0 * h)
    return out


def integrate_sphere(density, grid: AngularGrid, axis: int = -1):
    """2 pi sum_k w_k density(x_k): the integral over the unit sphere of an axisymmetric density."""
    d = np.asarray(density, dtype=float)
    return 2.0 * math.pi * np.tensordot(d, grid.weights, axes=([axis], [0]))


def integrate_radial(values, grid: RadialGrid, window: slice | None = None, axis: int = -1):
    """Trapezoid rule in rstar over the grid (or a contiguous window of it)."""
    v = np.asarray(values, dtype=float)
    if window is not None:
        v = np.take(v, np.arange(grid.n_r)[window], axis=axis)
    return np.trapezoid(v, dx=grid.spacing, axis=axis)


def cubic_interpolation_weights(grid: RadialGrid, rstar: float):
    """Indices and weights of the local four-point Lagrange interpolant in rstar."""
    h = grid.spacing
    s = (rstar - grid.rstar_min) / h
    if s < -1e-9 or s > grid.n_r - 1 + 1e-9:
        raise ValueError(f"rstar={rstar} outside grid [{grid.rstar_min}, {grid.rstar_max}]")
    i = int(math.floor(s)) - 1
    i = min(max(i, 0), grid.n_r - 4)
    xs = s - np.arange(i, i + 4)
    w = np.empty(4)
    for k in range(4):
        num = 1.0
        den = 1.0
        for j in range(4):
            if j != k:
                num *= xs[j]
                den *= (k - j)
        w[k] = num / den
    return np.arange(i, i + 4), w


def _lagrange_cell_integrals(offsets, a: float, b: float) -> np.ndarray:
    """int_a^b of the four Lagrange basis polynomials on nodes ``offsets`` (cell units)."""
    out = np.empty(4)
    for k in range(4):
        others = [offsets[j] for j in range(4) if j != k]
        poly = np.polynomial.Polynomial.fromroots(others) / np.prod([offsets[k] - o for o in others])
        anti = poly.integ()
        out[k] = anti(b) - anti(a)
    return out


_FULL_CELL = _lagrange_cell_integrals((-1, 0, 1, 2), 0.0, 1.0)


def interval_quadrature_weights(grid: RadialGrid, lo: float, hi: float) -> np.ndarray:
    """Weights w with w @ samples = int_lo^hi of the piecewise-cubic interpolant.

    Each cell [x_i, x_i+1] uses nodes i-1..i+2 (shifted inward at the grid
    edges); partial cells at arbitrary lo, hi are integrated exactly, so the
    rule is fourth order for smooth integrands and any bounds.
    """
    h = grid.spacing
    n = grid.n_r
    sa = (lo - grid.rstar_min) / h
    sb = (hi - grid.rstar_min) / h
    if sa < -1e-9 or sb > n - 1 + 1e-9 or sb < sa:
        raise ValueError(f"interval [{lo}, {hi}] outside grid [{grid.rstar_min}, {grid.rstar_max}]")
    sa, sb = max(sa, 0.0), min(sb, n - 1.0)
    w = np.zeros(n)
    c0 = min(int(math.floor(sa)), n - 2)
    c1 = min(int(math.ceil(sb)), n - 1)
    for c in range(c0, c1):
        a = max(sa, c) - c
        b = min(sb, c + 1) - c
        if b <= a:
            continue
        first = min(max(c - 1, 0), n - 4)
        offsets = tuple(first - c + j for j in range(4))
        if offsets == (-1, 0, 1, 2) and a == 0.0 and b == 1.0:
            w[first:first + 4] += _FULL_CELL
        else:
            w[first:first + 4] += _lagrange_cell_integrals(offsets, a, b)
    return w * h


# ---------------------------------------------------------------------------
# time stepping


def rk4_step(state, rhs, dt: float):
    """One classical Runge-Kutta step.  Raises FloatingPointError on NaN."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = rhs(state)
    k2 = rhs(state + (0.5 * dt) * k1)
    k3 = rhs(state + (0.5 * dt) * k2)
    k4 = rhs(state + dt * k3)
    new = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("non-finite value produced by rk4_step")
    return new


def stable_timestep(grids: Grids, cfl: float = 0.5) -> float:
    """cfl * min(radial spacing, angular light-crossing time of one node spacing).

    The angular term uses the smallest node spacing in theta times the
    smallest value of r / sqrt(1 - mu) on the grid, which is the tortoise-time
    for a signal to cross that angle.
    """
    rad = grids.radial
    theta = np.sort(grids.angular.theta)
    spacing = np.min(np.diff(np.concatenate(([0.0], theta, [math.pi]))))
    ang = np.min(rad.r / np.sqrt(rad.lapse)) * spacing
    return cfl * min(rad.spacing, ang)


# ---------------------------------------------------------------------------
# fitting and roots


def fit_power_law(times, values, window=None) -> FitResult:
    """Least squares fit of log(value) = log(A) - exponent * log(time)."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is not None:
        lo, hi = window
        keep = (t >= lo) & (t <= hi)
        t, y = t[keep], y[keep]
    if t.size < 8:
        raise ValueError(f"need at least 8 samples in window, got {t.size}")
    if np.any(~(y > 0)) or np.any(~(t > 0)):
        raise ValueError("power-law fit needs positive times and values")
    lt, ly = np.log(t), np.log(y)
    slope, icpt = np.polyfit(lt, ly, 1)
    resid = ly - (slope * lt + icpt)
    return FitResult(float(-slope), float(math.exp(icpt)), float(np.sqrt(np.mean(resid**2))), int(t.size))


def bisect_root(func, lo: float, hi: float, rtol: float = 1e-13) -> float:
    """Bracketed root via scipy's bisection."""
    return float(optimize.bisect(func, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=400))
