"""Vector-field multipliers: currents, energies, fluxes and bulk integrals.

Notation.  With N = 1 - mu, the stress tensor of F in the null frame reduces
to three nonnegative blocks per point:

    T_vv = (F_{v theta}^2 + F_{v phi}^2 / s^2) / r^2
    T_ww = (F_{w theta}^2 + F_{w phi}^2 / s^2) / r^2
    mid  = F_{vw}^2 / N^2 + F_{theta phi}^2 / (4 r^4 s^2),   T_vw = N * mid

A multiplier X = X^v d_v + X^w d_w (no angular part, independent of theta)
is described by X^v, X^w and the four derivatives d_v X^v, d_w X^w,
d_v X^w, d_w X^v.  Its deformation contraction is

    pi(X).T = -(2/N) T_ww d_v X^w - (2/N) T_vv d_w X^v
              - 2 mid [d_v X^v + d_w X^w + (3 mu - 2)/(2 r) (X^v - X^w)]

and the divergence identity on [t1, t2] x [a, b] x S^2 reads

    E_X(t2) - E_X(t1) + int dt [flux_X]_a^b = int int N r^2 pi(X).T

with slice current eps_X = -r^2 T(d_t, X) and radial current
flux_X = r^2 T(d_r*, X), both per unit sphere area.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import maxwell
from .geometry import BlackHoleParams, tortoise_of_r
from .numerics import (
    Grids,
    RadialGrid,
    bisect_root,
    cubic_interpolation_weights,
    integrate_sphere,
    interval_quadrature_weights,
)


class MultiplierKind(str, enum.Enum):
    T = "T"
    K = "K"
    G = "G"
    H = "H"


class InfeasibleProfile(ValueError):
    """No h profile satisfies the constraints for the requested r1."""

    def __init__(self, message: str, radius: float | None = None, constraint: str | None = None):
        super().__init__(message)
        self.radius = radius
        self.constraint = constraint


# ---------------------------------------------------------------------------
# weight profiles


def _smoothstep(y):
    y = np.clip(y, 0.0, 1.0)
    return y**3 * (10.0 - 15.0 * y + 6.0 * y * y)


def _smoothstep_integral(y):
    """int_0^y smoothstep for y in [0, 1]."""
    y = np.clip(y, 0.0, 1.0)
    return y**4 * (2.5 - 3.0 * y + y * y)


@dataclass(frozen=True)
class RampProfile:
    """f(r*) = int_{-inf}^{r*} of a C^2 smoothed indicator of [lo, hi].

    Each edge of the indicator is a quintic smoothstep over [edge - hw, edge + hw].
    """

    lo: float
    hi: float
    half_width: float = 0.3

    def _edge(self, x, edge):
        u = (np.asarray(x, dtype=float) - edge) / self.half_width
        step = _smoothstep(0.5 * (u + 1.0))
        integral = np.where(u >= 1.0, u, 2.0 * _smoothstep_integral(0.5 * (u + 1.0)))
        return step, self.half_width * integral

    def f(self, rstar):
        _, a = self._edge(rstar, self.lo)
        _, b = self._edge(rstar, self.hi)
        return a - b

    def fprime(self, rstar):
        a, _ = self._edge(rstar, self.lo)
        b, _ = self._edge(rstar, self.hi)
        return a - b


def estimate_ramp(p: BlackHoleParams, r1: float, half_width: float = 0.3) -> RampProfile:
    """Ramp whose derivative is the smoothed indicator of [r1*, (1.2 r1)*]."""
    return RampProfile(tortoise_of_r(r1, p), tortoise_of_r(1.2 * r1, p), half_width)


@dataclass(frozen=True)
class ConstantProfile:
    value: float = 1.0

    def f(self, rstar):
        return np.full(np.shape(rstar), self.value, dtype=float)

    def fprime(self, rstar):
        return np.zeros(np.shape(rstar), dtype=float)


def h_feasibility_radius(p: BlackHoleParams) -> float:
    """Edge of the window (r - 2m)(r^2 + 6m) <= 4m^2 where the two h envelopes are compatible."""
    m = p.mass
    g = lambda r: (r - 2 * m) * (r * r + 6 * m) - 4 * m * m
    return bisect_root(g, 2 * m, 3 * m)


def _h_envelope(r, m):
    """Closed-form solution of dh/dr* = kappa h with h -> 1 at the horizon.

    kappa = (r - 2m)(r^2 + 6m) / (2 m r^2); in terms of r the equation is
    d ln h / dr = r/(2m) + 3/r, so h = (r / 2m)^3 exp((r^2 - 4m^2) / 4m).
    """
    return (r / (2 * m)) ** 3 * np.exp((r * r - 4 * m * m) / (4 * m))


def _h_rate(r, m):
    return (r - 2 * m) * (r * r + 6 * m) / (2 * m * r * r)


@dataclass(frozen=True)
class HProfile:
    r1: float
    params: BlackHoleParams
    rstar: np.ndarray = field(repr=False, compare=False)
    r: np.ndarray = field(repr=False, compare=False)
    h: np.ndarray = field(repr=False, compare=False)
    hprime: np.ndarray = field(repr=False, compare=False)
    margins: np.ndarray = field(repr=False, compare=False)

    MARGIN_NAMES = (
        "mu_over_r_h_minus_hprime",
        "h_positive",
        "hprime_nonnegative",
        "hprime_over_lapse_minus_3h_over_r",
        "lower_envelope",
    )

    @property
    def cutoff_radius(self) -> float:
        return 1.2 * self.r1

    def evaluate(self, rstar, r=None):
        """(h, dh/dr*) at arbitrary tortoise positions."""
        from .geometry import r_of_tortoise

        rstar = np.asarray(rstar, dtype=float)
        r = np.asarray(r_of_tortoise(rstar, self.params) if r is None else r, dtype=float)
        return _h_values(r, self.r1, self.params.mass)

    def f(self, rstar):
        return self.evaluate(rstar)[0]

    def fprime(self, rstar):
        return self.evaluate(rstar)[1]


def _h_values(r, r1, m):
    r = np.asarray(r, dtype=float)
    lapse = (r - 2 * m) / r
    env = _h_envelope(r, m)
    kappa = _h_rate(r, m)
    width = 0.2 * r1
    y = (r - r1) / width
    chi = 1.0 - _smoothstep(y)
    dchi_dr = np.where((y > 0) & (y < 1), -30.0 * y * y * (1 - y) ** 2 / width, 0.0)
    h = env * chi
    hp = (kappa * env) * chi + env * dchi_dr * lapse
    h = np.where(r >= 1.2 * r1, 0.0, h)
    hp = np.where(r >= 1.2 * r1, 0.0, hp)
    return h, hp


def h_margins(r, h, hp, m):
    """The five constraint margins, each >= 0 when the constraint holds.

    1. (mu/r) h - h'
    2. h
    3. h'
    4. h'/(1-mu) - 3h/r                         (i.e. -h'/(1-mu) + 3h/r <= 0)
    5. mu/(1-mu) (h' - kappa h)                 (i.e. mu[-h'/(1-mu) + 3h/r] <= -h)

    Margin 5 is the exact algebraic rearrangement of the last constraint with
    kappa = (1-mu)(r^2 + 6m)/(2 m r), which makes saturation evaluate to 0.
    """
    mu = 2 * m / r
    lapse = (r - 2 * m) / r
    kappa = _h_rate(r, m)
    return np.array(
        [
            mu / r * h - hp,
            h,
            hp,
            hp / lapse - 3.0 * h / r,
            mu / lapse * (hp - kappa * h),
        ]
    )


def build_h_profile(p: BlackHoleParams, r1: float, grid: RadialGrid | None = None, allow_nonunit_mass: bool = False) -> HProfile:
    """Saturate the lower constraint, cut off smoothly on [r1, 1.2 r1], certify on the grid."""
    m = p.mass
    if m != 1.0 and not allow_nonunit_mass:
        raise InfeasibleProfile("h constraints contain dimensionful terms; only m = 1 is certified", constraint="unit_mass")
    if not (2 * m < r1 and 1.2 * r1 < 3 * m):
        raise InfeasibleProfile(
            f"r1 = {r1} violates 2m < r1 and 1.2 r1 < 3m", radius=r1, constraint="r1_range"
        )
    r_feas = h_feasibility_radius(p)
    if grid is None:
        grid = RadialGrid(-60.0 * m, tortoise_of_r(1.3 * r1, p) + 2.0, 4001, p)
    r = grid.r
    h, hp = _h_values(r, r1, m)
    margins = h_margins(r, h, hp, m)
    inside = r <= r1
    for k, name in enumerate(HProfile.MARGIN_NAMES):
        bad = inside & ~(margins[k] >= 0.0)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise InfeasibleProfile(
                f"constraint {name} fails at r = {r[i]:.10g} (feasible only for r <= {r_feas:.10g})",
                radius=float(r[i]),
                constraint=name,
            )
    if r1 > r_feas:
        raise InfeasibleProfile(
            f"r1 = {r1} lies beyond the feasibility radius {r_feas:.10g}", radius=r_feas, constraint=HProfile.MARGIN_NAMES[0]
        )
    return HProfile(r1, p, grid.rstar.copy(), r.copy(), h, hp, margins)


# ---------------------------------------------------------------------------
# sign radii


@dataclass(frozen=True)
class SignRadii:
    r0: float
    R0: float

    def tortoise(self, p: BlackHoleParams):
        return tortoise_of_r(self.r0, p), tortoise_of_r(self.R0, p)


def conformal_coefficient(r, p: BlackHoleParams):
    """c(r) = 2 + (3 mu - 2) r*/r, with 3mu - 2 written as 2(3m - r)/r."""
    r = np.asarray(r, dtype=float)
    return 2.0 + 2.0 * (3 * p.mass - r) / r * tortoise_of_r(r, p) / r


def find_sign_radii(p: BlackHoleParams) -> SignRadii:
    m = p.mass

    def g(r):
        return tortoise_of_r(r, p) + r * r / (3 * m - r)  # r* + 2r/(3mu - 2)

    eps = 1e-9
    r0 = bisect_root(g, 2 * m * (1 + 1e-12), 3 * m * (1 - eps))
    R0 = bisect_root(g, 3 * m * (1 + eps), 1000 * m)
    return SignRadii(r0, R0)


# ---------------------------------------------------------------------------
# multipliers


@dataclass(frozen=True)
class MultiplierSpec:
    kind: MultiplierKind
    profile: object = None  # f for G (RampProfile/ConstantProfile), HProfile for H

    def __post_init__(self):
        object.__setattr__(self, "kind", MultiplierKind(self.kind))
        if self.kind in (MultiplierKind.G, MultiplierKind.H) and self.profile is None:
            raise ValueError(f"multiplier {self.kind.value} needs a radial profile")

    def components(self, t, rstar, r, mu, lapse=None):
        """(X^v, X^w, d_v X^v, d_w X^w, d_v X^w, d_w X^v) broadcast over t and rstar.

        ``lapse`` should be passed near the horizon, where 1 - mu loses all digits.
        """
        t = np.asarray(t, dtype=float)
        rstar = np.asarray(rstar, dtype=float)
        r = np.asarray(r, dtype=float)
        mu = np.asarray(mu, dtype=float)
        zero = np.zeros(np.broadcast(t, rstar).shape)
        if self.kind is MultiplierKind.T:
            one = zero + 1.0
            return one, one, zero, zero, zero, zero
        if self.kind is MultiplierKind.K:
            v, w = t + rstar, t - rstar
            return -v * v, -w * w, -2.0 * v, -2.0 * w, zero, zero
        lapse = 1.0 - mu if lapse is None else np.asarray(lapse, dtype=float)
        if self.kind is MultiplierKind.G:
            f = self.profile.f(rstar) + zero
            fp = self.profile.fprime(rstar) + zero
            return f, -f, 0.5 * fp, 0.5 * fp, -0.5 * fp, -0.5 * fp
        h, hp = self.profile.evaluate(rstar, r)
        h, hp = h + zero, hp + zero
        red = (hp - mu * h / r) / (2.0 * lapse)
        return -h, -h / lapse, -0.5 * hp, red, -red, 0.5 * hp


def stress_blocks(state: maxwell.FieldState, grids: Grids):
    """(T_vv, T_ww, mid) on the grid; T_vw = N * mid."""
    rad, s = grids.radial, grids.angular.sin[None, :]
    r2 = (rad.r**2)[:, None]
    N = rad.lapse[:, None]
    F = state.data
    vth, wth = 0.5 * (F[1] + F[2]), 0.5 * (F[1] - F[2])
    vph, wph = 0.5 * (F[3] + F[4]) / s, 0.5 * (F[3] - F[4]) / s
    tvv = (vth**2 + vph**2) / r2
    tww = (wth**2 + wph**2) / r2
    mid = (0.5 * F[0] / N) ** 2 + (F[5] / s) ** 2 / (4.0 * r2 * r2)
    return tvv, tww, mid


def contraction_from_blocks(comps, tvv, tww, mid, r, mu, lapse=None):
    xv, xw, dvxv, dwxw, dvxw, dwxv = comps
    lapse = 1.0 - mu if lapse is None else lapse
    return (
        tww * (-2.0 / lapse) * dvxw
        + tvv * (-2.0 / lapse) * dwxv
        - 2.0 * mid * (dvxv + dwxw + (3.0 * mu - 2.0) / (2.0 * r) * (xv - xw))
    )


def deformation_contraction(X: MultiplierSpec, state: maxwell.FieldState, grids: Grids, p: BlackHoleParams | None = None):
    """pi(X).T on the (rstar, theta) grid at the state's time."""
    rad = grids.radial
    comps = [c[:, None] for c in X.components(state.t, rad.rstar, rad.r, rad.mu, rad.lapse)]
    tvv, tww, mid = stress_blocks(state, grids)
    return contraction_from_blocks(comps, tvv, tww, mid, rad.r[:, None], rad.mu[:, None], rad.lapse[:, None])


def deformation_contraction_at(X: MultiplierSpec, F6: np.ndarray, t: float, rstar: float, theta: float, p: BlackHoleParams):
    """pi(X).T at one point from the six coordinate components there."""
    from .geometry import lapse_of_tortoise, r_of_tortoise

    r = r_of_tortoise(rstar, p)
    mu = 2 * p.mass / r
    lapse = float(lapse_of_tortoise(rstar, p))
    s = math.sin(theta)
    f0, f1, f2, f3, f4, f5 = F6
    tvv = (0.25 * (f1 + f2) ** 2 + 0.25 * (f3 + f4) ** 2 / s**2) / r**2
    tww = (0.25 * (f1 - f2) ** 2 + 0.25 * (f3 - f4) ** 2 / s**2) / r**2
    mid = (0.5 * f0 / lapse) ** 2 + f5**2 / (4 * r**4 * s**2)
    comps = [float(np.asarray(c)) for c in X.components(t, rstar, r, mu, lapse)]
    return float(contraction_from_blocks(comps, tvv, tww, mid, r, mu, lapse))


# ---------------------------------------------------------------------------
# densities per unit (sphere area x dr*), already integrated over the sphere


def _sphere(blocks, grids):
    return [integrate_sphere(b, grids.angular) for b in blocks]


def slice_current(comps, tvv, tww, mid, r, lapse):
    """eps_X = -r^2 T(d_t, X)."""
    xv, xw = comps[0], comps[1]
    tvw = lapse * mid
    return -r * r * (xv * (tvv + tvw) + xw * (tww + tvw))


def radial_current(comps, tvv, tww, mid, r, lapse):
    """r^2 T(d_r*, X)."""
    xv, xw = comps[0], comps[1]
    tvw = lapse * mid
    return r * r * (xv * (tvv - tvw) + xw * (tvw - tww))


def outgoing_current(comps, tvv, tww, mid, r, lapse):
    """r^2 T(d_v, X): integrand of the flux through w = const."""
    xv, xw = comps[0], comps[1]
    return r * r * (xv * tvv + xw * lapse * mid)


def ingoing_current(comps, tvv, tww, mid, r, lapse):
    """r^2 T(d_w, X): integrand of the flux through v = const."""
    xv, xw = comps[0], comps[1]
    return r * r * (xv * lapse * mid + xw * tww)


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class FunctionalReport:
    name: str
    coordinate: str  # "t", "v" or "w"
    coordinate_value: float
    region_lo: float
    region_hi: float
    value: float
    n_r: int
    n_theta: int
    dt: float
    extra: dict = field(default_factory=dict, compare=False)

    CSV_COLUMNS = ("name", "coordinate", "coordinate_value", "region_lo", "region_hi", "value", "n_r", "n_theta", "dt")

    def csv_row(self):
        return [
            self.name,
            self.coordinate,
            repr(float(self.coordinate_value)),
            repr(float(self.region_lo)),
            repr(float(self.region_hi)),
            repr(float(self.value)),
            str(self.n_r),
            str(self.n_theta),
            repr(float(self.dt)),
        ]


ENERGY_KINDS = ("E_T", "E_hat", "E_K", "E_sharp", "E_G", "E_H")


def energy_density(kind: str, state: maxwell.FieldState, grids: Grids, multiplier: MultiplierSpec | None = None):
    """Radial density (sphere already integrated) of the named slice energy."""
    rad = grids.radial
    tvv, tww, mid = _sphere(stress_blocks(state, grids), grids)
    r, N = rad.r, rad.lapse
    if kind == "E_T":
        return r * r * (tvv + tww + 2.0 * N * mid)
    if kind == "E_hat":
        return 2.0 * r * r * (tvv + tww)
    if kind == "E_sharp":
        return r * r * (tww / N + tvv + mid)
    if kind == "E_K":
        comps = MultiplierSpec(MultiplierKind.K).components(state.t, rad.rstar, r, rad.mu, N)
        return slice_current(comps, tvv, tww, mid, r, N)
    if kind in ("E_G", "E_H"):
        if multiplier is None:
            raise ValueError(f"{kind} needs a multiplier profile")
        comps = multiplier.components(state.t, rad.rstar, r, rad.mu, N)
        return slice_current(comps, tvv, tww, mid, r, N)
    raise ValueError(f"unknown energy kind {kind!r}")


def energy_functional(
    kind: str,
    state: maxwell.FieldState,
    grids: Grids,
    p: BlackHoleParams | None = None,
    rstar_range=None,
    multiplier: MultiplierSpec | None = None,
    dt: float = 0.0,
) -> FunctionalReport:
    rad = grids.radial
    lo, hi = (rad.rstar_min, rad.rstar_max) if rstar_range is None else rstar_range
    if lo < rad.rstar_min - 1e-12 or hi > rad.rstar_max + 1e-12 or hi < lo:
        raise ValueError(f"radial range [{lo}, {hi}] outside grid")
    dens = energy_density(kind, state, grids, multiplier)
    value = float(interval_quadrature_weights(rad, lo, hi) @ dens)
    return FunctionalReport(kind, "t", state.t, lo, hi, value, rad.n_r, grids.angular.n_theta, dt)


# ---------------------------------------------------------------------------
# run history


@dataclass
class RunHistory:
    """Sphere-integrated stress blocks recorded after every step."""

    grids: Grids
    params: BlackHoleParams
    window: slice
    times: list = field(default_factory=list)
    tvv: list = field(default_factory=list)
    tww: list = field(default_factory=list)
    mid: list = field(default_factory=list)
    lie_hat: list = field(default_factory=list)
    record_lie: bool = False
    snapshots: dict = field(default_factory=dict)
    snapshot_times: tuple = ()

    def observe(self, state: maxwell.FieldState):
        w = self.window
        tvv, tww, mid = stress_blocks(state, self.grids)
        sub = self.grids.angular
        self.times.append(state.t)
        self.tvv.append(integrate_sphere(tvv[w], sub))
        self.tww.append(integrate_sphere(tww[w], sub))
        self.mid.append(integrate_sphere(mid[w], sub))
        if self.record_lie:
            dens = maxwell.sphere_lie_energy_density(state, self.grids, kind="hat")
            self.lie_hat.append(integrate_sphere(dens[w], sub))
        for ts in self.snapshot_times:
            if abs(state.t - ts) <= 1e-9 * max(1.0, abs(ts)):
                self.snapshots[ts] = state.copy()

    @property
    def rstar(self):
        return self.grids.radial.rstar[self.window]

    @property
    def r(self):
        return self.grids.radial.r[self.window]

    @property
    def lapse(self):
        return self.grids.radial.lapse[self.window]

    @property
    def mu(self):
        return self.grids.radial.mu[self.window]

    @property
    def typical_dt(self) -> float:
        t = np.asarray(self.times)
        return float(np.median(np.diff(t))) if t.size > 1 else 0.0

    def arrays(self):
        return (
            np.asarray(self.times),
            np.asarray(self.tvv),
            np.asarray(self.tww),
            np.asarray(self.mid),
        )


def record_run(
    state: maxwell.FieldState,
    grids: Grids,
    p: BlackHoleParams,
    until: float,
    window=None,
    stop_times=(),
    callbacks=(),
    record_lie: bool = False,
    snapshot_times=(),
    cfl: float = 0.5,
    dt: float | None = None,
    observers=(),
):
    """Evolve while recording a RunHistory.  Returns (history, final_state, reports).

    ``observers`` are extra per-step hooks called after the history records the step.
    """
    rad = grids.radial
    win = slice(0, rad.n_r) if window is None else rad.index_window(*window)
    hist = RunHistory(grids, p, win, record_lie=record_lie, snapshot_times=tuple(snapshot_times))
    stops = tuple(stop_times) + tuple(snapshot_times)
    hooks = (hist.observe,) + tuple(observers)

    def observe(st):
        for hook in hooks:
            hook(st)

    final, reports = maxwell.evolve(state, grids, p, until, callbacks, stops, cfl, dt, observer=observe)
    return hist, final, reports


def _time_integral(times, values, t1, t2):
    """Trapezoid over stored slices in [t1, t2]; endpoints interpolated linearly if needed."""
    times = np.asarray(times)
    if t1 < times[0] - 1e-9 or t2 > times[-1] + 1e-9:
        raise ValueError(f"time interval [{t1}, {t2}] not covered by run [{times[0]}, {times[-1]}]")
    tol = 1e-9 * max(1.0, abs(t2))
    inside = (times > t1 + tol) & (times < t2 - tol)
    ts = [t1] + list(times[inside]) + [t2]
    vals = [_interp_time(times, values, t1)] + list(np.asarray(values)[inside]) + [_interp_time(times, values, t2)]
    return float(np.trapezoid(np.asarray(vals), np.asarray(ts), axis=0))


def _interp_time(times, values, t):
    values = np.asarray(values)
    i = int(np.searchsorted(times, t))
    if i < len(times) and abs(times[i] - t) <= 1e-9 * max(1.0, abs(t)):
        return values[i]
    if i > 0 and abs(times[i - 1] - t) <= 1e-9 * max(1.0, abs(t)):
        return values[i - 1]
    i = min(max(i, 1), len(times) - 1)
    a = (t - times[i - 1]) / (times[i] - times[i - 1])
    return (1 - a) * values[i - 1] + a * values[i]


def _check_radial(run: RunHistory, lo, hi):
    rs = run.rstar
    if lo < rs[0] - 1e-9 or hi > rs[-1] + 1e-9 or hi < lo:
        raise ValueError(f"radial range [{lo}, {hi}] not covered by the recorded window [{rs[0]}, {rs[-1]}]")


def _radial_point_values(run: RunHistory, dens, x):
    """Cubic interpolation in r* of every slice of dens (n_slices, n_window) at x."""
    rad = run.grids.radial
    idx, wts = cubic_interpolation_weights(rad, x)
    local = idx - run.window.start
    if local[0] < 0 or local[-1] >= dens.shape[1]:
        # fall back to a stencil inside the recorded window
        i0 = min(max(int(np.searchsorted(run.rstar, x)) - 2, 0), dens.shape[1] - 4)
        local = np.arange(i0, i0 + 4)
        xs = run.rstar[local]
        wts = np.array([np.prod([(x - xs[j]) / (xs[k] - xs[j]) for j in range(4) if j != k]) for k in range(4)])
    return dens[:, local] @ wts


def _radial_integral(run: RunHistory, dens, lo, hi):
    """Per-slice integral over [lo, hi] in r* (piecewise-cubic interpolant, exact bounds)."""
    _check_radial(run, lo, hi)
    w = interval_quadrature_weights(run.grids.radial, lo, hi)
    if np.any(w[: run.window.start]) or np.any(w[run.window.stop:]):
        raise ValueError(f"radial range [{lo}, {hi}] needs nodes outside the recorded window")
    return dens @ w[run.window]


BULK_KINDS = ("J_K", "J_G", "J_C", "I_H")


def bulk_density_series(kind: str, run: RunHistory, multiplier: MultiplierSpec | None = None):
    """Per-slice radial density (sphere integrated) for a bulk functional."""
    t, tvv, tww, mid = run.arrays()
    r, mu, N, rs = run.r, run.mu, run.lapse, run.rstar
    if kind == "J_G":
        return mid
    if kind == "J_C":
        ps = run.params
        return mid * np.abs(rs - tortoise_of_r(3 * ps.mass, ps))
    if kind == "J_K":
        X = MultiplierSpec(MultiplierKind.K)
    elif kind == "I_H":
        if multiplier is None or multiplier.kind is not MultiplierKind.H:
            raise ValueError("I_H needs an H multiplier")
        X = multiplier
    elif kind == "bulk":
        X = multiplier
    else:
        raise ValueError(f"unknown bulk kind {kind!r}")
    comps = X.components(t[:, None], rs[None, :], r[None, :], mu[None, :], N[None, :])
    dens = N * r * r * contraction_from_blocks(comps, tvv, tww, mid, r, mu, N)
    if kind == "I_H":
        dens = 2.0 * dens  # dv dw = 2 dt dr*
    return dens


def bulk_functional(
    kind: str,
    run: RunHistory,
    region,
    multiplier: MultiplierSpec | None = None,
) -> FunctionalReport:
    """Space-time integral over region = (t1, t2, rstar_lo, rstar_hi).

    J_K, J_G, J_C use the measure dt dr* d sigma; I_H uses dv dw d sigma = 2 dt dr* d sigma.
    """
    t1, t2, lo, hi = region
    dens = bulk_density_series(kind, run, multiplier)
    space = _radial_integral(run, dens, lo, hi)
    value = _time_integral(run.times, space, t1, t2)
    ga = run.grids
    return FunctionalReport(
        kind, "t", t1, lo, hi, value, ga.radial.n_r, ga.angular.n_theta, run.typical_dt, extra={"t_end": t2},
    )


FLUX_KINDS = ("F_H_vconst", "F_H_wconst", "F_T_vconst", "F_T_wconst")


def _blocks_at(rad: RadialGrid, idx, tvv, tww, mid, X: MultiplierSpec, current, t):
    """Line integrand r^2 T(d_v or d_w, X) at the radial nodes idx."""
    r = rad.r[idx]
    comps = X.components(t, rad.rstar[idx], r, rad.mu[idx], rad.lapse[idx])
    return current(comps, tvv, tww, mid, r, rad.lapse[idx])


def _line_position(coord: str, value: float, t: float) -> float:
    """r* of the null line coord = value at time t."""
    return t - value if coord == "w" else value - t


def _line_time_range(coord: str, value: float, lo: float, hi: float):
    """Times at which the line meets the ends of its transverse segment.

    Along w = w0 the transverse parameter is v = 2t - w0; along v = v0 it is
    w = 2t - v0, so both ends map to t = (value + transverse) / 2.
    """
    return 0.5 * (value + lo), 0.5 * (value + hi)


def _line_samples(run: RunHistory, current, X: MultiplierSpec, coord: str, value: float, t_lo: float, t_hi: float):
    """Integrand samples at stored slices with t in [t_lo, t_hi], one extra slice on each side."""
    t_all, tvv, tww, mid = run.arrays()
    rs = run.rstar
    rad = run.grids.radial
    k0 = max(int(np.searchsorted(t_all, t_lo)) - 1, 0)
    k1 = min(int(np.searchsorted(t_all, t_hi, side="right")) + 1, len(t_all))
    ts, vals = [], []
    for k in range(k0, k1):
        t = t_all[k]
        x = _line_position(coord, value, t)
        if x < rs[0] or x > rs[-1]:
            continue
        idx, wts = cubic_interpolation_weights(rad, x)
        local = idx - run.window.start
        if local[0] < 0 or local[-1] >= len(rs):
            continue
        dens = _blocks_at(rad, idx, tvv[k, local], tww[k, local], mid[k, local], X, current, t)
        ts.append(t)
        vals.append(float(np.dot(wts, dens)))
    return np.asarray(ts), np.asarray(vals)


def _resolve_flux_kind(kind: str, multiplier: MultiplierSpec | None):
    if kind not in FLUX_KINDS:
        raise ValueError(f"unknown flux kind {kind!r}")
    coord = "w" if kind.endswith("wconst") else "v"
    if kind.startswith("F_H"):
        if multiplier is None or multiplier.kind is not MultiplierKind.H:
            raise ValueError(f"{kind} needs an H multiplier")
        X = multiplier
    else:
        X = MultiplierSpec(MultiplierKind.T)
    current = outgoing_current if coord == "w" else ingoing_current
    return coord, X, current


def flux_functional(
    kind: str,
    run: RunHistory,
    value: float,
    transverse_range,
    multiplier: MultiplierSpec | None = None,
) -> FunctionalReport:
    """Flux through a null segment, oriented as F_X(w) = 2 int r^2 T(d_v, X) dv d sigma
    and F_X(v) = 2 int r^2 T(d_w, X) dw d sigma.

    For X = H these are nonpositive, for X = d_t nonnegative.  The upper end
    of the transverse range may be +inf; the segment is then truncated where
    the line leaves the recorded window or the run ends, and the truncation
    point is reported in ``extra``.
    """
    coord, X, current = _resolve_flux_kind(kind, multiplier)
    lo, hi = transverse_range
    truncated = not math.isfinite(hi)
    t_lo, t_hi = _line_time_range(coord, value, lo, hi)
    ts, vals = _line_samples(run, current, X, coord, value, t_lo, t_hi)
    tol = 1e-9 * max(1.0, abs(t_lo))
    if ts.size < 2 or ts[0] > t_lo + tol:
        raise ValueError(f"null segment {coord}={value}, [{lo}, {hi}] not covered by stored history")
    t_end = min(t_hi, ts[-1])
    if not truncated and t_end < t_hi - 1e-9 * max(1.0, abs(t_hi)):
        raise ValueError(f"null segment end not covered (reached t={ts[-1]}, need t={t_hi})")
    total = 4.0 * _time_integral(ts, vals, t_lo, t_end) if t_end > t_lo else 0.0
    reached = 2.0 * t_end - value
    ga = run.grids
    return FunctionalReport(
        kind, coord, value, lo, reached if truncated else hi, total, ga.radial.n_r, ga.angular.n_theta,
        run.typical_dt, extra={"truncated_at": reached if truncated else None, "t_end": t_end},
    )


class NullLineAccumulator:
    """Online version of flux_functional: integrate along one null segment during evolution.

    Pass ``observe`` as (part of) the evolve observer.  Only the four radial
    rows around the line are touched per step, so long lines cost nothing
    in memory.
    """

    def __init__(self, kind: str, grids: Grids, value: float, transverse_range, multiplier: MultiplierSpec | None = None):
        self.kind = kind
        self.coord, self.X, self.current = _resolve_flux_kind(kind, multiplier)
        self.grids = grids
        self.value = value
        self.lo, self.hi = transverse_range
        self.t_lo, self.t_hi = _line_time_range(self.coord, value, self.lo, self.hi)
        self.times: list = []
        self.values: list = []

    def observe(self, state: maxwell.FieldState):
        t = state.t
        dt_slack = 1.0
        if t < self.t_lo - dt_slack or t > self.t_hi + dt_slack:
            return
        rad = self.grids.radial
        x = _line_position(self.coord, self.value, t)
        if x < rad.rstar_min or x > rad.rstar_max:
            return
        idx, wts = cubic_interpolation_weights(rad, x)
        sub = maxwell.FieldState(state.data[:, idx, :], t)
        tvv, tww, mid = _sphere(_row_blocks(sub, self.grids, idx), self.grids)
        dens = _blocks_at(rad, idx, tvv, tww, mid, self.X, self.current, t)
        self.times.append(t)
        self.values.append(float(np.dot(wts, dens)))

    def report(self) -> FunctionalReport:
        ts = np.asarray(self.times)
        vals = np.asarray(self.values)
        truncated = not math.isfinite(self.hi)
        tol = 1e-9 * max(1.0, abs(self.t_lo))
        if ts.size < 2 or ts[0] > self.t_lo + tol:
            raise ValueError(f"null segment {self.coord}={self.value} not covered by the run")
        t_end = min(self.t_hi, ts[-1])
        if not truncated and t_end < self.t_hi - 1e-9 * max(1.0, abs(self.t_hi)):
            raise ValueError(f"null segment end not covered (reached t={ts[-1]}, need t={self.t_hi})")
        total = 4.0 * _time_integral(ts, vals, self.t_lo, t_end) if t_end > self.t_lo else 0.0
        reached = 2.0 * t_end - self.value
        dt = float(np.median(np.diff(ts))) if ts.size > 1 else 0.0
        return FunctionalReport(
            self.kind, self.coord, self.value, self.lo, reached if truncated else self.hi, total,
            self.grids.radial.n_r, self.grids.angular.n_theta, dt,
            extra={"truncated_at": reached if truncated else None, "t_end": t_end},
        )


def _row_blocks(sub: maxwell.FieldState, grids: Grids, idx):
    """stress_blocks restricted to the radial rows idx (sub holds only those rows)."""
    rad, s = grids.radial, grids.angular.sin[None, :]
    r2 = (rad.r[idx] ** 2)[:, None]
    N = rad.lapse[idx][:, None]
    F = sub.data
    vth, wth = 0.5 * (F[1] + F[2]), 0.5 * (F[1] - F[2])
    vph, wph = 0.5 * (F[3] + F[4]) / s, 0.5 * (F[3] - F[4]) / s
    tvv = (vth**2 + vph**2) / r2
    tww = (wth**2 + wph**2) / r2
    mid = (0.5 * F[0] / N) ** 2 + (F[5] / s) ** 2 / (4.0 * r2 * r2)
    return tvv, tww, mid


def null_region_bulk(run: RunHistory, X: MultiplierSpec, v_range, w_lo: float, rstar_cap: float | None = None) -> float:
    """int pi(X).T N r^2 dv dw d sigma over {v in v_range, w >= w_lo, r* <= rstar_cap}.

    The region is cut off at the last stored slice (the w = inf edge is not
    reachable in finite time); that cut is closed by ``slice_flux``.
    """
    t, tvv, tww, mid = run.arrays()
    rs, r, mu, N = run.rstar, run.r, run.mu, run.lapse
    comps = X.components(t[:, None], rs[None, :], r[None, :], mu[None, :], N[None, :])
    dens = N * r * r * contraction_from_blocks(comps, tvv, tww, mid, r, mu, N)
    return _diamond_time_integral(run, dens, v_range, w_lo, rstar_cap)


def _diamond_time_integral(run, dens, v_range, w_lo, rstar_cap):
    t = np.asarray(run.times)
    v0, v1 = v_range
    rad = run.grids.radial
    floor = run.rstar[0]
    vals = np.zeros(len(t))
    for k, tk in enumerate(t):
        lo = max(v0 - tk, floor)
        hi = min(v1 - tk, tk - w_lo)
        if rstar_cap is not None:
            hi = min(hi, rstar_cap)
        if hi > lo:
            w = interval_quadrature_weights(rad, lo, hi)
            vals[k] = dens[k] @ w[run.window]
    t_start = 0.5 * (v0 + w_lo)
    if t_start < t[0] - 1e-9:
        raise ValueError("null region starts before the recorded run")
    if v0 - t[-1] < floor - 1e-9:
        raise ValueError("null region leaves the recorded window before the run ends")
    return 2.0 * _time_integral(t, vals, t_start, t[-1])


def slice_flux(run: RunHistory, X: MultiplierSpec, v_range, w_lo: float) -> float:
    """2 int r^2 T(d_t, X) dr* d sigma on the last stored slice, over the part of the
    null region {v in v_range, w >= w_lo} it cuts.  Stands in for the flux through w = inf."""
    t, tvv, tww, mid = run.arrays()
    tk = t[-1]
    lo = max(v_range[0] - tk, run.rstar[0])
    hi = min(v_range[1] - tk, tk - w_lo)
    if hi <= lo:
        return 0.0
    rs, r, mu, N = run.rstar, run.r, run.mu, run.lapse
    comps = X.components(tk, rs, r, mu, N)
    dens = -slice_current(comps, tvv[-1], tww[-1], mid[-1], r, N)
    w = interval_quadrature_weights(run.grids.radial, lo, hi)
    return 2.0 * float(dens @ w[run.window])


def null_identity_terms(X: MultiplierSpec, run: RunHistory, v_range, w_lo: float):
    """Terms of F(v0) + F(w_lo) - F(v1) - F(cut) = I over {v0 <= v <= v1, w >= w_lo}.

    F(cut) is the slice flux on the last stored slice, replacing F(w = inf).
    """
    kinds = {MultiplierKind.H: ("F_H_vconst", "F_H_wconst"), MultiplierKind.T: ("F_T_vconst", "F_T_wconst")}
    if X.kind not in kinds:
        raise ValueError("null fluxes are defined for T and H")
    kv, kw = kinds[X.kind]
    v0, v1 = v_range
    inf = math.inf
    f_v0 = flux_functional(kv, run, v0, (w_lo, inf), X).value
    f_v1 = flux_functional(kv, run, v1, (w_lo, inf), X).value
    f_w = flux_functional(kw, run, w_lo, (v0, v1), X).value
    cut = slice_flux(run, X, v_range, w_lo)
    bulk = null_region_bulk(run, X, v_range, w_lo)
    return {"F_v_start": f_v0, "F_v_end": f_v1, "F_w": f_w, "F_cut": cut, "bulk": bulk}


def null_identity_residual(X: MultiplierSpec, run: RunHistory, v_range, w_lo: float) -> float:
    terms = null_identity_terms(X, run, v_range, w_lo)
    lhs = terms["F_v_start"] + terms["F_w"] - terms["F_v_end"] - terms["F_cut"]
    scale = max(abs(v) for v in terms.values())
    return 0.0 if scale == 0.0 else abs(lhs - terms["bulk"]) / scale


# ---------------------------------------------------------------------------
# divergence identity


def divergence_identity_terms(X: MultiplierSpec, run: RunHistory, region):
    """Terms of E(t2) - E(t1) + int [flux]_a^b dt = bulk over region = (t1, t2, a, b)."""
    t1, t2, lo, hi = region
    t, tvv, tww, mid = run.arrays()
    rs, r, mu, N = run.rstar, run.r, run.mu, run.lapse
    comps = X.components(t[:, None], rs[None, :], r[None, :], mu[None, :], N[None, :])
    eps = slice_current(comps, tvv, tww, mid, r, N)
    rad_cur = radial_current(comps, tvv, tww, mid, r, N)
    bulk_d = N * r * r * contraction_from_blocks(comps, tvv, tww, mid, r, mu, N)
    slab_e = _radial_integral(run, eps, lo, hi)
    slab_b = _radial_integral(run, bulk_d, lo, hi)
    e1 = float(_interp_time(t, slab_e, t1))
    e2 = float(_interp_time(t, slab_e, t2))
    flux_lo = _time_integral(t, _radial_point_values(run, rad_cur, lo), t1, t2)
    flux_hi = _time_integral(t, _radial_point_values(run, rad_cur, hi), t1, t2)
    bulk = _time_integral(t, slab_b, t1, t2)
    return {"E_start": e1, "E_end": e2, "flux_lo": flux_lo, "flux_hi": flux_hi, "bulk": bulk,
            "rstar_lo": float(lo), "rstar_hi": float(hi)}


def divergence_identity_residual(X: MultiplierSpec, run: RunHistory, region) -> float:
    """|bulk - boundary terms| normalized by the largest term; 0 when every term vanishes."""
    terms = divergence_identity_terms(X, run, region)
    lhs = terms["E_end"] - terms["E_start"] + terms["flux_hi"] - terms["flux_lo"]
    scale = max(abs(terms[k]) for k in ("E_start", "E_end", "flux_lo", "flux_hi", "bulk"))
    if scale == 0.0:
        return 0.0
    return abs(lhs - terms["bulk"]) / scale
