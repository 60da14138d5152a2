"""Axisymmetric source-free Maxwell field on the Schwarzschild exterior.

The state holds six coordinate components in the tortoise chart:

    sector A: F_{t r*}, F_{t theta}, F_{r* theta}
    sector B: F_{t phi}, F_{r* phi}, F_{theta phi}

For a smooth axisymmetric field these carry known powers of sin(theta):
F_{t r*} ~ u, F_{t theta} ~ s u, F_{t phi} ~ s^2 u, F_{theta phi} ~ s u with u
smooth in x = cos(theta).  Angular derivatives are taken on the smooth
factors u with the Gauss-Legendre collocation matrix, and the (1 - x^2)
weights are differentiated analytically so the angular operator is exactly
skew-adjoint in the Gauss-Legendre inner product.

Field equations in divergence form, with N = 1 - mu:

    d_t F_{tr*}  = -(N / (r^2 s)) d_theta(s F_{r* theta})
    d_t F_{tth}  =  d_r* F_{r* theta}
    d_t F_{r*th} =  d_r* F_{t theta} - d_theta F_{t r*}
    d_t F_{tph}  =  d_r* F_{r* phi} + (s N / r^2) d_theta(F_{theta phi} / s)
    d_t F_{r*ph} =  d_r* F_{t phi}
    d_t F_{thph} =  d_theta F_{t phi}
"""
from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import geometry
from .geometry import BlackHoleParams
from .numerics import (
    AngularGrid,
    Grids,
    RadialGrid,
    cubic_interpolation_weights,
    d_rstar,
    d_rstar_sixth,
    integrate_sphere,
    rk4_step,
    stable_timestep,
)

COMPONENT_NAMES = ("F_trs", "F_tth", "F_rsth", "F_tph", "F_rsph", "F_thph")
# power of sin(theta) carried by each coordinate component of a smooth field
SIN_POWER = np.array([0, 1, 1, 2, 2, 1])
SECTOR_A = (0, 1, 2)
SECTOR_B = (3, 4, 5)


class Sector(str, enum.Enum):
    A = "A"
    B = "B"


@dataclass
class FieldState:
    """Six component arrays of shape (n_r, n_theta) plus a time stamp."""

    data: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or self.data.shape[0] != 6:
            raise ValueError("FieldState data must have shape (6, n_r, n_theta)")

    @classmethod
    def zeros(cls, grids: Grids, t: float = 0.0) -> "FieldState":
        return cls(np.zeros((6,) + grids.shape), t)

    def __getitem__(self, name):
        if isinstance(name, str):
            return self.data[COMPONENT_NAMES.index(name)]
        return self.data[name]

    def copy(self) -> "FieldState":
        return FieldState(self.data.copy(), self.t)

    def scaled(self, factor: float) -> "FieldState":
        return FieldState(factor * self.data, self.t)

    def __add__(self, other: "FieldState") -> "FieldState":
        return FieldState(self.data + other.data, self.t)

    def __sub__(self, other: "FieldState") -> "FieldState":
        return FieldState(self.data - other.data, self.t)

    def __mul__(self, factor: float) -> "FieldState":
        return self.scaled(factor)

    __rmul__ = __mul__


@dataclass(frozen=True)
class InitialDataSpec:
    sector: Sector = Sector.A
    amplitude: float = 1.0
    center: float = 0.0
    width: float = 3.0
    ell: int = 1

    def __post_init__(self):
        object.__setattr__(self, "sector", Sector(self.sector))
        if not self.width > 0:
            raise ValueError("pulse width must be positive")
        if self.ell not in (1, 2):
            raise ValueError("angular degree ell must be 1 or 2")


@dataclass(frozen=True)
class FrameComponents:
    """Null-frame components at a point; e1, e2 are theta-hat, phi-hat."""

    vw: float
    v_e1: float
    v_e2: float
    w_e1: float
    w_e2: float
    e1_e2: float
    lapse: float

    @property
    def redshifted_w_e1(self) -> float:
        return math.sqrt(self.lapse) * self.w_e1

    @property
    def redshifted_w_e2(self) -> float:
        return math.sqrt(self.lapse) * self.w_e2

    @property
    def wv(self) -> float:
        return -self.vw


# ---------------------------------------------------------------------------
# operator coefficients


@dataclass(frozen=True)
class _Coefficients:
    s: np.ndarray
    x: np.ndarray
    one_minus_x2: np.ndarray
    Dt: np.ndarray  # transpose of the collocation matrix, so u @ Dt differentiates along theta
    lapse_over_r2: np.ndarray
    r2_over_lapse: np.ndarray


@lru_cache(maxsize=32)
def _coefficients(grids: Grids) -> _Coefficients:
    ang, rad = grids.angular, grids.radial
    return _Coefficients(
        s=ang.sin[None, :],
        x=ang.x[None, :],
        one_minus_x2=(1.0 - ang.x**2)[None, :],
        Dt=ang.diff.T.copy(),
        lapse_over_r2=(rad.lapse / rad.r**2)[:, None],
        r2_over_lapse=(rad.r**2 / rad.lapse)[:, None],
    )


def _weighted_divergence(u, c: _Coefficients):
    """d/dx((1 - x^2) u) for u given on the nodes."""
    return -2.0 * c.x * u + c.one_minus_x2 * (u @ c.Dt)


def _rhs_array(F: np.ndarray, grids: Grids, sommerfeld: bool = True) -> np.ndarray:
    c = _coefficients(grids)
    rad = grids.radial
    s = c.s
    out = np.empty_like(F)
    f0, f1, f2, f3, f4, f5 = F
    # sector A
    out[0] = c.lapse_over_r2 * _weighted_divergence(f2 / s, c)
    out[1] = d_rstar(f2, rad)
    out[2] = d_rstar(f1, rad) + s * (f0 @ c.Dt)
    # sector B
    out[3] = d_rstar(f4, rad) - (s * s) * c.lapse_over_r2 * ((f5 / s) @ c.Dt)
    out[4] = d_rstar(f3, rad)
    out[5] = -s * _weighted_divergence(f3 / (s * s), c)
    if sommerfeld:
        _apply_sommerfeld(F, out, rad)
    return out


def _apply_sommerfeld(F, out, rad: RadialGrid):
    """Replace the incoming characteristic rate at each edge by an outflow condition."""
    h = rad.spacing
    for i_e, i_o in ((1, 2), (3, 4)):
        # right edge: incoming is e + o (moves toward decreasing rstar)
        plus = F[i_e] + F[i_o]
        minus_rate = out[i_e, -1] - out[i_o, -1]
        dplus = (25.0 * plus[-1] - 48.0 * plus[-2] + 36.0 * plus[-3] - 16.0 * plus[-4] + 3.0 * plus[-5]) / (12.0 * h)
        plus_rate = -dplus
        out[i_e, -1] = 0.5 * (plus_rate + minus_rate)
        out[i_o, -1] = 0.5 * (plus_rate - minus_rate)
        # left edge: incoming is e - o (moves toward increasing rstar)
        minus = F[i_e] - F[i_o]
        plus_rate = out[i_e, 0] + out[i_o, 0]
        dminus = (-25.0 * minus[0] + 48.0 * minus[1] - 36.0 * minus[2] + 16.0 * minus[3] - 3.0 * minus[4]) / (12.0 * h)
        minus_rate = dminus
        out[i_e, 0] = 0.5 * (plus_rate + minus_rate)
        out[i_o, 0] = 0.5 * (plus_rate - minus_rate)


def evolution_rhs(state: FieldState, grids: Grids, p: BlackHoleParams | None = None, sommerfeld: bool = True) -> FieldState:
    """Time derivative of all six components."""
    if not np.all(np.isfinite(state.data)):
        raise FloatingPointError("non-finite field passed to evolution_rhs")
    return FieldState(_rhs_array(state.data, grids, sommerfeld), state.t)


def lie_t(state: FieldState, grids: Grids, p: BlackHoleParams | None = None) -> FieldState:
    """Lie derivative along the Killing field d/dt; equal to the time derivative of the components."""
    return evolution_rhs(state, grids, p)


# ---------------------------------------------------------------------------
# data


def angular_profile(sector: Sector, ell: int, x: np.ndarray) -> np.ndarray:
    """Regular angular factor of the seeded component.

    Sector A seeds F_{r* theta} with s * P_ell'(x) (a multiple of d_theta P_ell);
    sector B seeds F_{t phi} with s^2 * P_ell'(x) (a multiple of s * d_theta P_ell).
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(1.0 - x * x)
    dP = np.polynomial.legendre.Legendre.basis(ell).deriv()(x)
    return (s if Sector(sector) is Sector.A else s * s) * dP


def make_initial_data(spec: InitialDataSpec, grids: Grids, p: BlackHoleParams | None = None, t: float = 0.0) -> FieldState:
    rad = grids.radial
    lo, hi = spec.center - 4.0 * spec.width, spec.center + 4.0 * spec.width
    if lo < rad.rstar_min or hi > rad.rstar_max:
        raise ValueError(f"pulse support [{lo}, {hi}] escapes grid [{rad.rstar_min}, {rad.rstar_max}]")
    state = FieldState.zeros(grids, t)
    radial = spec.amplitude * np.exp(-(((rad.rstar - spec.center) / spec.width) ** 2))
    ang = angular_profile(spec.sector, spec.ell, grids.angular.x)
    target = 2 if spec.sector is Sector.A else 3
    state.data[target] = radial[:, None] * ang[None, :]
    return state


def make_coulomb_data(charge: float, grids: Grids, p: BlackHoleParams | None = None, t: float = 0.0) -> FieldState:
    """Stationary spherically symmetric field F_{t r*} = q (1 - mu) / r^2."""
    rad = grids.radial
    state = FieldState.zeros(grids, t)
    state.data[0] = (charge * rad.lapse / rad.r**2)[:, None]
    return state


def is_stationary(state: FieldState, grids: Grids, p: BlackHoleParams | None = None, rtol: float = 1e-12) -> bool:
    """True when the discrete time derivative vanishes relative to the field size."""
    rate = np.linalg.norm(evolution_rhs(state, grids).data)
    size = np.linalg.norm(state.data)
    return size == 0.0 or rate < rtol * size


# ---------------------------------------------------------------------------
# constraints


def constraint_residuals(state: FieldState, grids: Grids, stencil: str = "evolution"):
    """Discrete L2 norms of the sector A and sector B constraints.

    sector A: d_r*(r^2 F_{tr*} / N) + (1/s) d_theta(s F_{t theta})
    sector B: d_r* F_{theta phi} - d_theta F_{r* phi}

    ``stencil="evolution"`` uses the evolution stencil, under which the
    semi-discrete system preserves both constraints exactly;
    ``stencil="independent"`` uses a sixth-order stencil so the residual
    measures the truncation error of the evolved data.
    """
    c = _coefficients(grids)
    rad = grids.radial
    F = state.data
    if stencil == "evolution":
        dr = lambda u: d_rstar(u, rad)
        inner = slice(None)
    elif stencil == "independent":
        dr = lambda u: d_rstar_sixth(u, rad)
        inner = slice(3, -3)
    else:
        raise ValueError(stencil)
    res_a = dr(c.r2_over_lapse * F[0]) - _weighted_divergence(F[1] / c.s, c)
    res_b = dr(F[5]) + c.s * _weighted_divergence(F[4] / (c.s * c.s), c)
    out = []
    for res in (res_a, res_b):
        sq = integrate_sphere(res[inner] ** 2, grids.angular)
        out.append(float(math.sqrt(np.sum(sq) * rad.spacing)))
    return tuple(out)


def covariant_field_equations(F: np.ndarray, dF: np.ndarray, point, p: BlackHoleParams):
    """Evaluate nabla^a F_{ab} and the cyclic Bianchi sums with connection coefficients.

    ``F`` is the 4x4 antisymmetric component matrix in (t, r*, theta, phi),
    ``dF[s, a, b]`` the partial derivative d_s F_{ab}.  Returns the divergence
    4-vector and the 4 independent Bianchi sums (indices (123), (023), (013), (012)).
    """
    labels = ("t", "rstar", "theta", "phi")
    G = np.array(
        [[[geometry.connection_coefficient(a, b, c, point, p) for c in labels] for b in labels] for a in labels]
    )
    _, ginv = geometry.metric_components(point, p, "tr*")
    nab = dF - np.einsum("lsa,lb->sab", G, F) - np.einsum("lsb,al->sab", G, F)
    div = np.einsum("as,sab->b", ginv, nab)
    triples = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))
    bianchi = np.array([nab[a, b, c] + nab[b, c, a] + nab[c, a, b] for a, b, c in triples])
    return div, bianchi


# ---------------------------------------------------------------------------
# evolution


def evolve(
    state: FieldState,
    grids: Grids,
    p: BlackHoleParams | None,
    until: float,
    callbacks=(),
    stop_times=(),
    cfl: float = 0.5,
    dt: float | None = None,
    observer=None,
):
    """Integrate to ``until`` with RK4.

    The run is split at every time in ``stop_times`` so callbacks see the
    state at exactly those times; each segment uses the largest uniform step
    not exceeding the CFL step.  ``callbacks`` are called as cb(t, state) at
    every stop time (and the initial and final time); ``observer`` is called
    as observer(state) after every step and once at the start.
    """
    if until < state.t:
        raise ValueError("cannot evolve backwards")
    dt_max = stable_timestep(grids, cfl) if dt is None else dt
    stops = sorted({float(s) for s in stop_times if state.t < s < until} | {float(until)})
    reports = []
    cur = state.copy()

    def fire(st):
        for cb in callbacks:
            reports.append(cb(st.t, st))

    fire(cur)
    if observer is not None:
        observer(cur)
    rhs = lambda arr: _rhs_array(arr, grids)
    for stop in stops:
        span = stop - cur.t
        if span <= 0:
            continue
        n = max(1, int(math.ceil(span / dt_max - 1e-9)))
        h = span / n
        arr = cur.data
        t0 = cur.t
        for k in range(n):
            try:
                arr = rk4_step(arr, rhs, h)
            except FloatingPointError as exc:
                raise FloatingPointError(f"evolution blew up after t={t0 + k * h:.6g}") from exc
            t_now = stop if k == n - 1 else t0 + (k + 1) * h
            cur = FieldState(arr, t_now)
            if observer is not None:
                observer(cur)
        fire(cur)
    return cur, reports


# ---------------------------------------------------------------------------
# frame components


def _reduced(F: np.ndarray, s: np.ndarray) -> np.ndarray:
    return F / s[None, None, :] ** SIN_POWER[:, None, None]


def orthonormal_components(state: FieldState, grids: Grids) -> dict:
    """Orthonormal-frame components on the grid, keyed by index pair."""
    rad, s = grids.radial, grids.angular.sin[None, :]
    r = rad.r[:, None]
    sq = np.sqrt(rad.lapse)[:, None]
    F = state.data
    return {
        "t_rs": F[0] / rad.lapse[:, None],
        "t_th": F[1] / (sq * r),
        "rs_th": F[2] / (sq * r),
        "t_ph": F[3] / (sq * r * s),
        "rs_ph": F[4] / (sq * r * s),
        "th_ph": F[5] / (r * r * s),
    }


def null_frame_fields(state: FieldState, grids: Grids) -> dict:
    """Null-frame components on the grid (e1 = theta-hat, e2 = phi-hat)."""
    rad, s = grids.radial, grids.angular.sin[None, :]
    r = rad.r[:, None]
    N = rad.lapse[:, None]
    F = state.data
    return {
        "vw": -0.5 * F[0] / N,
        "v_e1": 0.5 * (F[1] + F[2]) / r,
        "v_e2": 0.5 * (F[3] + F[4]) / (r * s),
        "w_e1": 0.5 * (F[1] - F[2]) / (N * r),
        "w_e2": 0.5 * (F[3] - F[4]) / (N * r * s),
        "e1_e2": F[5] / (r * r * s),
        "lapse": np.broadcast_to(N, F[0].shape),
    }


def interpolate_components(state: FieldState, grids: Grids, rstar: float, theta: float) -> np.ndarray:
    """Six coordinate components at (rstar, theta).

    The smooth reduced factors F / s^k are interpolated (cubic in rstar,
    barycentric in cos theta) and the sin powers restored at the target.
    """
    rad, ang = grids.radial, grids.angular
    if not (rad.rstar_min <= rstar <= rad.rstar_max):
        raise ValueError(f"rstar={rstar} outside grid")
    idx, wr = cubic_interpolation_weights(rad, rstar)
    row = ang.interpolation_row(math.cos(theta))
    red = _reduced(state.data[:, idx, :], ang.sin)
    vals = np.einsum("cik,i,k->c", red, wr, row)
    return vals * math.sin(theta) ** SIN_POWER


def component_matrix(values: np.ndarray) -> np.ndarray:
    """4x4 antisymmetric matrix in (t, r*, theta, phi) from the six stored values."""
    F = np.zeros((4, 4))
    pairs = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))
    for val, (a, b) in zip(values, pairs):
        F[a, b] = val
        F[b, a] = -val
    return F


def frame_components(state: FieldState, grids: Grids, p: BlackHoleParams, rstar: float, theta: float) -> FrameComponents:
    vals = interpolate_components(state, grids, rstar, theta)
    r = geometry.r_of_tortoise(rstar, p)
    N = geometry.lapse_of_tortoise(rstar, p)
    s = math.sin(theta)
    f0, f1, f2, f3, f4, f5 = vals
    return FrameComponents(
        vw=-0.5 * f0 / N,
        v_e1=0.5 * (f1 + f2) / r,
        v_e2=0.5 * (f3 + f4) / (r * s),
        w_e1=0.5 * (f1 - f2) / (N * r),
        w_e2=0.5 * (f3 - f4) / (N * r * s),
        e1_e2=f5 / (r * r * s),
        lapse=N,
    )


def riemannian_norm(state: FieldState, grids: Grids, p: BlackHoleParams, rstar: float, theta: float, phi: float = 0.0) -> float:
    """|F|_h^2 with h = g + 2 t_hat t_hat: sum over ordered index pairs of squared orthonormal components."""
    vals = interpolate_components(state, grids, rstar, theta)
    r = geometry.r_of_tortoise(rstar, p)
    N = geometry.lapse_of_tortoise(rstar, p)
    s = math.sin(theta)
    sq = math.sqrt(N)
    scale = np.array([N, sq * r, sq * r, sq * r * s, sq * r * s, r * r * s])
    return float(2.0 * np.sum((vals / scale) ** 2))


def riemannian_norm_grid(state: FieldState, grids: Grids) -> np.ndarray:
    comps = orthonormal_components(state, grids)
    return 2.0 * sum(v**2 for v in comps.values())


# ---------------------------------------------------------------------------
# rotations


def rotation_lie_images(state: FieldState, grids: Grids):
    """Coefficients of sin(phi) and cos(phi) in L_{Omega_1} F.

    Omega_1 = -sin(phi) d_theta - cot(theta) cos(phi) d_phi.  For an
    axisymmetric F, L_{Omega_1} F = sin(phi) S + cos(phi) C componentwise;
    L_{Omega_2} F is the same field rotated by a quarter turn and
    L_{Omega_3} F = 0.  Returns (S, C), each of shape (6, n_r, n_theta).
    """
    ang = grids.angular
    c = _coefficients(grids)
    s, x = c.s, c.x
    u = _reduced(state.data, ang.sin)
    Du = u @ c.Dt
    S = np.zeros_like(u)
    C = np.zeros_like(u)
    S[0] = s * Du[0]
    S[1] = -(x * u[1] - s * s * Du[1])
    C[1] = u[3]
    S[2] = -(x * u[2] - s * s * Du[2])
    C[2] = u[4]
    S[3] = -s * x * u[3] + s**3 * Du[3]
    C[3] = -s * u[1]
    S[4] = -s * x * u[4] + s**3 * Du[4]
    C[4] = -s * u[2]
    S[5] = s * s * Du[5]
    return S, C


def _quadratic_density(F: np.ndarray, grids: Grids, kind: str) -> np.ndarray:
    rad, s = grids.radial, grids.angular.sin[None, :]
    r = rad.r[:, None]
    N = rad.lapse[:, None]
    if kind == "riemannian":
        sq = np.sqrt(N)
        return 2.0 * (
            (F[0] / N) ** 2
            + (F[1] / (sq * r)) ** 2
            + (F[2] / (sq * r)) ** 2
            + (F[3] / (sq * r * s)) ** 2
            + (F[4] / (sq * r * s)) ** 2
            + (F[5] / (r * r * s)) ** 2
        )
    if kind == "hat":
        return F[1] ** 2 + F[2] ** 2 + (F[3] ** 2 + F[4] ** 2) / (s * s)
    raise ValueError(kind)


def sphere_lie_energy_density(state: FieldState, grids: Grids, p: BlackHoleParams | None = None, kind: str = "riemannian") -> np.ndarray:
    """phi-average of sum_j q(L_{Omega_j} F) on the (rstar, theta) grid.

    kind="riemannian" gives the pointwise norm |.|_h^2; kind="hat" gives the
    density (per d sigma d rstar) of the energy without middle components.
    The phi integral of sin^2 and cos^2 each contributes pi, so the two
    generators together contribute q(S) + q(C) to the average.
    """
    S, C = rotation_lie_images(state, grids)
    return _quadratic_density(S, grids, kind) + _quadratic_density(C, grids, kind)


# ---------------------------------------------------------------------------
# checkpoints

_MAGIC = b"EXMXCKP1"


def save_checkpoint(state: FieldState, grids: Grids, p: BlackHoleParams, path) -> None:
    """Binary dump: magic, header length, JSON header, little-endian float64 payload."""
    rad = grids.radial
    header = {
        "mass": p.mass,
        "rstar_min": rad.rstar_min,
        "rstar_max": rad.rstar_max,
        "n_r": rad.n_r,
        "n_theta": grids.angular.n_theta,
        "t": state.t,
        "components": list(COMPONENT_NAMES),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(state.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (state, grids, params)."""
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path} is not a field checkpoint")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + n])
    p = BlackHoleParams(header["mass"])
    grids = Grids(
        RadialGrid(header["rstar_min"], header["rstar_max"], header["n_r"], p),
        AngularGrid(header["n_theta"]),
    )
    data = np.frombuffer(raw[16 + n :], dtype="<f8").reshape((6,) + grids.shape).astype(float)
    return FieldState(data, header["t"]), grids, p
