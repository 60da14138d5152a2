"""Desk-scale measurement scenarios: conservation, Morawetz ratios, conformal
energy, pointwise and horizon-flux decay, and the identity/estimate suite.

Each ``run_*`` function takes an ExperimentConfig and returns an
ExperimentResult holding CSV-ready series and a JSON-ready summary.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import maxwell
from . import multipliers as mp
from .geometry import BlackHoleParams, tortoise_of_r
from .numerics import (
    AngularGrid,
    FitResult,
    Grids,
    RadialGrid,
    cubic_interpolation_weights,
    fit_power_law,
    integrate_sphere,
    interval_quadrature_weights,
    stable_timestep,
)

GROWTH = 1.1


class ConfigError(ValueError):
    """Configuration that violates a physical or numerical precondition."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DyadicSchedule:
    """t_i = 1.1^i t0 built by repeated multiplication, so t_{i+1} = 1.1 t_i exactly."""

    t0: float
    count: int
    r1_star: float = 0.0

    def __post_init__(self):
        if not self.t0 > 0:
            raise ConfigError("schedule t0 must be positive")
        if self.count < 1:
            raise ConfigError("schedule count must be at least 1")

    @property
    def times(self) -> tuple:
        out = [float(self.t0)]
        for _ in range(self.count - 1):
            out.append(out[-1] * GROWTH)
        return tuple(out)

    def v(self, i: int) -> float:
        return self.times[i] + self.r1_star

    def w(self, i: int) -> float:
        return self.times[i] - self.r1_star

    def slabs(self, t_max: float = math.inf):
        ts = self.times
        return [(i, ts[i], ts[i + 1]) for i in range(len(ts) - 1) if ts[i + 1] <= t_max + 1e-12]


@dataclass(frozen=True)
class GridSpec:
    rstar_min: float = -150.0
    rstar_max: float = 150.0
    n_r: int = 2048
    n_theta: int = 24
    cfl: float = 0.5

    def build(self, params: BlackHoleParams, scale: int = 1) -> Grids:
        return Grids(RadialGrid(self.rstar_min, self.rstar_max, self.n_r * scale, params), AngularGrid(self.n_theta))


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "reference"
    params: BlackHoleParams = BlackHoleParams()
    grid: GridSpec = GridSpec()
    pulses: tuple = (maxwell.InitialDataSpec(maxwell.Sector.A, 1.0, 0.0, 3.0, 1),)
    coulomb_charge: float = 0.0
    schedule_t0: float = 10.0
    schedule_count: int = 25
    t_final: float = 100.0
    r1: float = 2.25
    region: tuple = (-20.0, 20.0)
    identity_window: tuple = (0.0, 40.0)
    stations: tuple = (2.1, 2.25, 4.0, 8.0)
    energy_fit_window: tuple = (40.0, 200.0)
    v_fit_window: tuple = (20.0, 200.0)
    sample_stride: int = 4
    resolution_scale: int = 1
    allow_nonunit_mass: bool = False
    output_dir: str = "out"

    def __post_init__(self):
        if self.resolution_scale not in (1, 2, 4):
            raise ConfigError("resolution_scale must be 1, 2 or 4")
        if self.t_final < 0:
            raise ConfigError("t_final must be nonnegative")
        if self.region[1] <= self.region[0]:
            raise ConfigError("region must have lo < hi")

    # derived objects
    def grids(self) -> Grids:
        return self.grid.build(self.params, self.resolution_scale)

    def schedule(self) -> DyadicSchedule:
        return DyadicSchedule(self.schedule_t0, self.schedule_count, float(tortoise_of_r(self.r1, self.params)))

    def schedule_times(self) -> tuple:
        return tuple(t for t in self.schedule().times if t <= self.t_final + 1e-12)

    def initial_state(self, grids: Grids | None = None) -> maxwell.FieldState:
        grids = self.grids() if grids is None else grids
        state = maxwell.FieldState.zeros(grids, 0.0)
        for spec in self.pulses:
            state = state + maxwell.make_initial_data(spec, grids, self.params, 0.0)
        if self.coulomb_charge != 0.0:
            state = state + maxwell.make_coulomb_data(self.coulomb_charge, grids, self.params, 0.0)
        return state

    def check_isolation(self) -> None:
        """Each pulse's support must stay at least t_final + 10 dr* away from both grid edges."""
        g = self.grid
        spacing = (g.rstar_max - g.rstar_min) / (g.n_r * self.resolution_scale - 1)
        need = self.t_final + 10.0 * spacing
        for spec in self.pulses:
            lo, hi = spec.center - 4.0 * spec.width, spec.center + 4.0 * spec.width
            if lo - g.rstar_min < need or g.rstar_max - hi < need:
                raise ConfigError(
                    f"pulse support [{lo}, {hi}] is not causally isolated from the grid edges "
                    f"[{g.rstar_min}, {g.rstar_max}] up to t = {self.t_final}"
                )

    def scaled(self, factor: float) -> "ExperimentConfig":
        """Same configuration with every pulse amplitude (and the charge) multiplied by factor."""
        return replace(
            self,
            pulses=tuple(replace(p, amplitude=p.amplitude * factor) for p in self.pulses),
            coulomb_charge=self.coulomb_charge * factor,
        )

    def refined(self, scale: int) -> "ExperimentConfig":
        return replace(self, resolution_scale=scale)

    # flat key/value form, shared with the CLI config files
    def to_flat(self) -> dict:
        sectors = "".join(p.sector.value for p in self.pulses) or "none"
        first = self.pulses[0] if self.pulses else maxwell.InitialDataSpec(maxwell.Sector.A, 0.0, 0.0, 3.0, 1)
        for p in self.pulses[1:]:
            if (p.amplitude, p.center, p.width, p.ell) != (first.amplitude, first.center, first.width, first.ell):
                raise ConfigError("flat configs describe pulses that share amplitude, center, width and ell")
        return {
            "name": self.name,
            "mass": self.params.mass,
            "allow_nonunit_mass": self.allow_nonunit_mass,
            "grid.rstar_min": self.grid.rstar_min,
            "grid.rstar_max": self.grid.rstar_max,
            "grid.n_r": self.grid.n_r,
            "grid.n_theta": self.grid.n_theta,
            "grid.cfl": self.grid.cfl,
            "grid.resolution_scale": self.resolution_scale,
            "initial_data.sector": sectors,
            "initial_data.amplitude": first.amplitude,
            "initial_data.center": first.center,
            "initial_data.width": first.width,
            "initial_data.ell": first.ell,
            "initial_data.coulomb_charge": self.coulomb_charge,
            "schedule.t0": self.schedule_t0,
            "schedule.count": self.schedule_count,
            "run.t_final": self.t_final,
            "run.sample_stride": self.sample_stride,
            "h_profile.r1": self.r1,
            "region.lo": self.region[0],
            "region.hi": self.region[1],
            "identity.t_start": self.identity_window[0],
            "identity.t_end": self.identity_window[1],
            "stations": list(self.stations),
            "fit.energy_window": list(self.energy_fit_window),
            "fit.v_window": list(self.v_fit_window),
            "outputs.dir": self.output_dir,
        }

    @classmethod
    def from_flat(cls, flat: dict) -> "ExperimentConfig":
        known = set(cls().to_flat())
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        d = cls().to_flat()
        d.update(flat)
        sectors = str(d["initial_data.sector"]).upper()
        if sectors == "NONE":
            sectors = ""
        if any(c not in "AB" for c in sectors) or len(set(sectors)) != len(sectors):
            raise ConfigError(f"initial_data.sector must be A, B, AB or none, got {d['initial_data.sector']!r}")
        try:
            pulses = tuple(
                maxwell.InitialDataSpec(
                    maxwell.Sector(c),
                    float(d["initial_data.amplitude"]),
                    float(d["initial_data.center"]),
                    float(d["initial_data.width"]),
                    int(d["initial_data.ell"]),
                )
                for c in sectors
            )
            params = BlackHoleParams(float(d["mass"]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls(
            name=str(d["name"]),
            params=params,
            grid=GridSpec(float(d["grid.rstar_min"]), float(d["grid.rstar_max"]), int(d["grid.n_r"]), int(d["grid.n_theta"]), float(d["grid.cfl"])),
            pulses=pulses,
            coulomb_charge=float(d["initial_data.coulomb_charge"]),
            schedule_t0=float(d["schedule.t0"]),
            schedule_count=int(d["schedule.count"]),
            t_final=float(d["run.t_final"]),
            sample_stride=int(d["run.sample_stride"]),
            r1=float(d["h_profile.r1"]),
            region=(float(d["region.lo"]), float(d["region.hi"])),
            identity_window=(float(d["identity.t_start"]), float(d["identity.t_end"])),
            stations=tuple(float(x) for x in d["stations"]),
            energy_fit_window=tuple(float(x) for x in d["fit.energy_window"]),
            v_fit_window=tuple(float(x) for x in d["fit.v_window"]),
            resolution_scale=int(d["grid.resolution_scale"]),
            allow_nonunit_mass=bool(d["allow_nonunit_mass"]),
            output_dir=str(d["outputs.dir"]),
        )

    def content_hash(self) -> str:
        """git blob hash of the canonical JSON form of the configuration."""
        body = json.dumps(self.to_flat(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


# ---------------------------------------------------------------------------
# results


@dataclass
class ExperimentResult:
    experiment: str
    config: ExperimentConfig
    series: dict = field(default_factory=dict)  # name -> (columns, rows)
    summary: dict = field(default_factory=dict)

    def add_series(self, name: str, columns, rows):
        self.series[name] = (tuple(columns), [tuple(r) for r in rows])

    def csv_text(self, name: str) -> str:
        columns, rows = self.series[name]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def summary_document(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config.to_flat(),
            "config_hash": self.config.content_hash(),
            "summary": _jsonable(self.summary),
            "series": sorted(self.series),
        }

    def json_text(self) -> str:
        return json.dumps(self.summary_document(), sort_keys=True, indent=2, allow_nan=False) + "\n"

    def write(self, directory) -> list:
        from pathlib import Path

        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.series):
            path = out / f"{self.experiment}_{name}.csv"
            path.write_text(self.csv_text(name), encoding="utf-8", newline="")
            written.append(path)
        path = out / f"{self.experiment}.json"
        path.write_text(self.json_text(), encoding="utf-8", newline="")
        written.append(path)
        return written


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if x is None:
        return ""
    return str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, FitResult):
        return {"exponent": obj.exponent, "amplitude": obj.amplitude, "residual": obj.residual, "n_samples": obj.n_samples}
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _ratio(num: float, den: float):
    """num/den with 0/0 -> 0 and x/0 -> None (undefined, flagged by the caller)."""
    if den == 0.0:
        return 0.0 if num == 0.0 else None
    return num / den


def _safe_fit(times, values, window):
    try:
        return fit_power_law(times, values, window)
    except ValueError:
        return None


def _report_row(rep: mp.FunctionalReport):
    return rep.csv_row()


# ---------------------------------------------------------------------------
# conservation


def run_conservation(config: ExperimentConfig) -> ExperimentResult:
    """E^(d_t) on the schedule; max relative drift against t = 0."""
    config.check_isolation()
    grids = config.grids()
    p = config.params
    state = config.initial_state(grids)
    dt = stable_timestep(grids, config.grid.cfl)

    def energy(t, st):
        return mp.energy_functional("E_T", st, grids, p)

    _, reports = maxwell.evolve(state, grids, p, config.t_final, [energy], config.schedule_times(), config.grid.cfl)
    values = np.array([r.value for r in reports])
    e0 = values[0]
    drift = float(np.max(np.abs(values - e0)) / abs(e0)) if e0 != 0.0 else 0.0
    res = ExperimentResult("conservation", config)
    res.add_series("energy", mp.FunctionalReport.CSV_COLUMNS, [_report_row(r) for r in reports])
    res.summary = {"E0": float(e0), "max_relative_drift": drift, "n_samples": len(reports), "dt": dt}
    return res


# ---------------------------------------------------------------------------
# Morawetz ratio


def _slice_energies(grids, p):
    def cb(t, st):
        hat = mp.energy_functional("E_hat", st, grids, p).value
        lie = maxwell.sphere_lie_energy_density(st, grids, p, kind="hat")
        rad = grids.radial
        lie_energy = float(interval_quadrature_weights(rad, rad.rstar_min, rad.rstar_max) @ integrate_sphere(lie, grids.angular))
        return {"t": t, "E_hat": hat, "E_hat_lie": lie_energy}

    return cb


def run_morawetz_ratio(config: ExperimentConfig) -> ExperimentResult:
    """rho_i = J^(G)(slab i, [r0*, R0*]) / [E_hat(t_i) + E_hat(t_i+1) + rotational E_hat terms]."""
    config.check_isolation()
    grids = config.grids()
    p = config.params
    state = config.initial_state(grids)
    res = ExperimentResult("morawetz", config)
    radii = mp.find_sign_radii(p)
    r0s, R0s = (float(x) for x in radii.tortoise(p))
    stationary = maxwell.is_stationary(state, grids, p)
    res.summary = {"r0": radii.r0, "R0": radii.R0, "r0_star": r0s, "R0_star": R0s, "stationary": stationary}
    columns = ("slab", "t_start", "t_end", "J_G", "J_C", "E_hat_start", "E_hat_end", "lie_start", "lie_end", "rho", "rho_C", "flagged")
    if stationary:
        res.add_series("ratios", columns, [])
        res.summary.update({"flagged": "stationary data: ratios not computed", "max_rho": None, "n_slabs": 0})
        return res
    margin = 1.0 + 4.0 * grids.radial.spacing
    times = config.schedule_times()
    hist, _, reports = mp.record_run(
        state, grids, p, config.t_final, window=(r0s - margin, R0s + margin), stop_times=times,
        callbacks=[_slice_energies(grids, p)], cfl=config.grid.cfl,
    )
    at = {round(r["t"], 9): r for r in reports}
    rows, rhos = [], []
    for i, ta, tb in config.schedule().slabs(config.t_final):
        jg = mp.bulk_functional("J_G", hist, (ta, tb, r0s, R0s)).value
        jc = mp.bulk_functional("J_C", hist, (ta, tb, r0s, R0s)).value
        a, b = at[round(ta, 9)], at[round(tb, 9)]
        den = a["E_hat"] + b["E_hat"] + a["E_hat_lie"] + b["E_hat_lie"]
        rho = _ratio(jg, den)
        rho_c = _ratio(jc, a["E_hat"] + b["E_hat"])
        flagged = rho is None
        rows.append((i, ta, tb, jg, jc, a["E_hat"], b["E_hat"], a["E_hat_lie"], b["E_hat_lie"], rho, rho_c, flagged))
        if rho is not None:
            rhos.append(rho)
    res.add_series("ratios", columns, rows)
    res.summary.update({
        "n_slabs": len(rows),
        "max_rho": max(rhos) if rhos else None,
        "rho": rhos,
        "all_finite": bool(rows) and all(r[-1] is False for r in rows),
    })
    return res


# ---------------------------------------------------------------------------
# decay measurements
#
# The three decay experiments are instruments attached to one evolution, so
# a single run can feed all of them (see run_decay_suite).


def _min_square_on_region(t: float, lo: float, hi: float, sign: int) -> float:
    """min of (t + sign r*)^2 over r* in [lo, hi]."""
    a, b = t + sign * lo, t + sign * hi
    if a * b <= 0:
        return 0.0
    return min(a * a, b * b)


class _ConformalInstrument:
    """E^(K)(t_i) growth check and localized E^(d_t) decay over the bounded region."""

    name = "conformal"

    def __init__(self, config: ExperimentConfig, grids: Grids):
        self.config, self.grids = config, grids
        p = config.params
        self.lo, self.hi = config.region
        margin = 4.0 * grids.radial.spacing + 1e-9
        win = grids.radial.index_window(self.lo - margin, self.hi + margin)
        self.hist = mp.RunHistory(grids, p, win)
        self.reports = []
        self.stop_times = config.schedule_times()

    def observe(self, st):
        self.hist.observe(st)

    def callback(self, t, st):
        if not any(abs(t - s) <= 1e-9 * max(1.0, s) for s in self.stop_times):
            return
        g, p = self.grids, self.config.params
        self.reports.append({
            "t": t,
            "E_K": mp.energy_functional("E_K", st, g, p).value,
            "E_T": mp.energy_functional("E_T", st, g, p).value,
            "E_T_region": mp.energy_functional("E_T", st, g, p, (self.lo, self.hi)).value,
        })

    def finish(self) -> ExperimentResult:
        config, hist = self.config, self.hist
        lo, hi = self.lo, self.hi
        t, tvv, tww, mid = hist.arrays()
        dens = hist.r**2 * (tvv + tww + 2.0 * hist.lapse * mid)
        local = mp._radial_integral(hist, dens, lo, hi)
        stride = max(1, config.sample_stride)
        res = ExperimentResult(self.name, config)
        rows = []
        for rep in self.reports:
            tt = rep["t"]
            mv, mw = _min_square_on_region(tt, lo, hi, +1), _min_square_on_region(tt, lo, hi, -1)
            bound = None if mv == 0.0 or mw == 0.0 else rep["E_K"] / mw + rep["E_K"] / mv
            ratio = _ratio(rep["E_T_region"], bound) if bound is not None else None
            rows.append((tt, rep["E_K"], rep["E_T"], rep["E_T_region"], bound, ratio))
        res.add_series("schedule", ("t", "E_K", "E_T", "E_T_region", "conformal_bound", "conformal_ratio"), rows)
        res.add_series("localized", ("t", "E_T_region"), [(float(a), float(b)) for a, b in zip(t[::stride], local[::stride])])
        ek_t = np.array([row[0] for row in rows])
        ek = np.array([row[1] for row in rows])
        ek_fit = _safe_fit(ek_t, ek, None) if ek.size and np.all(ek > 0) else None
        loc_fit = _safe_fit(t, local, config.energy_fit_window)
        e_k0 = rows[0][1] if rows else 0.0
        window = (t >= config.energy_fit_window[0]) & (t <= config.energy_fit_window[1])
        conformal_ratios = [row[5] for row in rows if row[5] is not None]
        res.summary = {
            "E_K_fit": ek_fit,
            "E_K_bounded": ek_fit is not None and -0.2 <= ek_fit.exponent <= 0.2,
            "E_K_max_over_initial": float(np.max(ek) / e_k0) if e_k0 > 0 else None,
            "localized_fit": loc_fit,
            "localized_exponent_in_band": loc_fit is not None and 1.5 <= loc_fit.exponent <= 2.5,
            "max_t2_times_localized": float(np.max(t[window] ** 2 * local[window])) if np.any(window) else None,
            "max_conformal_ratio": max(conformal_ratios) if conformal_ratios else None,
        }
        return res


FAMILIES = ("vw", "e1e2", "v_e", "w_e_redshifted")


class StationProbe:
    """Records the sphere sup of each component family at fixed radii."""

    def __init__(self, grids: Grids, params: BlackHoleParams, stations, stride: int = 1):
        rad = grids.radial
        self.grids = grids
        self.stations = tuple(stations)
        self.rstar = []
        self.weights = []
        for r in self.stations:
            if not r > 2 * params.mass:
                raise ConfigError(f"station r = {r} is not outside the horizon")
            rs = float(tortoise_of_r(r, params))
            if not rad.rstar_min <= rs <= rad.rstar_max:
                raise ConfigError(f"station r = {r} (r* = {rs:.4g}) outside grid")
            self.rstar.append(rs)
            self.weights.append(cubic_interpolation_weights(rad, rs))
        self.r = np.array(self.stations, dtype=float)
        self.lapse = np.array([(r - 2 * params.mass) / r for r in self.stations])
        self.stride = max(1, stride)
        self.count = 0
        self.times: list = []
        self.values: list = []  # per sample: (n_stations, n_families)

    def observe(self, state: maxwell.FieldState):
        self.count += 1
        if (self.count - 1) % self.stride:
            return
        s = self.grids.angular.sin
        out = np.empty((len(self.stations), len(FAMILIES)))
        for j, (idx, w) in enumerate(self.weights):
            # interpolate the regular reduced components, then restore sin powers
            red = np.einsum("cik,i->ck", maxwell._reduced(state.data[:, idx, :], s), w)
            F = red * s[None, :] ** maxwell.SIN_POWER[:, None]
            r, N = self.r[j], self.lapse[j]
            vw = np.abs(F[0]) / (2.0 * N)
            e12 = np.abs(F[5]) / (r * r * s)
            ve = np.hypot(0.5 * (F[1] + F[2]) / r, 0.5 * (F[3] + F[4]) / (r * s))
            we = np.sqrt(N) * np.hypot(0.5 * (F[1] - F[2]) / (N * r), 0.5 * (F[3] - F[4]) / (N * r * s))
            out[j] = [vw.max(), e12.max(), ve.max(), we.max()]
        self.times.append(state.t)
        self.values.append(out)


class _PointwiseInstrument:
    """Sphere sup of each frame-component family at the stations, fitted against v_+ = max(1, v)."""

    name = "pointwise"

    def __init__(self, config: ExperimentConfig, grids: Grids):
        self.config = config
        self.probe = StationProbe(grids, config.params, config.stations, config.sample_stride)
        self.stop_times = ()

    def observe(self, st):
        self.probe.observe(st)

    def callback(self, t, st):
        return None

    def finish(self) -> ExperimentResult:
        config, probe = self.config, self.probe
        t = np.array(probe.times)
        vals = np.array(probe.values) if probe.values else np.zeros((0, len(config.stations), len(FAMILIES)))
        res = ExperimentResult(self.name, config)
        rows = []
        fits = {}
        for j, r in enumerate(config.stations):
            v = t + probe.rstar[j]
            vplus = np.maximum(1.0, v)
            for k, fam in enumerate(FAMILIES):
                for a in range(len(t)):
                    rows.append((t[a], v[a], r, fam, vals[a, j, k]))
                fits[f"r={r:g}/{fam}"] = _safe_fit(vplus, vals[:, j, k], config.v_fit_window)
        res.add_series("sup_norms", ("t", "v", "station_r", "family", "sup_value"), rows)
        in_band = {k: (f is not None and 0.7 <= f.exponent <= 1.3) for k, f in fits.items()}
        excited = {k: f is not None for k, f in fits.items()}
        family_exponents = {
            fam: [fits[f"r={r:g}/{fam}"].exponent for r in config.stations if fits[f"r={r:g}/{fam}"] is not None]
            for fam in FAMILIES
        }
        res.summary = {
            "fits": fits,
            "family_exponents": family_exponents,
            "in_band": in_band,
            "excited": excited,
            "all_excited_in_band": any(excited.values()) and all(in_band[k] for k in fits if excited[k]),
            "max_sup": {fam: float(vals[:, :, k].max()) if vals.size else 0.0 for k, fam in enumerate(FAMILIES)},
        }
        return res


def _h_multiplier(config: ExperimentConfig) -> mp.MultiplierSpec:
    try:
        prof = mp.build_h_profile(config.params, config.r1, allow_nonunit_mass=config.allow_nonunit_mass)
    except mp.InfeasibleProfile as exc:
        raise ConfigError(str(exc)) from exc
    return mp.MultiplierSpec(mp.MultiplierKind.H, prof)


class _HorizonFluxInstrument:
    """-F^(H)(v = v_i) over w in [w0(v_i), inf) with w0(v) = v - 2 r1*, fitted against v_+."""

    name = "horizon_flux"

    def __init__(self, config: ExperimentConfig, grids: Grids):
        self.config = config
        H = _h_multiplier(config)
        sched = config.schedule()
        self.accs = []
        for i, ti in enumerate(sched.times):
            if ti >= config.t_final:
                break
            vi = sched.v(i)
            self.accs.append((i, vi, mp.NullLineAccumulator("F_H_vconst", grids, vi, (vi - 2.0 * sched.r1_star, math.inf), H)))
        self.stop_times = config.schedule_times()

    def observe(self, st):
        for _, _, acc in self.accs:
            acc.observe(st)

    def callback(self, t, st):
        return None

    def finish(self) -> ExperimentResult:
        config = self.config
        rows, vs, vals = [], [], []
        for i, vi, acc in self.accs:
            rep = acc.report()
            rows.append((i, vi, -rep.value, rep.extra["truncated_at"]))
            vs.append(vi)
            vals.append(-rep.value)
        res = ExperimentResult(self.name, config)
        res.add_series("flux", ("i", "v", "minus_F_H", "w_truncated_at"), rows)
        vals = np.array(vals)
        fit = _safe_fit(np.maximum(1.0, vs), vals, config.v_fit_window) if len(vals) else None
        res.summary = {
            "all_nonnegative": bool(np.all(vals >= 0.0)),
            "min_value": float(vals.min()) if len(vals) else 0.0,
            "fit": fit,
            "exponent_in_band": fit is not None and 1.4 <= fit.exponent <= 2.6,
            "n_lines": len(rows),
        }
        return res


_DECAY_INSTRUMENTS = {
    "conformal": _ConformalInstrument,
    "pointwise": _PointwiseInstrument,
    "horizon_flux": _HorizonFluxInstrument,
}


def run_decay_suite(config: ExperimentConfig, which=("conformal", "pointwise", "horizon_flux")) -> dict:
    """One evolution feeding the selected decay instruments; returns name -> ExperimentResult."""
    config.check_isolation()
    grids = config.grids()
    instruments = [_DECAY_INSTRUMENTS[name](config, grids) for name in which]
    stops = sorted({t for ins in instruments for t in ins.stop_times})

    def observer(st):
        for ins in instruments:
            ins.observe(st)

    def callback(t, st):
        for ins in instruments:
            ins.callback(t, st)

    maxwell.evolve(config.initial_state(grids), grids, config.params, config.t_final, [callback], stops, config.grid.cfl, observer=observer)
    return {ins.name: ins.finish() for ins in instruments}


def run_conformal_boundedness(config: ExperimentConfig) -> ExperimentResult:
    """E^(K)(t_i) series with a growth verdict, plus the localized-energy decay fit."""
    return run_decay_suite(config, ("conformal",))["conformal"]


def run_pointwise_decay(config: ExperimentConfig) -> ExperimentResult:
    """Sup-norm series of the component families at the stations with power-law fits."""
    return run_decay_suite(config, ("pointwise",))["pointwise"]


def run_horizon_flux_decay(config: ExperimentConfig) -> ExperimentResult:
    """-F^(H)(v_i) series with its power-law fit; every value must be nonnegative."""
    return run_decay_suite(config, ("horizon_flux",))["horizon_flux"]


# ---------------------------------------------------------------------------
# identity and estimate suite


class HBulkSignProbe:
    """Tracks min over steps and nodes with r <= r1 of the -I^(H) integrand, and its scale."""

    def __init__(self, grids: Grids, H: mp.MultiplierSpec, r1: float):
        self.grids = grids
        self.H = H
        self.rows = np.nonzero(grids.radial.r <= r1)[0]
        self.min_value = math.inf
        self.scale = 0.0

    def observe(self, state: maxwell.FieldState):
        if self.rows.size == 0:
            return
        rad = self.grids.radial
        idx = self.rows
        sub = maxwell.FieldState(state.data[:, idx, :], state.t)
        tvv, tww, mid = mp._row_blocks(sub, self.grids, idx)
        r, mu, N = rad.r[idx][:, None], rad.mu[idx][:, None], rad.lapse[idx][:, None]
        comps = [c[:, None] for c in self.H.components(state.t, rad.rstar[idx], rad.r[idx], rad.mu[idx], rad.lapse[idx])]
        integrand = -2.0 * N * r * r * mp.contraction_from_blocks(comps, tvv, tww, mid, r, mu, N)
        # field scale: the same integrand with every coefficient replaced by its magnitude
        xv, xw, dvxv, dwxw, dvxw, dwxv = comps
        mag = 2.0 * N * r * r * (
            np.abs(2.0 / N * dvxw) * tww + np.abs(2.0 / N * dwxv) * tvv
            + 2.0 * mid * (np.abs(dvxv) + np.abs(dwxw) + np.abs((3.0 * mu - 2.0) / (2.0 * r)) * (np.abs(xv) + np.abs(xw)))
        )
        self.min_value = min(self.min_value, float(integrand.min()))
        self.scale = max(self.scale, float(mag.max()))

    @property
    def normalized_min(self) -> float:
        if self.scale == 0.0 or not math.isfinite(self.min_value):
            return 0.0
        return self.min_value / self.scale


def run_identity_suite(config: ExperimentConfig) -> ExperimentResult:
    """Divergence closures, null closures and LHS/RHS ratios of the H estimates per slab."""
    config.check_isolation()
    grids = config.grids()
    p = config.params
    rad = grids.radial
    H = _h_multiplier(config)
    sched = config.schedule()
    r1s = sched.r1_star
    r12s = float(tortoise_of_r(1.2 * config.r1, p))
    ramp = mp.estimate_ramp(p, config.r1)
    G = mp.MultiplierSpec(mp.MultiplierKind.G, ramp)
    radii = mp.find_sign_radii(p)
    r0s, R0s = (float(x) for x in radii.tortoise(p))
    slabs = [s for s in sched.slabs(config.t_final)]
    t_id0, t_id1 = config.identity_window
    lo, hi = config.region
    margin = 4.0 * rad.spacing + 1e-9
    deepest = min([sched.v(i) - config.t_final for i, _, _ in slabs] + [lo, r0s])
    w_lo = max(rad.rstar_min + margin, deepest - 2.0)
    w_hi = min(rad.rstar_max - margin, max(hi, R0s, r12s) + margin)
    window = (w_lo, w_hi)
    stop_times = tuple(sorted(set(config.schedule_times()) | {t_id0, t_id1}))
    state = config.initial_state(grids)

    def slice_terms(t, st):
        return {
            "t": t,
            "E_T": mp.energy_functional("E_T", st, grids, p).value,
            "E_T_local": mp.energy_functional("E_T", st, grids, p, (max(-0.85 * t, rad.rstar_min), min(0.85 * t, rad.rstar_max))).value,
            "E_hat": mp.energy_functional("E_hat", st, grids, p).value,
            "E_G": mp.energy_functional("E_G", st, grids, p, multiplier=G).value,
            "E_sharp": mp.energy_functional("E_sharp", st, grids, p).value,
        }

    probe = HBulkSignProbe(grids, H, config.r1)
    hist, _, reports = mp.record_run(
        state, grids, p, config.t_final, window=window, stop_times=stop_times, callbacks=[slice_terms],
        cfl=config.grid.cfl, observers=[probe.observe],
    )
    at = {round(r["t"], 9): r for r in reports}
    res = ExperimentResult("identities", config)

    # divergence identity on the rectangle
    specs = {"T": mp.MultiplierSpec(mp.MultiplierKind.T), "K": mp.MultiplierSpec(mp.MultiplierKind.K), "G": G, "H": H}
    region = (t_id0, min(t_id1, config.t_final), lo, hi)
    div_rows = []
    for name, X in specs.items():
        terms = mp.divergence_identity_terms(X, hist, region)
        resid = mp.divergence_identity_residual(X, hist, region)
        div_rows.append((name, *region, terms["E_start"], terms["E_end"], terms["flux_lo"], terms["flux_hi"], terms["bulk"], resid))
    res.add_series("divergence", ("multiplier", "t_start", "t_end", "rstar_lo", "rstar_hi", "E_start", "E_end", "flux_lo", "flux_hi", "bulk", "residual"), div_rows)

    # per-slab estimates
    T = specs["T"]
    t_arr, tvv, tww, mid = hist.arrays()
    hat_dens = 2.0 * hist.r**2 * (tvv + tww)
    hat_ramp = mp._radial_integral(hist, hat_dens, r1s, r12s)
    rows = []
    initial = {"E_T": reports[0]["E_T"], "E_sharp": reports[0]["E_sharp"]}
    strict_e4 = True
    min_minus_ih = math.inf
    for i, ta, tb in slabs:
        vi, vj, wi = sched.v(i), sched.v(i + 1), sched.w(i)
        inf = math.inf
        fh_w = mp.flux_functional("F_H_wconst", hist, wi, (vi, vj), H).value
        ft_w = mp.flux_functional("F_T_wconst", hist, wi, (vi, vj), T).value
        fh_vi = mp.flux_functional("F_H_vconst", hist, vi, (wi, inf), H).value
        fh_vj = mp.flux_functional("F_H_vconst", hist, vj, (wi, inf), H).value
        cut = mp.slice_flux(hist, H, (vi, vj), wi)
        ih_r1 = mp.null_region_bulk(hist, H, (vi, vj), wi, rstar_cap=r1s)
        null_res = mp.null_identity_residual(H, hist, (vi, vj), wi)
        e1 = _ratio(-fh_w, ft_w)
        lhs2 = mp._time_integral(t_arr, hat_ramp, ta, tb)
        e2 = _ratio(lhs2, at[round(ta, 9)]["E_T_local"])
        lhs3 = -ih_r1 - fh_vj - cut
        rhs3 = ft_w - fh_vi + at[round(ta, 9)]["E_T_local"]
        e3 = _ratio(lhs3, rhs3)
        # inf over sampled v of -F_H(v)(w_i..inf), against its average and against the bulk-plus-flux bound
        samples = np.linspace(vi, vj, 9)
        fluxes = np.array([-mp.flux_functional("F_H_vconst", hist, v, (wi, inf), H).value for v in samples])
        ft_out = [mp.flux_functional("F_T_vconst", hist, v, (wi, v - 2.0 * r1s), T).value for v in samples]
        inf_f = float(fluxes.min())
        avg_f = float(np.trapezoid(fluxes, samples) / (vj - vi))
        strict_e4 = strict_e4 and inf_f <= avg_f + 1e-15 * max(1.0, abs(avg_f))
        rhs4 = -ih_r1 / (vj - vi) + max(ft_out)
        e4 = _ratio(inf_f, rhs4)
        e5 = _ratio(-ih_r1, abs(initial["E_T"]) + initial["E_sharp"])
        min_minus_ih = min(min_minus_ih, -ih_r1)
        jk = mp.bulk_functional("J_K", hist, (ta, tb, hist.rstar[1], hist.rstar[-2])).value
        jg = mp.bulk_functional("J_G", hist, (ta, tb, r0s, R0s)).value
        kchain = _ratio(jk, tb * jg)
        eg = _ratio(abs(at[round(ta, 9)]["E_G"]), at[round(ta, 9)]["E_hat"])
        rows.append((i, ta, tb, vi, vj, wi, -fh_w, ft_w, -fh_vi, -fh_vj, -cut, -ih_r1, null_res, e1, e2, e3, inf_f, avg_f, e4, e5, kchain, eg))
    cols = ("slab", "t_start", "t_end", "v_start", "v_end", "w_start", "minus_F_H_w", "F_T_w", "minus_F_H_v_start",
            "minus_F_H_v_end", "minus_F_H_cut", "minus_I_H_r_le_r1", "null_residual_H", "ratio_H_flux_w",
            "ratio_ramp_energy", "ratio_H_region", "H_flux_inf", "H_flux_average", "ratio_H_flux_inf",
            "ratio_I_H_initial", "ratio_K_chain", "ratio_E_G")
    res.add_series("estimates", cols, rows)
    res.summary = {
        "divergence_residuals": {row[0]: row[-1] for row in div_rows},
        "null_residual_max": max((r[12] for r in rows), default=0.0),
        "minus_I_H_min": min_minus_ih if rows else 0.0,
        "minus_I_H_nonnegative": not rows or min_minus_ih >= 0.0,
        "bulk_sign_min_normalized": probe.normalized_min,
        "bulk_sign_ok": probe.normalized_min >= -1e-10,
        "H_flux_inf_le_average": strict_e4,
        "max_ratios": {
            name: max((r[k] for r in rows if r[k] is not None), default=0.0)
            for name, k in (("H_flux_w", 13), ("ramp_energy", 14), ("H_region", 15), ("H_flux_inf", 18), ("I_H_initial", 19), ("K_chain", 20), ("E_G", 21))
        },
        "r0": radii.r0,
        "R0": radii.R0,
        "window": list(window),
        "n_slabs": len(rows),
    }
    return res


EXPERIMENTS = {
    "conservation": run_conservation,
    "morawetz": run_morawetz_ratio,
    "conformal": run_conformal_boundedness,
    "pointwise": run_pointwise_decay,
    "horizon_flux": run_horizon_flux_decay,
    "identities": run_identity_suite,
}
