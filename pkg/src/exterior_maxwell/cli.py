"""Command-line interface.

Subcommands: verify-geometry, verify-identities, find-h, evolve, scan-decay
and report.  Exit codes: 0 pass, 1 check failure, 2 infeasible
configuration, 3 I/O error.

Config files are flat ``key = value`` lines.  Keys may be dotted
(``grid.n_r = 2048``) or grouped under ``[section]`` headers.  Values are
numbers, ``true``/``false``, quoted or bare strings, or ``[a, b, ...]``
lists of numbers.  ``#`` starts a comment.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import math
import re
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import maxwell
from . import multipliers as mp
from .geometry import (
    BlackHoleParams,
    DoubleNullPoint,
    FrameLabel,
    SpacetimePoint,
    christoffel_table,
    frame_covariant_derivative,
    kruskal_interval,
    kruskal_of_null,
    metric_components,
    r_of_tortoise,
    tortoise_of_r,
)

EXIT_OK, EXIT_FAIL, EXIT_INFEASIBLE, EXIT_IO = 0, 1, 2, 3


# ---------------------------------------------------------------------------
# config files


class ConfigParseError(ValueError):
    """Malformed config text; the message carries source and line."""

    def __init__(self, message: str, source: str = "<config>", line: int | None = None, key: str | None = None):
        where = f"{source}:{line}" if line is not None else source
        field = f" [{key}]" if key else ""
        super().__init__(f"{where}{field}: {message}")
        self.source, self.line, self.key = source, line, key


_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
_SECTION = re.compile(r"^\[\s*([A-Za-z_][A-Za-z0-9_.]*)\s*\]$")


def _strip_comment(line: str) -> str:
    out, quote = [], None
    for ch in line:
        if quote:
            out.append(ch)
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
            out.append(ch)
        elif ch == "#":
            break
        else:
            out.append(ch)
    return "".join(out).strip()


def _parse_scalar(text: str):
    t = text.strip()
    if not t:
        raise ValueError("empty value")
    if t[0] in "\"'":
        if len(t) < 2 or t[-1] != t[0]:
            raise ValueError(f"unterminated string {t!r}")
        return json.loads('"' + t[1:-1].replace('"', '\\"') + '"') if t[0] == "'" else json.loads(t)
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if re.fullmatch(r"[+-]?\d+", t):
        return int(t)
    try:
        return float(t)
    except ValueError:
        if re.fullmatch(r"[A-Za-z0-9_./\-]+", t):
            return t
        raise ValueError(f"cannot parse value {t!r}") from None


def _parse_value(text: str):
    t = text.strip()
    if t.startswith("["):
        if not t.endswith("]"):
            raise ValueError("unterminated list")
        inner = t[1:-1].strip()
        return [] if not inner else [_parse_scalar(x) for x in inner.split(",")]
    return _parse_scalar(t)


def parse_config_text(text: str, source: str = "<config>"):
    """Parse config text into (flat dict, key -> line number)."""
    flat, lines = {}, {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", source, lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if not _KEY.match(key):
            raise ConfigParseError(f"invalid key {key!r}", source, lineno)
        full = f"{section}.{key}" if section else key
        if full in flat:
            raise ConfigParseError(f"duplicate key (first set on line {lines[full]})", source, lineno, full)
        try:
            flat[full] = _parse_value(value)
        except ValueError as exc:
            raise ConfigParseError(str(exc), source, lineno, full) from None
        lines[full] = lineno
    return flat, lines


def _check_types(flat: dict, lines: dict, source: str) -> dict:
    """Coerce to the types of the defaults; report the offending line otherwise."""
    defaults = ex.ExperimentConfig().to_flat()
    out = {}
    for key, value in flat.items():
        line = lines.get(key)
        if key not in defaults:
            raise ConfigParseError("unknown key", source, line, key)
        want = defaults[key]
        bad = None
        if isinstance(want, bool):
            if not isinstance(value, bool):
                bad = "expected true or false"
        elif isinstance(want, int):
            if isinstance(value, bool) or not isinstance(value, int):
                bad = "expected an integer"
        elif isinstance(want, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                bad = "expected a number"
            else:
                value = float(value)
        elif isinstance(want, list):
            if not isinstance(value, list) or any(isinstance(v, (bool, str)) for v in value):
                bad = "expected a list of numbers"
            else:
                value = [float(v) for v in value]
        elif isinstance(want, str):
            if isinstance(value, (list, bool)):
                bad = "expected a string"
            else:
                value = str(value)
        if bad:
            raise ConfigParseError(f"{bad}, got {value!r}", source, line, key)
        out[key] = value
    return out


def validate_config(cfg: ex.ExperimentConfig) -> ex.ExperimentConfig:
    """Physical and numerical preconditions; raises ConfigError."""
    p, g = cfg.params, cfg.grid
    m = p.mass
    checks = [
        (g.rstar_max > g.rstar_min, "grid.rstar_max must exceed grid.rstar_min"),
        (g.n_r >= 16, "grid.n_r must be at least 16"),
        (g.n_theta >= 2, "grid.n_theta must be at least 2"),
        (0.0 < g.cfl <= 1.0, "grid.cfl must lie in (0, 1]"),
        (cfg.schedule_t0 > 0, "schedule.t0 must be positive"),
        (cfg.schedule_count >= 1, "schedule.count must be at least 1"),
        (cfg.sample_stride >= 1, "run.sample_stride must be at least 1"),
        (cfg.r1 > 2.0 * m, "h_profile.r1 must exceed 2m"),
        (all(r > 2.0 * m for r in cfg.stations), "stations must lie outside r = 2m"),
        (len(cfg.energy_fit_window) == 2 and cfg.energy_fit_window[0] < cfg.energy_fit_window[1], "fit.energy_window must be [lo, hi]"),
        (len(cfg.v_fit_window) == 2 and cfg.v_fit_window[0] < cfg.v_fit_window[1], "fit.v_window must be [lo, hi]"),
        (cfg.identity_window[0] < cfg.identity_window[1], "identity.t_start must precede identity.t_end"),
        (all(math.isfinite(x) for x in (g.rstar_min, g.rstar_max, cfg.t_final, cfg.r1)), "non-finite grid or run value"),
    ]
    for ok, message in checks:
        if not ok:
            raise ex.ConfigError(message)
    if m != 1.0 and not cfg.allow_nonunit_mass:
        raise ex.ConfigError("mass != 1 requires allow_nonunit_mass")
    return cfg


def config_from_text(text: str, source: str = "<config>") -> ex.ExperimentConfig:
    flat, lines = parse_config_text(text, source)
    flat = _check_types(flat, lines, source)
    return validate_config(ex.ExperimentConfig.from_flat(flat))


def load_config(path) -> ex.ExperimentConfig:
    path = Path(path)
    return config_from_text(path.read_text(encoding="utf-8"), str(path))


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, int):
        return str(v)
    if isinstance(v, list):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    return json.dumps(str(v))


def format_config(cfg: ex.ExperimentConfig) -> str:
    """Config text that parses back to ``cfg``; dotted keys are grouped into sections."""
    flat = cfg.to_flat()
    top = [k for k in flat if "." not in k]
    out = [f"{k} = {_format_value(flat[k])}" for k in top]
    sections: dict = {}
    for k in flat:
        if "." in k:
            sec, _, leaf = k.rpartition(".")
            sections.setdefault(sec, []).append((leaf, flat[k]))
    for sec, items in sections.items():
        out.append("")
        out.append(f"[{sec}]")
        out.extend(f"{leaf} = {_format_value(v)}" for leaf, v in items)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# geometry checks


@dataclass
class CheckResult:
    name: str
    residual: float
    tolerance: float
    samples: int

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.tolerance)

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} {self.name}: residual {self.residual:.3e} (tolerance {self.tolerance:.0e}, {self.samples} samples)"

    def as_dict(self) -> dict:
        return {"name": self.name, "residual": self.residual, "tolerance": self.tolerance, "samples": self.samples, "passed": self.passed}


def check_round_trip(p: BlackHoleParams, n: int = 2000, seed: int = 0) -> CheckResult:
    """r -> rstar -> r over (2m(1 + 1e-6), 100m), log-spaced in r - 2m."""
    rng = np.random.default_rng(seed)
    m = p.mass
    gap = 2.0 * m * np.exp(rng.uniform(math.log(1e-6), math.log(49.0), n))
    gap = np.concatenate([gap, [2.0 * m * 1e-6 * (1 + 1e-12), 98.0 * m]])
    r = 2.0 * m + gap
    back = r_of_tortoise(tortoise_of_r(r, p), p)
    return CheckResult("tortoise_round_trip", float(np.max(np.abs(back - r) / r)), 1e-12, r.size)


def _chart_point(chart: str, x, p):
    if chart == "tortoise":
        return SpacetimePoint(x[0], x[1], x[2], x[3])
    if chart == "schwarzschild":
        return SpacetimePoint(x[0], tortoise_of_r(x[1], p), x[2], x[3])
    return DoubleNullPoint(x[0], x[1], x[2], x[3])


_METRIC_CHART = {"tortoise": "tr*", "schwarzschild": "tr", "null": "vw"}


def _metric_derivative(chart, x, p, step):
    """Richardson-extrapolated central differences d_c g_ab, returned as dg[c, a, b]."""
    dg = np.zeros((4, 4, 4))
    for c in range(4):
        def central(h):
            xp, xm = list(x), list(x)
            xp[c] += h
            xm[c] -= h
            gp = metric_components(_chart_point(chart, xp, p), p, _METRIC_CHART[chart])[0]
            gm = metric_components(_chart_point(chart, xm, p), p, _METRIC_CHART[chart])[0]
            return (gp - gm) / (2.0 * h)

        dg[c] = (4.0 * central(0.5 * step) - central(step)) / 3.0
    return dg


def check_metric_compatibility(p: BlackHoleParams, connection=None, n_points: int = 200, seed: int = 1, step: float = 1e-5) -> CheckResult:
    """max over points and charts of max |nabla_c g_ab|, relative to the largest term at that point."""
    connection = connection or christoffel_table
    rng = np.random.default_rng(seed)
    m = p.mass
    worst = 0.0
    charts = ("tortoise", "schwarzschild", "null")
    for k in range(n_points):
        chart = charts[k % 3]
        r = 2.0 * m + 2.0 * m * math.exp(rng.uniform(math.log(0.025), math.log(9.0)))
        t = rng.uniform(-50.0, 50.0) * m
        th = rng.uniform(0.1, math.pi - 0.1)
        ph = rng.uniform(0.0, 2.0 * math.pi)
        rs = float(tortoise_of_r(r, p))
        if chart == "tortoise":
            x = [t, rs, th, ph]
        elif chart == "schwarzschild":
            x = [t, r, th, ph]
        else:
            x = [t + rs, t - rs, th, ph]
        point = _chart_point(chart, x, p)
        g = metric_components(point, p, _METRIC_CHART[chart])[0]
        G = np.asarray(connection(point, p, chart))
        dg = _metric_derivative(chart, x, p, step)
        t1 = np.einsum("dca,db->cab", G, g)
        t2 = np.einsum("dcb,ad->cab", G, g)
        resid = dg - t1 - t2
        scale = float(np.max(np.abs(dg) + np.abs(t1) + np.abs(t2)))
        worst = max(worst, float(np.max(np.abs(resid))) / scale)
    return CheckResult("metric_compatibility", worst, 1e-9, n_points)


_ORTHO = (FrameLabel.T, FrameLabel.RSTAR, FrameLabel.THETA, FrameLabel.PHI)


def reference_frame_table(direction: FrameLabel, field_vector: FrameLabel, r: float, theta: float, p: BlackHoleParams) -> np.ndarray:
    """Closed-form covariant derivatives among the orthonormal frame vectors."""
    m = p.mass
    lapse = 1.0 - 2.0 * m / r
    sq = math.sqrt(lapse)
    acc = m / (r * r * sq)  # mu / (2 r sqrt(1 - mu))
    cot = math.cos(theta) / math.sin(theta)
    out = np.zeros(4)
    T, R, TH, PH = _ORTHO
    if direction is T and field_vector is T:
        out[1] = acc
    elif direction is T and field_vector is R:
        out[0] = acc
    elif direction is TH and field_vector is R:
        out[2] = sq / r
    elif direction is TH and field_vector is TH:
        out[1] = -sq / r
    elif direction is PH and field_vector is R:
        out[3] = sq / r
    elif direction is PH and field_vector is TH:
        out[3] = cot / r
    elif direction is PH and field_vector is PH:
        out[1] = -sq / r
        out[2] = -cot / r
    return out


def check_frame_table(p: BlackHoleParams, connection=None, n_points: int = 50, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    m = p.mass
    worst = 0.0
    for _ in range(n_points):
        r = 2.0 * m + 2.0 * m * math.exp(rng.uniform(math.log(0.01), math.log(20.0)))
        th = rng.uniform(0.1, math.pi - 0.1)
        point = SpacetimePoint(0.0, float(tortoise_of_r(r, p)), th)
        for a in _ORTHO:
            for b in _ORTHO:
                got = frame_covariant_derivative(a, b, point, p, connection=connection)
                want = reference_frame_table(a, b, r, th, p)
                scale = max(1.0 / r, float(np.max(np.abs(want))))
                worst = max(worst, float(np.max(np.abs(got - want))) / scale)
    return CheckResult("frame_table", worst, 1e-10, n_points * 16)


def check_kruskal(p: BlackHoleParams, n: int = 500, seed: int = 3) -> CheckResult:
    """(t')^2 - (x')^2 + e^{r/2m}(r - 2m) = 0 relative to the last term."""
    rng = np.random.default_rng(seed)
    m = p.mass
    worst = 0.0
    for _ in range(n):
        gap = 2.0 * m * math.exp(rng.uniform(math.log(1e-6), math.log(49.0)))
        rs = float(tortoise_of_r(2.0 * m + gap, p))
        t = rng.uniform(-100.0, 100.0) * m
        point = DoubleNullPoint(t + rs, t - rs, 1.0)
        kp = kruskal_of_null(point, p)
        r = float(r_of_tortoise(point.to_tortoise().rstar, p))
        ref = math.exp(r / (2.0 * m)) * (r - 2.0 * m)
        worst = max(worst, abs(kruskal_interval(kp) + ref) / ref)
    return CheckResult("kruskal_relation", worst, 1e-10, n)


def geometry_suite(p: BlackHoleParams | None = None, connection=None) -> list:
    p = p or BlackHoleParams()
    return [
        check_round_trip(p),
        check_metric_compatibility(p, connection),
        check_frame_table(p, connection),
        check_kruskal(p),
    ]


# ---------------------------------------------------------------------------
# commands


class _IOFailure(Exception):
    pass


def _resolve_config(args) -> ex.ExperimentConfig:
    if args.config:
        try:
            cfg = load_config(args.config)
        except OSError as exc:
            raise _IOFailure(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
    else:
        cfg = ex.ExperimentConfig()
    changes = {}
    if args.resolution_scale is not None:
        changes["resolution_scale"] = args.resolution_scale
    if args.allow_nonunit_mass:
        changes["allow_nonunit_mass"] = True
    if getattr(args, "output_dir", None):
        changes["output_dir"] = args.output_dir
    return validate_config(replace(cfg, **changes)) if changes else cfg


def _emit(args, document: dict, lines) -> None:
    if args.json:
        sys.stdout.write(json.dumps(ex._jsonable(document), sort_keys=True, indent=2) + "\n")
    else:
        for line in lines:
            print(line)


def cmd_verify_geometry(args, connection=None) -> int:
    p = BlackHoleParams(args.mass)
    results = geometry_suite(p, connection)
    ok = all(r.passed for r in results)
    _emit(args, {"passed": ok, "mass": p.mass, "checks": [r.as_dict() for r in results]}, [r.line() for r in results])
    return EXIT_OK if ok else EXIT_FAIL


def _identity_checks(summary: dict, tol_t: float, tol_other: float) -> list:
    res = summary["divergence_residuals"]
    out = [CheckResult(f"divergence_{k}", float(v), tol_t if k == "T" else tol_other, 1) for k, v in sorted(res.items())]
    out.append(CheckResult("H_bulk_sign", max(0.0, -summary["bulk_sign_min_normalized"]), 1e-10, 1))
    out.append(CheckResult("minus_I_H_nonnegative", max(0.0, -summary["minus_I_H_min"]), 0.0, summary["n_slabs"]))
    out.append(CheckResult("H_flux_inf_le_average", 0.0 if summary["H_flux_inf_le_average"] else 1.0, 0.0, summary["n_slabs"]))
    return out


def cmd_verify_identities(args) -> int:
    cfg = _resolve_config(args)
    result = ex.run_identity_suite(cfg)
    result.write(cfg.output_dir)
    checks = _identity_checks(result.summary, args.tolerance_t, args.tolerance)
    ok = all(c.passed for c in checks)
    doc = {"passed": ok, "checks": [c.as_dict() for c in checks], "summary": result.summary}
    _emit(args, doc, [c.line() for c in checks])
    return EXIT_OK if ok else EXIT_FAIL


H_PROFILE_COLUMNS = ("rstar", "r", "h", "hprime") + mp.HProfile.MARGIN_NAMES


def h_profile_csv(prof: mp.HProfile) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(H_PROFILE_COLUMNS)
    for i in range(prof.r.size):
        writer.writerow([repr(float(x)) for x in (prof.rstar[i], prof.r[i], prof.h[i], prof.hprime[i], *prof.margins[:, i])])
    return buf.getvalue()


def cmd_find_h(args) -> int:
    cfg = _resolve_config(args)
    try:
        prof = mp.build_h_profile(cfg.params, cfg.r1, allow_nonunit_mass=cfg.allow_nonunit_mass)
    except mp.InfeasibleProfile as exc:
        doc = {"certified": False, "r1": cfg.r1, "constraint": exc.constraint, "radius": exc.radius, "message": str(exc)}
        _emit(args, doc, [f"infeasible: {exc}"])
        return EXIT_INFEASIBLE
    out = Path(args.output) if args.output else Path(cfg.output_dir) / "h_profile.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(h_profile_csv(prof), encoding="utf-8", newline="")
    inside = prof.r <= prof.r1
    mins = {name: float(prof.margins[k][inside].min()) for k, name in enumerate(mp.HProfile.MARGIN_NAMES)}
    doc = {"certified": True, "r1": cfg.r1, "cutoff_radius": prof.cutoff_radius, "min_margins": mins, "output": str(out)}
    lines = [f"certified h profile for r1 = {cfg.r1} (cutoff at r = {prof.cutoff_radius:.6g})"]
    lines += [f"  min margin {name}: {v:.3e}" for name, v in mins.items()]
    lines.append(f"wrote {out}")
    _emit(args, doc, lines)
    return EXIT_OK


EVOLVE_ENERGIES = ("E_T", "E_hat", "E_K", "E_sharp")


def cmd_evolve(args) -> int:
    cfg = _resolve_config(args)
    grids = cfg.grids()
    p = cfg.params
    out = Path(cfg.output_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    rows, stations = [], ex.StationProbe(grids, p, cfg.stations, cfg.sample_stride)
    written = []

    def callback(t, st):
        for kind in EVOLVE_ENERGIES:
            rows.append(mp.energy_functional(kind, st, grids, p).csv_row())
        path = ckpt_dir / f"state_t{t:012.6f}.ckpt"
        maxwell.save_checkpoint(st, grids, p, path)
        written.append(str(path))

    times = cfg.schedule_times()
    final, _ = maxwell.evolve(cfg.initial_state(grids), grids, p, cfg.t_final, [callback], times, cfg.grid.cfl, observer=stations.observe)
    result = ex.ExperimentResult("evolve", cfg)
    result.add_series("energies", mp.FunctionalReport.CSV_COLUMNS, rows)
    sup_rows = [
        (t, cfg.stations[j], fam, vals[j, k])
        for t, vals in zip(stations.times, stations.values)
        for j in range(len(cfg.stations))
        for k, fam in enumerate(ex.FAMILIES)
    ]
    result.add_series("station_sup", ("t", "station_r", "family", "sup_value"), sup_rows)
    result.summary = {"t_final": final.t, "checkpoints": len(written), "n_energy_rows": len(rows)}
    files = result.write(out)
    _emit(args, result.summary_document(), [f"evolved to t = {final.t:.6g}; wrote {len(written)} checkpoints and {len(files)} files in {out}"])
    return EXIT_OK


def _decay_job(flat: dict, scale: int) -> dict:
    cfg = ex.ExperimentConfig.from_flat(flat).refined(scale)
    results = ex.run_decay_suite(cfg)
    return {name: (res.summary, res) for name, res in results.items()}


def _exponents(summaries: dict) -> dict:
    out = {}
    conf = summaries.get("conformal", {})
    if conf.get("localized_fit") is not None:
        out["localized_energy"] = conf["localized_fit"].exponent
    point = summaries.get("pointwise", {})
    for key, fit in point.get("fits", {}).items():
        if fit is not None:
            out[f"pointwise/{key}"] = fit.exponent
    flux = summaries.get("horizon_flux", {})
    if flux.get("fit") is not None:
        out["horizon_flux"] = flux["fit"].exponent
    return out


def cmd_scan_decay(args) -> int:
    cfg = _resolve_config(args)
    scales = [cfg.resolution_scale]
    if not args.no_refinement:
        if cfg.resolution_scale * 2 > 4:
            raise ex.ConfigError("refinement study needs resolution_scale 1 or 2 (or pass --no-refinement)")
        scales.append(cfg.resolution_scale * 2)
    flat = cfg.to_flat()
    jobs = max(1, args.jobs)
    if jobs > 1 and len(scales) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=min(jobs, len(scales))) as pool:
            runs = list(pool.map(_decay_job, [flat] * len(scales), scales))
    else:
        runs = [_decay_job(flat, s) for s in scales]
    out = Path(cfg.output_dir)
    base = runs[0]
    for name, (_, res) in base.items():
        res.write(out)
    base_exp = _exponents({k: v[0] for k, v in base.items()})
    refinement = {}
    if len(runs) > 1:
        fine_exp = _exponents({k: v[0] for k, v in runs[1].items()})
        for key, e in base_exp.items():
            if key in fine_exp and e != 0.0:
                change = abs(fine_exp[key] - e) / abs(e)
                refinement[key] = {"base": e, "refined": fine_exp[key], "relative_change": change, "stable": change <= 0.10}
    summary = ex.ExperimentResult("decay_refinement", cfg)
    summary.summary = {"scales": scales, "exponents": base_exp, "refinement": refinement}
    summary.add_series("exponents", ("quantity", "base", "refined", "relative_change"),
                       [(k, v["base"], v["refined"], v["relative_change"]) for k, v in sorted(refinement.items())])
    summary.write(out)
    lines = [f"{k}: exponent {v:.4g}" + (f" (refined {refinement[k]['refined']:.4g}, change {refinement[k]['relative_change']:.1%})" if k in refinement else "")
             for k, v in sorted(base_exp.items())]
    doc = {"exponents": base_exp, "refinement": refinement, "summaries": {k: v[0] for k, v in base.items()}}
    _emit(args, doc, lines or ["no fits available (too few samples in the fit windows)"])
    return EXIT_OK


def merge_reports(directory) -> dict:
    """Experiment name -> summary document for every result JSON under directory."""
    merged = {}
    for path in sorted(Path(directory).glob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (ValueError, UnicodeDecodeError):
            continue
        if isinstance(doc, dict) and "experiment" in doc and "summary" in doc:
            merged[doc["experiment"]] = {"file": path.name, "config_hash": doc.get("config_hash"), "summary": doc["summary"]}
    return merged


def cmd_report(args) -> int:
    directory = Path(args.directory) if args.directory else Path(_resolve_config(args).output_dir)
    if not directory.is_dir():
        raise _IOFailure(f"no such directory: {directory}")
    merged = merge_reports(directory)
    if not merged:
        print("no experiments found", file=sys.stderr)
        return EXIT_FAIL
    text = json.dumps(merged, sort_keys=True, indent=2) + "\n"
    (directory / "report.json").write_text(text, encoding="utf-8", newline="")
    if args.json:
        sys.stdout.write(text)
    else:
        for name, entry in merged.items():
            keys = ", ".join(sorted(entry["summary"])) if isinstance(entry["summary"], dict) else ""
            print(f"{name} ({entry['file']}): {keys}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="independent runs in parallel")
    common.add_argument("--resolution-scale", type=int, choices=(1, 2, 4), default=None)
    common.add_argument("--allow-nonunit-mass", action="store_true")

    parser = argparse.ArgumentParser(prog="exterior-maxwell", description="Maxwell fields on the Schwarzschild exterior.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("verify-geometry", parents=[common], help="closed-form geometry checks")
    g.add_argument("--mass", type=float, default=1.0)
    g.set_defaults(func=cmd_verify_geometry)

    i = sub.add_parser("verify-identities", parents=[common], help="divergence and null identities on an evolved pulse")
    i.add_argument("--tolerance", type=float, default=1e-3, help="relative residual bound for K, G, H")
    i.add_argument("--tolerance-t", type=float, default=1e-4, help="relative residual bound for d_t")
    i.add_argument("--output-dir")
    i.set_defaults(func=cmd_verify_identities)

    h = sub.add_parser("find-h", parents=[common], help="build and certify the red-shift weight")
    h.add_argument("--output", metavar="PATH", help="CSV path (default: <outputs.dir>/h_profile.csv)")
    h.add_argument("--output-dir")
    h.set_defaults(func=cmd_find_h)

    e = sub.add_parser("evolve", parents=[common], help="evolve the configured data, writing checkpoints and CSVs")
    e.add_argument("--output-dir")
    e.set_defaults(func=cmd_evolve)

    d = sub.add_parser("scan-decay", parents=[common], help="decay measurements with a refinement check")
    d.add_argument("--no-refinement", action="store_true")
    d.add_argument("--output-dir")
    d.set_defaults(func=cmd_scan_decay)

    r = sub.add_parser("report", parents=[common], help="merge JSON summaries in a directory")
    r.add_argument("directory", nargs="?")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ex.ConfigError, mp.InfeasibleProfile) as exc:
        print(f"infeasible configuration: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _IOFailure as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
