"""Divergence-identity residuals and constraint residuals across three radial resolutions."""
import math
import sys

from exterior_maxwell import experiments as ex
from exterior_maxwell import maxwell as mx
from exterior_maxwell.geometry import BlackHoleParams
from exterior_maxwell.numerics import AngularGrid, Grids, RadialGrid

p = BlackHoleParams()
levels = [int(x) for x in sys.argv[1:]] or [1024, 2048, 4096]

print("divergence identity residuals (t in [0, 40], r* in [-20, 20])")
rows = []
for n in levels:
    cfg = ex.ExperimentConfig(grid=ex.GridSpec(n_r=n, n_theta=12), t_final=40.0, schedule_count=9)
    res = ex.run_identity_suite(cfg).summary["divergence_residuals"]
    rows.append(res)
    print(n, "  ".join(f"{k}={v:.3e}" for k, v in sorted(res.items())))
for k in sorted(rows[0]):
    print(k, "orders", [round(math.log2(a[k] / b[k]), 2) for a, b in zip(rows, rows[1:])])

print("constraint residuals after t = 30 (independent stencil)")
prev = None
for n in [lv // 2 for lv in levels]:
    g = Grids(RadialGrid(-150.0, 150.0, n, p), AngularGrid(12))
    s = (mx.make_initial_data(mx.InitialDataSpec(mx.Sector.A, 1.0, 0.0, 3.0, 1), g, p)
         + mx.make_initial_data(mx.InitialDataSpec(mx.Sector.B, 1.0, 0.0, 3.0, 1), g, p))
    f, _ = mx.evolve(s, g, p, 30.0)
    a, b = mx.constraint_residuals(f, g, "independent")
    extra = "" if prev is None else f"  orders {math.log2(prev[0] / a):.2f} {math.log2(prev[1] / b):.2f}"
    print(n, f"A={a:.3e} B={b:.3e}{extra}")
    prev = (a, b)
