"""Run the desk-scale experiments and write their CSV/JSON outputs.

    python3 scripts/run_experiments.py --out results [--n-r 2048] [--only conservation morawetz]
"""
import argparse
import json
import time
from concurrent.futures import ProcessPoolExecutor

from exterior_maxwell import experiments as ex
from exterior_maxwell import maxwell as mx

PULSES = (
    mx.InitialDataSpec(mx.Sector.A, 1.0, 0.0, 3.0, 1),
    mx.InitialDataSpec(mx.Sector.B, 1.0, 0.0, 3.0, 1),
)


def configs(n_r):
    base = ex.ExperimentConfig(grid=ex.GridSpec(n_r=n_r, n_theta=12), pulses=PULSES)
    return {
        "conservation": base,
        "morawetz": base,
        "identities": ex.ExperimentConfig(grid=ex.GridSpec(n_r=n_r, n_theta=12), t_final=40.0, schedule_count=9),
        "decay": ex.ExperimentConfig(grid=ex.GridSpec(-300.0, 300.0, n_r, 16), pulses=PULSES, t_final=220.0),
    }


def run_one(name, cfg, out):
    t0 = time.perf_counter()
    if name == "decay":
        results = ex.run_decay_suite(cfg).values()
    else:
        results = [ex.EXPERIMENTS[name](cfg)]
    for res in results:
        res.write(out)
    return name, time.perf_counter() - t0, {r.experiment: ex._jsonable(r.summary) for r in results}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--n-r", type=int, default=2048)
    ap.add_argument("--only", nargs="*", default=None)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    todo = {k: v for k, v in configs(args.n_r).items() if args.only is None or k in args.only}
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            done = list(pool.map(run_one, todo, todo.values(), [args.out] * len(todo)))
    else:
        done = [run_one(k, v, args.out) for k, v in todo.items()]
    for name, secs, summaries in done:
        print(f"{name}: {secs:.1f}s")
        for exp, summ in summaries.items():
            print(json.dumps({exp: summ}, sort_keys=True)[:400])


if __name__ == "__main__":
    main()
