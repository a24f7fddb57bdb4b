"""Micro-benchmarks of the numerical kernels: compiled lane vs pure lane.

Both lanes implement the identical algorithm with identical operation order,
so before timing anything the script asserts bit-for-bit agreement on every
workload. Timings are per call, median over repeats. An optional end-to-end
episode timing runs the full simulation once per lane in subprocesses (lane
selection happens at import time via SDDLAB_PURE).

Usage:
    python3 benchmarks/bench_kernels.py [--repeats 5] [--no-episode]
"""

import argparse
import math
import os
import subprocess
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from sddlab._kernels import pykernels  # noqa: E402

try:
    from sddlab._kernels import _ckernels
except ImportError:
    _ckernels = None

from sddlab.core import load_instance  # noqa: E402
from sddlab.traveltime import kernel_model  # noqa: E402


def _walk_workload(rng, n_stops, model):
    """Arguments for one eval_walk call over a random n-stop walk."""
    xs = rng.uniform(-10, 10, size=n_stops)
    ys = rng.uniform(-10, 10, size=n_stops)
    kinds = np.ones(n_stops, dtype=np.int32)
    kinds[-1] = 0  # closing depot stop
    deadlines = np.where(kinds == 1, rng.uniform(60.0, 400.0, size=n_stops), 0.0)
    prices = np.where(kinds == 1, rng.uniform(0.5, 4.0, size=n_stops), 0.0)
    return dict(
        cx=float(rng.uniform(-10, 10)), cy=float(rng.uniform(-10, 10)),
        ct=30.0,
        xs=xs, ys=ys, kinds=kinds, deadlines=deadlines, prices=prices,
        n=n_stops,
        inj_x=float(rng.uniform(-10, 10)), inj_y=float(rng.uniform(-10, 10)),
        inj_deadline=200.0, inj_price=1.5,
        depot_x=0.0, depot_y=0.0,
        service=2.0, c_miss=2.0, shift_end=480.0,
        kind=model.kind, mu=model.mu, var=model.var,
        weights=model.weights, means=model.means, stds=model.stds,
        mc=model.mc,
    )


def _calls(rng):
    """(name, args tuple) workloads mirroring the simulation's hot calls."""
    inst = load_instance(0)
    gauss = kernel_model(inst.speed_model("gaussian"))
    mix = kernel_model(inst.speed_model("mixture"))
    out = []

    for label, model in (("gaussian", gauss), ("mixture", mix)):
        d = rng.uniform(0.3, 6.0, size=6)
        budget = 2.25 * float(d.sum()) * rng.uniform(0.8, 1.2)
        out.append((
            f"ontime_probability[{label}, 6 legs]",
            "ontime_probability",
            (float(budget), d, model.kind, model.mu, model.var,
             model.weights, model.means, model.stds, model.mc),
        ))

    for label, model in (("gaussian", gauss), ("mixture", mix)):
        w = _walk_workload(rng, 10, model)
        out.append((
            f"eval_walk[{label}, 10 stops, injected]",
            "eval_walk",
            (w["cx"], w["cy"], w["ct"], w["xs"], w["ys"], w["kinds"],
             w["deadlines"], w["prices"], w["n"], 4, w["inj_x"], w["inj_y"],
             w["inj_deadline"], w["inj_price"], w["depot_x"], w["depot_y"],
             w["service"], w["c_miss"], w["kind"], w["mu"], w["var"],
             w["weights"], w["means"], w["stds"], w["mc"]),
        ))
        out.append((
            f"best_insertion[{label}, 10 stops]",
            "best_insertion",
            (w["cx"], w["cy"], w["ct"], w["xs"], w["ys"], w["kinds"],
             w["deadlines"], w["prices"], w["n"], 0, w["inj_x"], w["inj_y"],
             w["inj_deadline"], w["inj_price"], w["depot_x"], w["depot_y"],
             w["service"], w["c_miss"], w["shift_end"], w["kind"], w["mu"],
             w["var"], w["weights"], w["means"], w["stds"], w["mc"]),
        ))

    out.append((
        "maximize_quote[3 options]",
        "maximize_quote",
        ([0.9, 0.7, 0.5], [20.0, 20.0, 20.0], [1.0, 0.75, 0.5],
         [0.96, 0.98, 1.0], [0.3, 0.1, 0.05]),
    ))
    return out


def _time_call(fn, args, repeats):
    # calibrate the inner loop to ~50 ms, then take the median of repeats
    n = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(n):
            fn(*args)
        dt = time.perf_counter() - t0
        if dt > 0.05 or n >= 1 << 20:
            break
        n *= 4
    best = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(n):
            fn(*args)
        best.append((time.perf_counter() - t0) / n)
    return sorted(best)[len(best) // 2]


def _episode_seconds(pure, episodes=5):
    env = dict(os.environ, SDDLAB_PURE="1" if pure else "0")
    code = (
        "import time, sys\n"
        f"sys.path.insert(0, {os.path.join(os.path.dirname(__file__), '..', 'src')!r})\n"
        "from sddlab.core import load_instance\n"
        "from sddlab.engine import evaluate\n"
        "from sddlab.pricing import PolicyParams\n"
        "from sddlab.vfa import ValueModel\n"
        "from sddlab import _kernels\n"
        "inst = load_instance(6)\n"
        "params = PolicyParams(alpha=2.0, gamma=1.0)\n"
        "t0 = time.perf_counter()\n"
        f"evaluate(inst, 'opt', params, 'stochastic', 'gaussian', {episodes}, 7,\n"
        "         value_model=ValueModel.zero())\n"
        "print(_kernels.LANE, time.perf_counter() - t0)\n"
    )
    res = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    if res.returncode != 0:
        raise RuntimeError(res.stderr)
    lane, secs = res.stdout.split()
    return lane, float(secs)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--no-episode", action="store_true",
                    help="skip the end-to-end episode timing")
    args = ap.parse_args(argv)

    if _ckernels is None:
        print("compiled lane not importable; nothing to compare")
        return 1

    rng = np.random.default_rng(12345)
    rows = []
    for label, name, call_args in _calls(rng):
        got_c = getattr(_ckernels, name)(*call_args)
        got_p = getattr(pykernels, name)(*call_args)
        if repr(got_c) != repr(got_p):
            print(f"LANE MISMATCH on {label}:\n  compiled {got_c!r}\n  pure {got_p!r}")
            return 1
        t_c = _time_call(getattr(_ckernels, name), call_args, args.repeats)
        t_p = _time_call(getattr(pykernels, name), call_args, args.repeats)
        rows.append((label, t_c, t_p))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'compiled':>10}  {'pure':>10}  {'speedup':>8}")
    for label, t_c, t_p in rows:
        print(
            f"{label:<{width}}  {t_c * 1e6:>8.1f}us  {t_p * 1e6:>8.1f}us  "
            f"{t_p / t_c:>7.1f}x"
        )

    if not args.no_episode:
        lane_c, s_c = _episode_seconds(pure=False)
        lane_p, s_p = _episode_seconds(pure=True)
        assert (lane_c, lane_p) == ("compiled", "pure"), (lane_c, lane_p)
        print(
            f"\n5 evaluation episodes (instance 6, optimizing policy): "
            f"compiled {s_c:.2f}s, pure {s_p:.2f}s, speedup {s_p / s_c:.1f}x"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
