"""Compare the numba and numpy kernel backends.

Micro-benchmarks call both kernel sets directly in one process. The
end-to-end benchmark runs a full simulation in a subprocess per backend,
selected with XFERTUNE_DISABLE_NUMBA, and checks that both reports agree.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--channels 16] [--sizes 200000]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from xfertune import kernels as K

SIM_SNIPPET = r"""
import json, time, sys
from xfertune import kernels
from xfertune.config import load_profile
from xfertune.harness import generate_dataset, preset
from xfertune.schedulers import SchedulerConfig
from xfertune.simulator import simulate_dataset
ds = generate_dataset(preset("mixed"))
prof = load_profile("stampede-comet", 16)
cfg = SchedulerConfig(algorithm="promc", k_chunks=4, max_cc=16)
simulate_dataset(ds, prof, cfg)  # warm-up and JIT
t0 = time.perf_counter()
rep = simulate_dataset(ds, prof, cfg)
dt = time.perf_counter() - t0
print(json.dumps({"backend": kernels.BACKEND, "seconds": dt, "total_time": rep.total_time,
                  "total_bytes": rep.total_bytes}))
"""


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def micro(repeat: int, channels: int, n_sizes: int) -> list[tuple[str, float, float]]:
    rng = np.random.default_rng(0)
    sizes = np.exp(rng.uniform(np.log(1e6), np.log(1e10), n_sizes))
    ladder = np.array([62_500_000.0, 250_000_000.0, 625_000_000.0])
    state = rng.integers(0, 4, channels).astype(np.int64)
    fsz = rng.uniform(1e6, 1e9, channels)
    par = rng.integers(1, 4, channels).astype(np.float64)
    rem = rng.uniform(0, 1e9, channels)
    timer = rng.uniform(0, 1, channels)
    rates = K.channel_rates_np(state, fsz, par, 32e6, 0.04, 1.25e9, 1.5625e9, 4e6)

    # one simulator step is rates + next_event + advance + due; loop it like the engine does
    def step(rates_fn, next_fn, adv_fn, due_fn):
        def run():
            r = rem.copy()
            for _ in range(2000):
                rt = rates_fn(state, fsz, par, 32e6, 0.04, 1.25e9, 1.5625e9, 4e6)
                dt = next_fn(state, r, rt, timer, 0.0)
                adv_fn(state, r, rt, min(dt, 1e-3))
                due_fn(state, r, rt, timer, 0.0, 1e-9)
        return run

    cases = [
        ("bucket_index", lambda: K.bucket_index_nb(sizes, ladder), lambda: K.bucket_index_np(sizes, ladder)),
        ("sim step x2000",
         step(K.channel_rates_nb, K.next_event_dt_nb, K.advance_nb, K.due_channels_nb),
         step(K.channel_rates_np, K.next_event_dt_np, K.advance_np, K.due_channels_np)),
    ]
    out = []
    for name, nb, npf in cases:
        nb()  # compile
        out.append((name, best_of(nb, repeat), best_of(npf, repeat)))
    return out


def end_to_end() -> dict:
    results = {}
    for flag in ("0", "1"):
        env = dict(os.environ, XFERTUNE_DISABLE_NUMBA=flag)
        proc = subprocess.run([sys.executable, "-c", SIM_SNIPPET], env=env, capture_output=True, text=True, check=True)
        r = json.loads(proc.stdout.strip().splitlines()[-1])
        results[r["backend"]] = r
    return results


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--channels", type=int, default=16)
    ap.add_argument("--sizes", type=int, default=200_000)
    ap.add_argument("--skip-e2e", action="store_true")
    args = ap.parse_args(argv)

    if not K.NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare")
        return 1
    print(f"{'kernel':<18}{'numba (ms)':>12}{'numpy (ms)':>12}{'speedup':>10}")
    for name, t_nb, t_np in micro(args.repeat, args.channels, args.sizes):
        print(f"{name:<18}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")
    if not args.skip_e2e:
        res = end_to_end()
        nb, npy = res["numba"], res["numpy"]
        same = nb["total_time"] == npy["total_time"] and nb["total_bytes"] == npy["total_bytes"]
        print(f"\nfull simulation (mixed preset, promc, k=4, maxCC=16)")
        print(f"  numba {nb['seconds']:.3f}s   numpy {npy['seconds']:.3f}s   "
              f"speedup {npy['seconds'] / nb['seconds']:.2f}x   identical reports: {same}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
