"""Compiled kernels vs the numpy fallback, per kernel and end to end.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--txs 1500]

The end-to-end figure runs the same scenario in two subprocesses, one with
HYBRIDBFT_PURE=1, and checks that both produce the same trace digest.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from hybridbft import _kernels_py

try:
    from hybridbft import _ckernels
except ImportError:
    _ckernels = None

E2E = """
import json, time
from hybridbft import kernels
from hybridbft.sim.config import from_dict
from hybridbft.sim.scenario import run_scenario
cfg = from_dict({"system": {"n": 16}, "workload": {"total_txs": %d}})
t0 = time.perf_counter()
r = run_scenario(cfg, seed=1)
print(json.dumps({"backend": kernels.BACKEND, "wall": time.perf_counter() - t0, "digest": r.trace_digest}))
"""


def _cases(rng):
    n = 16
    send = rng.integers(0, 10**9, n).astype(np.int64)
    send[3] = _kernels_py.NEVER
    lat = rng.integers(10**6, 10**8, (n, n)).astype(np.int64)
    points = rng.integers(0, 50, (256, 16)).astype(np.int64)
    amounts = rng.integers(1, 10, 256).astype(np.int64)
    state = np.full(16, 25, dtype=np.int64)
    return {
        "kth_arrivals": lambda m: m.kth_arrivals(send, lat, 11),
        "covered_sum": lambda m: m.covered_sum(points, amounts, 256, state),
        "mix64": lambda m: m.mix64(0x1234_5678_9ABC_DEF0, 987654321),
    }


def micro(repeat: int, number: int = 2000) -> None:
    cases = _cases(np.random.default_rng(7))
    print(f"{'kernel':<14}{'python us':>12}{'cython us':>12}{'speedup':>10}")
    for name, call in cases.items():
        py = min(timeit.repeat(lambda: call(_kernels_py), number=number, repeat=repeat)) / number * 1e6
        if _ckernels is None:
            print(f"{name:<14}{py:>12.2f}{'n/a':>12}{'':>10}")
            continue
        assert np.array_equal(np.asarray(call(_ckernels)), np.asarray(call(_kernels_py))), name
        cy = min(timeit.repeat(lambda: call(_ckernels), number=number, repeat=repeat)) / number * 1e6
        print(f"{name:<14}{py:>12.2f}{cy:>12.2f}{py / cy:>9.1f}x")


def end_to_end(txs: int) -> None:
    import json

    runs = []
    for pure in (False, True):
        env = dict(os.environ)
        env.pop("HYBRIDBFT_PURE", None)
        if pure:
            env["HYBRIDBFT_PURE"] = "1"
        out = subprocess.run([sys.executable, "-c", E2E % txs], env=env, check=True,
                             capture_output=True, text=True).stdout
        runs.append(json.loads(out.strip().splitlines()[-1]))
    for r in runs:
        print(f"end-to-end n=16 txs={txs} backend={r['backend']:<7} wall={r['wall']:.2f}s")
    same = runs[0]["digest"] == runs[1]["digest"]
    print(f"trace digests {'match' if same else 'DIFFER'}")


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--txs", type=int, default=1500)
    args = ap.parse_args()
    micro(args.repeat)
    end_to_end(args.txs)


if __name__ == "__main__":
    main()
