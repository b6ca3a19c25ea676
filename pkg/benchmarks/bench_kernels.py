"""Time the hot kernels on both backends (numba JIT vs pure numpy).

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 7] [--json out.json]

Backend selection reuses the production path: the VARSIG_NUMBA environment
variable is flipped around each timed call, so the numbers reflect exactly
what the library executes.
"""

from __future__ import annotations

import argparse
import json
import os
import time

import numpy as np

import varsig.accel as accel


def _time(fn, repeats: int) -> float:
    """Median wall time in seconds over `repeats` calls (after one warmup)."""
    fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def bench_streak(rng: np.random.Generator):
    nt, nk, nd = 8192, 256, 35
    ts = np.linspace(-3.0, 3.0, nt)
    ia1 = rng.normal(size=nt)
    ia2 = rng.normal(size=nt)
    v = np.abs(rng.normal(size=nk)) + 0.1
    kip = np.abs(rng.normal(size=nk)) + 0.5
    w = rng.random(nt)
    es = rng.normal(size=(nt, nd)) + 1j * rng.normal(size=(nt, nd))

    def run():
        amp = np.zeros((nk, nd), dtype=np.complex128)
        accel.streak_accumulate(ts, ia1, ia2, v, kip, w, es, amp)

    return f"streak_accumulate {nk}x{nt}x{nd}", run


def bench_tv(rng: np.random.Generator):
    x = rng.normal(size=(256, 256))

    def run():
        accel.tv_prox_2d(x, 0.3, n_iters=10)

    return "tv_prox_2d 256x256 (10 inner)", run


def bench_video_compress(rng: np.random.Generator):
    frames = rng.random((256, 256, 3, 8))
    masks = (rng.random((256, 256, 8)) > 0.5).astype(np.float64)

    def run():
        accel.video_compress(frames, masks)

    return "video_compress 256x256x3x8", run


def bench_video_adjoint(rng: np.random.Generator):
    g = rng.random((256, 256, 3))
    masks = (rng.random((256, 256, 8)) > 0.5).astype(np.float64)

    def run():
        accel.video_adjoint(g, masks)

    return "video_adjoint 256x256x3x8", run


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--json", help="also write results as JSON")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = [
        bench_streak(rng),
        bench_tv(rng),
        bench_video_compress(rng),
        bench_video_adjoint(rng),
    ]

    rows = []
    for name, run in cases:
        times = {}
        for flag, backend in (("0", "numpy"), ("1", "numba")):
            os.environ["VARSIG_NUMBA"] = flag
            times[backend] = _time(run, args.repeats)
        os.environ.pop("VARSIG_NUMBA", None)
        rows.append({
            "kernel": name,
            "numpy_ms": times["numpy"] * 1e3,
            "numba_ms": times["numba"] * 1e3,
            "speedup": times["numpy"] / times["numba"],
        })

    width = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy [ms]':>10}  {'numba [ms]':>10}  {'speedup':>7}")
    for r in rows:
        print(f"{r['kernel']:<{width}}  {r['numpy_ms']:>10.3f}  "
              f"{r['numba_ms']:>10.3f}  {r['speedup']:>6.2f}x")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
        print(f"wrote {args.json}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
