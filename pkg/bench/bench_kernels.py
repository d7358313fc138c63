"""Benchmark the hot kernels on the numba path vs the pure-Python fallback.

Run `python3 bench/bench_kernels.py`; it re-executes itself twice with
MCM_NUMBA=1 and MCM_NUMBA=0 and prints a side-by-side table. Results are
byte-identical on both paths (see tests/test_accel.py); only speed differs.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _bench(fn, repeats=3, warmup=1):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_worker(size: int, symbols: int):
    from mcm import codec, synthetic
    from mcm.damask import sample_visible
    from mcm.entropy import FreqModel, range_decode, range_encode
    from mcm.imagecore import PatchGrid, rgb_to_gray
    from mcm.inpaint import harmonic_fill, visibility_mask
    from mcm.latent import decode_coeff_stream, encode_coeff_stream

    rng = np.random.default_rng(0)
    rgb, sem = synthetic.scene(rng, size=size)
    grid = PatchGrid(size, size, 16)
    plane = rgb_to_gray(rgb)
    alpha = np.full(grid.num_patches, 1.0 / grid.num_patches)
    mask = visibility_mask(sample_visible(alpha, 0.75, 0, "stochastic").visible,
                           grid)

    syms = rng.integers(0, 64, symbols)
    stream = range_encode(syms, FreqModel(64))

    q = rng.integers(-30, 30, 8 * 512)
    q[rng.random(q.size) < 0.7] = 0
    layout = np.tile(np.arange(512) % 256, 8)
    coeff_stream = encode_coeff_stream(q, layout)

    enc = codec.encode(rgb, sem, quality=5)

    results = {
        "harmonic_fill": _bench(lambda: harmonic_fill(plane, mask)),
        "range_encode": _bench(lambda: range_encode(syms, FreqModel(64))),
        "range_decode": _bench(lambda: range_decode(stream, FreqModel(64), symbols)),
        "coeff_encode": _bench(lambda: encode_coeff_stream(q, layout)),
        "coeff_decode": _bench(lambda: decode_coeff_stream(coeff_stream, layout)),
        "codec_encode": _bench(lambda: codec.encode(rgb, sem, quality=5)),
        "codec_decode": _bench(lambda: codec.decode(enc)),
    }
    print(json.dumps(results))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--symbols", type=int, default=50_000)
    ap.add_argument("--worker", action="store_true")
    args = ap.parse_args()
    if args.worker:
        run_worker(args.size, args.symbols)
        return

    rows = {}
    for flag, label in (("1", "numba"), ("0", "pure")):
        env = dict(os.environ, MCM_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, __file__, "--worker", "--size", str(args.size),
             "--symbols", str(args.symbols)],
            env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            sys.stderr.write(proc.stderr)
            sys.exit(1)
        rows[label] = json.loads(proc.stdout.strip().splitlines()[-1])

    print(f"{'kernel':<16} {'numba (s)':>12} {'pure (s)':>12} {'speedup':>9}")
    for name in rows["numba"]:
        a, b = rows["numba"][name], rows["pure"][name]
        print(f"{name:<16} {a:>12.5f} {b:>12.5f} {b / a:>8.1f}x")


if __name__ == "__main__":
    main()
