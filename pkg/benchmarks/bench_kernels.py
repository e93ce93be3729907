#!/usr/bin/env python3
"""Benchmark the numba kernel set against the pure-numpy fallback.

Times forward and backward passes of every hot kernel on shapes
representative of classifier/LM training, and checks both backends agree
numerically.

Usage:
    python benchmarks/bench_kernels.py            # full shapes
    python benchmarks/bench_kernels.py --quick    # small shapes, fast
"""

import argparse
import time

import numpy as np

from logtriage.nn import backend


def timeit(fn, repeats):
    fn()  # warm up (and JIT-compile on the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, np.float64) - np.asarray(b, np.float64))))


def build_cases(quick: bool):
    rng = np.random.default_rng(0)
    if quick:
        B, T, Cin, Cout, K = 4, 512, 32, 32, 7
        lB, lT, lD, lH = 8, 64, 32, 64
        V, E = 100, 64
        P = 100_000
    else:
        B, T, Cin, Cout, K = 16, 5000, 128, 128, 7
        lB, lT, lD, lH = 32, 128, 64, 256
        V, E = 100, 64
        P = 632_516

    f32 = lambda *s: rng.standard_normal(s).astype(np.float32)
    x = f32(B, T, Cin)
    w = f32(K, Cin, Cout) * 0.05
    bias = np.zeros(Cout, np.float32)
    dy = f32(B, T, Cout)

    lx = f32(lB, lT, lD)
    lw = f32(lD, 4 * lH) * 0.1
    lu = f32(lH, 4 * lH) * 0.1
    lb = np.zeros(4 * lH, np.float32)
    ldh = f32(lB, lT, lH)

    ids = rng.integers(0, V, size=(B, T)).astype(np.int32)
    edy = f32(B, T, E)

    p = f32(P)
    g = f32(P)
    m = np.zeros(P, np.float32)
    v = np.zeros(P, np.float32)

    def conv_fwd(k):
        return k.conv1d_forward(x, w, bias)

    def conv_bwd(k):
        return k.conv1d_backward(x, w, dy)

    def lstm_fwd(k):
        return k.lstm_forward(lx, lw, lu, lb)

    def lstm_caches(k):
        h, c, gates = k.lstm_forward(lx, lw, lu, lb)
        return h, c, gates

    caches = {}

    def lstm_bwd(k):
        if k.NAME not in caches:
            caches[k.NAME] = lstm_caches(k)
        h, c, gates = caches[k.NAME]
        return k.lstm_backward(lx, lw, lu, h, c, gates, ldh)

    def emb_bwd(k):
        return k.embedding_backward(ids, edy, V)

    def pool_fwd(k):
        return k.maxpool_forward(x)

    def adam(k):
        pp, mm, vv = p.copy(), m.copy(), v.copy()
        k.adam_update(pp, g, mm, vv, 1, 1e-3, 0.9, 0.999, 1e-8, 0.0)
        return pp

    return [
        (f"conv1d fwd ({B}x{T}x{Cin}->{Cout}, K={K})", conv_fwd, 3),
        (f"conv1d bwd ({B}x{T}x{Cin}->{Cout}, K={K})", conv_bwd, 3),
        (f"lstm fwd ({lB}x{lT}x{lD}, H={lH})", lstm_fwd, 3),
        (f"lstm bwd ({lB}x{lT}x{lD}, H={lH})", lstm_bwd, 3),
        (f"embedding bwd ({B}x{T}x{E})", emb_bwd, 5),
        (f"global max pool ({B}x{T}x{Cin})", pool_fwd, 5),
        (f"adam step ({P} params)", adam, 5),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="small shapes")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if not backend.numba_available():
        print("numba is not installed; only the numpy backend is available")
        return

    cases = build_cases(args.quick)
    results = []
    for name, fn, repeats in cases:
        row = {"name": name}
        outs = {}
        for which in ("numpy", "numba"):
            k = backend.set_backend(which)
            row[which] = timeit(lambda: fn(k), max(repeats, args.repeats))
            outs[which] = fn(k)
        row["diff"] = max_diff(outs["numpy"], outs["numba"])
        results.append(row)
    backend.set_backend(backend.default_backend_name())

    width = max(len(r["name"]) for r in results)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'numba':>10}  {'speedup':>8}  {'max|diff|':>10}")
    for r in results:
        speedup = r["numpy"] / r["numba"]
        print(
            f"{r['name']:<{width}}  {r['numpy'] * 1e3:>8.1f}ms  {r['numba'] * 1e3:>8.1f}ms"
            f"  {speedup:>7.2f}x  {r['diff']:>10.2e}"
        )


if __name__ == "__main__":
    main()
