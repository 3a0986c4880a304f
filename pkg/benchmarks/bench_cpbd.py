"""Benchmark the compiled edge-width kernel against the pure-Python twin.

Usage: python3 benchmarks/bench_cpbd.py [--size N] [--repeats R]
"""

import argparse
import time

import cv2
import numpy as np

from therm2vis.quality import cpbd
from therm2vis.quality import _edgewidth_py

try:
    from therm2vis.quality import _edgewidth as compiled
except ImportError:
    compiled = None


def make_image(size, seed=0):
    rng = np.random.default_rng(seed)
    lum = cv2.GaussianBlur(rng.random((size, size)), (0, 0), size / 40)
    lum = (lum - lum.min()) / (lum.max() - lum.min())
    return lum


def edge_inputs(lum):
    g = np.ascontiguousarray(lum, dtype=np.float64) * 255.0
    edges, gx, gy = cpbd.detect_edges(g)
    rows, cols = np.nonzero(edges)
    return g, gx, gy, rows.astype(np.int64), cols.astype(np.int64)


def bench(kernel, inputs, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = kernel(*inputs)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=512)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    inputs = edge_inputs(make_image(args.size))
    py_time, py_result = bench(_edgewidth_py.measure_edges, inputs, args.repeats)
    print(f"image {args.size}x{args.size}, {len(inputs[3])} edge pixels")
    print(f"pure python : {py_time * 1e3:9.3f} ms")
    if compiled is None:
        print("compiled    : unavailable (extension not built)")
        return
    c_time, c_result = bench(compiled.measure_edges, inputs, args.repeats)
    print(f"compiled    : {c_time * 1e3:9.3f} ms")
    print(f"speedup     : {py_time / c_time:9.1f}x")

    # sanity: both kernels must agree exactly
    assert np.array_equal(py_result[0], c_result[0])
    assert np.array_equal(py_result[1], c_result[1])
    print("parity      : identical outputs")


if __name__ == "__main__":
    main()
