"""Compare the compiled and numpy LSTM kernels (forward + backward).

    python3 benchmarks/bench_lstm.py [--repeat N]

Prints one line per shape with the median wall time of each backend and the
speed-up, after checking that both backends produce the same numbers.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from privdetect._kernels import lstm_py

try:
    from privdetect._kernels import lstm_cy
except ImportError:  # extension not built
    lstm_cy = None

# (T, B, H): sequence length, batch, hidden width
SHAPES = [(6, 2, 8), (32, 16, 16), (64, 64, 32), (64, 64, 128)]


def _problem(T, B, H, seed=0):
    rng = np.random.default_rng(seed)
    xproj = rng.normal(size=(T, B, 4 * H))
    w_hh = rng.uniform(-0.3, 0.3, size=(4 * H, H))
    mask = np.ones((T, B))
    lengths = rng.integers(1, T + 1, size=B)
    for b, n in enumerate(lengths):
        mask[n:, b] = 0.0
    dout = rng.normal(size=(T, B, H))
    return xproj, w_hh, mask, dout


def _run(mod, xproj, w_hh, mask, dout):
    out, cache = mod.lstm_forward(xproj, w_hh, mask, False)
    dx, dw = mod.lstm_backward(dout, cache, w_hh, mask, False)
    return out, dx, dw


def _time(mod, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        _run(mod, *args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    args = parser.parse_args(argv)
    if lstm_cy is None:
        print("compiled kernel not built; only the numpy backend is available")
    print(f"{'T x B x H':>14} {'python ms':>10} {'cython ms':>10} {'speed-up':>9} {'max diff':>9}")
    for T, B, H in SHAPES:
        prob = _problem(T, B, H)
        t_py = _time(lstm_py, prob, args.repeat)
        if lstm_cy is None:
            print(f"{T:>4}x{B:>3}x{H:>4} {1e3 * t_py:10.3f} {'-':>10} {'-':>9} {'-':>9}")
            continue
        ref = _run(lstm_py, *prob)
        got = _run(lstm_cy, *prob)
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(ref, got))
        t_cy = _time(lstm_cy, prob, args.repeat)
        print(f"{T:>4}x{B:>3}x{H:>4} {1e3 * t_py:10.3f} {1e3 * t_cy:10.3f} "
              f"{t_py / t_cy:8.1f}x {diff:9.1e}")


if __name__ == "__main__":
    main()
