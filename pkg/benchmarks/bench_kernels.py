"""Throughput of the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--rounds 200000] [--repeat 3]

Both backends consume identical pre-drawn inputs; the script also checks
that their error counts agree.
"""

import argparse
import math
import time

import numpy as np

from coopber import kernels, netcode
from coopber.netcode import NetworkCode
from coopber.numerics import RngStream


def best_time(fn, repeat):
    out, best = None, math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def canonical_case(n, snr):
    s = RngStream(1)
    bits, e, z = s.bits(n), s.standard_exponential((n, 3)), s.standard_normal((n, 3))
    return lambda mod: mod.canonical_block(bits, e, z, (1.0, 1.0, 1.0), math.sqrt(0.5), snr, 1.0, True)


def netcode_case(n, snr, mask):
    code = NetworkCode.default()
    bits, e, z = netcode.draw_rounds(code, RngStream(2), n)
    book, ev_src, slot_ev = netcode._kernel_args(code)

    def run(mod):
        errors = np.zeros((4, code.k), dtype=np.int64)
        mod.netcode_block(bits, e, z, book, ev_src, slot_ev, code.slot_variances,
                          code.link_variances, math.sqrt(0.5), snr, 1.0, mask, errors)
        return errors.tolist()

    return run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rounds", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        cy = kernels.backend_module("cython")
    except ImportError:
        raise SystemExit("compiled kernels not built; run pip install -e . first")
    py = kernels.backend_module("numpy")
    n = args.rounds
    cases = [
        ("canonical, 20 dB", canonical_case(n, 100.0)),
        ("netcode eq_joint, 20 dB", netcode_case(n, 100.0, 8)),
        ("netcode all decoders, 10 dB", netcode_case(n // 4, 10.0, 15)),
    ]
    print(f"{'kernel':32s} {'numpy [Mrounds/s]':>18s} {'cython [Mrounds/s]':>19s} {'speedup':>8s}")
    for name, run in cases:
        m = n // 4 if "all" in name else n
        t_py, r_py = best_time(lambda: run(py), args.repeat)
        t_cy, r_cy = best_time(lambda: run(cy), args.repeat)
        if r_py != r_cy:
            raise SystemExit(f"{name}: backends disagree ({r_py} vs {r_cy})")
        print(f"{name:32s} {m / t_py / 1e6:18.2f} {m / t_cy / 1e6:19.2f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
