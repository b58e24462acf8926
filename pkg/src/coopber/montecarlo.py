"""Block-wise Monte Carlo driver with deterministic stopping.

Trials are split into fixed-size blocks; block ``i`` of a point always draws
from sub-stream ``i`` of that point's stream. Blocks may be evaluated on
several threads, but results are reduced in block order and the stopping
rule is checked after every block, so the outcome never depends on the
thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .numerics import RngStream


@dataclass(frozen=True)
class StoppingRule:
    min_errors: int = 200
    max_trials: int = 100_000_000

    def __post_init__(self):
        if self.min_errors < 1:
            raise ValueError("min_errors must be at least 1")
        if self.max_trials < 1:
            raise ValueError("max_trials must be at least 1")


@dataclass(frozen=True)
class BerPoint:
    snr_db: float
    errors: int
    trials: int
    ber: float
    half_width_95: float
    budget_exhausted: bool = False

    @classmethod
    def from_counts(cls, snr_db, errors, trials, min_errors=None):
        ber = errors / trials
        hw = 1.959963984540054 * math.sqrt(ber * (1.0 - ber) / trials)
        short = min_errors is not None and errors < min_errors
        return cls(float(snr_db), int(errors), int(trials), ber, hw, short)

    @property
    def std_error(self) -> float:
        return math.sqrt(self.ber * (1.0 - self.ber) / self.trials)


@dataclass(frozen=True)
class BerCurve:
    points: list

    @property
    def snr_db(self):
        return np.array([p.snr_db for p in self.points])

    @property
    def ber(self):
        return np.array([p.ber for p in self.points])

    def slope(self, lo_db: float, hi_db: float) -> float:
        """Least-squares slope of log10(BER) against log10(SNR) on [lo_db, hi_db]."""
        sel = [p for p in self.points if lo_db <= p.snr_db <= hi_db and p.errors > 0]
        x = np.array([p.snr_db / 10.0 for p in sel])
        y = np.log10([p.ber for p in sel])
        return float(np.polyfit(x, y, 1)[0])


def run_blocks(block: Callable[[RngStream, int], np.ndarray], stopping: StoppingRule,
               stream: RngStream, threads: int = 1, block_size: int = 1 << 16,
               watch: Sequence[int] | None = None):
    """Accumulate error counters block by block until the stopping rule fires.

    ``block(substream, n)`` returns a 1-D array of error counts for ``n``
    trials. The run stops once every watched counter has reached
    ``min_errors`` or ``max_trials`` trials are spent. Returns
    ``(errors, trials)``.
    """
    threads = max(1, int(threads))
    errors = None
    trials = 0
    next_block = 0

    def sizes(start_trials, start_block, count):
        out, t = [], start_trials
        for i in range(count):
            n = min(block_size, stopping.max_trials - t)
            if n <= 0:
                break
            out.append((start_block + i, n))
            t += n
        return out

    def done(errs, t):
        if t >= stopping.max_trials:
            return True
        if errs is None:
            return False
        w = errs if watch is None else errs[list(watch)]
        return bool(np.min(w) >= stopping.min_errors)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while not done(errors, trials):
            jobs = sizes(trials, next_block, threads)
            if pool is None:
                results = [block(stream.substream(i), n) for i, n in jobs]
            else:
                futs = [pool.submit(block, stream.substream(i), n) for i, n in jobs]
                results = [f.result() for f in futs]
            for (i, n), res in zip(jobs, results):
                errors = np.asarray(res, dtype=np.int64) if errors is None else errors + res
                trials += n
                next_block = i + 1
                if done(errors, trials):
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    return errors, trials
