"""Scalar special functions, SNR conversions and reproducible random streams."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def db_to_linear(db):
    out = np.power(10.0, np.asarray(db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def linear_to_db(snr):
    out = 10.0 * np.log10(np.asarray(snr, dtype=float))
    return float(out) if out.ndim == 0 else out


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = P(Z > x) for a standard normal Z."""
    if not math.isfinite(x):
        raise DomainError(f"q_function needs a finite argument, got {x!r}")
    return 0.5 * math.erfc(x / _SQRT2)


def log_q_function(x: float) -> float:
    """log Q(x), accurate far into the upper tail."""
    if not math.isfinite(x):
        raise DomainError(f"log_q_function needs a finite argument, got {x!r}")
    return float(special.log_ndtr(-x))


def q_array(x):
    """Vectorised Q for arrays; no domain checks (hot paths)."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / _SQRT2)


def q_inverse(p: float) -> float:
    """Inverse of :func:`q_function` on (0, 1).

    Newton iterations on log Q inside a shrinking bracket; a step that leaves
    the bracket is replaced by bisection.
    """
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise DomainError(f"q_inverse needs 0 < p < 1, got {p!r}")
    if p > 0.5:
        # 1 - p is exact here (Sterbenz), so the symmetry costs no accuracy.
        return -q_inverse(1.0 - p)
    if p == 0.5:
        return 0.0

    target = math.log(p)
    lo, hi = 0.0, 40.0  # Q(40) < 1e-300 < p
    # Asymptotic tail start; clamped into the bracket.
    x = math.sqrt(max(-2.0 * target - math.log(-2.0 * target * 2.0 * math.pi), 0.0))
    x = min(max(x, 1e-3), hi)
    for _ in range(200):
        logq = log_q_function(x)
        resid = logq - target
        if abs(resid) <= 1e-14:
            break
        if resid > 0.0:  # Q(x) too large -> root lies to the right
            lo = x
        else:
            hi = x
        # d/dx log Q(x) = -phi(x) / Q(x)
        slope = -math.exp(-0.5 * x * x - logq) / _SQRT2PI
        step = resid / slope
        nxt = x - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 1e-15 * max(1.0, abs(x)):
            x = nxt
            break
        x = nxt
    return x


def q_inverse_array(p):
    """Vectorised Q^-1 for arrays in (0, 1); no domain checks (hot paths)."""
    return -special.ndtri(np.asarray(p, dtype=float))


@dataclass
class RngStream:
    """Reproducible random stream keyed by ``(master_seed, stream_id)``.

    Backed by a counter-based Philox generator. Sub-streams (e.g. one per
    Monte Carlo block) are derived with :meth:`substream` and are
    independent of the order or thread on which they are consumed. A single
    instance is not safe to share between threads.
    """

    master_seed: int
    stream_id: int = 0
    path: tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for v in (self.master_seed, self.stream_id, *self.path):
            if not 0 <= int(v) < 2**64:
                raise DomainError("seeds and stream ids must be 64-bit unsigned integers")
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=(int(self.stream_id), *map(int, self.path)),
        )
        self.generator = np.random.Generator(np.random.Philox(seq))

    def substream(self, *ids: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id, self.path + tuple(ids))

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def standard_exponential(self, size=None):
        return self.generator.standard_exponential(size)

    def bits(self, size=None):
        return self.generator.integers(0, 2, size=size, dtype=np.uint8)


def sample_cn(variance: float, rng: RngStream, size=None):
    """Circularly symmetric complex Gaussian CN(0, variance).

    Real and imaginary parts are independent with variance ``variance / 2``.
    Returns a Python complex when ``size`` is None, otherwise an array.
    """
    if not variance > 0:
        raise DomainError(f"variance must be positive, got {variance!r}")
    scale = math.sqrt(variance / 2.0)
    if size is None:
        re, im = rng.standard_normal(2)
        return complex(scale * re, scale * im)
    g = rng.standard_normal((2,) + tuple(np.atleast_1d(size)))
    return scale * (g[0] + 1j * g[1])


def sample_exp_snr(mean: float, rng: RngStream, size=None):
    """Exponential SNR with the given mean (|h|^2 scaled, h Rayleigh)."""
    if not mean > 0:
        raise DomainError(f"mean SNR must be positive, got {mean!r}")
    out = rng.generator.exponential(mean, size)
    return float(out) if size is None else out
