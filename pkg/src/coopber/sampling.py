"""Impulse (sampling-property) approximations of average error probabilities.

After the substitution x = t**N with large N, the integrand of an average
error probability over exponential SNRs collapses onto a narrow spike near
t = 1. Replacing the spike by a Dirac delta turns the expectation into one
function evaluation: ``weight / snr**d * exp(-sum(location) / snr)``.

The location is the maximiser of ``log g(x) + (1 - 1/N) * sum(log x)`` (the
spike of the substituted integrand, written in x = t**N coordinates). The
weight is the integral of ``g`` over the positive orthant.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from .numerics import DomainError, q_function
from .oracle import BudgetExceeded, ExpectationProblem, expect

N_DEFAULT = 1000
I0_LOCATION = 1.4157

# Constants of the three-term closed forms, as published.
LOC_RELAY_OK = 1.3049  # direct + correctly relayed branch
LOC_TWO_DIRECT = 1.6394  # two independent direct branches (2 * 0.8197)
LOC_RELAY_ERR = 1.7564 + 1.3737  # direct + erroneously relayed branch
LOC_ONE_DIRECT = 0.7079  # one direct branch, Q(sqrt(2x))


class ConvergenceError(RuntimeError):
    pass


class FamilyKind(enum.Enum):
    Q_SQRT_AX = "Q_SQRT_AX"  # Q(sqrt(a . x))
    MIN_Q = "MIN_Q"  # Q(sqrt(2 min(x, y)))


@dataclass(frozen=True)
class ConstituentFamily:
    kind: FamilyKind = FamilyKind.Q_SQRT_AX
    a: tuple = (1.0,)
    N: int = N_DEFAULT

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        if not self.a or any(not v > 0 for v in self.a):
            raise DomainError("coefficients a must be positive")
        if self.N < 2:
            raise DomainError("N must be at least 2")
        if self.kind is FamilyKind.MIN_Q and len(self.a) != 2:
            raise DomainError("MIN_Q is two-dimensional")

    @property
    def dimension(self) -> int:
        return len(self.a)

    def log_g(self, *x):
        """log of the error-function part, vectorised over numpy arrays."""
        if self.kind is FamilyKind.MIN_Q:
            return special.log_ndtr(-np.sqrt(2.0 * np.minimum(x[0], x[1])))
        s = sum(ai * xi for ai, xi in zip(self.a, x))
        return special.log_ndtr(-np.sqrt(s))


@dataclass(frozen=True)
class ImpulseApprox:
    location: tuple
    weight: float

    def __post_init__(self):
        if not self.weight > 0:
            raise DomainError("impulse weight must be positive")
        if any(not v > 0 for v in self.location):
            raise DomainError("impulse location must be positive")

    def evaluate(self, snr: float) -> float:
        d = len(self.location)
        return self.weight / snr ** d * math.exp(-sum(self.location) / snr)


@dataclass(frozen=True)
class BerClosedForm:
    """sum_i coeff_i * snr**-power_i * exp(-const_i / snr)."""

    terms: tuple
    snr: float | None = None

    def __post_init__(self):
        terms = tuple((float(c), float(e), int(p)) for c, e, p in self.terms)
        for c, _, p in terms:
            if not c > 0:
                raise DomainError("coefficients must be positive")
            if p < 1:
                raise DomainError("snr powers must be at least 1")
        object.__setattr__(self, "terms", terms)

    def __call__(self, snr):
        snr = np.asarray(snr, dtype=float)
        out = sum(c * snr ** (-p) * np.exp(-e / snr) for c, e, p in self.terms)
        return float(out) if out.ndim == 0 else out

    @property
    def value(self) -> float:
        if self.snr is None:
            raise ValueError("no evaluation SNR attached; call the form instead")
        return self(self.snr)

    def at(self, snr: float) -> "BerClosedForm":
        return BerClosedForm(self.terms, snr)

    @property
    def diversity_order(self) -> int:
        return min(p for _, _, p in self.terms)

    @property
    def coding_gain(self) -> float:
        """Sum of the coefficients at the leading (diversity) power."""
        d = self.diversity_order
        return sum(c for c, _, p in self.terms if p == d)


# -- critical point search ---------------------------------------------------

def locate_impulse(log_g: Callable, dim: int, N: int = N_DEFAULT,
                   start: Sequence[float] | None = None, maxiter: int = 200) -> np.ndarray:
    """Spike location (x = t**N coordinates) of the substituted integrand.

    Derivative-free simplex search on s = log x = N log t, with t confined to
    [0.5, 1.5]; converges to 1e-6 in log x.
    """
    lo, hi = N * math.log(0.5), N * math.log(1.5)
    shrink = 1.0 - 1.0 / N

    def neg(s):
        if np.any(s < lo) or np.any(s > hi):
            return np.inf
        val = float(log_g(*np.exp(s))) + shrink * float(np.sum(s))
        return -val if np.isfinite(val) else np.inf

    s0 = np.zeros(dim) if start is None else np.log(np.asarray(start, dtype=float))
    simplex = np.vstack([s0] + [s0 + 0.25 * np.eye(dim)[i] for i in range(dim)])
    res = optimize.minimize(neg, s0, method="Nelder-Mead",
                            options={"maxiter": maxiter, "xatol": 1e-7, "fatol": 1e-12,
                                     "initial_simplex": simplex})
    if not res.success:
        raise ConvergenceError(f"critical point search did not converge: {res.message}")
    return np.exp(res.x)


def critical_point(family: ConstituentFamily) -> tuple:
    """Impulse location of a Q(sqrt(a . x)) integrand, in x = t**N coordinates."""
    if family.kind is not FamilyKind.Q_SQRT_AX:
        raise DomainError("critical_point needs a Q_SQRT_AX family")
    return _critical_point_cached(family.a, family.N)


@lru_cache(maxsize=None)
def _critical_point_cached(a, N):
    fam = ConstituentFamily(FamilyKind.Q_SQRT_AX, a, N)
    return tuple(float(v) for v in locate_impulse(fam.log_g, fam.dimension, N))


def exp_critical_point(N: int, snr: float) -> float:
    """Spike of the exponential density part alone: ((N-1)/N) * snr."""
    if N < 2:
        raise DomainError("N must be at least 2")
    if not snr > 0:
        raise DomainError("snr must be positive")
    return (N - 1) / N * snr


# -- impulse weights ---------------------------------------------------------

def orthant_integral(log_g: Callable, dim: int, rel_tol: float = 1e-9, scale: float = 4.0) -> float:
    """Integral of exp(log_g) over the positive orthant, via the quadrature oracle.

    Written as an expectation over exponentials of mean ``scale`` of
    g * scale**dim * exp(sum x / scale), formed in log space. g must decay
    faster than exp(-x / scale).
    """
    def integrand(*x):
        return np.exp(log_g(*x) + sum(x) / scale) * scale ** dim

    problem = ExpectationProblem(integrand, (scale,) * dim)
    try:
        return expect(problem, rel_tol=rel_tol).value
    except BudgetExceeded as exc:
        # Discontinuous limit functions converge slowly; accept a looser
        # estimate rather than nothing.
        best = exc.best
        if best.abs_error_estimate <= 1e-5 * abs(best.value):
            return best.value
        raise


def impulse_weight(family: ConstituentFamily) -> float:
    """Integral of Q(sqrt(a . x)) over the positive orthant."""
    if family.kind is not FamilyKind.Q_SQRT_AX:
        raise DomainError("impulse_weight needs a Q_SQRT_AX family")
    a = family.a
    if len(a) == 1:
        return 1.0 / (2.0 * a[0])
    if len(a) == 2:
        return 3.0 / (4.0 * a[0] * a[1])
    return orthant_integral(family.log_g, len(a))


def impulse(family: ConstituentFamily) -> ImpulseApprox:
    return ImpulseApprox(critical_point(family), impulse_weight(family))


# -- single-variable and dual-branch approximations --------------------------

def _check_snr(snr):
    if not snr > 0:
        raise DomainError("snr must be positive")


def approx_I0_h(snr: float, location: float = I0_LOCATION) -> float:
    """High-SNR impulse form of E[Q(sqrt(X))] with the spike at ``location``."""
    _check_snr(snr)
    return 1.0 / (2.0 * snr) * math.exp(-location / snr)


def approx_I0_g(snr: float) -> float:
    """Low-SNR form: the density spike sits at the mean, giving Q(sqrt(snr))."""
    _check_snr(snr)
    return q_function(math.sqrt(snr))


def exact_I0(snr: float) -> float:
    """E[Q(sqrt(X))] for exponential X with mean snr."""
    _check_snr(snr)
    return 0.5 * (1.0 - math.sqrt(snr / (snr + 2.0)))


def approx_I0(snr: float) -> float:
    """Piecewise E[Q(sqrt(X))]: Q(sqrt(snr)) below 1/3, impulse form above 2.

    In between neither branch is accurate, so the quadrature oracle is used.
    """
    _check_snr(snr)
    if snr < 1.0 / 3.0:
        return approx_I0_g(snr)
    if snr > 2.0:
        return approx_I0_h(snr)
    fam = ConstituentFamily(a=(1.0,))
    return expect(ExpectationProblem(lambda x: np.exp(fam.log_g(x)), (snr,)), rel_tol=1e-10).value


def approx_I1(a1: float, a2: float, snr: float) -> float:
    """E[Q(sqrt(a1 X + a2 Y))] for iid exponential X, Y with mean snr."""
    _check_snr(snr)
    return impulse(ConstituentFamily(a=(a1, a2))).evaluate(snr)


def approx_I2(snr: float) -> float:
    """E[Q(sqrt(2 min(X, Y)))] through the union bound Q(sqrt 2x) + Q(sqrt 2y)."""
    _check_snr(snr)
    return 2.0 * impulse(ConstituentFamily(a=(2.0,))).evaluate(snr)


def mrc_dual_branch(snr: float) -> float:
    """Closed-form E[Q(sqrt(2X + 2Y))], iid exponential mean snr (two-branch MRC)."""
    _check_snr(snr)
    p = 0.5 * (1.0 - math.sqrt(snr / (1.0 + snr)))
    return p * p * (1.0 + 2.0 * (1.0 - p))


def min_exponential(snr: float) -> float:
    """Closed-form E[Q(sqrt(2 min(X, Y)))]: min of two exponentials has mean snr/2."""
    _check_snr(snr)
    m = snr / 2.0
    return 0.5 * (1.0 - math.sqrt(m / (1.0 + m)))


# -- canonical relay system --------------------------------------------------

CANONICAL_TERMS = (
    (1.0 / 16.0, LOC_RELAY_OK, 2),
    (3.0 / 16.0, LOC_TWO_DIRECT, 2),
    (1.0 / 4.0, LOC_RELAY_ERR, 2),
)

NC_U1_TERMS = (
    (1.0 / 16.0, LOC_RELAY_OK, 2),
    (3.0 / 8.0, LOC_TWO_DIRECT, 2),
    (4.0 / 16.0, 3.1301, 2),
)


def approx_canonical_ber(snr: float | None = None) -> BerClosedForm:
    """Three-term closed form of the canonical relay system BER (unit variances)."""
    if snr is not None:
        _check_snr(snr)
    return BerClosedForm(CANONICAL_TERMS, snr)


def approx_nc_ber_u1(snr: float | None = None) -> BerClosedForm:
    """Closed form of the first source's BER in the default network code."""
    if snr is not None:
        _check_snr(snr)
    return BerClosedForm(NC_U1_TERMS, snr)


# -- mechanised union bound for network-coded sources ------------------------
#
# Every differing slot contributes one exponential variable. Direct slots
# contribute their own SNR x. A relayed slot is split into two asymptotic
# regimes: a perfect relay link (it then behaves as a direct slot on the
# relay-to-destination SNR) or a perfect last hop (the equivalent SNR tends
# to the relay link SNR y and the slot carries the relayed bit either right,
# with probability 1 - Q(sqrt 2y), or wrong, with probability Q(sqrt 2y)).
# The resulting limit function of a (direct, relay_ok, relay_err) signature
# is
#     prod_ok (1 - Q(sqrt 2y)) * prod_err Q(sqrt 2y)
#         * Q(sqrt 2 (sum x + sum y_ok - sum y_err) / sqrt(sum x)).
# Its impulse weight drops the survival factors (1 - Q), which tend to one
# on the spike; the location keeps them.

PUBLISHED_SIGNATURES = {
    (1, 0, 0): (0.25, LOC_ONE_DIRECT),
    (2, 0, 0): (3.0 / 16.0, LOC_TWO_DIRECT),
    (1, 1, 0): (1.0 / 16.0, LOC_RELAY_OK),
    (1, 0, 1): (0.25, LOC_RELAY_ERR),
}


def _signature_log_g(sig, survival=True):
    nd, no, ne = sig

    def log_g(*v):
        v = [np.asarray(t, dtype=float) for t in v]
        x, yo, ye = v[:nd], v[nd:nd + no], v[nd + no:]
        out = 0.0
        for y in yo:
            if survival:
                out = out + special.log_ndtr(np.sqrt(2.0 * y))
        for y in ye:
            out = out + special.log_ndtr(-np.sqrt(2.0 * y))
        num = sum(x) + sum(yo) - sum(ye)
        if nd:
            arg = math.sqrt(2.0) * num / np.sqrt(sum(x))
            out = out + special.log_ndtr(-arg)
        else:
            # zero noise on the combined metric: error iff the mean is negative
            with np.errstate(divide="ignore"):
                out = out + np.where(num < 0, 0.0, np.where(num > 0, -np.inf, math.log(0.5)))
        return out

    return log_g


@lru_cache(maxsize=None)
def signature_impulse(sig: tuple, N: int = N_DEFAULT):
    """(weight, location sum) of a signature, computed from first principles.

    Returns None when the limit function vanishes identically.
    """
    nd, no, ne = sig
    dim = nd + no + ne
    if nd == 0 and ne == 0:
        return None  # correct relayed bits with a noiseless metric never err
    weight = orthant_integral(_signature_log_g(sig, survival=False), dim)
    loc = locate_impulse(_signature_log_g(sig), dim, N)
    return weight, float(np.sum(loc))


def _slot_regimes(relayed: bool):
    """Signature increments of one differing slot."""
    if not relayed:
        return [(1, 0, 0)]
    return [(1, 0, 0), (0, 1, 0), (0, 0, 1)]


def approx_nc_ber_generic(source_index: int, snr: float | None = None, code=None,
                          constants: str = "published", max_order: int = 2) -> BerClosedForm:
    """Union-bound closed form of one source's BER under joint decoding.

    Competitors are codewords that flip the source's bit; those differing
    from the all-zero codeword in more than ``max_order`` slots are dropped.
    ``constants='published'`` uses the published (weight, location) pairs for
    the signatures that appear in the default code; ``'computed'``
    derives every pair numerically.
    """
    from .netcode import NetworkCode

    code = code or NetworkCode.default()
    if not isinstance(source_index, (int, np.integer)) or not 1 <= source_index <= code.k:
        raise DomainError(f"source_index must lie in 1..{code.k}")
    if constants not in ("published", "computed"):
        raise ValueError("constants must be 'published' or 'computed'")
    if snr is not None:
        _check_snr(snr)
    slot_events = code.slot_events()
    acc = {}
    for msg in itertools.product((0, 1), repeat=code.k):
        if msg[source_index - 1] != 1:
            continue
        cw = code.encode(msg)
        diff = [j for j in range(code.n) if cw[j]]
        if not diff or len(diff) > max_order:
            continue
        used = [ev for j in diff for ev in slot_events[j]]
        if any(len(slot_events[j]) > 1 for j in diff) or len(used) != len(set(used)):
            raise DomainError("closed form needs each differing slot relayed over its own single link")
        for combo in itertools.product(*(_slot_regimes(bool(slot_events[j])) for j in diff)):
            sig = tuple(sum(c[i] for c in combo) for i in range(3))
            if constants == "published" and sig in PUBLISHED_SIGNATURES:
                pair = PUBLISHED_SIGNATURES[sig]
            elif constants == "published" and sig == (0, 0, 1):
                pair = PUBLISHED_SIGNATURES[(1, 0, 0)]
            else:
                pair = signature_impulse(sig)
            if pair is None:
                continue
            key = (round(pair[1], 9), len(diff))
            w, _ = acc.get(key, (0.0, pair[1]))
            acc[key] = (w + pair[0], pair[1])
    if not acc:
        raise DomainError("no competitor within the order limit")
    terms = sorted(((w, loc, p) for (_, p), (w, loc) in acc.items()), key=lambda t: (t[2], t[1]))
    return BerClosedForm(tuple(terms), snr)
