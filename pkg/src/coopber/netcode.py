"""Network-coded cooperation: k sources share n slots toward one destination.

Slot j carries the XOR of the bits selected by column j of a binary
generator matrix and is sent by node v_j. A node that forwards someone
else's bit first hard-detects it (DMF) from that source's direct slot;
such a detection is a *link event* and may be wrong. The destination
knows every channel and the error probability of every link event.

Four destination decoders are provided: optimal MAP (individual per bit and
joint over the whole message), which average over link-error patterns, and
their equivalent-channel counterparts, which replace each relayed slot by a
fictitious BPSK link of equivalent SNR.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .chansim import equivalent_snr
from .montecarlo import BerCurve, BerPoint, StoppingRule, run_blocks
from .numerics import DomainError, RngStream, db_to_linear, q_function, sample_cn

DECODERS = ("opt_ind", "opt_joint", "eq_ind", "eq_joint")
_MASK_BIT = {name: 1 << i for i, name in enumerate(DECODERS)}

DEFAULT_G = ((1, 0, 1, 1), (0, 1, 0, 1), (0, 0, 1, 0))
DEFAULT_V = (1, 2, 3, 2)


@dataclass(frozen=True)
class LinkEvent:
    """Node ``listener`` detects source ``source``'s bit from ``slot`` (0-based slot)."""

    listener: int
    source: int
    slot: int


class NetworkCode:
    """Generator matrix G (k x n, binary) and 1-based transmitter schedule v."""

    def __init__(self, G, v, slot_variances=None, link_variances=None):
        G = np.array(G, dtype=np.uint8)
        if G.ndim != 2 or G.size == 0:
            raise DomainError("G must be a non-empty 2-D matrix")
        if not np.isin(G, (0, 1)).all():
            raise DomainError("G must be binary")
        k, n = G.shape
        v = tuple(int(t) for t in v)
        if len(v) != n:
            raise DomainError(f"v has {len(v)} entries but G has {n} columns")
        for j, t in enumerate(v):
            if not 1 <= t <= k:
                raise DomainError(f"v[{j + 1}] = {t} is not a source node in 1..{k}")
            if not G[:, j].any():
                raise DomainError(f"empty slot: column {j + 1} of G is all zero")
            if G[t - 1, j] != 1:
                raise DomainError(f"slot {j + 1}: transmitter {t} does not include its own bit")
        self.G = G
        self.G.setflags(write=False)
        self.v = v
        self.events = self._find_events()
        self.slot_variances = self._variances(slot_variances, n, "slot")
        self.link_variances = self._variances(link_variances, len(self.events), "link")

    @staticmethod
    def _variances(val, size, what):
        out = np.ones(size) if val is None else np.array(val, dtype=float).reshape(-1)
        if out.shape != (size,) or not (out > 0).all():
            raise DomainError(f"{what} variances must be {size} positive numbers")
        return out

    @classmethod
    def default(cls) -> "NetworkCode":
        return cls(DEFAULT_G, DEFAULT_V)

    @property
    def k(self) -> int:
        return self.G.shape[0]

    @property
    def n(self) -> int:
        return self.G.shape[1]

    def direct_slot(self, source: int):
        """0-based slot in which ``source`` (0-based) sends its bit uncoded, or None."""
        for j in range(self.n):
            col = self.G[:, j]
            if self.v[j] == source + 1 and col[source] == 1 and col.sum() == 1:
                return j
        return None

    def _find_events(self):
        events = []
        for j in range(self.n):
            t = self.v[j] - 1
            for i in np.flatnonzero(self.G[:, j]):
                if i == t or any(e.listener == t and e.source == i for e in events):
                    continue
                slot = self.direct_slot(int(i))
                if slot is None:
                    raise DomainError(
                        f"slot {j + 1}: node {t + 1} needs u{i + 1} but no slot carries it uncoded")
                events.append(LinkEvent(t, int(i), slot))
        return tuple(events)

    def slot_events(self):
        """For each slot, indices of the link events whose errors it inherits."""
        out = []
        for j in range(self.n):
            t = self.v[j] - 1
            out.append(tuple(ei for ei, e in enumerate(self.events)
                             if e.listener == t and self.G[e.source, j]))
        return tuple(out)

    def relayed(self):
        return tuple(bool(s) for s in self.slot_events())

    def encode(self, u):
        u = np.asarray(u, dtype=np.int64)
        return (u @ self.G.astype(np.int64)) % 2

    def codebook(self):
        """All 2**k codewords, message index MSB = u1."""
        msgs = np.array(list(itertools.product((0, 1), repeat=self.k)), dtype=np.int64)
        return (msgs @ self.G.astype(np.int64) % 2).astype(np.uint8)

    def to_text(self) -> str:
        rows = "\n".join("    " + " ".join(str(b) for b in row) for row in self.G)
        return f"G = [\n{rows}\n]\nv = {', '.join(map(str, self.v))}\n"

    def __eq__(self, other):
        return (isinstance(other, NetworkCode) and np.array_equal(self.G, other.G)
                and self.v == other.v
                and np.array_equal(self.slot_variances, other.slot_variances)
                and np.array_equal(self.link_variances, other.link_variances))

    def __repr__(self):
        return f"NetworkCode(G={self.G.tolist()}, v={list(self.v)})"


@dataclass
class RoundState:
    u: np.ndarray  # source bits
    h: np.ndarray  # slot-to-destination gains
    h_link: np.ndarray  # link-event gains
    link_errors: np.ndarray  # 1 where a link event detected the wrong bit
    e: np.ndarray  # per-slot error bit inherited from link events
    p_link: np.ndarray  # link-event error probabilities
    p_e: np.ndarray  # per-slot error probabilities (0 for direct slots)
    energy: float
    n0: float = 1.0

    @property
    def gamma(self):
        return self.energy * np.abs(self.h) ** 2 / self.n0


def _slot_error_prob(code, p_link):
    out = np.zeros(code.n)
    for j, evs in enumerate(code.slot_events()):
        prod = 1.0
        for ev in evs:
            prod *= 1.0 - 2.0 * p_link[ev]
        out[j] = 0.5 * (1.0 - prod) if evs else 0.0
    return out


def simulate_slots(code: NetworkCode, snr: float, rng: RngStream, u=None, n0: float = 1.0):
    """One round: draw data, fading and noise; return (RoundState, y)."""
    if not snr > 0:
        raise DomainError("snr must be positive")
    energy = snr * n0
    se = math.sqrt(energy)
    u = np.array(rng.bits(code.k) if u is None else u, dtype=np.uint8)
    h_link = np.array([sample_cn(var, rng) for var in code.link_variances], dtype=complex)
    link_err = np.zeros(len(code.events), dtype=np.uint8)
    for ei, ev in enumerate(code.events):
        x = se * (1 - 2 * int(u[ev.source]))
        y = h_link[ei] * x + sample_cn(n0, rng)
        det = 1 if (h_link[ei].conjugate() * y).real < 0.0 else 0
        link_err[ei] = det ^ u[ev.source]
    p_link = np.array([q_function(math.sqrt(2.0 * energy * abs(h) ** 2 / n0)) for h in h_link])
    e = np.zeros(code.n, dtype=np.uint8)
    for j, evs in enumerate(code.slot_events()):
        for ev in evs:
            e[j] ^= link_err[ev]
    c = code.encode(u).astype(np.uint8) ^ e
    h = np.array([sample_cn(var, rng) for var in code.slot_variances], dtype=complex)
    y = h * se * (1 - 2 * c.astype(float)) + np.array([sample_cn(n0, rng) for _ in range(code.n)])
    state = RoundState(u, h, h_link, link_err, e, p_link, _slot_error_prob(code, p_link), energy, n0)
    return state, y


# -- optimal MAP decoders ----------------------------------------------------

def _log_lik(y, h, c, energy, n0):
    """log p(y | transmitted bits c), dropping terms common to every c."""
    x = math.sqrt(energy) * (1.0 - 2.0 * np.asarray(c, dtype=float))
    return float(-np.sum(np.abs(y - h * x) ** 2) / n0)


def _optimal_metrics(code, y, state):
    """log sum_e p(y | u, e) P(e) for every message u (index MSB = u1)."""
    slot_ev = code.slot_events()
    nev = len(code.events)
    book = code.codebook()
    out = np.full(book.shape[0], -np.inf)
    for pattern in itertools.product((0, 1), repeat=nev):
        probs = [state.p_link[i] if b else 1.0 - state.p_link[i] for i, b in enumerate(pattern)]
        if min(probs, default=1.0) <= 0.0:
            continue
        lp = sum(math.log(p) for p in probs)
        flips = np.array([sum(pattern[ev] for ev in slot_ev[j]) % 2 for j in range(code.n)],
                         dtype=np.uint8)
        for m, cw in enumerate(book):
            out[m] = np.logaddexp(out[m], lp + _log_lik(y, state.h, cw ^ flips, state.energy, state.n0))
    return out


def _msg_bits(k):
    return np.array(list(itertools.product((0, 1), repeat=k)), dtype=np.uint8)


def _per_bit(metrics, k):
    msgs = _msg_bits(k)
    out = np.zeros(k, dtype=np.uint8)
    for i in range(k):
        a1 = np.logaddexp.reduce(metrics[msgs[:, i] == 1])
        a0 = np.logaddexp.reduce(metrics[msgs[:, i] == 0])
        out[i] = 1 if a1 > a0 else 0
    return out


def decode_optimal_individual(code: NetworkCode, y, state: RoundState):
    """Per-bit MAP decisions with exact Gaussian likelihoods; ties -> 0."""
    return _per_bit(_optimal_metrics(code, y, state), code.k)


def decode_optimal_joint(code: NetworkCode, y, state: RoundState):
    """Message-level MAP; ties -> lexicographically smallest message."""
    m = _optimal_metrics(code, y, state)
    return _msg_bits(code.k)[int(np.argmax(m))]


# -- equivalent-channel decoders ---------------------------------------------

@dataclass(frozen=True)
class EquivalentObservation:
    z: complex
    gamma_eq: float


def build_equivalent_observations(code: NetworkCode, y, state: RoundState):
    """Weighted observations z_j = (gamma_eq_j / gamma_j) (sqrt(E)/N0) h_j^* y_j.

    Normalised so that, given the slot is received error-free, z_j is
    CN(+-gamma_eq_j, gamma_eq_j**2 / gamma_j); direct slots have
    gamma_eq_j = gamma_j.
    """
    scale = math.sqrt(state.energy) / state.n0
    out = []
    for j, g in enumerate(state.gamma):
        if g <= 0.0:
            out.append(EquivalentObservation(0j, 0.0))
            continue
        geq = min(equivalent_snr(state.p_e[j], g), g) if code.relayed()[j] else g
        out.append(EquivalentObservation(complex(geq / g * scale * state.h[j].conjugate() * y[j]), geq))
    return out


def _equivalent_metrics(code, obs):
    """Detector log-likelihoods under z_j ~ CN(s gamma_eq_j, gamma_eq_j), up to constants."""
    sign = 1.0 - 2.0 * code.codebook().astype(float)
    rz = np.array([o.z.real for o in obs])
    return sign @ (2.0 * rz)


def decode_equiv_individual(code: NetworkCode, obs):
    return _per_bit(_equivalent_metrics(code, obs), code.k)


def decode_equiv_joint(code: NetworkCode, obs):
    return _msg_bits(code.k)[int(np.argmax(_equivalent_metrics(code, obs)))]


# -- instantaneous union bounds ----------------------------------------------

def _pairwise_q(num, den):
    if den <= 0.0:
        return 0.0 if num > 0 else (1.0 if num < 0 else 0.5)
    return q_function(math.sqrt(2.0) * num / math.sqrt(den))


def instantaneous_nc_ber_u1(g1: float, g2: float, g4: float, p_e4: float, g_eq4: float | None = None):
    """Union-bound BER of u1 under joint equivalent decoding of the default code."""
    if g_eq4 is None:
        g_eq4 = equivalent_snr(p_e4, g4)
    den = g1 + (g_eq4 * g_eq4 / g4 if g4 > 0 else 0.0)
    return ((1.0 - p_e4) * _pairwise_q(g1 + g_eq4, den) + p_e4 * _pairwise_q(g1 - g_eq4, den)
            + q_function(math.sqrt(2.0 * (g1 + g2))))


def instantaneous_union_bound(code: NetworkCode, source: int, gamma, p_e, max_order: int | None = None):
    """Union bound on P(source bit wrong) for the joint equivalent decoder.

    Sums, over competing messages that flip ``source`` (1-based), the exact
    pairwise error probability against the all-zero message given the slot
    SNRs and relay error probabilities. Competitors differing in more than
    ``max_order`` slots are skipped.
    """
    gamma = np.asarray(gamma, dtype=float)
    p_e = np.asarray(p_e, dtype=float)
    relayed = code.relayed()
    geq = np.array([equivalent_snr(p_e[j], g) if relayed[j] else g for j, g in enumerate(gamma)])
    total = 0.0
    for msg in itertools.product((0, 1), repeat=code.k):
        if msg[source - 1] != 1:
            continue
        diff = np.flatnonzero(code.encode(msg))
        if max_order is not None and len(diff) > max_order:
            continue
        rel = [j for j in diff if relayed[j]]
        den = sum(geq[j] ** 2 / gamma[j] for j in diff if gamma[j] > 0)
        for pattern in itertools.product((0, 1), repeat=len(rel)):
            prob, num = 1.0, 0.0
            flip = dict(zip(rel, pattern))
            for j in diff:
                if flip.get(j, 0):
                    prob *= p_e[j]
                    num -= geq[j]
                else:
                    prob *= 1.0 - p_e[j] if j in flip else 1.0
                    num += geq[j]
            total += prob * _pairwise_q(num, den)
    return total


# -- Monte Carlo -------------------------------------------------------------

@dataclass(frozen=True)
class NetworkResult:
    """BER curves keyed by (decoder, 1-based source)."""

    curves: dict

    def curve(self, decoder: str, source: int) -> BerCurve:
        return self.curves[(decoder, source)]


def _kernel_args(code):
    slot_ev = np.zeros((code.n, max(1, len(code.events))), dtype=np.uint8)
    for j, evs in enumerate(code.slot_events()):
        for ev in evs:
            slot_ev[j, ev] = 1
    slot_ev = np.ascontiguousarray(slot_ev[:, :len(code.events)])
    ev_src = np.array([e.source for e in code.events], dtype=np.int64)
    return np.ascontiguousarray(code.codebook()), ev_src, slot_ev


def draw_rounds(code: NetworkCode, stream: RngStream, n: int, all_zero: bool = False):
    """Bits, unit exponentials and standard normals for ``n`` rounds."""
    m = code.n + len(code.events)
    bits = np.zeros((n, code.k), dtype=np.uint8) if all_zero else stream.bits((n, code.k))
    return bits, stream.standard_exponential((n, m)), stream.standard_normal((n, m))


def unpack_round(code: NetworkCode, bits, e, z, snr: float, n0: float = 1.0):
    """RoundState and y for one round of kernel draws (real, zero-phase gains).

    Lets the scalar reference decoders consume exactly what the kernel saw.
    """
    energy = snr * n0
    se = math.sqrt(energy)
    noise_sd = math.sqrt(n0 / 2.0)
    u = np.asarray(bits, dtype=np.uint8)
    ns = code.n
    h_link = np.sqrt(code.link_variances * e[ns:]).astype(complex)
    link_err = np.zeros(len(code.events), dtype=np.uint8)
    for ei, ev in enumerate(code.events):
        x = se * (1 - 2 * int(u[ev.source]))
        det = 1 if h_link[ei].real * (h_link[ei].real * x + noise_sd * z[ns + ei]) < 0.0 else 0
        link_err[ei] = det ^ u[ev.source]
    p_link = np.array([q_function(math.sqrt(2.0 * energy * abs(h) ** 2 / n0)) for h in h_link])
    e_slot = np.zeros(ns, dtype=np.uint8)
    for j, evs in enumerate(code.slot_events()):
        for ev in evs:
            e_slot[j] ^= link_err[ev]
    c = code.encode(u).astype(np.uint8) ^ e_slot
    h = np.sqrt(code.slot_variances * e[:ns]).astype(complex)
    y = h * se * (1 - 2 * c.astype(float)) + noise_sd * z[:ns]
    state = RoundState(u, h, h_link, link_err, e_slot, p_link, _slot_error_prob(code, p_link), energy, n0)
    return state, y


def simulate_network(code: NetworkCode | None, grid_db, stopping: StoppingRule | None = None,
                     rng: RngStream | None = None, *, decoders=DECODERS, watch=None,
                     all_zero: bool = False, threads: int = 1, block_size: int = 1 << 15,
                     n0: float = 1.0) -> NetworkResult:
    """Monte Carlo BER of every requested (decoder, source) pair over an SNR grid.

    The stopping rule is applied to the ``watch`` pairs (default: all of
    them); every requested pair is counted on the same rounds.
    """
    code = code or NetworkCode.default()
    grid_db = list(grid_db)
    if not grid_db:
        raise ValueError("SNR grid is empty")
    decoders = tuple(decoders)
    for d in decoders:
        if d not in _MASK_BIT:
            raise ValueError(f"unknown decoder {d!r}; choose from {DECODERS}")
    stopping = stopping or StoppingRule()
    rng = rng or RngStream(0)
    mask = sum(_MASK_BIT[d] for d in decoders)
    watch = [(d, s) for d in decoders for s in range(1, code.k + 1)] if watch is None else list(watch)
    flat_watch = [DECODERS.index(d) * code.k + (s - 1) for d, s in watch]
    codebook, ev_src, slot_ev = _kernel_args(code)
    noise_sd = math.sqrt(n0 / 2.0)
    curves = {(d, s): [] for d in decoders for s in range(1, code.k + 1)}
    for idx, snr_db in enumerate(grid_db):
        energy = db_to_linear(snr_db) * n0

        def block(stream, n):
            bits, e, z = draw_rounds(code, stream, n, all_zero)
            errors = np.zeros((4, code.k), dtype=np.int64)
            kernels.netcode_block(bits, e, z, codebook, ev_src, slot_ev, code.slot_variances,
                                  code.link_variances, noise_sd, energy, n0, mask, errors)
            return errors.ravel()

        errors, trials = run_blocks(block, stopping, rng.substream(idx), threads, block_size,
                                    watch=flat_watch)
        errors = errors.reshape(4, code.k)
        for d in decoders:
            for s in range(1, code.k + 1):
                err = int(errors[DECODERS.index(d), s - 1])
                short = (d, s) in watch and err < stopping.min_errors
                pt = BerPoint.from_counts(snr_db, err, trials)
                curves[(d, s)].append(BerPoint(pt.snr_db, pt.errors, pt.trials, pt.ber,
                                               pt.half_width_95, short))
    return NetworkResult({key: BerCurve(pts) for key, pts in curves.items()})
