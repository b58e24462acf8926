"""Canonical source-relay-destination system with a demodulate-and-forward relay.

The relay hard-detects the source symbol and forwards it; the destination
combines the direct and relayed observations with cooperative MRC (C-MRC),
weighting the relayed branch by the equivalent two-hop SNR.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .montecarlo import BerCurve, BerPoint, StoppingRule, run_blocks
from .numerics import (
    DomainError,
    RngStream,
    db_to_linear,
    q_array,
    q_function,
    q_inverse,
    q_inverse_array,
    sample_cn,
)

# Clamp applied to the combined two-hop error probability before inversion.
P_FLOOR = 1e-300
P_CEIL = 0.5 * (1.0 - 1e-12)


@dataclass(frozen=True)
class CanonicalConfig:
    """Link variances and noise power; the bit energy is ``snr * noise_power``."""

    var_sr: float = 1.0
    var_rd: float = 1.0
    var_sd: float = 1.0
    noise_power: float = 1.0

    def __post_init__(self):
        for name in ("var_sr", "var_rd", "var_sd", "noise_power"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")

    @property
    def unit_variances(self) -> bool:
        return self.var_sr == self.var_rd == self.var_sd == 1.0

    def bit_energy(self, snr: float) -> float:
        return snr * self.noise_power


@dataclass
class ChannelRealization:
    h_sr: complex
    h_rd: complex
    h_sd: complex
    snr: float  # average SNR E/N0
    gamma_sr: float = field(init=False)
    gamma_rd: float = field(init=False)
    gamma_sd: float = field(init=False)

    def __post_init__(self):
        self.gamma_sr = self.snr * abs(self.h_sr) ** 2
        self.gamma_rd = self.snr * abs(self.h_rd) ** 2
        self.gamma_sd = self.snr * abs(self.h_sd) ** 2

    @classmethod
    def draw(cls, config: CanonicalConfig, snr: float, rng: RngStream) -> "ChannelRealization":
        return cls(sample_cn(config.var_sr, rng), sample_cn(config.var_rd, rng),
                   sample_cn(config.var_sd, rng), snr)


def bpsk_map(bit: int, energy: float) -> float:
    """0 -> +sqrt(E), 1 -> -sqrt(E)."""
    if bit not in (0, 1):
        raise DomainError(f"bit must be 0 or 1, got {bit!r}")
    if not energy > 0:
        raise DomainError("bit energy must be positive")
    return math.sqrt(energy) * (1 - 2 * bit)


def dmf_detect(y: complex, h: complex, energy: float) -> int:
    """Hard ML decision on a BPSK symbol; Re{h* y} == 0 resolves to bit 0."""
    return 1 if (h.conjugate() * y).real < 0.0 else 0


def equivalent_snr(p_first_hop: float, gamma_second_hop: float) -> float:
    """SNR of the single BPSK link whose error rate equals the two-hop rate."""
    if not 0.0 <= p_first_hop <= 1.0:
        raise DomainError(f"p_first_hop must lie in [0, 1], got {p_first_hop!r}")
    if gamma_second_hop < 0:
        raise DomainError("gamma_second_hop must be non-negative")
    p2 = q_function(math.sqrt(2.0 * gamma_second_hop))
    p = (1.0 - p_first_hop) * p2 + (1.0 - p2) * p_first_hop
    p = min(max(p, P_FLOOR), P_CEIL)
    return q_inverse(p) ** 2 / 2.0


def equivalent_snr_array(p_first_hop, gamma_second_hop):
    p2 = q_array(np.sqrt(2.0 * np.asarray(gamma_second_hop, dtype=float)))
    p1 = np.asarray(p_first_hop, dtype=float)
    p = np.clip((1.0 - p1) * p2 + (1.0 - p2) * p1, P_FLOOR, P_CEIL)
    return q_inverse_array(p) ** 2 / 2.0


def cmrc_detect(y_sd: complex, y_rd: complex, h_sd: complex, h_rd: complex,
                gamma_eq: float, gamma_rd: float, energy: float) -> int:
    """C-MRC decision at the destination; ties resolve to bit 0."""
    w1 = h_sd.conjugate()
    w2 = (gamma_eq / gamma_rd) * h_rd.conjugate() if gamma_rd > 0 else 0.0
    r = w1 * y_sd + w2 * y_rd
    a = w1 * h_sd + w2 * h_rd
    x = math.sqrt(energy)
    d0 = abs(r - a * x) ** 2
    d1 = abs(r + a * x) ** 2
    return 1 if d1 < d0 else 0


def instantaneous_ber_canonical(gamma_sr, gamma_rd, gamma_sd):
    """End-to-end BER of DMF relaying with C-MRC for fixed instantaneous SNRs.

    Vectorised over numpy arrays. Zero second-hop SNR drops the relayed branch.
    """
    g_sr = np.asarray(gamma_sr, dtype=float)
    g_rd = np.asarray(gamma_rd, dtype=float)
    g_sd = np.asarray(gamma_sd, dtype=float)
    p_sr = q_array(np.sqrt(2.0 * g_sr))
    g_eq = equivalent_snr_array(p_sr, g_rd)
    with np.errstate(divide="ignore", invalid="ignore"):
        leak = np.where(g_rd > 0, g_eq * g_eq / g_rd, 0.0)
        g_eq = np.where(g_rd > 0, g_eq, 0.0)
        den = np.sqrt(g_sd + leak)
        a_plus = np.where(den > 0, math.sqrt(2.0) * (g_sd + g_eq) / den, 0.0)
        a_minus = np.where(den > 0, math.sqrt(2.0) * (g_sd - g_eq) / den, 0.0)
    out = (1.0 - p_sr) * q_array(a_plus) + p_sr * q_array(a_minus)
    return float(out) if out.ndim == 0 else out


def simulate_canonical(config: CanonicalConfig, grid_db, stopping: StoppingRule | None = None,
                       rng: RngStream | None = None, *, relay: bool = True,
                       threads: int = 1, block_size: int = 1 << 16) -> BerCurve:
    """Monte Carlo BER of the canonical system over a grid of average SNRs in dB.

    One fading draw per two-slot round; fresh noise in each slot. Each link
    is simulated through its fading power and the noise component along the
    channel phase, which is all the detectors see. With ``relay=False`` the
    relayed branch gets zero weight (direct link only).
    """
    grid_db = list(grid_db)
    if not grid_db:
        raise ValueError("SNR grid is empty")
    stopping = stopping or StoppingRule()
    rng = rng or RngStream(0)
    if not config.unit_variances:
        warnings.warn("non-unit link variances: closed-form analysis assumes unit variances",
                      stacklevel=2)
    var = (config.var_sr, config.var_rd, config.var_sd)
    noise_sd = math.sqrt(config.noise_power / 2.0)
    points = []
    for idx, snr_db in enumerate(grid_db):
        energy = config.bit_energy(db_to_linear(snr_db))

        def block(stream: RngStream, n: int):
            bits = stream.bits(n)
            e = stream.standard_exponential((n, kernels.CANONICAL_LINKS))
            z = stream.standard_normal((n, kernels.CANONICAL_LINKS))
            errs = kernels.canonical_block(bits, e, z, var, noise_sd, energy,
                                           config.noise_power, relay)
            return np.array([errs])

        errors, trials = run_blocks(block, stopping, rng.substream(idx), threads, block_size)
        points.append(BerPoint.from_counts(snr_db, int(errors[0]), trials, stopping.min_errors))
    return BerCurve(points)
