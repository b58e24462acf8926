"""Pure numpy implementations of the Monte Carlo kernels.

Same signatures and semantics as the compiled ``_ckernels`` module; used
when the extension is unavailable or ``COOPBER_PURE_PYTHON=1`` is set.
"""

import numpy as np
from scipy.special import logsumexp

from .numerics import q_array, q_inverse_array

P_FLOOR = 1e-300
P_CEIL = 0.5 * (1.0 - 1e-12)


def _eq_snr(p1, g2):
    p2 = q_array(np.sqrt(2.0 * g2))
    p = np.clip((1.0 - p1) * p2 + (1.0 - p2) * p1, P_FLOOR, P_CEIL)
    return 0.5 * q_inverse_array(p) ** 2


def canonical_block(bits, e, z, var, noise_sd, energy, n0, relay, decisions=None):
    bits = np.asarray(bits)
    e = np.asarray(e)
    z = np.asarray(z)
    if e.shape != (bits.shape[0], 3) or z.shape != e.shape:
        raise ValueError("draws must have shape (n, 3)")
    se = np.sqrt(energy)
    x = np.where(bits == 0, se, -se)
    p2 = e * np.asarray(var, dtype=float)  # |h|^2 for sr, rd, sd
    proj = np.sqrt(p2) * noise_sd * z  # Re{h^* n}
    rdec = (p2[:, 0] * x + proj[:, 0] < 0.0).astype(np.uint8)
    xr = np.where(rdec == 0, se, -se)
    stat = p2[:, 2] * x + proj[:, 2]
    if relay:
        g_sr = energy * p2[:, 0] / n0
        g_rd = energy * p2[:, 1] / n0
        b = p2[:, 1] * xr + proj[:, 1]
        pos = g_rd > 0.0
        safe = np.where(pos, g_rd, 1.0)
        w = np.where(pos, _eq_snr(q_array(np.sqrt(2.0 * g_sr)), g_rd) / safe, 0.0)
        stat = stat + w * b
    dec = (stat < 0.0).astype(np.uint8)
    if decisions is not None:
        decisions[:, 0] = dec
        decisions[:, 1] = rdec
    return int(np.count_nonzero(dec != bits))


def _bit_table(k):
    idx = np.arange(1 << k)
    return ((idx[:, None] >> (k - 1 - np.arange(k))) & 1).astype(bool)  # (ncw, k)


def _per_bit(metric, table):
    """Per-bit MAP decisions from codeword log-metrics, ties to 0."""
    out = []
    for i in range(table.shape[1]):
        a1 = logsumexp(metric[:, table[:, i]], axis=1)
        a0 = logsumexp(metric[:, ~table[:, i]], axis=1)
        out.append(a1 > a0)
    return np.stack(out, axis=1).astype(np.uint8)


def netcode_block(bits, e, z, codebook, ev_src, slot_ev, slot_var, link_var, noise_sd,
                  energy, n0, mask, errors, decisions=None):
    bits = np.asarray(bits)
    rounds, k = bits.shape
    codebook = np.asarray(codebook).astype(bool)
    ncw, ns = codebook.shape
    ev_src = np.asarray(ev_src)
    slot_ev = np.asarray(slot_ev).astype(bool)
    nev = ev_src.shape[0]
    if ncw != 1 << k:
        raise ValueError("codebook must list all 2**k codewords")
    e = np.asarray(e)
    z = np.asarray(z)
    if e.shape != (rounds, ns + nev) or z.shape != e.shape:
        raise ValueError("draws must have shape (rounds, slots + events)")
    se = np.sqrt(energy)
    table = _bit_table(k)
    truth = (bits.astype(np.int64) << (k - 1 - np.arange(k))).sum(axis=1)

    # inter-node detections
    hl = e[:, ns:] * np.asarray(link_var, dtype=float)  # |h|^2 per link
    src_bits = bits[:, ev_src]
    xs = np.where(src_bits == 0, se, -se)
    det = (hl * xs + np.sqrt(hl) * noise_sd * z[:, ns:] < 0.0).astype(np.uint8)
    dlink = det ^ src_bits  # (rounds, nev)
    plink = q_array(np.sqrt(2.0 * energy * hl / n0))

    # destination observations
    e_slot = (dlink.astype(np.int64) @ slot_ev.T.astype(np.int64)) & 1  # (rounds, ns)
    tx = codebook[truth] ^ e_slot.astype(bool)
    x = np.where(tx, -se, se)
    h2 = e[:, :ns] * np.asarray(slot_var, dtype=float)
    m = h2 * x + np.sqrt(h2) * noise_sd * z[:, :ns]  # Re{h_j^* y_j}
    L = 2.0 * se * m / n0
    gam = energy * h2 / n0
    relayed = slot_ev.any(axis=1)
    prod = np.ones((rounds, ns))
    for ev in range(nev):
        prod = prod * np.where(slot_ev[:, ev][None, :], 1.0 - 2.0 * plink[:, ev:ev + 1], 1.0)
    pe = 0.5 * (1.0 - prod)
    safe = np.where(gam > 0.0, gam, 1.0)
    weight = np.where(relayed[None, :], np.where(gam > 0.0, np.minimum(_eq_snr(pe, gam), gam) / safe, 0.0), 1.0)
    Rz = weight * se * m / n0

    sign = np.where(codebook, -1.0, 1.0)  # (ncw, ns)
    dec = {}
    if mask & 3:
        pats = np.arange(1 << nev)
        pbits = ((pats[:, None] >> np.arange(nev)) & 1).astype(bool)  # (npat, nev)
        epat = (pbits.astype(np.int64) @ slot_ev.T.astype(np.int64)) & 1  # (npat, ns)
        with np.errstate(divide="ignore"):
            logp = np.where(pbits[None], np.log(plink)[:, None, :],
                            np.log1p(-plink)[:, None, :]).sum(axis=2)  # (rounds, npat)
        # sign of slot j under codeword cw and pattern pat
        s = np.where(codebook[:, None, :] ^ epat.astype(bool)[None, :, :], -1.0, 1.0)
        terms = np.einsum("cpj,rj->rcp", s, L) + logp[:, None, :]
        metric = logsumexp(terms, axis=2)  # (rounds, ncw)
        best = np.argmax(metric, axis=1)
        dec[1] = table[best].astype(np.uint8)
        dec[0] = _per_bit(metric, table)
    if mask & 12:
        metric = 2.0 * Rz @ sign.T
        best = np.argmax(metric, axis=1)
        dec[3] = table[best].astype(np.uint8)
        if mask & 4:
            dec[2] = _per_bit(metric, table)
    for b in range(4):
        if (mask >> b) & 1:
            errors[b] += np.count_nonzero(dec[b] != bits, axis=0)
            if decisions is not None:
                decisions[:, b, :] = dec[b]
