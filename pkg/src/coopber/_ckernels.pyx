# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Monte Carlo kernels.

Same contracts as coopber._pykernels; the random draws are produced by the
caller so both backends consume identical inputs. Each link is reduced to
its sufficient statistics: the fading power |h|^2 = var * e with e a unit
exponential, and the noise projected on the channel phase,
Re{h^* n} / |h| = noise_sd * z with z standard normal.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport erfc, exp, log, log1p, sqrt, fabs

cnp.import_array()

cdef double P_FLOOR = 1e-300
cdef double P_CEIL = 0.5 * (1.0 - 1e-12)
cdef double LOG_SQRT_2PI = 0.91893853320467274178

cdef enum:
    MAXK = 8
    MAXCW = 256
    MAXN = 16
    MAXEV = 8
    MAXPAT = 256


cdef inline double q_func(double x) nogil:
    return 0.5 * erfc(x * 0.70710678118654752440)


cdef inline double q_inv_lower(double p) nogil:
    """Q^-1(p) for p in (0, 0.5]: rational start, one relative Halley step."""
    cdef double q, r, x, logp, ratio, u
    logp = log(p)
    if p < 0.02425:
        q = sqrt(-2.0 * logp)
        x = (((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q
                - 2.400758277161838e+00) * q - 2.549732539343734e+00) * q
              + 4.374664141464968e+00) * q + 2.938163982698783e+00) / \
            ((((7.784695709041462e-03 * q + 3.224671290700398e-01) * q
               + 2.445134137142996e+00) * q + 3.754408661907416e+00) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((-3.969683028665376e+01 * r + 2.209460984245205e+02) * r
                - 2.759285104469687e+02) * r + 1.383577518672690e+02) * r
              - 3.066479806614716e+01) * r + 2.506628277459239e+00) * q / \
            (((((-5.447609879822406e+01 * r + 1.615858368580409e+02) * r
                - 1.556989798598866e+02) * r + 6.680131188771972e+01) * r
              - 1.328068155288572e+01) * r + 1.0)
    # x approximates Phi^-1(p) <= 0; refine with Phi(x) = Q(-x).
    ratio = q_func(-x) / p - 1.0
    u = ratio * exp(logp + 0.5 * x * x + LOG_SQRT_2PI)
    x = x - u / (1.0 + 0.5 * x * u)
    return -x


cdef inline double eq_snr(double p1, double g2) nogil:
    cdef double p2 = q_func(sqrt(2.0 * g2))
    cdef double p = (1.0 - p1) * p2 + (1.0 - p2) * p1
    cdef double t
    if p < P_FLOOR:
        p = P_FLOOR
    elif p > P_CEIL:
        p = P_CEIL
    t = q_inv_lower(p)
    return 0.5 * t * t


def q_inverse_lower(double p):
    """Exposed for tests: Q^-1 on (0, 0.5]."""
    return q_inv_lower(p)


def canonical_block(const cnp.uint8_t[::1] bits, const double[:, ::1] e, const double[:, ::1] z,
                    var, double noise_sd, double energy, double n0, bint relay,
                    cnp.uint8_t[:, ::1] decisions=None):
    cdef Py_ssize_t n = bits.shape[0], t
    cdef double v_sr = var[0], v_rd = var[1], v_sd = var[2]
    cdef double se = sqrt(energy)
    cdef double x, xr, a2, a, b, gsr, grd, w, stat
    cdef long errors = 0
    cdef int dec, rdec
    cdef bint keep = decisions is not None
    if e.shape[0] != n or z.shape[0] != n or e.shape[1] != 3 or z.shape[1] != 3:
        raise ValueError("draws must have shape (n, 3)")
    with nogil:
        for t in range(n):
            x = se if bits[t] == 0 else -se
            # relay: Re{h_sr^* y_sr} = |h|^2 x + |h| n_proj
            a2 = v_sr * e[t, 0]
            rdec = 1 if a2 * x + sqrt(a2) * noise_sd * z[t, 0] < 0.0 else 0
            xr = -se if rdec else se
            a2 = v_sd * e[t, 2]
            a = a2 * x + sqrt(a2) * noise_sd * z[t, 2]
            stat = a
            if relay:
                a2 = v_rd * e[t, 1]
                b = a2 * xr + sqrt(a2) * noise_sd * z[t, 1]
                # the positive weight only matters when the branches disagree
                if a * b < 0.0:
                    grd = energy * a2 / n0
                    gsr = energy * v_sr * e[t, 0] / n0
                    w = eq_snr(q_func(sqrt(2.0 * gsr)), grd) / grd
                    stat = a + w * b
                elif a == 0.0:
                    stat = b
            dec = 1 if stat < 0.0 else 0
            if dec != bits[t]:
                errors += 1
            if keep:
                decisions[t, 0] = dec
                decisions[t, 1] = rdec
    return errors


cdef inline double lse2(double a, double b) nogil:
    if a == -1.0 / 0.0:
        return b
    if b == -1.0 / 0.0:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def netcode_block(const cnp.uint8_t[:, ::1] bits, const double[:, ::1] e, const double[:, ::1] z,
                  const cnp.uint8_t[:, ::1] codebook, const cnp.int64_t[::1] ev_src,
                  const cnp.uint8_t[:, ::1] slot_ev, const double[::1] slot_var,
                  const double[::1] link_var, double noise_sd, double energy, double n0,
                  int mask, cnp.int64_t[:, ::1] errors, cnp.uint8_t[:, :, ::1] decisions=None):
    cdef Py_ssize_t rounds = bits.shape[0], r
    cdef int k = bits.shape[1], ncw = codebook.shape[0], ns = codebook.shape[1]
    cdef int nev = ev_src.shape[0], npat = 1 << nev
    cdef int i, j, ev, cw, pat, b, src, best, tb, truth, dec
    cdef double se = sqrt(energy), hr, gam, prod, pe, w, m, best_m, a0, a1
    cdef double L[MAXN]
    cdef double M[MAXN]
    cdef double Gam[MAXN]
    cdef double hlink[MAXEV]
    cdef int shortcut, have_p
    cdef bint lazy = (mask & 12) != 0 and (mask & 4) == 0
    cdef int[::1] word_tab
    cdef double Rz[MAXN]
    cdef double plink[MAXEV]
    cdef int dlink[MAXEV]
    cdef int relayed[MAXN]
    cdef double metric[MAXCW]
    cdef double logp_pat[MAXPAT]
    cdef int epat[MAXPAT][MAXN]
    cdef int dec_out[4][MAXK]
    cdef bint keep = decisions is not None
    cdef bint opt = (mask & 3) != 0
    if k > MAXK or ns > MAXN or nev > MAXEV:
        raise ValueError("code too large for the compiled kernel")
    if ncw != (1 << k):
        raise ValueError("codebook must list all 2**k codewords")
    if (e.shape[0] != rounds or z.shape[0] != rounds
            or e.shape[1] != ns + nev or z.shape[1] != ns + nev):
        raise ValueError("draws must have shape (rounds, slots + events)")
    for j in range(ns):
        relayed[j] = 0
        for ev in range(nev):
            if slot_ev[j, ev]:
                relayed[j] = 1
    tab = np.full(1 << ns, -1, dtype=np.intc)
    for cw in range(ncw):
        tb = 0
        for j in range(ns):
            tb = (tb << 1) | codebook[cw, j]
        if tab[tb] < 0:
            tab[tb] = cw
    word_tab = tab
    for pat in range(npat):
        for j in range(ns):
            tb = 0
            for ev in range(nev):
                if slot_ev[j, ev] and (pat >> ev) & 1:
                    tb ^= 1
            epat[pat][j] = tb
    with nogil:
        for r in range(rounds):
            truth = 0
            for i in range(k):
                truth = (truth << 1) | bits[r, i]
            # inter-node detections
            for ev in range(nev):
                src = ev_src[ev]
                hr = link_var[ev] * e[r, ns + ev]
                w = se if bits[r, src] == 0 else -se
                dlink[ev] = (1 if hr * w + sqrt(hr) * noise_sd * z[r, ns + ev] < 0.0 else 0) ^ bits[r, src]
                hlink[ev] = hr
            have_p = 0
            if opt:
                for ev in range(nev):
                    plink[ev] = q_func(sqrt(2.0 * energy * hlink[ev] / n0))
                have_p = 1
            # destination observations
            for j in range(ns):
                tb = codebook[truth, j]
                for ev in range(nev):
                    if slot_ev[j, ev]:
                        tb ^= dlink[ev]
                w = se if tb == 0 else -se
                hr = slot_var[j] * e[r, j]
                M[j] = hr * w + sqrt(hr) * noise_sd * z[r, j]  # Re{h_j^* y_j}
                L[j] = 2.0 * se * M[j] / n0
                Gam[j] = energy * hr / n0
            # If the hard slot decisions already form a codeword it is the
            # joint argmax for any positive weights; skip the weights then.
            shortcut = -1
            if lazy:
                tb = 0
                for j in range(ns):
                    if M[j] == 0.0 or Gam[j] <= 0.0:
                        tb = -1
                        break
                    tb = (tb << 1) | (1 if M[j] < 0.0 else 0)
                if tb >= 0:
                    shortcut = word_tab[tb]
            if (mask & 12) and shortcut < 0:
                if not have_p:
                    for ev in range(nev):
                        plink[ev] = q_func(sqrt(2.0 * energy * hlink[ev] / n0))
                for j in range(ns):
                    gam = Gam[j]
                    if relayed[j]:
                        prod = 1.0
                        for ev in range(nev):
                            if slot_ev[j, ev]:
                                prod = prod * (1.0 - 2.0 * plink[ev])
                        pe = 0.5 * (1.0 - prod)
                        if gam > 0.0:
                            w = eq_snr(pe, gam)
                            if w > gam:
                                w = gam
                            Rz[j] = w / gam * se * M[j] / n0
                        else:
                            Rz[j] = 0.0
                    else:
                        Rz[j] = se * M[j] / n0
            # optimal MAP decoders over data and relay-error patterns
            if opt:
                for pat in range(npat):
                    a0 = 0.0
                    for ev in range(nev):
                        if (pat >> ev) & 1:
                            a0 = a0 + log(plink[ev])
                        else:
                            a0 = a0 + log1p(-plink[ev])
                    logp_pat[pat] = a0
                best = 0
                best_m = -1.0 / 0.0
                for cw in range(ncw):
                    m = -1.0 / 0.0
                    for pat in range(npat):
                        if logp_pat[pat] == -1.0 / 0.0:
                            continue
                        a0 = logp_pat[pat]
                        for j in range(ns):
                            if codebook[cw, j] ^ epat[pat][j]:
                                a0 = a0 - L[j]
                            else:
                                a0 = a0 + L[j]
                        m = lse2(m, a0)
                    metric[cw] = m
                    if m > best_m:
                        best_m = m
                        best = cw
                for i in range(k):
                    dec_out[1][i] = (best >> (k - 1 - i)) & 1
                    a0 = -1.0 / 0.0
                    a1 = -1.0 / 0.0
                    for cw in range(ncw):
                        if (cw >> (k - 1 - i)) & 1:
                            a1 = lse2(a1, metric[cw])
                        else:
                            a0 = lse2(a0, metric[cw])
                    dec_out[0][i] = 1 if a1 > a0 else 0
            # equivalent-channel decoders
            if (mask & 12) and shortcut >= 0:
                for i in range(k):
                    dec_out[3][i] = (shortcut >> (k - 1 - i)) & 1
            elif mask & 12:
                best = 0
                best_m = -1.0 / 0.0
                for cw in range(ncw):
                    m = 0.0
                    for j in range(ns):
                        if codebook[cw, j]:
                            m = m - 2.0 * Rz[j]
                        else:
                            m = m + 2.0 * Rz[j]
                    metric[cw] = m
                    if m > best_m:
                        best_m = m
                        best = cw
                for i in range(k):
                    dec_out[3][i] = (best >> (k - 1 - i)) & 1
                    if mask & 4:
                        a0 = -1.0 / 0.0
                        a1 = -1.0 / 0.0
                        for cw in range(ncw):
                            if (cw >> (k - 1 - i)) & 1:
                                a1 = lse2(a1, metric[cw])
                            else:
                                a0 = lse2(a0, metric[cw])
                        dec_out[2][i] = 1 if a1 > a0 else 0
            for b in range(4):
                if (mask >> b) & 1:
                    for i in range(k):
                        dec = dec_out[b][i]
                        if dec != bits[r, i]:
                            errors[b, i] += 1
                        if keep:
                            decisions[r, b, i] = dec
