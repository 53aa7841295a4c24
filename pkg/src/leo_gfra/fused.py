"""Compiled per-entry kernels for the CCESD message schedule.

Each kernel fuses the message functions of :mod:`leo_gfra.ccesd` and
:mod:`leo_gfra.mrf` for one tensor entry, so the receiver never materializes
the ``(entries, |A|, K)`` component arrays.  The numpy implementations remain
the reference; ``tests/test_fused.py`` checks the two agree.

Entries are flattened in ``[l, u, lp, i, j]`` order.  ``tau`` is indexed by
``(l, j)`` and the slab parameters by device ``u``.

Branch likelihoods are also kept in linear scale relative to each entry's
largest branch, which removes most exp/log calls from the later kernels.  An
entry whose linear sums fall below ``floor`` is recomputed in the log domain;
``floor=inf`` forces the log-domain path everywhere.
"""

import math

import numba
import numpy as np

LOG_PI = math.log(math.pi)
LLR_CLIP = 700.0
FLOOR = 1e-280


@numba.njit(cache=True, inline="always")
def _lae(x, y):
    if x == -np.inf:
        return y
    if y == -np.inf:
        return x
    if x > y:
        return x + math.log1p(math.exp(y - x))
    return y + math.log1p(math.exp(x - y))


@numba.njit(cache=True, inline="always")
def _lse(x):
    mx = -np.inf
    for v in x:
        if v > mx:
            mx = v
    if mx == -np.inf:
        return mx
    acc = 0.0
    for v in x:
        acc += math.exp(v - mx)
    return mx + math.log(acc)


@numba.njit(cache=True, inline="always")
def _index(e, U, M, N, Na):
    j = e % Na
    u = (e // (Na * N * M)) % U
    l = e // (Na * N * M * U)
    return l, u, j


@numba.njit(cache=True, inline="always")
def _split_prob(llr):
    x = min(max(llr, -LLR_CLIP), LLR_CLIP)
    e = math.exp(-abs(x))
    if x > 0:
        return 1.0 / (1.0 + e), e / (1.0 + e)
    return e / (1.0 + e), 1.0 / (1.0 + e)


@numba.njit(cache=True, inline="always")
def _split_llr(llr):
    x = min(max(llr, -LLR_CLIP), LLR_CLIP)
    if x > 0:
        return -math.log1p(math.exp(-x)), -x - math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x)), -math.log1p(math.exp(x))


@numba.njit(cache=True)
def likelihood_terms(r, tau, a, lw, mu, phi, dims):
    """Per-entry log terms shared by every message of one iteration.

    ``L[e, m, k] = log w_k + log CN(r; a_m mu_k, a_m^2 phi_k + tau)`` (slab branch
    for symbol m, component k) and ``S[e] = log CN(r; 0, tau)`` (spike).  Also
    returns ``P = exp(L - c)``, ``P0 = exp(S - c)`` and the per-entry shift ``c``.
    """
    U, M, N, Na = dims
    E = r.size
    A, K = a.size, lw.shape[1]
    # log-variance and precision tables per (l, j, u, m, k)
    lv = np.empty((M, Na, U, A, K))
    iv = np.empty((M, Na, U, A, K))
    for l in range(M):
        for j in range(Na):
            for u in range(U):
                for m in range(A):
                    for k in range(K):
                        v = a[m] * a[m] * phi[u, k] + tau[l, j]
                        lv[l, j, u, m, k] = math.log(v)
                        iv[l, j, u, m, k] = 1.0 / v
    L = np.empty((E, A, K))
    S = np.empty(E)
    P = np.empty((E, A, K))
    P0 = np.empty(E)
    c = np.empty(E)
    for e in range(E):
        l, u, j = _index(e, U, M, N, Na)
        t = tau[l, j]
        rr, ri = r[e].real, r[e].imag
        s = -LOG_PI - math.log(t) - (rr * rr + ri * ri) / t
        mx = s
        for m in range(A):
            am = a[m]
            for k in range(K):
                dr = rr - am * mu[u, k].real
                di = ri - am * mu[u, k].imag
                v = lw[u, k] - LOG_PI - lv[l, j, u, m, k] - (dr * dr + di * di) * iv[l, j, u, m, k]
                L[e, m, k] = v
                if v > mx:
                    mx = v
        S[e] = s
        c[e] = mx
        P0[e] = math.exp(s - mx)
        for m in range(A):
            for k in range(K):
                P[e, m, k] = math.exp(L[e, m, k] - mx)
    return L, S, P, P0, c


@numba.njit(cache=True)
def support_evidence(L, S, P, c, left, log_left, floor=FLOOR):
    """Support log-odds of every entry: slab evidence under the symbol mixture minus spike."""
    E, A, K = L.shape
    out = np.empty(E)
    buf = np.empty(A * K)
    for e in range(E):
        acc = 0.0
        for m in range(A):
            for k in range(K):
                acc += left[e, m] * P[e, m, k]
        if acc > floor:
            out[e] = math.log(acc) + c[e] - S[e]
            continue
        for m in range(A):
            for k in range(K):
                buf[m * K + k] = log_left[e, m] + L[e, m, k]
        out[e] = _lse(buf) - S[e]
    return out


@numba.njit(cache=True)
def symbol_messages(L, S, P, P0, ext_llr, floor=FLOOR):
    """Normalized log p-> of every factor given the refined spike-and-slab channel message."""
    E, A, K = L.shape
    out = np.empty((E, A))
    buf = np.empty(K + 1)
    for e in range(E):
        p1, p0 = _split_prob(ext_llr[e])
        tot = 0.0
        low = np.inf
        for m in range(A):
            v = p0 * P0[e]
            for k in range(K):
                v += p1 * P[e, m, k]
            out[e, m] = v
            tot += v
            low = min(low, v)
        if low > floor:
            lt = math.log(tot)
            for m in range(A):
                out[e, m] = math.log(out[e, m]) - lt
            continue
        lp1, lp0 = _split_llr(ext_llr[e])
        buf[K] = lp0 + S[e]
        for m in range(A):
            for k in range(K):
                buf[k] = lp1 + L[e, m, k]
            out[e, m] = _lse(buf)
        z = _lse(out[e])
        for m in range(A):
            out[e, m] -= z
    return out


@numba.njit(cache=True)
def extrinsic_symbols(log_right, totals, dims):
    """Normalized p<- of every factor: its symbol's total log p-> minus its own message.

    Returns the table in log and linear scale and the number of factors whose
    extrinsic product was not finite (those fall back to uniform).
    """
    U, M, N, Na = dims
    E, A = log_right.shape
    out = np.empty((E, A))
    lin = np.empty((E, A))
    resets = 0
    for e in range(E):
        lp = (e // (Na * N)) % M
        u = (e // (Na * N * M)) % U
        l = e // (Na * N * M * U)
        sym = (l - lp) % M
        ok = True
        mx = -np.inf
        for m in range(A):
            v = totals[u, sym, m] - log_right[e, m]
            if not math.isfinite(v):
                ok = False
            out[e, m] = v
            mx = max(mx, v)
        if not ok:
            resets += 1
            for m in range(A):
                out[e, m] = -math.log(A)
                lin[e, m] = 1.0 / A
            continue
        acc = 0.0
        for m in range(A):
            lin[e, m] = math.exp(out[e, m] - mx)
            acc += lin[e, m]
        z = mx + math.log(acc)
        for m in range(A):
            out[e, m] -= z
            lin[e, m] /= acc
    return out, lin, resets


@numba.njit(cache=True)
def posteriors(r, tau, L, S, P, P0, c, ext_llr, left, log_left, a, mu, phi, dims, floor=FLOOR):
    """Posterior moments of w and h, the log spike probability, and EM sufficient statistics.

    Branches (symbol m, component k) share one set of weights for w and h; the
    h branch mean is the w branch mean divided by ``a_m``.  Returns
    ``(w_mean, w_var, h_mean, h_var, log_spike, S0, S1, S2)`` with ``S*``
    shaped ``(U, K)``: responsibility mass, first and second raw moments of h.
    """
    U, M, N, Na = dims
    E, A, K = L.shape
    w_mean = np.empty(E, dtype=np.complex128)
    w_var = np.empty(E)
    h_mean = np.empty(E, dtype=np.complex128)
    h_var = np.empty(E)
    log_spike = np.empty(E)
    S0 = np.zeros((U, K))
    S1 = np.zeros((U, K), dtype=np.complex128)
    S2 = np.zeros((U, K))
    # per-branch LMMSE coefficients: w mean = cw + gw r, h mean = w mean / a_m
    cw = np.empty((M, Na, U, A, K), dtype=np.complex128)
    gw = np.empty((M, Na, U, A, K))
    vw = np.empty((M, Na, U, A, K))
    vh = np.empty((M, Na, U, A, K))
    for l in range(M):
        for j in range(Na):
            t = tau[l, j]
            for u in range(U):
                for m in range(A):
                    am = a[m]
                    for k in range(K):
                        s = am * am * phi[u, k] + t
                        cw[l, j, u, m, k] = am * mu[u, k] * t / s
                        gw[l, j, u, m, k] = am * am * phi[u, k] / s
                        vw[l, j, u, m, k] = am * am * phi[u, k] * t / s
                        vh[l, j, u, m, k] = phi[u, k] * t / s
    b = np.empty((A, K))
    flat = b.reshape(A * K)
    for e in range(E):
        l, u, j = _index(e, U, M, N, Na)
        rv = r[e]
        p1, p0 = _split_prob(ext_llr[e])
        z = p0 * P0[e]
        for m in range(A):
            for k in range(K):
                b[m, k] = left[e, m] * p1 * P[e, m, k]
                z += b[m, k]
        lp1, lp0 = _split_llr(ext_llr[e])
        if z > floor:
            log_spike[e] = lp0 + S[e] - c[e] - math.log(z)
            for m in range(A):
                for k in range(K):
                    b[m, k] /= z
        else:
            b0 = lp0 + S[e]
            for m in range(A):
                for k in range(K):
                    b[m, k] = log_left[e, m] + lp1 + L[e, m, k]
            lz = _lae(b0, _lse(flat))
            log_spike[e] = b0 - lz
            for m in range(A):
                for k in range(K):
                    b[m, k] = math.exp(b[m, k] - lz)
        wm = 0j
        w2 = 0.0
        hm = 0j
        h2 = 0.0
        for m in range(A):
            inv_a = 1.0 / a[m]
            for k in range(K):
                p = b[m, k]
                mean_w = cw[l, j, u, m, k] + gw[l, j, u, m, k] * rv
                mean_h = mean_w * inv_a
                wm += p * mean_w
                w2 += p * (mean_w.real ** 2 + mean_w.imag ** 2 + vw[l, j, u, m, k])
                hm += p * mean_h
                sec_h = mean_h.real ** 2 + mean_h.imag ** 2 + vh[l, j, u, m, k]
                h2 += p * sec_h
                S0[u, k] += p
                S1[u, k] += p * mean_h
                S2[u, k] += p * sec_h
        w_mean[e] = wm
        w_var[e] = max(w2 - (wm.real ** 2 + wm.imag ** 2), 0.0)
        h_mean[e] = hm
        h_var[e] = max(h2 - (hm.real ** 2 + hm.imag ** 2), 0.0)
    return w_mean, w_var, h_mean, h_var, log_spike, S0, S1, S2
