"""Compiled kernels for the site-by-site partition recursion.

All kernels work on an ``m x mc`` lattice stored column-major (site
``i = c * m + r``) where ``m`` is the lag.  The energy of a configuration is

    E(y) = sum_i h[i] y[i] + tv * sum_{vertical edges} y_i y_{i+1}
                           + th * sum_{horizontal edges} y_i y_{i+m}

The frontier after eliminating sites ``0 .. i-1`` holds one site per row and
is encoded as an ``m``-bit integer, bit ``r`` set when the row-``r`` spin is
``+1``.  Tables are kept in linear space and rescaled at every step; the
running log of the scale factors is returned separately.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _step(F, G, m, r, eh, etv, eth, inv_scale):
    """Eliminate the frontier spin of row ``r`` and admit its right neighbour.

    ``eh``, ``etv``, ``eth`` are the exponentials of the site field and the
    two couplings.
    """
    S = 1 << m
    bit = 1 << r
    gmax = 0.0
    # exp(a) for a = h + tv*u +/- th, with the row-(r+1) spin u at -1 / +1
    if r < m - 1:
        eu0 = 1.0 / etv
        eu1 = etv
    else:
        eu0 = 1.0
        eu1 = 1.0
    am0 = eh * eu0 / eth
    ap0 = eh * eu0 * eth
    am1 = eh * eu1 / eth
    ap1 = eh * eu1 * eth
    c00 = inv_scale / am0
    c01 = am0 * inv_scale
    c02 = inv_scale / ap0
    c03 = ap0 * inv_scale
    c10 = inv_scale / am1
    c11 = am1 * inv_scale
    c12 = inv_scale / ap1
    c13 = ap1 * inv_scale
    n_hi = S >> (r + 1)
    for hidx in range(n_hi):
        base = hidx << (r + 1)
        if hidx & 1:
            c0, c1, c2, c3 = c10, c11, c12, c13
        else:
            c0, c1, c2, c3 = c00, c01, c02, c03
        for lo in range(bit):
            s0 = base | lo
            s1 = s0 | bit
            f0 = F[s0]
            f1 = F[s1]
            g0 = f0 * c0 + f1 * c1
            g1 = f0 * c2 + f1 * c3
            G[s0] = g0
            G[s1] = g1
            gmax = max(gmax, max(g0, g1))
    return gmax


@njit(cache=True)
def _last_column_energy(m, hl, tv):
    S = 1 << m
    out = np.empty(S)
    for s in range(S):
        e = 0.0
        prev = 0.0
        for r in range(m):
            y = 1.0 if (s >> r) & 1 else -1.0
            e += hl[r] * y
            if r > 0:
                e += tv * prev * y
            prev = y
        out[s] = e
    return out


@njit(cache=True)
def _final_log_weights(F, m, hl, tv, logscale):
    """Log weights of last-column states and the resulting log partition."""
    e = _last_column_energy(m, hl, tv)
    S = 1 << m
    lw = np.empty(S)
    mx = -np.inf
    for s in range(S):
        if F[s] > 0.0:
            lw[s] = math.log(F[s]) + e[s]
        else:
            lw[s] = -np.inf
        if lw[s] > mx:
            mx = lw[s]
    tot = 0.0
    for s in range(S):
        tot += math.exp(lw[s] - mx)
    return lw, logscale + mx + math.log(tot)


@njit(cache=True)
def _log_partition_work(m, mc, h, tv, th, F, G):
    """Log partition using caller-provided work arrays of length ``2**m``."""
    S = 1 << m
    for s in range(S):
        F[s] = 1.0
    logscale = 0.0
    inv_scale = 1.0
    etv = math.exp(tv)
    eth = math.exp(th)
    for c in range(mc - 1):
        for r in range(m):
            i = c * m + r
            gmax = _step(F, G, m, r, math.exp(h[i]), etv, eth, inv_scale)
            F, G = G, F
            logscale += math.log(gmax)
            inv_scale = 1.0 / gmax
    # last column: weight each frontier state by its within-column energy
    off = (mc - 1) * m
    mx = -np.inf
    for s in range(S):
        e = 0.0
        prev = 0.0
        for r in range(m):
            y = 1.0 if (s >> r) & 1 else -1.0
            e += h[off + r] * y
            if r > 0:
                e += tv * prev * y
            prev = y
        v = F[s] * inv_scale
        G[s] = math.log(v) + e if v > 0.0 else -np.inf
        if G[s] > mx:
            mx = G[s]
    tot = 0.0
    for s in range(S):
        tot += math.exp(G[s] - mx)
    return logscale + mx + math.log(tot)


@njit(cache=True)
def log_partition(m, mc, h, tv, th):
    """Log normalising constant for a single lattice."""
    S = 1 << m
    return _log_partition_work(m, mc, h, tv, th, np.empty(S), np.empty(S))


@njit(cache=True)
def log_partition_batch(m, mc, h0, tv, th, bv, bh):
    """Log partitions for every (parameter, boundary) pair.

    ``h0``, ``tv``, ``th`` have length T; ``bv``, ``bh`` have shape (B, n) and
    give per-site boundary neighbour sums so that the site field is
    ``h0 + tv * bv + th * bh``.  Returns an array of shape (T, B).
    """
    T = h0.shape[0]
    B = bv.shape[0]
    n = m * mc
    S = 1 << m
    out = np.empty((T, B))
    h = np.empty(n)
    F = np.empty(S)
    G = np.empty(S)
    for t in range(T):
        for b in range(B):
            for i in range(n):
                h[i] = h0[t] + tv[t] * bv[b, i] + th[t] * bh[b, i]
            out[t, b] = _log_partition_work(m, mc, h, tv[t], th[t], F, G)
    return out


@njit(cache=True)
def forward_tables(m, mc, h, tv, th):
    """Forward pass storing the table consumed by each elimination step.

    Row ``i`` (for ``i < n - m``) of the returned array is the frontier table
    seen by step ``i``; the last row holds the normalised last-column
    probabilities.
    """
    S = 1 << m
    n_steps = (mc - 1) * m
    tables = np.empty((n_steps + 1, S))
    F = np.ones(S)
    G = np.empty(S)
    logscale = 0.0
    inv_scale = 1.0
    etv = math.exp(tv)
    eth = math.exp(th)
    for i in range(n_steps):
        for s in range(S):
            tables[i, s] = F[s]
        gmax = _step(F, G, m, i % m, math.exp(h[i]), etv, eth, inv_scale)
        F, G = G, F
        logscale += math.log(gmax)
        inv_scale = 1.0 / gmax
    for s in range(S):
        F[s] *= inv_scale
    lw, logz = _final_log_weights(F, m, h[(mc - 1) * m:], tv, logscale)
    mx = lw.max()
    tot = 0.0
    for s in range(S):
        tables[n_steps, s] = math.exp(lw[s] - mx)
        tot += tables[n_steps, s]
    for s in range(S):
        tables[n_steps, s] /= tot
    return tables, logz


@njit(cache=True)
def backward_sample(m, mc, h, tv, th, tables, u):
    """Exact draws given forward tables; ``u`` holds one uniform per site.

    ``u`` has shape (D, n); returns int8 spins of shape (D, n).
    """
    D = u.shape[0]
    n = m * mc
    S = 1 << m
    n_steps = (mc - 1) * m
    out = np.empty((D, n), dtype=np.int8)
    cdf = np.empty(S)
    acc = 0.0
    for s in range(S):
        acc += tables[n_steps, s]
        cdf[s] = acc
    for d in range(D):
        # last column state by inversion
        target = u[d, n - 1] * cdf[S - 1]
        lo = 0
        hi = S - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if cdf[mid] < target:
                lo = mid + 1
            else:
                hi = mid
        s = lo
        for r in range(m):
            out[d, n_steps + r] = 1 if (s >> r) & 1 else -1
        for i in range(n_steps - 1, -1, -1):
            r = i % m
            bit = 1 << r
            yp = 1.0 if s & bit else -1.0
            uu = 0.0
            if r < m - 1:
                uu = 1.0 if (s >> (r + 1)) & 1 else -1.0
            a = h[i] + tv * uu + th * yp
            w0 = tables[i, s & ~bit] * math.exp(-a)
            w1 = tables[i, s | bit] * math.exp(a)
            if u[d, i] * (w0 + w1) < w1:
                s = s | bit
                out[d, i] = 1
            else:
                s = s & ~bit
                out[d, i] = -1
    return out


@njit(cache=True)
def sample_batch(m, mc, h, tv, th, u):
    """Forward-backward draws for a batch of fields.

    ``h`` has shape (B, n) and ``u`` shape (B, D, n); returns (B, D, n) spins
    and the (B,) log partitions.
    """
    B = h.shape[0]
    D = u.shape[1]
    n = m * mc
    out = np.empty((B, D, n), dtype=np.int8)
    logz = np.empty(B)
    for b in range(B):
        tables, lz = forward_tables(m, mc, h[b], tv, th)
        logz[b] = lz
        out[b] = backward_sample(m, mc, h[b], tv, th, tables, u[b])
    return out, logz
