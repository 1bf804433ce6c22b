"""Compiled inner loops for the shift-register decoder and trellis search.

Register convention: an L-bit integer whose most significant bit is the
newest input bit.  Each symbol shifts R new bits in at the top and drops
the R oldest bits at the bottom::

    reg_n = (sym_n << (L - R)) | (reg_{n-1} >> R)

The trellis state before symbol n is ``reg_{n-1} >> R`` (the newest L-R
bits).  A state s' is reached only from registers ``(s' << R) | d`` with
``d`` in [0, 2^R); the predecessor state is the low L-R bits of that
register and ``d`` is what gets stored as the backpointer.

``mapping_squarem`` runs the fixed-cardinality rate-distortion mapping loop
(Gibbs channel, output marginal, centroid update) used by the support search.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def decode_registers(symbols, L, R, reg0):
    n = symbols.shape[0]
    out = np.empty(n, dtype=np.int64)
    reg = reg0
    top = L - R
    for t in range(n):
        reg = (symbols[t] << top) | (reg >> R)
        out[t] = reg
    return out


@njit(cache=True)
def _put_bits(row, pos, value, nbits):
    for j in range(nbits):
        if (value >> j) & 1:
            k = pos + j
            row[k >> 3] |= np.uint8(1 << (k & 7))


@njit(cache=True)
def _get_bits(row, pos, nbits):
    v = 0
    for j in range(nbits):
        k = pos + j
        v |= ((row[k >> 3] >> (k & 7)) & 1) << j
    return v


@njit(cache=True)
def _pack_row(row, dd, R):
    S = dd.shape[0]
    if R == 1:
        for k in range(S >> 3):
            v = 0
            for j in range(8):
                v |= dd[8 * k + j] << j
            row[k] = v
        if S < 8:
            v = 0
            for j in range(S):
                v |= dd[j] << j
            row[0] = v
    else:
        for k in range(row.shape[0]):
            row[k] = 0
        for s in range(S):
            if dd[s]:
                _put_bits(row, s * R, dd[s], R)


@njit(cache=True)
def viterbi_forward(x, labels, L, R, backptr, t0, metric):
    """Advance the path metrics over ``x``; backpointers go to rows t0.. of ``backptr``.

    ``metric`` is updated in place.  Returns the total amount subtracted by
    per-step renormalization so the true metric is ``metric + offset``.
    Ties go to the smallest d, i.e. the lowest register index.
    """
    S = metric.shape[0]
    B = 1 << R
    mask = S - 1
    new = np.empty(S)
    dd = np.empty(S, dtype=np.uint8)
    offset = 0.0
    for t in range(x.shape[0]):
        xt = x[t]
        if R == 1:
            # unrolled two-way compare, branch free
            for s in range(S):
                a = 2 * s
                e0 = xt - labels[a]
                e1 = xt - labels[a + 1]
                m0 = metric[a & mask] + e0 * e0
                m1 = metric[(a + 1) & mask] + e1 * e1
                c = m1 < m0
                new[s] = m1 if c else m0
                dd[s] = c
        else:
            for s in range(S):
                base = s << R
                e = xt - labels[base]
                best = metric[base & mask] + e * e
                bestd = 0
                for d in range(1, B):
                    reg = base | d
                    e = xt - labels[reg]
                    m = metric[reg & mask] + e * e
                    if m < best:
                        best = m
                        bestd = d
                new[s] = best
                dd[s] = bestd
        lowest = new.min()
        _pack_row(backptr[t0 + t], dd, R)
        for s in range(S):
            metric[s] = new[s] - lowest
        offset += lowest
    return offset


@njit(cache=True)
def viterbi_traceback(backptr, L, R, final_state, n):
    """Registers along the survivor ending in ``final_state``."""
    regs = np.empty(n, dtype=np.int64)
    mask = (1 << (L - R)) - 1
    s = final_state
    for t in range(n - 1, -1, -1):
        d = _get_bits(backptr[t], s * R, R)
        reg = (s << R) | d
        regs[t] = reg
        s = reg & mask
    return regs


@njit(cache=True)
def viterbi_cost(x, labels, L, R, state0):
    """Minimum total squared error only (no traceback)."""
    S = 1 << (L - R)
    B = 1 << R
    mask = S - 1
    metric = np.full(S, np.inf)
    metric[state0] = 0.0
    new = np.empty(S)
    offset = 0.0
    for t in range(x.shape[0]):
        xt = x[t]
        lowest = np.inf
        for s in range(S):
            base = s << R
            best = np.inf
            for d in range(B):
                reg = base | d
                e = xt - labels[reg]
                m = metric[reg & mask] + e * e
                if m < best:
                    best = m
            new[s] = best
            if best < lowest:
                lowest = best
        for s in range(S):
            metric[s] = new[s] - lowest
        offset += lowest
    return offset + metric.min()


@njit(cache=True)
def sweep_permutations(x, values, perms, L, R):
    """viterbi_cost for ``labels = values[perm]`` over every row of ``perms``."""
    out = np.empty(perms.shape[0])
    labels = np.empty(values.shape[0])
    for k in range(perms.shape[0]):
        for i in range(values.shape[0]):
            labels[i] = values[perms[k, i]]
        out[k] = viterbi_cost(x, labels, L, R, 0)
    return out


@njit(cache=True)
def exhaustive_search(x, labels, L, R, reg0):
    """Odometer enumeration of every symbol sequence; returns (best cost, best symbols).

    Partial costs are cached per depth so each increment only recomputes
    the suffix.  Sequences are visited in lexicographic order and only a
    strictly smaller cost replaces the incumbent.
    """
    n = x.shape[0]
    B = 1 << R
    top = L - R
    syms = np.zeros(n, dtype=np.int64)
    regs = np.empty(n + 1, dtype=np.int64)
    cost = np.empty(n + 1)
    regs[0] = reg0
    cost[0] = 0.0
    best = np.inf
    best_syms = syms.copy()
    k = 0
    while True:
        for t in range(k, n):
            reg = (syms[t] << top) | (regs[t] >> R)
            regs[t + 1] = reg
            e = x[t] - labels[reg]
            cost[t + 1] = cost[t] + e * e
        if cost[n] < best:
            best = cost[n]
            best_syms[:] = syms
        # increment the odometer, least significant digit last
        k = n - 1
        while k >= 0 and syms[k] == B - 1:
            syms[k] = 0
            k -= 1
        if k < 0:
            break
        syms[k] += 1
    return best, best_syms


@njit(cache=True)
def _mapping_step(x, p, beta, y, q, y_out, q_out):
    """One mapping update; returns the free energy -sum p log sum q exp(-beta d) at the input."""
    k = y.shape[0]
    w = np.empty(k)
    logq = np.empty(k)
    for j in range(k):
        logq[j] = math.log(q[j])
        q_out[j] = 0.0
        y_out[j] = 0.0
    energy = 0.0
    for i in range(x.shape[0]):
        xi = x[i]
        m = -np.inf
        for j in range(k):
            diff = xi - y[j]
            v = logq[j] - beta * diff * diff
            w[j] = v
            if v > m:
                m = v
        z = 0.0
        for j in range(k):
            e = math.exp(w[j] - m)
            w[j] = e
            z += e
        energy -= p[i] * (m + math.log(z))
        scale = p[i] / z
        for j in range(k):
            pw = w[j] * scale
            q_out[j] += pw
            y_out[j] += pw * xi
    for j in range(k):
        if q_out[j] > 0.0:
            y_out[j] /= q_out[j]
        else:
            # mass underflowed; park the atom so pruning can drop it
            y_out[j] = y[j]
            q_out[j] = 1e-300
    return energy


@njit(cache=True)
def mapping_squarem(x, p, beta, y, q, max_iter, tol):
    """Mapping updates with squared extrapolation (SQUAREM) on (log q, y), until the step is below ``tol``.

    Each cycle takes two plain updates, extrapolates along them and keeps
    the extrapolated point only if it does not raise the free energy.
    Updates q, y in place; returns the number of plain updates spent.
    """
    k = y.shape[0]
    y1 = np.empty(k)
    q1 = np.empty(k)
    y2 = np.empty(k)
    q2 = np.empty(k)
    y3 = np.empty(k)
    q3 = np.empty(k)
    ye = np.empty(k)
    qe = np.empty(k)
    spent = 0
    while spent < max_iter:
        e0 = _mapping_step(x, p, beta, y, q, y1, q1)
        _mapping_step(x, p, beta, y1, q1, y2, q2)
        spent += 2
        delta = 0.0
        for j in range(k):
            delta = max(delta, abs(q2[j] - q1[j]), abs(y2[j] - y1[j]))
        if delta < tol:
            for j in range(k):
                y[j] = y2[j]
                q[j] = q2[j]
            break
        rr = 0.0
        vv = 0.0
        for j in range(k):
            r1 = math.log(q1[j]) - math.log(q[j])
            v1 = math.log(q2[j]) - 2.0 * math.log(q1[j]) + math.log(q[j])
            r2 = y1[j] - y[j]
            v2 = y2[j] - 2.0 * y1[j] + y[j]
            rr += r1 * r1 + r2 * r2
            vv += v1 * v1 + v2 * v2
        alpha = -1.0
        if vv > 0.0:
            alpha = min(-1.0, -math.sqrt(rr / vv))
        total = 0.0
        for j in range(k):
            lq0 = math.log(q[j])
            r1 = math.log(q1[j]) - lq0
            v1 = math.log(q2[j]) - 2.0 * math.log(q1[j]) + lq0
            qe[j] = math.exp(lq0 - 2.0 * alpha * r1 + alpha * alpha * v1)
            total += qe[j]
            ye[j] = y[j] - 2.0 * alpha * (y1[j] - y[j]) + alpha * alpha * (y2[j] - 2.0 * y1[j] + y[j])
        ok = total > 0.0 and math.isfinite(total)
        if ok:
            for j in range(k):
                qe[j] /= total
                if not (qe[j] > 0.0) or not math.isfinite(ye[j]):
                    ok = False
        if ok:
            # stabilizing update from the extrapolated point
            ee = _mapping_step(x, p, beta, ye, qe, y3, q3)
            spent += 1
            ok = ee <= e0
        if ok:
            for j in range(k):
                y[j] = y3[j]
                q[j] = q3[j]
        else:
            for j in range(k):
                y[j] = y2[j]
                q[j] = q2[j]
    return spent
