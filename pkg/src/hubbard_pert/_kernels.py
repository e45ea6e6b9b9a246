"""Compiled inner loops for the momentum-space coefficient sums.

The driver in `perturb` enumerates free momentum index tuples; everything
here works on flat int64 digit arrays so the kernels stay generic in the
lattice dimension.  Block b fixes the first free momentum; blocks are
written to independent output slots and reduced deterministically by the
caller, so results do not depend on the thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

#: rates with |a| * beta below this are folded into the polynomial part
MERGE_TOL = 1e-8


@njit(cache=True)
def _nested_integral(n, rates, beta, tol, a, p, na, np_):
    """Exact nested integral int_0^beta dx1 e^{x1 r1} ... int_0^{x_{n-1}} dxn e^{xn rn}.

    Symbolic recursion on a sum of c * s^m * e^{a s} terms held in fixed
    scratch arrays (a, p) and (na, np_), each shaped (n+1,) / (n+1, n+1).
    Slot 0 always carries the rate-0 (polynomial) part.
    """
    t_count = 1
    a[0] = 0.0
    for i in range(n + 1):
        for q in range(n + 1):
            p[i, q] = 0.0
    p[0, 0] = 1.0

    for level in range(n - 1, -1, -1):
        r = rates[level]
        for t in range(t_count):
            a[t] += r
        for i in range(n + 1):
            na[i] = 0.0
            for q in range(n + 1):
                np_[i, q] = 0.0
        new_count = 1  # slot 0 = rate 0
        for t in range(t_count):
            aa = a[t]
            if abs(aa) * beta < tol:
                aa = 0.0
            if aa == 0.0:
                for m in range(n):
                    c = p[t, m]
                    if c != 0.0:
                        np_[0, m + 1] += c / (m + 1)
            else:
                slot = -1
                for s in range(1, new_count):
                    if na[s] == aa:
                        slot = s
                        break
                if slot < 0:
                    slot = new_count
                    na[slot] = aa
                    new_count += 1
                for m in range(n):
                    c = p[t, m]
                    if c == 0.0:
                        continue
                    fact = 1.0
                    apow = aa
                    sign = 1.0
                    last = 0.0
                    for q in range(m + 1):
                        last = c * sign * fact / apow
                        np_[slot, m - q] += last
                        fact *= m - q
                        apow *= aa
                        sign = -sign
                    np_[0, 0] -= last
        t_count = new_count
        for t in range(t_count):
            a[t] = na[t]
            for q in range(n + 1):
                p[t, q] = np_[t, q]

    total = 0.0
    for t in range(t_count):
        poly = 0.0
        bpow = 1.0
        for m in range(n + 1):
            poly += p[t, m] * bpow
            bpow *= beta
        if a[t] == 0.0:
            total += poly
        else:
            total += np.exp(a[t] * beta) * poly
    return total


@njit(cache=True)
def _nested_integral_series(n, nodes, beta, h):
    """Divided difference of e^{beta z} at the cumulative rate nodes.

    Valid whenever max |node| * beta <= 1 (clustered rates); sums
    beta^{n+k} h_k(nodes) / (n+k)! with h_k the complete homogeneous
    symmetric polynomials, built in place in the scratch array h.
    No exponentials and no small-denominator cancellation.
    """
    for j in range(n + 1):
        h[j] = 1.0
    coef = beta**n
    for q in range(2, n + 1):
        coef /= q
    total = coef
    for k in range(1, 40):
        coef *= beta / (n + k)
        h[0] *= nodes[0]
        for j in range(1, n + 1):
            h[j] = h[j - 1] + nodes[j] * h[j]
        term = coef * h[n]
        total += term
        if abs(term) <= 1e-18 * abs(total):
            break
    return total


@njit(cache=True)
def nested_integral_value(n, rates, beta):
    """Standalone wrapper around the fixed-array nested integral."""
    a = np.zeros(n + 1)
    p = np.zeros((n + 1, n + 1))
    na = np.zeros(n + 1)
    np_ = np.zeros((n + 1, n + 1))
    return _nested_integral(n, rates, beta, MERGE_TOL, a, p, na, np_)


@njit(cache=True)
def nested_integral_series_value(n, rates, beta):
    """Standalone wrapper around the series path (caller checks validity)."""
    nodes = np.zeros(n + 1)
    for m in range(n):
        nodes[m + 1] = nodes[m] + rates[m]
    h = np.zeros(n + 1)
    return _nested_integral_series(n, nodes, beta, h)


@njit(cache=True, parallel=True)
def g_sum_blocks(
    L,
    d,
    n,
    free_ids,
    bound_ids,
    bound_coef,
    check_rows,
    piinv,
    tauinv,
    j,
    etas,
    kgt,
    pgt,
    energy,
    occ_le,
    occ_gt,
    costab,
    sx1,
    sx2,
    sy1,
    sy2,
    beta,
    out,
):
    """Momentum sum for one external-vertex index j of the g_n derivative.

    free_ids / bound_ids partition the 2n momentum variables (k_l = l,
    p_l = n + l); bound digits are integer combinations of the free ones
    mod L.  check_rows holds raw delta constraints for the degenerate
    permutation pairs where elimination is rank-deficient.  out[b] receives
    the partial sum of block b (first free momentum fixed to flat index b).
    """
    m_sites = L**d
    nfree = free_ids.shape[0]
    nbound = bound_ids.shape[0]
    ncheck = check_rows.shape[0]
    neta = etas.shape[0]
    nvar = 2 * n
    inner_total = m_sites ** (nfree - 1)

    for b in prange(m_sites):
        dig = np.zeros((nvar, d), dtype=np.int64)
        midx = np.zeros(nvar, dtype=np.int64)
        e_k = np.zeros(n)
        e_p = np.zeros(n)
        e_t = np.zeros(n)
        rts = np.zeros(n)
        nodes = np.zeros(n + 1)
        hbuf = np.zeros(n + 1)
        abuf = np.zeros(n + 1)
        pbuf = np.zeros((n + 1, n + 1))
        nabuf = np.zeros(n + 1)
        npbuf = np.zeros((n + 1, n + 1))
        odo = np.zeros((nfree - 1) * d, dtype=np.int64)

        div = 1
        for i in range(d - 1, -1, -1):
            dig[free_ids[0], i] = (b // div) % L
            div *= L

        total = 0.0
        for _ in range(inner_total):
            for f in range(1, nfree):
                for i in range(d):
                    dig[free_ids[f], i] = odo[(f - 1) * d + i]
            for bb in range(nbound):
                vid = bound_ids[bb]
                for i in range(d):
                    s = 0
                    for f in range(nfree):
                        s += bound_coef[bb, f] * dig[free_ids[f], i]
                    dig[vid, i] = s % L
            ok = True
            for cc in range(ncheck):
                for i in range(d):
                    s = 0
                    for v in range(nvar):
                        s += check_rows[cc, v] * dig[v, i]
                    if s % L != 0:
                        ok = False
                        break
                if not ok:
                    break

            if ok:
                for v in range(nvar):
                    s = 0
                    for i in range(d):
                        s = s * L + dig[v, i]
                    midx[v] = s
                for l in range(n):
                    e_k[l] = energy[midx[l]]
                    e_p[l] = energy[midx[n + l]]
                for l in range(n):
                    e_t[l] = (
                        e_k[l]
                        + e_p[l]
                        - e_k[piinv[l]]
                        - e_p[tauinv[l]]
                    )
                r1 = 0
                r2 = 0
                for i in range(d):
                    r1 += (
                        dig[j, i] * sx1[i]
                        + dig[n + j, i] * sx2[i]
                        - dig[piinv[j], i] * sy1[i]
                        - dig[n + tauinv[j], i] * sy2[i]
                    )
                    r2 += (
                        dig[j, i] * sy1[i]
                        + dig[n + j, i] * sy2[i]
                        - dig[piinv[j], i] * sx1[i]
                        - dig[n + tauinv[j], i] * sx2[i]
                    )
                cosfac = costab[r1 % L] + costab[r2 % L]

                acc = 0.0
                for e in range(neta):
                    spread = 0.0
                    nodes[0] = 0.0
                    for m in range(n):
                        r = e_t[etas[e, m]]
                        rts[m] = r
                        nodes[m + 1] = nodes[m] + r
                        if abs(nodes[m + 1]) > spread:
                            spread = abs(nodes[m + 1])
                    if spread * beta <= 1.0:
                        val = _nested_integral_series(n, nodes, beta, hbuf)
                    else:
                        val = _nested_integral(
                            n, rts, beta, MERGE_TOL, abuf, pbuf, nabuf, npbuf
                        )
                    occ = 1.0
                    for l in range(n):
                        ik = midx[l]
                        ip = midx[n + l]
                        occ *= occ_gt[ik] if kgt[e, l] else occ_le[ik]
                        occ *= occ_gt[ip] if pgt[e, l] else occ_le[ip]
                    acc += val * occ
                total += cosfac * acc

            pos = 0
            while pos < (nfree - 1) * d:
                odo[pos] += 1
                if odo[pos] < L:
                    break
                odo[pos] = 0
                pos += 1
        out[b] = total
