"""Independent reference implementations used to validate the library.

Nothing here shares code paths with the implementations under test beyond
the covariance kernel itself: the g-derivative oracles integrate in the
time domain by Gauss-Legendre quadrature on ordered simplices, and the
momentum brute force enumerates every tuple with complex phases and
explicit delta filtering instead of constraint elimination.
"""

from itertools import permutations, product

import numpy as np

from hubbard_pert.model import site_list
from hubbard_pert.perturb import nested_exp_integral


def kernel_vec(prop, diff, dt):
    """Covariance kernel for one site difference over an array of time
    differences in [-beta, beta)."""
    p = prop.params
    diff = np.asarray(diff) % p.L
    phases = (prop._kidx @ diff) * (2.0 * np.pi / p.L)
    beta = p.beta
    dt = np.asarray(dt, dtype=float)
    pos = dt >= 0
    out = np.zeros(dt.shape)
    for e, ph in zip(prop.energies, phases):
        if e >= 0:
            gpos = np.exp((dt - beta) * e) / (1.0 + np.exp(-beta * e))
            gneg = -np.exp(dt * e) / (1.0 + np.exp(-beta * e))
        else:
            gpos = np.exp(dt * e) / (1.0 + np.exp(beta * e))
            gneg = -np.exp((dt + beta) * e) / (1.0 + np.exp(beta * e))
        out = out + np.cos(ph) * np.where(pos, gpos, gneg)
    return out / p.n_sites


def g_time_quadrature(prop, sq, n, pi, tau, order=14):
    """Lambda-derivative of g_n by direct time-domain quadrature.

    Sums over the external-vertex position, the two site assignments of
    the external quadruple, and the internal Hubbard sites; the time box
    is split into ordered simplices where the integrand is smooth and each
    simplex is integrated with a tensor Gauss-Legendre rule.
    """
    p = prop.params
    beta = p.beta
    sites = [s.coords for s in site_list(p)]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    v = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    grids = np.meshgrid(*([v] * n), indexing="ij")
    wgt = np.ones(grids[0].shape)
    for wg in np.meshgrid(*([w] * n), indexing="ij"):
        wgt = wgt * wg
    x1, x2, y1, y2 = sq.x1.coords, sq.x2.coords, sq.y1.coords, sq.y2.coords
    total = 0.0
    for eta in permutations(range(n)):
        u = [None] * n
        jac = np.full(grids[0].shape, beta)
        u[0] = beta * grids[0]
        for m in range(1, n):
            jac = jac * u[m - 1]
            u[m] = u[m - 1] * grids[m]
        x = [None] * n
        for m, lab in enumerate(eta):
            x[lab] = u[m]
        for jstar in range(n):
            for ext in (
                (x1, x2, y1, y2),
                (y1, y2, x1, x2),
            ):
                for zs in product(range(len(sites)), repeat=n - 1):
                    vx1 = [None] * n
                    vx2 = [None] * n
                    vy1 = [None] * n
                    vy2 = [None] * n
                    zi = iter(zs)
                    for l in range(n):
                        if l == jstar:
                            vx1[l], vx2[l], vy1[l], vy2[l] = ext
                        else:
                            z = sites[next(zi)]
                            vx1[l] = vx2[l] = vy1[l] = vy2[l] = z
                    integ = np.ones(grids[0].shape)
                    for jj in range(n):
                        dup = tuple(
                            b - a for a, b in zip(vx1[jj], vy1[pi[jj]])
                        )
                        ddn = tuple(
                            b - a for a, b in zip(vx2[jj], vy2[tau[jj]])
                        )
                        integ = integ * kernel_vec(prop, dup, x[jj] - x[pi[jj]])
                        integ = integ * kernel_vec(prop, ddn, x[jj] - x[tau[jj]])
                    total += float(np.sum(integ * jac * wgt))
    return ((-1.0) ** n) * total


def delta_solutions_bruteforce(L, d, n, pi, tau, j):
    """All momentum index tuples satisfying the l != j delta constraints,
    by filtering the full L^{2nd} enumeration."""
    piinv = [0] * n
    tauinv = [0] * n
    for i, val in enumerate(pi):
        piinv[val] = i
    for i, val in enumerate(tau):
        tauinv[val] = i
    momenta = list(product(range(L), repeat=d))
    sols = []
    for tup in product(range(len(momenta)), repeat=2 * n):
        ks = [momenta[i] for i in tup[:n]]
        ps = [momenta[i] for i in tup[n:]]
        ok = True
        for l in range(n):
            if l == j:
                continue
            for i in range(d):
                s = ks[l][i] + ps[l][i] - ks[piinv[l]][i] - ps[tauinv[l]][i]
                if s % L != 0:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            sols.append(tup)
    return sols


def g_momentum_bruteforce(prop, sq, n, pi, tau):
    """The momentum-space formula evaluated literally with complex phases
    over every delta-passing tuple; returns (real part, |imag part|)."""
    p = prop.params
    piinv = [0] * n
    tauinv = [0] * n
    for i, val in enumerate(pi):
        piinv[val] = i
    for i, val in enumerate(tau):
        tauinv[val] = i
    momenta = list(product(range(p.L), repeat=p.d))
    energy = prop.energies
    occ_le = prop.occ_plus
    occ_gt = -prop.occ_minus
    x1, x2, y1, y2 = (
        np.array(sq.x1.coords),
        np.array(sq.x2.coords),
        np.array(sq.y1.coords),
        np.array(sq.y2.coords),
    )
    total = 0.0 + 0.0j
    for j in range(n):
        for tup in delta_solutions_bruteforce(p.L, p.d, n, pi, tau, j):
            ks = [np.array(momenta[i]) for i in tup[:n]]
            ps = [np.array(momenta[i]) for i in tup[n:]]
            kflat = list(tup[:n])
            pflat = list(tup[n:])
            ang1 = (
                ks[j] @ x1
                + ps[j] @ x2
                - ks[piinv[j]] @ y1
                - ps[tauinv[j]] @ y2
            ) * (2.0 * np.pi / p.L)
            ang2 = (
                ks[j] @ y1
                + ps[j] @ y2
                - ks[piinv[j]] @ x1
                - ps[tauinv[j]] @ x2
            ) * (2.0 * np.pi / p.L)
            cosfac = np.exp(1j * ang1) / 2 + np.exp(-1j * ang1) / 2
            cosfac = cosfac + np.exp(1j * ang2) / 2 + np.exp(-1j * ang2) / 2
            et = [
                energy[kflat[l]]
                + energy[pflat[l]]
                - energy[kflat[piinv[l]]]
                - energy[pflat[tauinv[l]]]
                for l in range(n)
            ]
            acc = 0.0
            for eta in permutations(range(n)):
                pos = [0] * n
                for m, lab in enumerate(eta):
                    pos[lab] = m
                val = nested_exp_integral([et[lab] for lab in eta], p.beta)
                occ = 1.0
                for l in range(n):
                    kb = pi[l] != l and pos[pi[l]] < pos[l]
                    pb = tau[l] != l and pos[tau[l]] < pos[l]
                    occ *= occ_gt[kflat[l]] if kb else occ_le[kflat[l]]
                    occ *= occ_gt[pflat[l]] if pb else occ_le[pflat[l]]
                acc += val * occ
            total += cosfac * acc
    total *= (-1.0) ** n / p.n_sites ** (n + 1)
    return total.real, abs(total.imag)


def nested_integral_gl(rates, beta, order=24):
    """Nested exponential integral by Gauss-Legendre on the ordered simplex."""
    n = len(rates)
    nodes, weights = np.polynomial.legendre.leggauss(order)
    v = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    grids = np.meshgrid(*([v] * n), indexing="ij")
    wgt = np.ones(grids[0].shape)
    for wg in np.meshgrid(*([w] * n), indexing="ij"):
        wgt = wgt * wg
    u = [None] * n
    jac = np.full(grids[0].shape, beta)
    u[0] = beta * grids[0]
    for m in range(1, n):
        jac = jac * u[m - 1]
        u[m] = u[m - 1] * grids[m]
    integ = np.ones(grids[0].shape)
    for m in range(n):
        integ = integ * np.exp(u[m] * rates[m])
    return float(np.sum(integ * jac * wgt))
