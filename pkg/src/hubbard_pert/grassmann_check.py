"""Discretized partition function evaluated as its determinant series.

P_h is the Riemann-sum analog of the temperature-ordered expansion of
Tr e^{-beta H}/Tr e^{-beta H0}: the n-th term sums (-U/h)^n / n! over n
equal-time on-site vertices (site, time slot on [0, beta)_h) of the
2n x 2n covariance determinant.  Its h -> infinity limit is the exact
partition ratio, which the convergence study verifies at first order in
1/h against the Fock-space value.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .fock_oracle import FockBasis, build_H, log_partition
from .model import ModelParams, site_list
from .propagator import Propagator, _beta_h_steps


class CostGuardError(RuntimeError):
    """Vertex-slot count too large for the determinant series."""


class ConvergenceError(RuntimeError):
    """P_h errors do not shrink at the expected first-order rate."""


MAX_SLOTS = 64
MAX_ORDER = 4


@dataclass(frozen=True)
class DiscretizedSeries:
    """Per-order contributions to P_h at one discretization."""

    h: float
    n_max: int
    terms: tuple[float, ...]  # term n is the U^n contribution

    @property
    def value(self) -> float:
        return 1.0 + sum(self.terms)


def _slot_kernel_matrix(prop: Propagator, h: float) -> np.ndarray:
    """Spin-up covariance over all (site, time slot) pairs."""
    p = prop.params
    bh = _beta_h_steps(p, h)
    sites = site_list(p)
    slots = [(s.coords, t) for s in sites for t in range(bh)]
    kern_cache = {}
    n = len(slots)
    mat = np.zeros((n, n))
    for a, (ca, ta) in enumerate(slots):
        for b, (cb, tb) in enumerate(slots):
            key = (tuple((x2 - x1) % p.L for x1, x2 in zip(ca, cb)), ta - tb)
            if key not in kern_cache:
                kern_cache[key] = prop.kernel(key[0], key[1] / h)
            mat[a, b] = kern_cache[key]
    return mat


def P_h_series(
    prop: Propagator, u: float, h: float, n_max: int
) -> DiscretizedSeries:
    """Evaluate the determinant series for P_h, term by term."""
    p = prop.params
    bh = _beta_h_steps(p, h)
    n_slots = p.n_sites * bh
    if n_slots > MAX_SLOTS:
        raise CostGuardError(
            f"{n_slots} vertex slots exceed the cap {MAX_SLOTS}"
        )
    if n_max > MAX_ORDER:
        raise CostGuardError(f"n_max={n_max} exceeds the cap {MAX_ORDER}")
    kern = _slot_kernel_matrix(prop, h)
    terms = []
    fact = 1.0
    for n in range(1, n_max + 1):
        fact *= n
        # batched 2n x 2n determinants over all slot tuples
        dets_sum = 0.0
        chunk = []
        chunk_cap = max(1, (1 << 22) // (4 * n * n))
        for tup in product(range(n_slots), repeat=n):
            chunk.append(tup)
            if len(chunk) >= chunk_cap:
                dets_sum += _det_batch(kern, chunk, n)
                chunk = []
        if chunk:
            dets_sum += _det_batch(kern, chunk, n)
        terms.append((-u / h) ** n / fact * dets_sum)
    return DiscretizedSeries(h, n_max, tuple(terms))


def _det_batch(kern: np.ndarray, tuples, n: int) -> float:
    idx = np.asarray(tuples, dtype=np.intp)
    b = idx.shape[0]
    sub = kern[idx[:, :, None], idx[:, None, :]]  # (b, n, n) spin-up block
    mats = np.zeros((b, 2 * n, 2 * n))
    mats[:, 0::2, 0::2] = sub
    mats[:, 1::2, 1::2] = sub
    return float(np.sum(np.linalg.det(mats)))


def P_h_truncated(prop: Propagator, u: float, h: float, n_max: int) -> float:
    """1 + the first n_max determinant-series terms of P_h."""
    return P_h_series(prop, u, h, n_max).value


def partition_ratio_exact(basis: FockBasis, params: ModelParams, u: float) -> float:
    """Tr e^{-beta H}/Tr e^{-beta H0} from exact diagonalization."""
    zu = log_partition(build_H(basis, params, u), params.beta)
    z0 = log_partition(build_H(basis, params, 0.0), params.beta)
    return float(np.exp(zu - z0))


def convergence_study(
    prop: Propagator,
    basis: FockBasis,
    params: ModelParams,
    u: float,
    h_list,
    n_max: int,
):
    """Rows (h, P_h, |P_h - exact|); checks first-order shrinkage in 1/h.

    Raises ConvergenceError when the error fails to decrease or the
    decrement ratio between consecutive h-doublings leaves [1.5, 2.5]
    (a plateau signals that the n_max truncation dominates).
    """
    exact = partition_ratio_exact(basis, params, u)
    rows = []
    for h in h_list:
        ph = P_h_truncated(prop, u, h, n_max)
        rows.append((h, ph, abs(ph - exact)))
    if u != 0.0:
        for (h1, _, e1), (h2, _, e2) in zip(rows, rows[1:]):
            if not e2 < e1:
                raise ConvergenceError(
                    f"error did not decrease from h={h1} to h={h2} "
                    "(truncation-dominated plateau?)"
                )
            if abs(h2 / h1 - 2.0) < 1e-9:
                ratio = e1 / e2
                if not 1.5 <= ratio <= 2.5:
                    raise ConvergenceError(
                        f"error ratio {ratio:.3f} between h={h1} and h={h2} "
                        "outside [1.5, 2.5]"
                    )
    return rows
