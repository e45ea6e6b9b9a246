"""Free covariance of the lattice model and its discretizations.

The two-point kernel is evaluated momentum by momentum through

    C(x sigma tx, y tau ty) = delta_{sigma,tau} / L^d
        * sum_k e^{i<k, y-x>} g_k(tx - ty),

    g_k(t) = e^{t E_k} (1_{t>=0}/(1+e^{beta E_k}) - 1_{t<0}/(1+e^{-beta E_k})),

with g_k the anti-periodic extension to [-beta, beta).  Occupation factors
and the time exponential are combined into products of factors bounded by 1
so the kernel never overflows, whatever beta*E is.

The module also builds the full space-spin-time covariance matrix on the
grid [0, beta)_h, diagonalizes it in the Matsubara basis, evaluates its
determinant, computes the decay constants D_h and D, and samples the
Gram-weighted determinant bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    SPIN_DOWN,
    SPIN_UP,
    SPINS,
    ModelParams,
    Momentum,
    Site,
    as_site,
    dispersion_table,
    momentum_grid,
    site_list,
)


class DiagonalizationError(RuntimeError):
    """Matsubara conjugation left an off-diagonal residue above tolerance."""


class QuadratureError(RuntimeError):
    """Adaptive integration failed to converge within the panel cap."""


def _stable_g(e: float, beta: float, t: float) -> float:
    """g_k(t) for t in [-beta, beta), as a product of bounded factors."""
    if t >= 0.0:
        if e >= 0.0:
            return math.exp((t - beta) * e) / (1.0 + math.exp(-beta * e))
        return math.exp(t * e) / (1.0 + math.exp(beta * e))
    if e >= 0.0:
        return -math.exp(t * e) / (1.0 + math.exp(-beta * e))
    return -math.exp((t + beta) * e) / (1.0 + math.exp(beta * e))


class Propagator:
    """Cached dispersion table plus evaluators for the free covariance.

    Immutable after construction; shareable across threads.
    """

    def __init__(self, params: ModelParams):
        self.params = params
        self.momenta = momentum_grid(params)
        self.energies = dispersion_table(params)
        # occupation factors 1/(1+e^{+-beta E}), evaluated via the stable
        # logistic branch; the two tables sum to 1 entrywise
        be = params.beta * self.energies
        z = np.exp(-np.abs(be))
        self.occ_plus = np.where(be >= 0, z / (1.0 + z), 1.0 / (1.0 + z))
        self.occ_minus = 1.0 - self.occ_plus
        # integer momentum index vectors, row-major, shape (L^d, d)
        self._kidx = np.array(
            [m.index for m in self.momenta], dtype=np.int64
        ).reshape(len(self.momenta), params.d)
        self._phase_cache: np.ndarray | None = None

    def energy(self, k: Momentum) -> float:
        idx = 0
        for c in k.index:
            idx = idx * self.params.L + (c % self.params.L)
        return float(self.energies[idx])

    def kernel(self, site_diff, dt: float) -> float:
        """Spin-diagonal covariance for site difference y-x and time
        difference tx-ty, with dt in [-beta, beta)."""
        p = self.params
        if not -p.beta <= dt < p.beta:
            raise ValueError(f"time difference {dt} outside [-beta, beta)")
        diff = np.asarray([c % p.L for c in site_diff], dtype=np.int64)
        phases = 2.0 * np.pi * (self._kidx @ diff) / p.L
        g = np.array([_stable_g(e, p.beta, dt) for e in self.energies])
        total = np.sum(np.exp(1j * phases) * g)
        value = total / p.n_sites
        if abs(value.imag) >= 1e-12:
            raise AssertionError(
                f"covariance imaginary part {value.imag} not negligible"
            )
        return float(value.real)

    def covariance(self, x, sigma: int, taux: float,
                   y, tau_spin: int, tauy: float) -> float:
        """Covariance C(x sigma taux, y tau tauy) with times in [0, beta)."""
        p = self.params
        if sigma not in SPINS or tau_spin not in SPINS:
            raise ValueError("spin must be 0 (up) or 1 (down)")
        for t in (taux, tauy):
            if not 0.0 <= t < p.beta:
                raise ValueError(f"time {t} outside [0, beta)")
        if sigma != tau_spin:
            return 0.0
        xs = as_site(p, x)
        ys = as_site(p, y)
        diff = tuple(b - a for a, b in zip(xs.coords, ys.coords))
        return self.kernel(diff, taux - tauy)

    def covariance_antiperiodicity_check(
        self, x, sigma: int, dtau: float
    ) -> tuple[float, float]:
        """Return (g(dtau), -g(dtau + beta)) through the kernel for
        dtau in (-beta, 0); the caller asserts equality."""
        p = self.params
        if not -p.beta < dtau < 0.0:
            raise ValueError("dtau must lie in (-beta, 0)")
        xs = as_site(p, x)
        if sigma not in SPINS:
            raise ValueError("spin must be 0 (up) or 1 (down)")
        diff = tuple(-c for c in xs.coords)
        return self.kernel(diff, dtau), -self.kernel(diff, dtau + p.beta)


@dataclass(frozen=True)
class DiscreteCovariance:
    """Covariance matrix on Gamma x {up,down} x [0,beta)_h.

    `index` lists the row labels (site_flat, spin, time_step) in the build
    order; time steps are integers, the physical time is step/h.
    """

    params: ModelParams
    h: float
    bh: int
    entries: np.ndarray
    index: tuple[tuple[int, int, int], ...]

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _beta_h_steps(params: ModelParams, h: float) -> int:
    bh = params.beta * h
    steps = round(bh)
    if abs(bh - steps) > 1e-9 or steps < 2 or steps % 2 != 0:
        raise ValueError(f"beta*h must be an even integer >= 2, got {bh}")
    return int(steps)


def build_discrete_covariance(prop: Propagator, h: float) -> DiscreteCovariance:
    """Assemble the N x N matrix C_h, N = 2 L^d beta h."""
    p = prop.params
    bh = _beta_h_steps(p, h)
    sites = site_list(p)
    labels = [
        (i, s, t)
        for i, _ in enumerate(sites)
        for s in SPINS
        for t in range(bh)
    ]
    n = len(labels)
    # cache kernel over (site difference, time-step difference)
    coords = [s.coords for s in sites]
    kern = {}
    for i, ci in enumerate(coords):
        for jdx, cj in enumerate(coords):
            diff = tuple(b - a for a, b in zip(ci, cj))
            key = tuple(c % p.L for c in diff)
            if key not in kern:
                kern[key] = np.array(
                    [prop.kernel(key, dt / h) for dt in range(-bh, bh)]
                )
    mat = np.zeros((n, n))
    for a, (ia, sa, ta) in enumerate(labels):
        for b, (ib, sb, tb) in enumerate(labels):
            if sa != sb:
                continue
            key = tuple(
                (cb - ca) % p.L for ca, cb in zip(coords[ia], coords[ib])
            )
            mat[a, b] = kern[key][(ta - tb) + bh]
    return DiscreteCovariance(p, h, bh, mat, tuple(labels))


@dataclass(frozen=True)
class MatsubaraSet:
    """Fermionic frequencies pi(2m+1)/beta with -pi h < omega < pi h."""

    frequencies: tuple[float, ...]

    @classmethod
    def build(cls, params: ModelParams, h: float) -> "MatsubaraSet":
        bh = _beta_h_steps(params, h)
        freqs = [
            math.pi * (2 * m + 1) / params.beta
            for m in range(-bh // 2, bh // 2)
        ]
        return cls(tuple(freqs))


def matsubara_diagonalize(dc: DiscreteCovariance, tol: float = 1e-8):
    """Eigenvalues 1/(1 - e^{-i omega/h + E_k/h}) of C_h, verified against
    the explicit plane-wave x Matsubara-phase unitary conjugation."""
    p = dc.params
    h = dc.h
    prop = Propagator(p)
    ms = MatsubaraSet.build(p, h)
    sites = site_list(p)
    n = dc.dim

    # row labels of Y: (k, spin, omega), column labels as in dc.index
    kvecs = [m.value for m in momentum_grid(p)]
    rows = [
        (ki, s, w)
        for ki in range(len(kvecs))
        for s in SPINS
        for w in ms.frequencies
    ]
    y = np.zeros((n, n), dtype=complex)
    norm = 1.0 / math.sqrt(dc.bh * p.n_sites)
    coords = np.array([s.coords for s in sites], dtype=float)
    for r, (ki, s, w) in enumerate(rows):
        for c, (si, sc, tstep) in enumerate(dc.index):
            if s != sc:
                continue
            phase = kvecs[ki] @ coords[si] - w * (tstep / h)
            y[r, c] = norm * np.exp(1j * phase)

    unit_residual = np.max(np.abs(y @ y.conj().T - np.eye(n)))
    if unit_residual >= 1e-12:
        raise DiagonalizationError(
            f"Y not unitary: residual {unit_residual}"
        )
    conj = y @ dc.entries @ y.conj().T
    eig = np.array(
        [
            1.0 / (1.0 - np.exp(-1j * w / h + prop.energies[ki] / h))
            for (ki, s, w) in rows
        ]
    )
    off = conj - np.diag(np.diag(conj))
    off_residual = np.max(np.abs(off))
    diag_residual = np.max(np.abs(np.diag(conj) - eig))
    if off_residual >= tol or diag_residual >= tol:
        raise DiagonalizationError(
            f"diagonalization residuals off={off_residual} diag={diag_residual}"
        )
    return eig


def det_covariance(dc: DiscreteCovariance) -> float:
    """det C_h by LU; equals prod_k (1 + e^{beta E_k})^{-2}, h-independent."""
    return float(np.linalg.det(dc.entries))


def det_covariance_closed(params: ModelParams) -> float:
    """The closed product formula prod_k (1 + e^{beta E_k})^{-2}."""
    e = dispersion_table(params)
    return float(np.prod(1.0 / (1.0 + np.exp(params.beta * e)) ** 2))


def decay_Dh(prop: Propagator, h: float) -> float:
    """L^1-norm (1/h) sum_{x in Gamma} sum_{t in [-beta,beta)_h} |C(x up t, 0 up 0)|."""
    p = prop.params
    bh = _beta_h_steps(p, h)
    total = 0.0
    for s in site_list(p):
        diff = tuple(-c for c in s.coords)
        for step in range(-bh, bh):
            total += abs(prop.kernel(diff, step / h))
    return total / h


def _space_sum_abs(prop: Propagator, t: float) -> float:
    """sum_x |C(x up t, 0 up 0)|, vectorized over the whole lattice."""
    p = prop.params
    if prop._phase_cache is None:
        coords = np.array([s.coords for s in site_list(p)], dtype=np.int64)
        phases = 2.0 * np.pi * ((-coords) @ prop._kidx.T % p.L) / p.L
        prop._phase_cache = np.exp(1j * phases)  # (site, k)
    g = np.array([_stable_g(e, p.beta, t) for e in prop.energies])
    vals = (prop._phase_cache @ g) / p.n_sites
    if np.max(np.abs(vals.imag)) >= 1e-12:
        raise AssertionError("covariance imaginary part not negligible")
    return float(np.sum(np.abs(vals.real)))


def _adaptive_simpson(f, a, b, rel_tol, max_depth):
    fa, fm, fb = f(a), f((a + b) / 2), f(b)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, depth):
        m = (a + b) / 2
        lm, rm = (a + m) / 2, (m + b) / 2
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth <= 0:
            raise QuadratureError("adaptive Simpson hit the subdivision cap")
        delta = left + right - whole
        if abs(delta) <= 15 * rel_tol * max(abs(left + right), 1e-300):
            return left + right + delta / 15
        return recurse(a, m, fa, flm, fm, left, depth - 1) + recurse(
            m, b, fm, frm, fb, right, depth - 1
        )

    return recurse(a, b, fa, fm, fb, whole, max_depth)


def decay_D(prop: Propagator, rel_tol: float) -> float:
    """Decay constant D = int_{-beta}^{beta} dt sum_x |C(x up t, 0 up 0)|.

    Integrates adaptively on (-beta, 0) and (0, beta) separately; t=0 is
    the kernel's only jump.  Subdivision cap 2^20 panels per half.
    """
    if not rel_tol > 0:
        raise ValueError("rel_tol must be positive")
    p = prop.params
    eps = p.beta * 1e-13  # keep evaluations inside [-beta, beta)
    f = lambda t: _space_sum_abs(prop, t)
    left = _adaptive_simpson(f, -p.beta + eps, -eps, rel_tol / 2, 20)
    right = _adaptive_simpson(f, eps, p.beta - eps, rel_tol / 2, 20)
    return left + right


def determinant_bound_sample(prop: Propagator, n: int, seed: int) -> float:
    """|det( <u_j, v_k> C(xi_j, xi_k) )| for n random space-spin-time points
    and random complex unit vectors u_j, v_j; bounded by 4^n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = prop.params
    rng = np.random.default_rng(seed)
    sites = site_list(p)
    pts = [
        (
            sites[rng.integers(len(sites))],
            int(rng.integers(2)),
            float(rng.uniform(0.0, p.beta)),
        )
        for _ in range(n)
    ]

    def unit():
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        return v / np.linalg.norm(v)

    us = [unit() for _ in range(n)]
    vs = [unit() for _ in range(n)]
    mat = np.zeros((n, n), dtype=complex)
    for j, (sj, spj, tj) in enumerate(pts):
        for k, (sk, spk, tk) in enumerate(pts):
            if spj != spk:
                c = 0.0
            else:
                diff = tuple(b - a for a, b in zip(sj.coords, sk.coords))
                c = prop.kernel(diff, tj - tk)
            mat[j, k] = np.vdot(us[j], vs[k]) * c
    return float(abs(np.linalg.det(mat)))
