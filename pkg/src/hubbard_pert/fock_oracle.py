"""Exact diagonalization on tiny lattices, used as the ground-truth oracle.

The occupation-number basis over 2 L^d modes (mode = 2*site + spin, site
row-major, spin up before down) gives dimension 2^{2 L^d}.  Annihilation
operators carry the fermionic parity sign of the occupied lower-index
modes; everything else is assembled from them by sparse products.  Dense
eigendecomposition keeps thermal traces exact at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import SPIN_DOWN, SPIN_UP, ModelParams, Site, as_site, hopping_matrix, site_list
from .perturb import SiteQuad

DIM_CAP = 4096


class DimensionError(ValueError):
    """Fock dimension exceeds the dense-diagonalization cap."""


class FitError(RuntimeError):
    """Polynomial coefficient fit is ill-conditioned."""


@dataclass(frozen=True)
class FockBasis:
    """Mode order and dimension of the occupation-number basis."""

    params: ModelParams
    modes: tuple[tuple[tuple[int, ...], int], ...]  # (site coords, spin)

    @classmethod
    def build(cls, params: ModelParams) -> "FockBasis":
        modes = tuple(
            (s.coords, spin)
            for s in site_list(params)
            for spin in (SPIN_UP, SPIN_DOWN)
        )
        return cls(params, modes)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    @property
    def dim(self) -> int:
        return 1 << self.n_modes

    def mode_index(self, site, spin: int) -> int:
        s = as_site(self.params, site)
        key = (s.coords, spin)
        for i, m in enumerate(self.modes):
            if m == key:
                return i
        raise KeyError(f"unknown mode {key}")


@dataclass(frozen=True)
class FockOperator:
    """Sparse operator in the occupation-number basis."""

    dim: int
    mat: sp.csr_matrix

    def __matmul__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.dim, (self.mat @ other.mat).tocsr())

    def dagger(self) -> "FockOperator":
        return FockOperator(self.dim, self.mat.conj().T.tocsr())

    def __add__(self, other: "FockOperator") -> "FockOperator":
        return FockOperator(self.dim, (self.mat + other.mat).tocsr())

    def scaled(self, c) -> "FockOperator":
        return FockOperator(self.dim, (c * self.mat).tocsr())

    def dense(self) -> np.ndarray:
        return self.mat.toarray()


def annihilation(basis: FockBasis, site, spin: int) -> FockOperator:
    """psi_{x sigma}: clears mode bit m with sign (-1)^{occupied below m}."""
    m = basis.mode_index(site, spin)
    dim = basis.dim
    mask = (1 << m) - 1
    rows, cols, vals = [], [], []
    for state in range(dim):
        if not (state >> m) & 1:
            continue
        sign = 1.0 if bin(state & mask).count("1") % 2 == 0 else -1.0
        rows.append(state ^ (1 << m))
        cols.append(state)
        vals.append(sign)
    mat = sp.csr_matrix(
        (np.array(vals, dtype=complex), (rows, cols)), shape=(dim, dim)
    )
    return FockOperator(dim, mat)


def creation(basis: FockBasis, site, spin: int) -> FockOperator:
    """psi*_{x sigma}, the adjoint of the annihilation operator."""
    return annihilation(basis, site, spin).dagger()


def build_H(basis: FockBasis, params: ModelParams, u: float) -> FockOperator:
    """H = sum F(x sigma, y tau) psi* psi + U sum_x n_{x up} n_{x down}."""
    f = hopping_matrix(params)
    sites = site_list(params)
    ann = [
        annihilation(basis, s, spin) for s in sites for spin in (SPIN_UP, SPIN_DOWN)
    ]
    cre = [a.dagger() for a in ann]
    dim = basis.dim
    h = sp.csr_matrix((dim, dim), dtype=complex)
    n = len(ann)
    for a in range(n):
        for b in range(n):
            if f[a, b] != 0.0:
                h = h + f[a, b] * (cre[a].mat @ ann[b].mat)
    for i, _ in enumerate(sites):
        up = 2 * i
        dn = 2 * i + 1
        h = h + u * (
            cre[up].mat @ cre[dn].mat @ ann[dn].mat @ ann[up].mat
        )
    return FockOperator(dim, h.tocsr())


def thermal_expectation(h: FockOperator, obs: FockOperator, beta: float) -> float:
    """Tr(e^{-beta H} O) / Tr e^{-beta H} by full eigendecomposition."""
    hd = h.dense()
    if np.max(np.abs(hd - hd.conj().T)) > 1e-12:
        raise ValueError("Hamiltonian is not Hermitian")
    w, v = np.linalg.eigh(hd)
    weights = np.exp(-beta * (w - w.min()))
    ov = v.conj().T @ obs.dense() @ v
    val = np.sum(weights * np.diag(ov)) / np.sum(weights)
    return complex(val).real


def log_partition(h: FockOperator, beta: float) -> float:
    """log Tr e^{-beta H}."""
    w = np.linalg.eigvalsh(h.dense())
    wmin = w.min()
    return float(np.log(np.sum(np.exp(-beta * (w - wmin)))) - beta * wmin)


def pair_observable(basis: FockBasis, sites: SiteQuad) -> FockOperator:
    """psi*_{x1 up} psi*_{x2 dn} psi_{y2 dn} psi_{y1 up} + (x <-> y)."""
    def term(x1, x2, y1, y2):
        return (
            creation(basis, x1, SPIN_UP).mat
            @ creation(basis, x2, SPIN_DOWN).mat
            @ annihilation(basis, y2, SPIN_DOWN).mat
            @ annihilation(basis, y1, SPIN_UP).mat
        )

    mat = term(sites.x1, sites.x2, sites.y1, sites.y2) + term(
        sites.y1, sites.y2, sites.x1, sites.x2
    )
    return FockOperator(basis.dim, mat.tocsr())


def correlation_exact(
    basis: FockBasis, params: ModelParams, u: float, sites: SiteQuad
) -> float:
    """Thermal average of the symmetrized 4-point observable under H(U)."""
    if basis.dim > DIM_CAP:
        raise DimensionError(f"dimension {basis.dim} exceeds {DIM_CAP}")
    h = build_H(basis, params, u)
    val = thermal_expectation(h, pair_observable(basis, sites), params.beta)
    return val


@dataclass(frozen=True)
class CoefficientFit:
    """Low-order coefficients extracted from exact correlation values."""

    a0: float
    a1: float
    a2: float
    stderr: tuple[float, float, float]


def coeff_fit(
    basis: FockBasis, params: ModelParams, sites: SiteQuad, u_grid
) -> CoefficientFit:
    """Degree-4 least-squares fit of correlation_exact over a symmetric U grid.

    U values are rescaled to [-1, 1] before building the Vandermonde matrix
    so the fit stays well-conditioned for the tiny physical grids.
    """
    u = np.asarray(sorted(u_grid), dtype=float)
    if len(u) < 6:
        raise FitError("need at least 6 grid points for a degree-4 fit")
    if abs(u.max() + u.min()) > 1e-15 + 1e-12 * u.max():
        raise FitError("U grid must be symmetric around 0")
    scale = np.max(np.abs(u))
    vals = np.array(
        [correlation_exact(basis, params, uu, sites) for uu in u]
    )
    vand = np.vander(u / scale, 5, increasing=True)
    cond = np.linalg.cond(vand)
    if cond > 1e8:
        raise FitError(f"fit condition number {cond:.2e} too large")
    coef, res, rank, _ = np.linalg.lstsq(vand, vals, rcond=None)
    if rank < 5:
        raise FitError("rank-deficient fit")
    dof = len(u) - 5
    sigma2 = float(res[0]) / dof if len(res) and dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(vand.T @ vand)
    err = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return CoefficientFit(
        a0=coef[0],
        a1=coef[1] / scale,
        a2=coef[2] / scale**2,
        stderr=(err[0], err[1] / scale, err[2] / scale**2),
    )


def lambda_derivative_check(
    basis: FockBasis,
    params: ModelParams,
    u: float,
    sites: SiteQuad,
    eps: float,
) -> tuple[float, float]:
    """(exact correlation, central difference of -(1/beta) log Z(lambda)).

    lambda couples to the observable itself, so the derivative at 0 must
    reproduce the correlation up to O(eps^2).
    """
    if basis.dim > DIM_CAP:
        raise DimensionError(f"dimension {basis.dim} exceeds {DIM_CAP}")
    exact = correlation_exact(basis, params, u, sites)
    h = build_H(basis, params, u)
    obs = pair_observable(basis, sites)
    beta = params.beta
    zp = log_partition(FockOperator(h.dim, h.mat + eps * obs.mat), beta)
    zm = log_partition(FockOperator(h.dim, h.mat - eps * obs.mat), beta)
    fd = -(zp - zm) / (2.0 * eps * beta)
    return exact, fd
