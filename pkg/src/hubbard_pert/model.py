"""Lattice geometry, physical parameters, hopping matrix and dispersion.

The lattice is the d-dimensional torus Z^d/(L Z)^d.  Sites and momenta are
stored as integer index vectors; momentum components in radians are derived
as 2*pi*index/L on demand, so that momentum addition and delta constraints
stay exact integer arithmetic mod L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

SPIN_UP = 0
SPIN_DOWN = 1
SPINS = (SPIN_UP, SPIN_DOWN)


@dataclass(frozen=True)
class ModelParams:
    """Lattice size and physical parameters of the Hubbard Hamiltonian.

    d, L: space dimension and edge length of the periodic lattice.
    t, tprime: nearest and next-to-nearest neighbor hopping (tprime is
        inactive for d=1).
    mu: chemical potential.  beta: inverse temperature (> 0).
    """

    d: int
    L: int
    t: float
    tprime: float
    mu: float
    beta: float

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"dimension d must be >= 1, got {self.d}")
        if self.L < 1:
            raise ValueError(f"edge length L must be >= 1, got {self.L}")
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        for name in ("t", "tprime", "mu", "beta"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def n_modes(self) -> int:
        return 2 * self.L**self.d


@dataclass(frozen=True)
class Site:
    """Lattice site, coordinates reduced mod L."""

    coords: tuple[int, ...]

    @classmethod
    def on(cls, params: ModelParams, coords) -> "Site":
        c = tuple(int(x) % params.L for x in coords)
        if len(c) != params.d:
            raise ValueError(f"site needs {params.d} coordinates, got {len(c)}")
        return cls(c)


@dataclass(frozen=True)
class Momentum:
    """Grid momentum; `index` is the integer vector m, value is 2*pi*m/L."""

    index: tuple[int, ...]
    L: int

    @property
    def value(self) -> np.ndarray:
        return 2.0 * np.pi * np.asarray(self.index, dtype=float) / self.L

    def __neg__(self) -> "Momentum":
        return Momentum(tuple((-m) % self.L for m in self.index), self.L)


def as_site(params: ModelParams, x) -> Site:
    """Coerce a Site or coordinate iterable to a Site of this lattice."""
    if isinstance(x, Site):
        if len(x.coords) != params.d:
            raise ValueError("site dimension mismatch")
        return Site(tuple(c % params.L for c in x.coords))
    return Site.on(params, x)


def site_list(params: ModelParams) -> list[Site]:
    """All L^d sites in row-major order."""
    return [Site(c) for c in product(range(params.L), repeat=params.d)]


def momentum_grid(params: ModelParams) -> list[Momentum]:
    """All L^d momenta in row-major index order."""
    return [
        Momentum(m, params.L) for m in product(range(params.L), repeat=params.d)
    ]


def site_index(params: ModelParams, site: Site) -> int:
    """Row-major flat index of a site (also used for momentum indices)."""
    idx = 0
    for c in site.coords:
        idx = idx * params.L + (c % params.L)
    return idx


def dispersion(params: ModelParams, k: Momentum) -> float:
    """Single-particle energy E_k of the free Hamiltonian.

    E_k = -2t sum_j cos(k_j) - 4t' 1_{d>=2} sum_{j<l} cos(k_j) cos(k_l) - mu.
    """
    kv = k.value
    cos = np.cos(kv)
    e = -2.0 * params.t * float(np.sum(cos))
    if params.d >= 2:
        s = 0.0
        for j in range(params.d):
            for l in range(j + 1, params.d):
                s += cos[j] * cos[l]
        e -= 4.0 * params.tprime * s
    return e - params.mu


def dispersion_table(params: ModelParams) -> np.ndarray:
    """E_k for every grid momentum, indexed row-major (shape (L^d,))."""
    ks = 2.0 * np.pi * np.arange(params.L) / params.L
    cos1 = np.cos(ks)
    e = np.zeros((params.L,) * params.d)
    for j in range(params.d):
        shape = [1] * params.d
        shape[j] = params.L
        e -= 2.0 * params.t * cos1.reshape(shape)
    if params.d >= 2:
        for j in range(params.d):
            for l in range(j + 1, params.d):
                sj = [1] * params.d
                sj[j] = params.L
                sl = [1] * params.d
                sl[l] = params.L
                e -= 4.0 * params.tprime * cos1.reshape(sj) * cos1.reshape(sl)
    return (e - params.mu).reshape(-1)


def hopping_matrix(params: ModelParams) -> np.ndarray:
    """Hopping matrix F over (site, spin) modes, mode index = 2*site + spin.

    F(x sigma, y tau) = delta_{sigma,tau} * ( -t sum_j (delta_{x,y-e_j} +
    delta_{x,y+e_j}) - t' 1_{d>=2} sum_{j<l} (the four diagonal deltas)
    - mu delta_{x,y} ).  On L<=2 lattices opposite hops coincide and their
    delta contributions add up.
    """
    sites = site_list(params)
    n = len(sites)
    fs = np.zeros((n, n))
    index = {s.coords: i for i, s in enumerate(sites)}

    def shifted(c, delta):
        return tuple((ci + di) % params.L for ci, di in zip(c, delta))

    for i, x in enumerate(sites):
        fs[i, i] -= params.mu
        for j in range(params.d):
            for sgn in (+1, -1):
                delta = [0] * params.d
                delta[j] = sgn
                fs[i, index[shifted(x.coords, delta)]] -= params.t
        if params.d >= 2:
            for j in range(params.d):
                for l in range(j + 1, params.d):
                    for sj in (+1, -1):
                        for sl in (+1, -1):
                            delta = [0] * params.d
                            delta[j] = sj
                            delta[l] = sl
                            fs[i, index[shifted(x.coords, delta)]] -= params.tprime

    f = np.zeros((2 * n, 2 * n))
    f[0::2, 0::2] = fs
    f[1::2, 1::2] = fs
    return f
