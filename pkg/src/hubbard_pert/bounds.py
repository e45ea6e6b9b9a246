"""Rigorous tail bounds on the perturbation series.

Ingredients: the exact tree-combinatorics count entering the per-order
coefficient bound, the generating function f(x) with its closed form, the
series majorant R(|U|) = 32 f(4 D |U|), order-m remainders, and the
closed-form upper bound on the decay constant D for d=2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import product

from .model import ModelParams

F_RADIUS = 4.0 / 27.0


class DecaySource(Enum):
    COMPUTED = "computed"
    PROP51_BOUND = "prop51_bound"


@dataclass(frozen=True)
class TailBound:
    """Decay constant (or a rigorous upper bound), its radius 1/(27 D),
    and the truncation order the remainder is quoted for."""

    D: float
    m: int
    source: DecaySource

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("decay constant must be positive")

    @property
    def radius(self) -> float:
        return 1.0 / (27.0 * self.D)

    def remainder(self, u_abs: float) -> float:
        return remainder_bound(self.m, u_abs, self.D)


def tree_count(n: int) -> int:
    """Exact value of the degree-constrained labeled-tree sum on n+1 vertices.

    Equals 4 * n!/(3n+4) * C(3n+4, n) = 4 * (n-1)! * C(3n+3, n-1).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return 4 * math.factorial(n - 1) * math.comb(3 * n + 3, n - 1)


def _prufer_degrees(seq: tuple[int, ...], n_vertices: int) -> list[int]:
    deg = [1] * n_vertices
    for v in seq:
        deg[v] += 1
    return deg


def tree_count_bruteforce(n: int) -> int:
    """Same sum by exhaustive Prüfer enumeration of labeled trees.

    Each tree on n+1 vertices contributes 0 if any vertex degree exceeds 4,
    else 4 * prod_q C(3, d_q - 1) * (d_q - 1)!.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 6:
        raise ValueError("brute force capped at n <= 6")
    n_vertices = n + 1
    total = 0
    for seq in product(range(n_vertices), repeat=max(n_vertices - 2, 0)):
        degrees = _prufer_degrees(seq, n_vertices)
        if any(d > 4 for d in degrees):
            continue
        w = 4
        for d in degrees:
            w *= math.comb(3, d - 1) * math.factorial(d - 1)
        total += w
    return total


def coeff_bound(n: int, D: float) -> float:
    """Per-order bound 128/(3n+4) * C(3n+4, n) * (4 D)^n on |a_n|."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if not D > 0:
        raise ValueError("D must be > 0")
    return 128.0 * math.comb(3 * n + 4, n) / (3 * n + 4) * (4.0 * D) ** n


def f_series(x: float, n_terms: int) -> float:
    """Partial sum of f(x) = sum_n 4/(3n+4) C(3n+4, n) x^n, 0 <= x <= 4/27."""
    if x < 0 or x > F_RADIUS + 1e-15:
        raise ValueError(f"x={x} outside [0, 4/27]")
    total = 0.0
    for n in range(n_terms):
        total += 4.0 * math.comb(3 * n + 4, n) / (3 * n + 4) * x**n
    return total


def f_closed(x: float) -> float:
    """Closed form of f on (0, 4/27]: (16/(9x^2)) cos^4((arctan(sqrt(4/(27x)-1)) + pi)/3)."""
    if not 0 < x <= F_RADIUS + 1e-15:
        raise ValueError(f"x={x} outside (0, 4/27]")
    arg = 4.0 / (27.0 * x) - 1.0
    if arg < 0:
        # at the boundary the radicand is analytically 0
        if arg < -1e-14:
            raise ValueError(f"x={x} outside (0, 4/27]")
        arg = 0.0
    theta = (math.atan(math.sqrt(arg)) + math.pi) / 3.0
    return 16.0 / (9.0 * x * x) * math.cos(theta) ** 4


def R_bound(u_abs: float, D: float) -> float:
    """Majorant R(|U|) of the full series: 32 at U=0, else 32 f(4 D |U|)."""
    if not D > 0:
        raise ValueError("D must be > 0")
    if u_abs < 0:
        raise ValueError("|U| must be >= 0")
    radius = 1.0 / (27.0 * D)
    if u_abs > radius * (1.0 + 1e-12):
        raise ValueError(f"|U|={u_abs} beyond the radius 1/(27 D)={radius}")
    if u_abs == 0.0:
        return 32.0
    return 32.0 * f_closed(min(4.0 * D * u_abs, F_RADIUS))


def remainder_bound(m: int, u_abs: float, D: float) -> float:
    """Bound on |correlation - sum_{n<=m} a_n U^n|:
    R(|U|) - sum_{n=0}^m coeff_bound(n, D) |U|^n  (nonnegative on the radius)."""
    if m < 0:
        raise ValueError("m must be >= 0")
    r = R_bound(u_abs, D)
    for n in range(m + 1):
        r -= coeff_bound(n, D) * u_abs**n
    return r


def D_upper_2d(params: ModelParams) -> float:
    """Closed-form upper bound on the decay constant D for d=2.

    With xi = 4|t| + 4|t'| + |mu| and A = (2|t| + 4|t'|) e^{beta xi} beta
    / (1 + e^{beta xi}), the bound is
    (16/beta^2 + 32 pi^2/(3 sqrt(3) beta) + 16 pi^3/(3 sqrt(3)))
    * (beta^3/2 + A + 3 A^2 + A^3).
    """
    if params.d != 2:
        raise ValueError("the decay-constant bound is for d=2 only")
    beta = params.beta
    xi = 4.0 * abs(params.t) + 4.0 * abs(params.tprime) + abs(params.mu)
    a = (2.0 * abs(params.t) + 4.0 * abs(params.tprime)) * beta / (
        1.0 + math.exp(-beta * xi)
    )
    front = (
        16.0 / beta**2
        + 32.0 * math.pi**2 / (3.0 * math.sqrt(3.0) * beta)
        + 16.0 * math.pi**3 / (3.0 * math.sqrt(3.0))
    )
    return front * (beta**3 / 2.0 + a + 3.0 * a * a + a**3)


def error_table(u_list, D: float, m: int) -> list[tuple[float, float]]:
    """Rows (|U|, remainder_bound(m, |U|, D)); raises on entries beyond the radius."""
    radius = 1.0 / (27.0 * D)
    rows = []
    for u in u_list:
        u_abs = abs(u)
        if u_abs > radius * (1.0 + 1e-12):
            raise ValueError(
                f"|U|={u_abs} beyond the convergence radius {radius}"
            )
        rows.append((u_abs, remainder_bound(m, u_abs, D)))
    return rows
