"""Perturbation coefficients a0, a1, a2 of the 4-point correlation function.

The n-th order ingredient is the lambda-derivative of g_n(pi, tau) written
as a momentum sum: a prefactor (-1)^n / L^{(n+1)d}, a pair of cosine terms
attaching the four external sites to the j-th vertex, momentum-conservation
deltas at the other vertices, a sum over time orderings eta of an exact
nested exponential integral, and occupation-factor products whose branch is
fixed by the ordering.  Deltas are solved on integer momentum indices mod L,
which leaves n+1 free momenta; the compiled kernel then iterates the free
tuples.

Coefficient assembly:

    a0 = -(1/beta) * dg_1(id, id)
    a1 = -(1/(2 beta)) * [dg_2(s, s) - dg_2(id, s) - dg_2(s, id)]
    a2 = -(1/(3 beta)) * [dg_3(id, c) + dg_3(c, id) + dg_3(c, c)
         + 3 dg_3(s23, s12) - 3 dg_3(s23, c) - 3 dg_3(c, s23)
         + dg_3(c, c^2)]

with s the transposition on two letters, c the 3-cycle (1 2 3), and dg_n
short for the lambda-derivative of g_n.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations

import numpy as np

from . import _kernels
from .model import ModelParams, Site, as_site
from .propagator import Propagator


class CostGuardError(RuntimeError):
    """Estimated momentum-tuple count exceeds the configured budget."""


class ConstraintError(RuntimeError):
    """The delta system could not be reduced and brute force is too large."""


# ---------------------------------------------------------------------------
# nested exponential time integrals


@dataclass(frozen=True)
class ExpPolySum:
    """Function of the upper limit s as sum_i poly_i(s) * e^{rate_i * s}.

    terms: tuple of (rate, coefficient tuple), coefficient q is the s^q
    weight.  Rates are kept pairwise distinct; a rate whose magnitude times
    beta drops below `merge_tol` is folded into the rate-0 polynomial term,
    which keeps antiderivatives of degenerate rate sums cancellation-free.
    """

    terms: tuple[tuple[float, tuple[float, ...]], ...]
    merge_tol: float = _kernels.MERGE_TOL

    @classmethod
    def one(cls) -> "ExpPolySum":
        return cls(((0.0, (1.0,)),))

    def times_exp(self, rate: float) -> "ExpPolySum":
        return ExpPolySum(
            tuple((a + rate, poly) for a, poly in self.terms), self.merge_tol
        )

    def integrate(self, beta_scale: float) -> "ExpPolySum":
        """Antiderivative from 0 to s, term by term in closed form."""
        out: dict[float, list[float]] = {}

        def add(rate, deg, coef):
            poly = out.setdefault(rate, [])
            while len(poly) <= deg:
                poly.append(0.0)
            poly[deg] += coef

        for a, poly in self.terms:
            if abs(a) * beta_scale < self.merge_tol:
                a = 0.0
            for m, c in enumerate(poly):
                if c == 0.0:
                    continue
                if a == 0.0:
                    add(0.0, m + 1, c / (m + 1))
                    continue
                fact = 1.0
                apow = a
                sign = 1.0
                last = 0.0
                for q in range(m + 1):
                    last = c * sign * fact / apow
                    add(a, m - q, last)
                    fact *= m - q
                    apow *= a
                    sign = -sign
                add(0.0, 0, -last)
        return ExpPolySum(
            tuple((a, tuple(poly)) for a, poly in sorted(out.items())),
            self.merge_tol,
        )

    def eval(self, s: float) -> float:
        parts = []
        for a, poly in self.terms:
            val = 0.0
            spow = 1.0
            for c in poly:
                val += c * spow
                spow *= s
            parts.append(val if a == 0.0 else math.exp(a * s) * val)
        return math.fsum(parts)


def nested_exp_integral(rates, beta: float) -> float:
    """Exact value of the nested integral
    int_0^beta dx1 e^{x1 r1} int_0^{x1} dx2 e^{x2 r2} ... for n >= 1 rates."""
    rates = [float(r) for r in rates]
    if not rates:
        raise ValueError("need at least one rate")
    f = ExpPolySum.one()
    for r in reversed(rates):
        f = f.times_exp(r).integrate(beta)
    return f.eval(beta)


def ordered_sum_identity_check(rates, beta: float) -> tuple[float, float]:
    """(sum over all orderings of the nested integral, product formula).

    The two sides agree identically:
    sum_eta I(rates o eta) = prod_j (e^{beta r_j} - 1)/r_j.
    """
    rates = [float(r) for r in rates]
    n = len(rates)
    if n > 6:
        raise ValueError("ordering sum capped at n <= 6")
    lhs = math.fsum(
        nested_exp_integral([rates[i] for i in perm], beta)
        for perm in permutations(range(n))
    )
    rhs = 1.0
    for r in rates:
        rhs *= beta if r == 0.0 else math.expm1(beta * r) / r
    return lhs, rhs


# ---------------------------------------------------------------------------
# permutation bookkeeping and momentum constraint elimination


def _inverse(perm: tuple[int, ...]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for i, v in enumerate(perm):
        inv[v] = i
    return tuple(inv)


def _check_perm(perm, n) -> tuple[int, ...]:
    p = tuple(perm)
    if sorted(p) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    return p


def solve_momentum_constraints(n: int, pi, tau, j: int):
    """Reduce the deltas k_l + p_l = k_{pi^-1(l)} + p_{tau^-1(l)} (l != j).

    Variables are 0..2n-1 with k_l = l and p_l = n + l.  Returns
    (free_ids, bound_ids, bound_coef, check_rows): bound variable digits are
    integer combinations of the free ones; check_rows is empty unless the
    system is rank-deficient (then all variables stay free and the raw
    constraints are returned for per-tuple filtering).
    """
    pi = _check_perm(pi, n)
    tau = _check_perm(tau, n)
    piinv = _inverse(pi)
    tauinv = _inverse(tau)
    nvar = 2 * n

    raw_rows = []
    for l in range(n):
        if l == j:
            continue
        row = [0] * nvar
        row[l] += 1
        row[n + l] += 1
        row[piinv[l]] -= 1
        row[n + tauinv[l]] -= 1
        if any(row):
            raw_rows.append(row)

    solved: dict[int, dict[int, int]] = {}

    def expand(row):
        expr: dict[int, int] = {}
        for v, c in enumerate(row):
            if c == 0:
                continue
            if v in solved:
                for w, cw in solved[v].items():
                    expr[w] = expr.get(w, 0) + c * cw
            else:
                expr[v] = expr.get(v, 0) + c
        return {v: c for v, c in expr.items() if c != 0}

    degenerate = False
    for row in raw_rows:
        expr = expand(row)
        if not expr:
            degenerate = True
            continue
        pivot = None
        for v in sorted(expr):
            if abs(expr[v]) == 1:
                pivot = v
                break
        if pivot is None:
            degenerate = True
            break
        cp = expr.pop(pivot)
        rhs = {v: -c * cp for v, c in expr.items()}
        # keep previously solved expressions in terms of unsolved variables
        for sv, sexpr in solved.items():
            if pivot in sexpr:
                cpv = sexpr.pop(pivot)
                for w, cw in rhs.items():
                    sexpr[w] = sexpr.get(w, 0) + cpv * cw
                solved[sv] = {v: c for v, c in sexpr.items() if c != 0}
        solved[pivot] = rhs

    if degenerate:
        free_ids = np.arange(nvar, dtype=np.int64)
        bound_ids = np.zeros(0, dtype=np.int64)
        bound_coef = np.zeros((0, nvar), dtype=np.int64)
        check_rows = np.array(raw_rows, dtype=np.int64).reshape(
            len(raw_rows), nvar
        )
        return free_ids, bound_ids, bound_coef, check_rows

    free = [v for v in range(nvar) if v not in solved]
    free_pos = {v: i for i, v in enumerate(free)}
    bound = sorted(solved)
    coef = np.zeros((len(bound), len(free)), dtype=np.int64)
    for r, v in enumerate(bound):
        for w, c in solved[v].items():
            coef[r, free_pos[w]] = c
    return (
        np.array(free, dtype=np.int64),
        np.array(bound, dtype=np.int64),
        coef,
        np.zeros((0, nvar), dtype=np.int64),
    )


def _orderings(n: int):
    """All time orderings eta with the occupation branch tables.

    etas[e, m] is the vertex holding the (m+1)-th largest time; kgt[e, l]
    is True when x_{pi(l)} > x_l under that ordering (strict, so pi(l) = l
    keeps the <= branch), and likewise pgt for tau.
    """
    return list(permutations(range(n)))


def _branch_tables(n, pi, tau, etas):
    neta = len(etas)
    kgt = np.zeros((neta, n), dtype=np.bool_)
    pgt = np.zeros((neta, n), dtype=np.bool_)
    for e, eta in enumerate(etas):
        pos = [0] * n
        for m, lab in enumerate(eta):
            pos[lab] = m
        for l in range(n):
            kgt[e, l] = pi[l] != l and pos[pi[l]] < pos[l]
            pgt[e, l] = tau[l] != l and pos[tau[l]] < pos[l]
    return kgt, pgt


@dataclass(frozen=True)
class SiteQuad:
    """The four external sites (x1, x2, y1, y2) of the observable."""

    x1: Site
    x2: Site
    y1: Site
    y2: Site

    @classmethod
    def on(cls, params: ModelParams, x1, x2, y1, y2) -> "SiteQuad":
        return cls(
            as_site(params, x1),
            as_site(params, x2),
            as_site(params, y1),
            as_site(params, y2),
        )

    def swapped(self) -> "SiteQuad":
        return SiteQuad(self.y1, self.y2, self.x1, self.x2)


@dataclass(frozen=True)
class PermPair:
    """A (pi, tau) permutation pair with its rational assembly weight."""

    pi: tuple[int, ...]
    tau: tuple[int, ...]
    sign_weight: Fraction

    def __post_init__(self):
        n = len(self.pi)
        _check_perm(self.pi, n)
        _check_perm(self.tau, n)
        if len(self.tau) != n:
            raise ValueError("pi and tau must act on the same set")


ID1 = (0,)
ID2 = (0, 1)
SWAP2 = (1, 0)
ID3 = (0, 1, 2)
CYCLE3 = (1, 2, 0)       # 1 -> 2 -> 3 -> 1
CYCLE3_SQ = (2, 0, 1)
SWAP12 = (1, 0, 2)
SWAP23 = (0, 2, 1)

#: a_n = -(1/beta) * sum of weight * dg_{n+1}(pi, tau) over the term table
A0_TERMS = (PermPair(ID1, ID1, Fraction(1)),)
A1_TERMS = (
    PermPair(SWAP2, SWAP2, Fraction(1, 2)),
    PermPair(ID2, SWAP2, Fraction(-1, 2)),
    PermPair(SWAP2, ID2, Fraction(-1, 2)),
)
A2_TERMS = (
    PermPair(ID3, CYCLE3, Fraction(1, 3)),
    PermPair(CYCLE3, ID3, Fraction(1, 3)),
    PermPair(CYCLE3, CYCLE3, Fraction(1, 3)),
    PermPair(SWAP23, SWAP12, Fraction(1)),
    PermPair(SWAP23, CYCLE3, Fraction(-1)),
    PermPair(CYCLE3, SWAP23, Fraction(-1)),
    PermPair(CYCLE3, CYCLE3_SQ, Fraction(1, 3)),
)


def momentum_tuple_count(params: ModelParams, n: int) -> int:
    """Free momentum tuples iterated per (pi, tau, j) term: L^{d(n+1)}."""
    return params.L ** (params.d * (n + 1))


def _site_arrays(params: ModelParams, sites: SiteQuad):
    return tuple(
        np.array(s.coords, dtype=np.int64)
        for s in (sites.x1, sites.x2, sites.y1, sites.y2)
    )


def g_lambda_derivative(
    prop: Propagator,
    sites: SiteQuad,
    n: int,
    pi,
    tau,
    budget: int | None = None,
) -> float:
    """Lambda-derivative of g_n(pi, tau) at lambda = 0 (momentum-space sum)."""
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    pi = _check_perm(pi, n)
    tau = _check_perm(tau, n)
    p = prop.params
    m_sites = p.n_sites

    piinv = np.array(_inverse(pi), dtype=np.int64)
    tauinv = np.array(_inverse(tau), dtype=np.int64)
    etas = _orderings(n)
    eta_arr = np.array(etas, dtype=np.int64).reshape(len(etas), n)
    kgt, pgt = _branch_tables(n, pi, tau, etas)
    costab = np.cos(2.0 * np.pi * np.arange(p.L) / p.L)
    occ_le = prop.occ_plus
    occ_gt = -prop.occ_minus
    sx1, sx2, sy1, sy2 = _site_arrays(p, sites)

    total = 0.0
    for j in range(n):
        free_ids, bound_ids, bound_coef, check_rows = (
            solve_momentum_constraints(n, pi, tau, j)
        )
        count = m_sites ** len(free_ids)
        if budget is not None and count > budget:
            raise CostGuardError(
                f"{count} momentum tuples exceed the budget {budget}"
            )
        if len(check_rows) > 0 and count > 100_000_000:
            raise ConstraintError(
                "rank-deficient delta system needs brute-force filtering, "
                f"too large here ({count} tuples)"
            )
        out = np.zeros(m_sites)
        _kernels.g_sum_blocks(
            p.L,
            p.d,
            n,
            free_ids,
            bound_ids,
            bound_coef,
            check_rows,
            piinv,
            tauinv,
            j,
            eta_arr,
            kgt,
            pgt,
            prop.energies,
            occ_le,
            occ_gt,
            costab,
            sx1,
            sx2,
            sy1,
            sy2,
            p.beta,
            out,
        )
        total += math.fsum(out)
    sign = -1.0 if n % 2 == 1 else 1.0
    return sign * total / float(m_sites ** (n + 1))


def _assemble(prop, sites, terms, budget=None, progress=None, values=None):
    acc = []
    for i, term in enumerate(terms):
        if values is not None and i in values:
            g = values[i]
        else:
            g = g_lambda_derivative(
                prop, sites, len(term.pi), term.pi, term.tau, budget=budget
            )
            if values is not None:
                values[i] = g
        if progress is not None:
            progress(i, len(terms), g)
        acc.append(float(term.sign_weight) * g)
    return -math.fsum(acc) / prop.params.beta


def coeff_a0(prop: Propagator, sites: SiteQuad, budget=None) -> float:
    """a0 = -(1/beta) dg_1(id, id)."""
    return _assemble(prop, sites, A0_TERMS, budget=budget)


def coeff_a1(prop: Propagator, sites: SiteQuad, budget=None) -> float:
    """First-order coefficient from the three two-vertex permutation terms."""
    return _assemble(prop, sites, A1_TERMS, budget=budget)


def coeff_a2(
    prop: Propagator,
    sites: SiteQuad,
    budget=None,
    checkpoint: str | None = None,
    progress=None,
) -> float:
    """Second-order coefficient from the seven three-vertex permutation terms.

    `checkpoint` names a JSON file where finished term values are stored so
    an interrupted long run resumes where it stopped.
    """
    values: dict[int, float] = {}
    meta = None
    if checkpoint is not None:
        from dataclasses import asdict

        meta = {
            "params": asdict(prop.params),
            "sites": [
                list(s.coords)
                for s in (sites.x1, sites.x2, sites.y1, sites.y2)
            ],
        }
        if os.path.exists(checkpoint):
            with open(checkpoint) as fh:
                data = json.load(fh)
            if data.get("meta") == json.loads(json.dumps(meta)):
                values = {int(k): v for k, v in data["terms"].items()}

    def save(i, total, g):
        if checkpoint is not None:
            with open(checkpoint, "w") as fh:
                json.dump(
                    {"meta": meta, "terms": {str(k): v for k, v in values.items()}},
                    fh,
                )
        if progress is not None:
            progress(i, total, g)

    return _assemble(
        prop, sites, A2_TERMS, budget=budget, progress=save, values=values
    )


@dataclass(frozen=True)
class PerturbationCoefficients:
    """The series coefficients for one site configuration."""

    a0: float
    a1: float
    a2: float
    sites: SiteQuad
    params: ModelParams


def coefficients(
    prop: Propagator, sites: SiteQuad, budget=None, checkpoint=None, progress=None
) -> PerturbationCoefficients:
    return PerturbationCoefficients(
        coeff_a0(prop, sites, budget=budget),
        coeff_a1(prop, sites, budget=budget),
        coeff_a2(
            prop, sites, budget=budget, checkpoint=checkpoint, progress=progress
        ),
        sites,
        prop.params,
    )


def series_eval(coeffs: PerturbationCoefficients, u: float) -> float:
    """a0 + a1 U + a2 U^2."""
    return coeffs.a0 + coeffs.a1 * u + coeffs.a2 * u * u
