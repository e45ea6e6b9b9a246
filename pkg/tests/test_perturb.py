import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hubbard_pert import perturb as pt
from hubbard_pert.model import ModelParams
from hubbard_pert.propagator import Propagator

from oracles import (
    delta_solutions_bruteforce,
    g_momentum_bruteforce,
    g_time_quadrature,
    nested_integral_gl,
)

ALL_TERMS = pt.A0_TERMS + pt.A1_TERMS + pt.A2_TERMS


# ---------------------------------------------------------------------------
# nested exponential integrals


def test_nested_integral_zero_rates():
    assert pt.nested_exp_integral([0.0, 0.0], 2.0) == pytest.approx(2.0)


def test_nested_integral_single_rate():
    want = (math.exp(1.3) - 1.0) / 1.3
    assert pt.nested_exp_integral([1.3], 1.0) == pytest.approx(want, rel=1e-14)
    # removable singularity as the rate goes to zero
    assert pt.nested_exp_integral([1e-13], 1.0) == pytest.approx(1.0, rel=1e-12)


def test_nested_integral_against_scipy_quadrature():
    from scipy import integrate

    f = lambda x3, x2, x1: math.exp(0.3 * x1 - 0.7 * x2 + 0.4 * x3)
    want, _ = integrate.tplquad(
        f, 0, 1, 0, lambda x1: x1, 0, lambda x1, x2: x2,
        epsabs=1e-13, epsrel=1e-13,
    )
    got = pt.nested_exp_integral([0.3, -0.7, 0.4], 1.0)
    assert got == pytest.approx(want, abs=1e-9)


def test_nested_integral_against_gl_oracle_sweep():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 5))
        rates = rng.uniform(-2.0, 2.0, size=n)
        beta = float(rng.uniform(0.5, 1.5))
        want = nested_integral_gl(list(rates), beta)
        got = pt.nested_exp_integral(list(rates), beta)
        assert got == pytest.approx(want, rel=1e-8)


def test_nested_integral_degenerate_rates():
    # pairs of opposite rates make interior cumulative sums vanish
    got = pt.nested_exp_integral([0.9, -0.9, 0.9, -0.9], 1.0)
    want = nested_integral_gl([0.9, -0.9, 0.9, -0.9], 1.0)
    assert got == pytest.approx(want, rel=1e-10)


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=1, max_size=4),
    st.floats(0.3, 2.0),
)
def test_nested_integral_property(rates, beta):
    got = pt.nested_exp_integral(rates, beta)
    want = nested_integral_gl(rates, beta)
    assert got == pytest.approx(want, rel=1e-8, abs=1e-12)


def test_exp_poly_sum_merges_tiny_rates():
    f = pt.ExpPolySum.one().times_exp(1e-12).integrate(1.0)
    assert len(f.terms) == 1
    rate, poly = f.terms[0]
    assert rate == 0.0
    assert poly == (0.0, 1.0)


def test_ordered_sum_identity_trivial():
    lhs, rhs = pt.ordered_sum_identity_check([0.0, 0.0], 1.5)
    assert lhs == pytest.approx(1.5**2)
    assert rhs == pytest.approx(1.5**2)


def test_ordered_sum_identity_pm_one():
    lhs, rhs = pt.ordered_sum_identity_check([1.0, -1.0], 1.0)
    want = (math.e - 1.0) * (1.0 - 1.0 / math.e)
    assert lhs == pytest.approx(want, rel=1e-12)
    assert rhs == pytest.approx(want, rel=1e-12)


def test_ordered_sum_identity_sweep():
    rng = np.random.default_rng(3)
    for _ in range(100):
        rates = rng.uniform(-2.0, 2.0, size=4)
        lhs, rhs = pt.ordered_sum_identity_check(list(rates), 1.0)
        assert lhs == pytest.approx(rhs, rel=1e-10)


# ---------------------------------------------------------------------------
# momentum constraint elimination


def test_coefficient_terms_eliminate_cleanly():
    # every (pi, tau, j) used in the a0/a1/a2 assembly gives exactly n+1
    # free momenta with no residual constraint rows
    for term in ALL_TERMS:
        n = len(term.pi)
        for j in range(n):
            free, bound, coef, check = pt.solve_momentum_constraints(
                n, term.pi, term.tau, j
            )
            assert len(check) == 0
            assert len(free) == n + 1
            assert len(bound) == n - 1


@pytest.mark.parametrize("n", [2, 3])
def test_constraint_solutions_match_bruteforce(n):
    L, d = 2, 1
    for term in ALL_TERMS:
        if len(term.pi) != n:
            continue
        for j in range(n):
            sols = delta_solutions_bruteforce(L, d, n, term.pi, term.tau, j)
            assert len(sols) == L ** (d * (n + 1))
            free, bound, coef, _ = pt.solve_momentum_constraints(
                n, term.pi, term.tau, j
            )
            produced = set()
            from itertools import product

            for tup in product(range(L), repeat=len(free)):
                full = [0] * (2 * n)
                for f, v in zip(free, tup):
                    full[f] = v
                for b, row in zip(bound, coef):
                    full[b] = int(sum(c * tup[i] for i, c in enumerate(row)) % L)
                produced.add(tuple(full))
            assert produced == {tuple(s) for s in sols}


def test_degenerate_pair_keeps_all_momenta_free():
    free, bound, coef, check = pt.solve_momentum_constraints(
        2, pt.ID2, pt.ID2, 0
    )
    assert len(free) == 4
    assert len(check) == 1


# ---------------------------------------------------------------------------
# g_lambda_derivative against independent oracles


def quad_sites(params):
    return pt.SiteQuad.on(params, (0,), (1,), (1,), (0,))


def test_g1_matches_time_quadrature(skew_prop, skew_params):
    sq = quad_sites(skew_params)
    want = g_time_quadrature(skew_prop, sq, 1, (0,), (0,))
    got = pt.g_lambda_derivative(skew_prop, sq, 1, (0,), (0,))
    assert got == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize(
    "pi,tau",
    [(pt.SWAP2, pt.SWAP2), (pt.ID2, pt.SWAP2), (pt.SWAP2, pt.ID2),
     (pt.ID2, pt.ID2)],
)
def test_g2_matches_time_quadrature(skew_prop, skew_params, pi, tau):
    sq = quad_sites(skew_params)
    want = g_time_quadrature(skew_prop, sq, 2, pi, tau)
    got = pt.g_lambda_derivative(skew_prop, sq, 2, pi, tau)
    assert got == pytest.approx(want, rel=1e-11)


def test_g3_matches_time_quadrature_live(skew_prop, skew_params):
    sq = quad_sites(skew_params)
    pi, tau = pt.SWAP23, pt.SWAP12
    want = g_time_quadrature(skew_prop, sq, 3, pi, tau)
    got = pt.g_lambda_derivative(skew_prop, sq, 3, pi, tau)
    assert got == pytest.approx(want, rel=1e-10)


# frozen from oracles.g_time_quadrature(order=14) at d=1, L=2, t=1,
# mu=0.3, beta=1.2 with sites x1=(0,), x2=(1,), y1=(1,), y2=(0,)
G3_FROZEN = {
    (pt.ID3, pt.CYCLE3): 0.03805296609833671,
    (pt.CYCLE3, pt.ID3): 0.03805296609833671,
    (pt.CYCLE3, pt.CYCLE3): 0.0052417498615129985,
    (pt.SWAP23, pt.SWAP12): 0.002217199223218895,
    (pt.SWAP23, pt.CYCLE3): -4.9944833815115486e-05,
    (pt.CYCLE3, pt.SWAP23): -4.9944833815113426e-05,
    (pt.CYCLE3, pt.CYCLE3_SQ): -0.026576425325756922,
}


@pytest.mark.parametrize("pi,tau", list(G3_FROZEN))
def test_g3_frozen_values(skew_prop, skew_params, pi, tau):
    sq = quad_sites(skew_params)
    got = pt.g_lambda_derivative(skew_prop, sq, 3, pi, tau)
    assert got == pytest.approx(G3_FROZEN[(pi, tau)], rel=1e-9)


def test_g_matches_momentum_bruteforce(skew_prop, skew_params):
    # same formula, but complex phases, explicit delta filtering and the
    # pure-python integral; also checks the imaginary residue
    sq = pt.SiteQuad.on(skew_params, (0,), (0,), (1,), (0,))
    for term in pt.A1_TERMS + pt.A2_TERMS:
        n = len(term.pi)
        want, imag = g_momentum_bruteforce(skew_prop, sq, n, term.pi, term.tau)
        assert imag < 1e-10
        got = pt.g_lambda_derivative(skew_prop, sq, n, term.pi, term.tau)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-13)


def test_g_degenerate_pair_bruteforce(skew_prop, skew_params):
    # rank-deficient delta system goes through the filtering path
    sq = quad_sites(skew_params)
    want, _ = g_momentum_bruteforce(skew_prop, sq, 2, pt.ID2, pt.ID2)
    got = pt.g_lambda_derivative(skew_prop, sq, 2, pt.ID2, pt.ID2)
    assert got == pytest.approx(want, rel=1e-12)


def test_translation_invariance(paper_prop, paper_params):
    sq1 = pt.SiteQuad.on(paper_params, (0, 0), (0, 0), (2, 1), (2, 1))
    sq2 = pt.SiteQuad.on(paper_params, (1, 1), (1, 1), (3, 2), (3, 2))
    for n, pi, tau in [(1, pt.ID1, pt.ID1), (2, pt.SWAP2, pt.SWAP2)]:
        g1 = pt.g_lambda_derivative(paper_prop, sq1, n, pi, tau)
        g2 = pt.g_lambda_derivative(paper_prop, sq2, n, pi, tau)
        assert g1 == pytest.approx(g2, rel=1e-12)
        assert abs(g1) > 1e-6


def test_g_rejects_bad_order(skew_prop, skew_params):
    sq = quad_sites(skew_params)
    with pytest.raises(ValueError):
        pt.g_lambda_derivative(skew_prop, sq, 4, (0, 1, 2, 3), (0, 1, 2, 3))


# ---------------------------------------------------------------------------
# coefficients


def test_a0_flat_is_half():
    p = ModelParams(d=1, L=2, t=0.0, tprime=0.0, mu=0.0, beta=1.0)
    prop = Propagator(p)
    sq = pt.SiteQuad.on(p, (0,), (0,), (0,), (0,))
    assert pt.coeff_a0(prop, sq) == pytest.approx(0.5, abs=1e-14)


def test_a0_is_product_of_equal_time_covariances(skew_prop, skew_params):
    sq = pt.SiteQuad.on(skew_params, (0,), (1,), (1,), (1,))
    c1 = skew_prop.covariance((0,), 0, 0.0, (1,), 0, 0.0)
    c2 = skew_prop.covariance((1,), 1, 0.0, (1,), 1, 0.0)
    want = 2.0 * c1 * c2
    assert pt.coeff_a0(skew_prop, sq) == pytest.approx(want, rel=1e-12)


def test_site_swap_symmetry(skew_prop, skew_params):
    sq = pt.SiteQuad.on(skew_params, (0,), (1,), (1,), (0,))
    sw = sq.swapped()
    assert pt.coeff_a0(skew_prop, sq) == pytest.approx(
        pt.coeff_a0(skew_prop, sw), rel=1e-13
    )
    assert pt.coeff_a1(skew_prop, sq) == pytest.approx(
        pt.coeff_a1(skew_prop, sw), rel=1e-13
    )
    assert pt.coeff_a2(skew_prop, sq) == pytest.approx(
        pt.coeff_a2(skew_prop, sw), rel=1e-12
    )


def test_series_eval():
    p = ModelParams(d=1, L=2, t=0.0, tprime=0.0, mu=0.0, beta=1.0)
    sq = pt.SiteQuad.on(p, (0,), (0,), (0,), (0,))
    coeffs = pt.PerturbationCoefficients(0.5, -0.3, 0.1, sq, p)
    assert pt.series_eval(coeffs, 0.0) == 0.5
    assert pt.series_eval(coeffs, 2.0) == pytest.approx(0.5 - 0.6 + 0.4)


def test_cost_guard(skew_prop, skew_params):
    sq = quad_sites(skew_params)
    with pytest.raises(pt.CostGuardError):
        pt.coeff_a2(skew_prop, sq, budget=3)


def test_checkpoint_resume(tmp_path, skew_prop, skew_params):
    sq = quad_sites(skew_params)
    ck = tmp_path / "a2.json"
    full = pt.coeff_a2(skew_prop, sq, checkpoint=str(ck))
    assert ck.exists()
    # resumed run reuses all stored terms and reproduces the value
    calls = []
    resumed = pt.coeff_a2(
        skew_prop, sq, checkpoint=str(ck),
        progress=lambda i, n, g: calls.append(i),
    )
    assert resumed == full


def test_perm_pair_validation():
    with pytest.raises(ValueError):
        pt.PermPair((0, 0), (0, 1), Fraction(1))
