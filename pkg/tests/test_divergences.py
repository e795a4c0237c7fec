import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qstein.divergences import (
    Bracket,
    classical_dh_bits,
    classical_np_beta,
    decode_float,
    dh_eps,
    dh_eps_composite,
    encode_float,
    g_afw,
    h2,
    iid_distribution,
    measured_relent_pinched,
    neyman_pearson_simple,
    pinch,
    pinching_constant,
    relent_between_hulls,
    relent_to_hull,
    umegaki,
)
from qstein.operators import DensityOperator, mixture, tensor
from qstein.random_states import random_density, random_diagonal_density

from oracles import grid_min, kl_bits, likelihood_ratio_beta, lp_beta, relent_bits

P = DensityOperator.diagonal([0.5, 0.5])
Q = DensityOperator.diagonal([0.25, 0.75])
KET0 = DensityOperator.basis(0, (2,))
KET1 = DensityOperator.basis(1, (2,))
PLUS = DensityOperator.from_vector([1, 1])
MIXED = DensityOperator.maximally_mixed((2,))

# scalar KL oracle: 0.5 log2(0.5/0.25) + 0.5 log2(0.5/0.75) = 1 - 0.5 log2 3
KL_PQ = 0.20751874963942196


def diag_of(x):
    return np.real(np.diag(x.matrix))


class TestUmegaki:
    def test_frozen_oracle(self):
        assert math.isclose(kl_bits([0.5, 0.5], [0.25, 0.75]), KL_PQ, rel_tol=1e-15)

    def test_identical(self, rng):
        rho = random_density(rng, 3)
        assert abs(umegaki(rho, rho)) <= 1e-12

    def test_commuting(self):
        assert math.isclose(umegaki(P, Q), KL_PQ, abs_tol=1e-12)

    def test_pure_vs_mixed(self):
        assert math.isclose(umegaki(KET0, MIXED), 1.0, abs_tol=1e-12)

    def test_support_violation(self):
        assert umegaki(KET0, KET1) == math.inf

    def test_matches_eig_oracle(self, rng):
        for _ in range(5):
            rho, sigma = random_density(rng, 3), random_density(rng, 3)
            assert math.isclose(umegaki(rho, sigma), relent_bits(rho.matrix, sigma.matrix), abs_tol=1e-10)

    def test_inf_encoding(self):
        assert encode_float(math.inf) == "inf"
        assert decode_float("inf") == math.inf
        assert encode_float(0.25) == 0.25


class TestNeymanPearson:
    @pytest.mark.parametrize("eps", [0.1, 0.3])
    def test_identical_states(self, rng, eps):
        rho = random_density(rng, 3)
        res = neyman_pearson_simple(rho, rho, eps)
        assert math.isclose(res.beta, 1 - eps, abs_tol=1e-9)
        assert math.isclose(dh_eps(rho, rho, eps), -math.log2(1 - eps), abs_tol=1e-8)

    def test_identical_matches_lp(self):
        p = [0.2, 0.3, 0.5]
        assert math.isclose(lp_beta([p], [p], 0.1), 0.9, abs_tol=1e-9)

    def test_orthogonal(self):
        res = neyman_pearson_simple(KET0, KET1, 0.1)
        assert res.beta == 0.0
        assert dh_eps(KET0, KET1, 0.1) == math.inf

    def test_commuting_pair(self):
        res = neyman_pearson_simple(P, Q, 0.25)
        oracle = likelihood_ratio_beta([0.5, 0.5], [0.25, 0.75], 0.25)
        # accept outcome 0 fully (0.5 mass, cost 0.25), then half of outcome 1 (cost 0.375)
        assert math.isclose(oracle, 0.625, abs_tol=1e-15)
        assert abs(res.beta - oracle) <= 1e-8
        assert math.isclose(classical_np_beta([0.5, 0.5], [0.25, 0.75], 0.25), oracle, abs_tol=1e-12)

    def test_test_operator_feasible(self, rng):
        rho, sigma = random_density(rng, 3), random_density(rng, 3)
        res = neyman_pearson_simple(rho, sigma, 0.2)
        w = res.test.eigvals()
        assert w[0] >= -1e-9 and w[-1] <= 1 + 1e-9
        assert rho.expectation(res.test) >= 0.8 - 1e-9
        assert math.isclose(sigma.expectation(res.test), res.beta, abs_tol=1e-12)
        assert res.gap <= 1e-8
        assert res.lower <= res.beta + 1e-12

    def test_random_commuting_against_lp(self, rng):
        for _ in range(5):
            p = random_diagonal_density(rng, 4)
            q = random_diagonal_density(rng, 4)
            for eps in (0.05, 0.25):
                beta = neyman_pearson_simple(p, q, eps).beta
                assert abs(beta - lp_beta([diag_of(p)], [diag_of(q)], eps)) <= 1e-8

    def test_eps_range(self):
        with pytest.raises(ValueError):
            neyman_pearson_simple(P, Q, 0.0)
        with pytest.raises(ValueError):
            neyman_pearson_simple(P, Q, 1.0)

    def test_classical_iid(self):
        p2 = iid_distribution([0.5, 0.5], 2)
        assert_allclose(p2, [0.25] * 4)
        assert math.isclose(classical_dh_bits([0.5, 0.5], [0.5, 0.5], 0.5), 1.0)


class TestComposite:
    def test_singletons_collapse(self, rng):
        rho, sigma = random_density(rng, 2), random_density(rng, 2)
        br = dh_eps_composite([rho], [sigma], 0.1)
        beta = neyman_pearson_simple(rho, sigma, 0.1).beta
        assert br.quantity == "beta"
        assert br.contains(beta, tol=1e-9)
        assert br.width <= 1e-6

    def test_same_lists(self, rng):
        states = [random_density(rng, 2) for _ in range(3)]
        br = dh_eps_composite(states, states, 0.2)
        assert br.contains(0.8, tol=1e-9)

    def test_diagonal_families_vs_lp(self, rng):
        a = [random_diagonal_density(rng, 3) for _ in range(3)]
        b = [random_diagonal_density(rng, 3) for _ in range(2)]
        oracle = lp_beta([diag_of(x) for x in a], [diag_of(x) for x in b], 0.1)
        br = dh_eps_composite(a, b, 0.1)
        assert br.contains(oracle, tol=1e-9)

    def test_quantum_bracket_ordered(self, rng):
        a = [random_density(rng, 2) for _ in range(2)]
        b = [random_density(rng, 2) for _ in range(2)]
        br = dh_eps_composite(a, b, 0.1)
        assert br.lower <= br.upper + 1e-12
        assert br.width <= 1e-6
        bits = br.to_bits()
        assert bits.lower <= bits.upper

    def test_list_cap(self):
        with pytest.raises(ValueError):
            dh_eps_composite([P] * 65, [Q], 0.1)


class TestPinching:
    def test_maximally_mixed_reference(self, rng):
        rho = random_density(rng, 3)
        assert_allclose(pinch(rho, DensityOperator.maximally_mixed((3,))).matrix, rho.matrix)

    def test_diagonal_unchanged(self):
        assert_allclose(pinch(P, Q).matrix, P.matrix)

    def test_trace_and_commutation(self, rng):
        rho, sigma = random_density(rng, 3), random_density(rng, 3)
        out = pinch(rho, sigma)
        assert math.isclose(out.trace(), 1.0, abs_tol=1e-12)
        assert np.linalg.norm(out.matrix @ sigma.matrix - sigma.matrix @ out.matrix) <= 1e-8

    def test_commuting_equals_umegaki(self):
        assert math.isclose(measured_relent_pinched(P, Q), umegaki(P, Q), abs_tol=1e-12)

    def test_identical(self, rng):
        rho = random_density(rng, 2)
        assert abs(measured_relent_pinched(rho, rho)) <= 1e-12

    def test_plus_state(self):
        sigma = DensityOperator.diagonal([0.75, 0.25])
        measured = measured_relent_pinched(PLUS, sigma)
        # outcome distributions (1/2, 1/2) vs (3/4, 1/4)
        assert math.isclose(measured, kl_bits([0.5, 0.5], [0.75, 0.25]), abs_tol=1e-12)
        # ρ pure: D = -½ log2(3/4) - ½ log2(1/4)
        assert math.isclose(umegaki(PLUS, sigma), -0.5 * math.log2(0.75) - 0.5 * math.log2(0.25), abs_tol=1e-12)
        assert measured <= umegaki(PLUS, sigma)

    def test_constant(self):
        assert pinching_constant(2, 1) == 2.0
        assert pinching_constant(2, 3) == 4.0


class TestAuxiliary:
    def test_g_values(self):
        assert g_afw(0.0) == 0.0
        assert math.isclose(g_afw(1.0), 2.0)
        xs = np.linspace(0, 1, 101)
        assert np.all(np.diff([g_afw(x) for x in xs]) > 0)

    def test_g_negative(self):
        with pytest.raises(ValueError):
            g_afw(-0.1)

    def test_h2(self):
        assert h2(0.5) == 1.0
        assert h2(0.0) == 0.0


class TestHull:
    def test_member(self, rng):
        ext = [random_density(rng, 2) for _ in range(3)]
        br = relent_to_hull(ext[1], ext)
        assert br.upper == 0.0

    def test_singleton(self, rng):
        rho, sigma = random_density(rng, 2), random_density(rng, 2)
        assert relent_to_hull(rho, [sigma]).upper == umegaki(rho, sigma)

    def test_grid_oracle(self):
        s1 = DensityOperator.diagonal([0.25, 0.75])
        s2 = DensityOperator.diagonal([0.75, 0.25])
        rho = DensityOperator([[0.6, 0.2], [0.2, 0.4]])

        def d(w):
            return relent_bits(rho.matrix, w * s1.matrix + (1 - w) * s2.matrix)

        oracle = grid_min(d, 1e-4)
        br = relent_to_hull(rho, [s1, s2])
        assert abs(br.upper - oracle) <= 1e-4
        assert br.lower <= oracle + 1e-9
        assert br.width <= 1e-6

    def test_support_failure(self):
        assert relent_to_hull(KET0, [KET1, KET1]).upper == math.inf

    def test_between_hulls(self, rng):
        a = [random_density(rng, 2) for _ in range(2)]
        b = [random_density(rng, 2) for _ in range(2)]
        br = relent_between_hulls(a, b)
        # any mixture pair is feasible, so it upper-bounds the minimum
        grid = min(umegaki(mixture(a, [u, 1 - u]), mixture(b, [v, 1 - v]))
                   for u in np.linspace(0, 1, 21) for v in np.linspace(0, 1, 21))
        assert br.lower <= grid + 1e-9
        assert br.upper <= grid + 1e-6

    def test_bracket_order(self):
        with pytest.raises(ValueError):
            Bracket(1.0, 0.0)
        assert Bracket(math.inf, math.inf).width == 0.0
        assert Bracket(0.5, 0.5, "beta").to_bits().lower == 1.0


def test_tensor_additivity(rng):
    rho, sigma = random_density(rng, 2), random_density(rng, 2)
    two = umegaki(tensor(rho, rho), tensor(sigma, sigma))
    assert math.isclose(two, 2 * umegaki(rho, sigma), abs_tol=1e-10)
