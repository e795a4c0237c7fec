import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from qstein.errors import CapExceeded, UnsupportedFamily
from qstein.families import (
    DiscreteMeasure,
    NType,
    StateFamily,
    av_hull_symmetric_decomposition,
    axiom_audit,
    count_types,
    delta_cover,
    dominates,
    enumerate_types,
    hull_membership,
    iid_mixture_state,
    membership_distance,
    named_state,
    ppt_min_eig,
    separable_inner,
    separable_membership,
    separable_outer_check,
    stabiliser_count,
    stabiliser_states,
    type_class_state,
    werner_state,
)
from qstein.operators import DensityOperator, is_permutation_invariant, mixture, tensor, tensor_power
from qstein.random_states import random_density, random_product_pure

import oracles

KET0 = named_state("zero")
KET1 = named_state("one")
PAULIS = {
    "I": np.eye(2),
    "X": np.array([[0, 1], [1, 0]]),
    "Y": np.array([[0, -1j], [1j, 0]]),
    "Z": np.diag([1.0, -1.0]),
}


class TestMeasures:
    def test_normalization(self):
        with pytest.raises(ValueError):
            DiscreteMeasure([KET0, KET1], [0.5, 0.6])

    def test_support_cap(self):
        with pytest.raises(CapExceeded):
            DiscreteMeasure.uniform([KET0] * 65)

    def test_point_mass(self, rng):
        sigma = random_density(rng, 2)
        assert_allclose(iid_mixture_state(DiscreteMeasure.point(sigma), 3).matrix, tensor_power(sigma, 3).matrix)

    def test_single_copy_barycentre(self, rng):
        mu = DiscreteMeasure([random_density(rng, 2), random_density(rng, 2)], [0.3, 0.7])
        assert_allclose(iid_mixture_state(mu, 1).matrix, mu.barycentre().matrix)

    def test_two_copy_hand_value(self):
        out = iid_mixture_state(DiscreteMeasure.uniform([KET0, KET1]), 2)
        assert_allclose(out.matrix, np.diag([0.5, 0, 0, 0.5]))

    def test_compressed(self):
        mu = DiscreteMeasure([KET0, KET0, KET1], [0.25, 0.25, 0.5]).compressed()
        assert len(mu.support) == 2
        assert_allclose(mu.weights, [0.5, 0.5])


class TestTypes:
    @pytest.mark.parametrize("k,n", [(2, 3), (3, 4), (1, 5), (4, 2)])
    def test_counts(self, k, n):
        types = enumerate_types(k, n)
        assert len(types) == oracles.compositions(n, k) == count_types(k, n)
        assert all(t.n == n for t in types)

    def test_hand_counts(self):
        assert len(enumerate_types(2, 3)) == 4
        assert len(enumerate_types(3, 4)) == 15
        assert len(enumerate_types(1, 7)) == 1

    def test_lexicographic(self):
        counts = [t.counts for t in enumerate_types(3, 3)]
        assert counts == sorted(counts)

    def test_sum_enforced(self):
        with pytest.raises(ValueError):
            NType(2, (1, -1))

    def test_sequences(self):
        v = NType(3, (2, 1, 0))
        seqs = list(v.sequences())
        assert len(seqs) == v.class_size() == 3
        assert len(set(seqs)) == 3

    def test_single_letter(self, rng):
        sigma = random_density(rng, 2)
        assert_allclose(type_class_state([sigma], NType(1, (3,))).matrix, tensor_power(sigma, 3).matrix)

    def test_two_sequences(self, rng):
        a, b = random_density(rng, 2), random_density(rng, 2)
        expected = (tensor(a, b).matrix + tensor(b, a).matrix) / 2
        assert_allclose(type_class_state([a, b], NType(2, (1, 1))).matrix, expected, atol=1e-15)

    def test_invariant(self, rng):
        base = [random_density(rng, 2) for _ in range(3)]
        assert is_permutation_invariant(type_class_state(base, NType(3, (1, 1, 1))))

    def test_decomposition(self, rng):
        a, b = random_density(rng, 2), random_density(rng, 2)
        assert len(av_hull_symmetric_decomposition([a, b], 2)) == 3
        one = av_hull_symmetric_decomposition([a, b], 1)
        assert_allclose(one[0][1].matrix, b.matrix)
        assert_allclose(one[1][1].matrix, a.matrix)
        single = av_hull_symmetric_decomposition([a], 3)
        assert len(single) == 1
        assert_allclose(single[0][1].matrix, tensor_power(a, 3).matrix)

    def test_iid_probability(self):
        # uniform type on two letters, n = 2: 2 sequences of probability 1/4
        assert math.isclose(NType(2, (1, 1)).iid_probability(), 0.5)


class TestDeltaCover:
    def test_singleton(self, rng):
        sigma = random_density(rng, 2)
        cover = delta_cover([sigma], 0.1)
        assert len(cover.centers) == 1
        assert_allclose(cover.centers[0].matrix, sigma.matrix)

    def test_large_delta(self):
        cover = delta_cover([KET0, KET1], 3.0)
        assert len(cover.centers) == 1
        assert_allclose(cover.centers[0].matrix, np.eye(2) / 2)
        # 2^3 · I/2 - |0><0| has eigenvalues 3 and 4
        assert math.isclose(cover.worst_min_eig, 3.0, abs_tol=1e-12)

    def test_small_delta_splits(self):
        cover = delta_cover([KET0, KET1], 0.5)
        assert len(cover.centers) == 2
        assert cover.assignment == [0, 1]

    def test_guarantee(self, rng):
        base = [random_density(rng, 2) for _ in range(5)]
        cover = delta_cover(base, 1.0)
        assert len(cover.assignment) == len(base)
        for s, j in zip(base, cover.assignment):
            assert dominates(cover.centers[j], s, 2.0) >= -1e-9


class TestStabiliser:
    @pytest.mark.parametrize("n", [1, 2])
    def test_counts(self, n):
        states = stabiliser_states(n)
        assert len(states) == oracles.stabiliser_count(n) == stabiliser_count(n)

    def test_order_formula_values(self):
        assert oracles.stabiliser_count(1) == 6
        assert oracles.stabiliser_count(2) == 60

    def test_single_qubit_bloch_vectors(self):
        vecs = set()
        for s in stabiliser_states(1):
            r = tuple(int(round(np.real(np.trace(s.matrix @ PAULIS[a])))) for a in "XYZ")
            vecs.add(r)
        assert vecs == {(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)}

    def test_two_qubit_stabilised(self):
        # a pure two-qubit stabiliser state has exactly three non-identity Paulis at ±1
        for s in stabiliser_states(2):
            hits = 0
            for a, b in itertools.product("IXYZ", repeat=2):
                if a == b == "I":
                    continue
                val = np.real(np.trace(s.matrix @ np.kron(PAULIS[a], PAULIS[b])))
                if abs(abs(val) - 1) < 1e-9:
                    hits += 1
                else:
                    assert abs(val) < 1e-9
            assert hits == 3

    def test_barycentre(self):
        avg = sum(s.matrix for s in stabiliser_states(1)) / 6
        assert np.max(np.abs(avg - np.eye(2) / 2)) <= 1e-12

    def test_unsupported(self):
        with pytest.raises(UnsupportedFamily):
            stabiliser_states(3)


class TestSeparable:
    def test_product_passes(self, rng):
        assert separable_outer_check(tensor(random_density(rng, 2), random_density(rng, 2)))

    def test_bell_fails(self):
        bell = named_state("bell")
        assert not separable_outer_check(bell)
        assert math.isclose(ppt_min_eig(bell, (2, 2)), -0.5, abs_tol=1e-12)

    def test_werner_threshold(self):
        # partial transpose of the singlet Werner state has minimum eigenvalue (1 - 3p)/4
        for p in (0.2, 0.5, 0.8):
            assert math.isclose(ppt_min_eig(werner_state(p), (2, 2)), (1 - 3 * p) / 4, abs_tol=1e-12)
        assert separable_membership(werner_state(0.2), (2, 2))[0] is True
        assert separable_membership(werner_state(0.8), (2, 2))[0] is False

    def test_inner_inside_outer(self):
        for n in (1, 2):
            fam = separable_inner((2, 2), 6, seed=3, n=n)
            for x in fam.extreme_points():
                assert separable_outer_check(x, (2, 2))

    def test_inner_deterministic(self):
        a = separable_inner((2, 2), 4, seed=1).extreme_points()
        b = separable_inner((2, 2), 4, seed=1).extreme_points()
        assert all(np.array_equal(x.matrix, y.matrix) for x, y in zip(a, b))

    def test_product_pure_samples(self, rng):
        x = random_product_pure(rng, (2, 2))
        assert separable_membership(x, (2, 2))[0] is True


class TestMembership:
    def test_member(self, rng):
        fam = StateFamily.explicit([random_density(rng, 2) for _ in range(3)])
        mid = mixture(fam.base, [0.2, 0.2, 0.6])
        assert membership_distance(fam, mid) <= 1e-6
        assert hull_membership(fam.base, mid)[0]

    def test_closed_form(self):
        assert math.isclose(membership_distance(StateFamily.explicit([KET0]), KET1), math.sqrt(2), abs_tol=1e-9)

    def test_monotone_in_hull(self, rng):
        target = random_density(rng, 2)
        small = StateFamily.explicit([KET0])
        big = StateFamily.explicit([KET0, KET1])
        assert membership_distance(big, target) <= membership_distance(small, target) + 1e-12

    def test_outer_unsupported(self):
        with pytest.raises(UnsupportedFamily):
            membership_distance(StateFamily("SeparableOuter", copy_dims=(2, 2)), named_state("bell"))


class TestFamilies:
    def test_levels(self, rng):
        a, b = random_density(rng, 2), random_density(rng, 2)
        iid = StateFamily.iid([a, b]).at(3)
        assert len(iid.extreme_points()) == 2
        av = StateFamily.av([a, b]).at(3)
        assert len(av.extreme_points()) == 8
        assert len(av.spanning_points()) == 4
        assert av.dims == (2, 2, 2)

    def test_roundtrip(self):
        fam = StateFamily.iid([KET0, named_state("plus")], n=2)
        back = StateFamily.from_dict(fam.to_dict(), resolve=lambda d: DensityOperator.from_dict(d))
        assert back.kind == fam.kind and back.n == 2
        assert all(np.allclose(x.matrix, y.matrix) for x, y in zip(back.base, fam.base))

    def test_unknown_kind(self):
        with pytest.raises(UnsupportedFamily):
            StateFamily("Polytope", (KET0,))

    def test_iid_not_closed_under_mixed_products(self):
        # the i.i.d. hull misses ρ ⊗ ρ' while every power stays inside
        rho, rho_p = KET0, named_state("plus")
        fam2 = StateFamily.iid([rho, rho_p], n=2)
        assert not fam2.contains(tensor(rho, rho_p))[0]
        assert fam2.contains(tensor(rho_p, rho_p))[0]


class TestAudit:
    def test_stabiliser_single_qubit(self):
        rep = axiom_audit(StateFamily.stabiliser(1), DensityOperator.maximally_mixed((2,)), max_n=2)
        axioms = rep.detail["axioms"]
        for key in ("Q.I(a)", "Q.I(b)", "Q.II", "Q.III"):
            assert axioms[key]["verdict"] == "pass", key
        assert rep.verdict == "pass"
        assert axioms["Q.IV"]["largest_radius_held"] >= 0

    def test_iid_hull(self):
        fam = StateFamily.iid([KET0, named_state("plus")])
        rep = axiom_audit(fam, DensityOperator.maximally_mixed((2,)), max_n=2)
        axioms = rep.detail["axioms"]
        assert axioms["Q.II"]["verdict"] == "pass"
        assert rep.verdict == "fail"

    def test_replay(self):
        fam = StateFamily.iid([KET0, named_state("plus")])
        tau = DensityOperator.maximally_mixed((2,))
        a = axiom_audit(fam, tau, max_n=2, seed=5)
        b = axiom_audit(fam, tau, max_n=2, seed=5)
        assert a.to_dict() == b.to_dict()
