import json
import math

import numpy as np
import pytest

from qstein.errors import CapExceeded, ConfigError
from qstein.families import DiscreteMeasure, StateFamily, named_state
from qstein.harness import (
    DEFAULT_CONFIG,
    apply_channel,
    check_afw_chain,
    check_convexify_invariance,
    check_dpi_dh,
    check_measure_domination,
    check_pinching,
    check_stein_convergence,
    check_symmetrization,
    check_type_domination,
    common_spectra,
    injected_violation,
    merge_config,
    run_all,
    symmetrization_trials,
)
from qstein.operators import DensityOperator, tensor, tensor_power
from qstein.random_states import perturb, random_density
from qstein.reports import CheckReport, inequality_slack, verdict_for

from oracles import likelihood_ratio_beta

P = DensityOperator.diagonal([0.5, 0.5])
Q = DensityOperator.diagonal([0.25, 0.75])
MIXED = DensityOperator.maximally_mixed((2,))

# scalar KL of (1/2, 1/2) against (1/4, 3/4), frozen from the closed form 1 - log2(3)/2
KL_PQ = 0.20751874963942196

SMALL = {
    "checks": {
        "pinching": {"n_values": [1, 2], "trials": 2},
        "afw": {"n_values": [1, 2], "trials": 1},
        "type_domination": {"alphabet_sizes": [2], "n_values": [1, 2]},
        "measure_domination": {"truncations": [1, 2], "n_values": [1, 2]},
        "sandwich": {"n_values": [1, 2]},
        "convexify": {"trials": 1},
        "symmetrization": {"n_values": [2], "trials": 1},
        "stein": {"n_max": 4, "n_ref": 1, "quantum_n_max": 3},
        "dpi": {"trials": 1},
    }
}


class TestReports:
    def test_verdict_rule(self):
        assert verdict_for(-2e-6, 1e-6) == "fail"
        assert verdict_for(-5e-7, 1e-6) == "pass"
        assert verdict_for(math.nan, 1e-6) == "inconclusive"
        assert verdict_for(1.0, 1e-6, instances=0) == "inconclusive"

    def test_auto_verdict(self):
        assert CheckReport("x", "a", 1, -1.0, 1e-6).verdict == "fail"
        with pytest.raises(ValueError):
            CheckReport("x", "a", 1, 0.0, 1e-6, verdict="maybe")

    def test_slack_arithmetic(self):
        slack, widths = inequality_slack(0.0, 0.1, 0.3, 0.5)
        assert math.isclose(slack, 0.2)
        assert math.isclose(widths, 0.3)
        assert inequality_slack(1.0, math.inf, math.inf, math.inf)[0] == 0.0

    def test_inf_serialization(self):
        d = CheckReport("x", "a", 1, math.inf, 1e-6).to_dict()
        assert d["worst_slack"] == "inf"


class TestPinching:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_passes(self, n):
        rep = check_pinching(n, trials=4)
        assert rep.verdict == "pass"
        assert rep.instances == 5

    def test_constants(self):
        assert check_pinching(1, trials=1).detail["constant_bits"] == 2.0
        assert check_pinching(3, trials=1).detail["constant_bits"] == 4.0

    def test_commuting_tight(self):
        assert abs(check_pinching(2, trials=1).detail["commuting_upper_slack"]) <= 1e-10

    def test_cap(self):
        with pytest.raises(CapExceeded):
            check_pinching(5)


class TestAfw:
    def test_identical_states(self, rng):
        fam = StateFamily.av([MIXED, random_density(rng, 2)])
        rho = random_density(rng, 2)
        rep = check_afw_chain(rho, rho, fam, MIXED, 2)
        assert rep.detail["trace_distance"] <= 1e-15
        assert rep.detail["rhs_bits"] == 0.0
        assert rep.verdict == "pass"

    def test_c_for_maximally_mixed(self, rng):
        fam = StateFamily.av([MIXED, random_density(rng, 2)])
        rho = random_density(rng, 2)
        rep = check_afw_chain(rho, perturb(rng, rho, 0.05), fam, MIXED, 1)
        assert rep.detail["c"] == 0.5
        eps = rep.detail["trace_distance"]
        # log2(1/c) = 1 bit
        assert math.isclose(rep.detail["rhs_bits"], eps + ((eps + 1) * math.log2(eps + 1) - eps * math.log2(eps)))
        assert rep.verdict == "pass"

    def test_conditions_fail_inconclusive(self, rng):
        # τ outside the base hull violates the insertion condition
        fam = StateFamily.av([named_state("zero"), named_state("plus")])
        rho = random_density(rng, 2)
        rep = check_afw_chain(rho, perturb(rng, rho, 0.1), fam, MIXED, 2)
        assert rep.verdict == "inconclusive"


class TestDominations:
    def test_type_domination(self, rng):
        base = [random_density(rng, 2) for _ in range(3)]
        for n in (1, 2, 3):
            assert check_type_domination(base, n).verdict == "pass"

    def test_scalar_shadow(self):
        # uniform two-letter type at n = 2: V^n(T_V) = 1/2, factor (n+1)^-2 = 1/9
        base = [DensityOperator.basis(0, (2,)), DensityOperator.basis(1, (2,))]
        rep = check_type_domination(base, 2)
        assert math.isclose(rep.detail["factor"], 1 / 9)
        # the worst shadow is over all types; the uniform one is 1/2 - 1/9
        assert rep.detail["scalar_shadow_worst"] <= 0.5 - 1 / 9 + 1e-15

    def test_singleton_base(self, rng):
        rep = check_type_domination([random_density(rng, 2)], 3)
        # σ^n - (1/4) σ^n has min eigenvalue (3/4) λmin(σ)^3 > 0
        assert rep.worst_slack > 0

    def test_measure_domination(self, rng):
        states = [random_density(rng, 2) for _ in range(2)]
        measures = [DiscreteMeasure(states, rng.dirichlet(np.ones(2))) for _ in range(4)]
        rep = check_measure_domination(measures, 2)
        assert rep.verdict == "pass"
        assert rep.detail["first_weight_error"] <= 1e-12

    def test_measure_single(self, rng):
        mu = DiscreteMeasure.point(random_density(rng, 2))
        rep = check_measure_domination([mu], 2)
        assert abs(rep.worst_slack) <= 1e-12


class TestConvexify:
    def test_singletons(self, rng):
        rep = check_convexify_invariance([random_density(rng, 2)], [random_density(rng, 2)], 0.1)
        assert rep.verdict == "pass"

    def test_random_lists(self, rng):
        a = [random_density(rng, 2) for _ in range(3)]
        b = [random_density(rng, 2) for _ in range(3)]
        assert check_convexify_invariance(a, b, 0.1).verdict == "pass"

    def test_cap(self, rng):
        with pytest.raises(CapExceeded):
            check_convexify_invariance([P] * 17, [Q], 0.1)


class TestSymmetrization:
    def test_product_equality(self, rng):
        r, s = random_density(rng, 2), random_density(rng, 2)
        rep = check_symmetrization(tensor_power(r, 3), tensor_power(s, 3))
        assert abs(rep.worst_slack) <= 1e-8

    def test_strict_gain(self, rng):
        from qstein.operators import symmetrize
        rho = tensor(random_density(rng, 2), random_density(rng, 2))
        sigma = DensityOperator.from_operator(symmetrize(random_density(rng, (2, 2))))
        rep = check_symmetrization(rho, sigma)
        assert rep.worst_slack > 0

    def test_trials(self):
        rep = symmetrization_trials((2,), trials=2)
        assert rep.verdict == "pass"
        assert rep.detail["product_max_gap"] <= 1e-8
        assert rep.detail["invariant_sigma_min_gain"] > 0


class TestStein:
    def test_identical(self):
        rep = check_stein_convergence(Q, Q, 0.25, 6)
        assert rep.verdict == "pass"
        for row in rep.detail["rows"]:
            assert math.isclose(row["a_n"][0], -math.log2(0.75) / row["n"], abs_tol=1e-12)
        assert rep.detail["D"] == 0.0

    def test_commuting_oracle(self):
        rep = check_stein_convergence(P, Q, 0.25, 8, n_ref=2)
        assert rep.verdict == "pass"
        assert math.isclose(rep.detail["D"], KL_PQ, abs_tol=1e-12)
        # n = 1 against the hand likelihood-ratio oracle
        a1 = rep.detail["rows"][0]["a_n"][0]
        assert math.isclose(a1, -math.log2(likelihood_ratio_beta([0.5, 0.5], [0.25, 0.75], 0.25)), abs_tol=1e-12)

    def test_orthogonal(self):
        k0, k1 = DensityOperator.basis(0, (2,)), DensityOperator.basis(1, (2,))
        rep = check_stein_convergence(k0, k1, 0.1, 4)
        assert rep.detail["D"] == math.inf
        assert all(r["a_n"][0] == math.inf for r in rep.detail["rows"])
        assert rep.verdict == "pass"

    def test_quantum_pair(self, rng):
        rep = check_stein_convergence(random_density(rng, 2), random_density(rng, 2), 0.25, 4)
        assert rep.detail["oracle"] == "quantum Neyman-Pearson"
        for row in rep.detail["rows"]:
            lo, hi = row["a_n"]
            assert row["measured_rate"] <= hi + 1e-6
            assert lo <= row["converse_bound"] + 1e-6

    def test_common_spectra(self, rng):
        assert common_spectra(P, Q) is not None
        assert common_spectra(random_density(rng, 2), random_density(rng, 2)) is None

    def test_quantum_cap(self, rng):
        with pytest.raises(CapExceeded):
            check_stein_convergence(random_density(rng, 2), random_density(rng, 2), 0.1, 11)


class TestDpi:
    def test_identity(self, rng):
        rho, sigma = random_density(rng, (2, 2)), random_density(rng, (2, 2))
        rep = check_dpi_dh(rho, sigma, 0.1, {"kind": "identity"})
        assert rep.detail["dh_before"] == rep.detail["dh_after"]
        assert rep.verdict == "pass"

    def test_full_depolarise(self, rng):
        rho, sigma = random_density(rng, (2, 2)), random_density(rng, (2, 2))
        rep = check_dpi_dh(rho, sigma, 0.1, {"kind": "depolarise", "delta": 1.0})
        assert rep.detail["D_after"] == pytest.approx(0.0, abs=1e-12)
        # equal outputs: β = 1 - ε, so D_H = -log2(0.9)
        assert rep.detail["dh_after"][0] == pytest.approx(-math.log2(0.9), abs=1e-8)
        assert rep.verdict == "pass"

    def test_partial_trace(self, rng):
        rho, sigma = random_density(rng, (2, 2)), random_density(rng, (2, 2))
        assert check_dpi_dh(rho, sigma, 0.1, {"kind": "partial_trace", "keep": [1]}).verdict == "pass"

    def test_apply_channel(self, rng):
        rho = random_density(rng, (2, 2))
        assert apply_channel(rho, {"kind": "partial_trace", "keep": [0]}).dims == (2,)
        with pytest.raises(ValueError):
            apply_channel(rho, {"kind": "teleport"})


class TestSuite:
    def test_injected(self):
        rep = injected_violation(0)
        assert rep.verdict == "fail"
        assert rep.worst_slack < 0

    def test_small_suite_deterministic(self):
        a = run_all(SMALL, seed=3)
        b = run_all(SMALL, seed=3)
        assert a.passed
        assert a.exit_code == 0
        assert a.to_json() == b.to_json()
        ids = [r.check_id for r in a.reports]
        assert ids == sorted(ids)
        json.loads(a.to_json())
        assert "verdict" in a.table()

    def test_injected_suite_fails(self):
        cfg = {"checks": {k: False for k in DEFAULT_CONFIG["checks"]}, "inject_violation": True}
        suite = run_all(cfg, seed=0)
        assert suite.exit_code == 1
        assert [r.check_id for r in suite.reports] == ["injected:pinching-reversed"]

    def test_config_errors(self):
        with pytest.raises(ConfigError, match="checks.pinching.bogus"):
            merge_config({"checks": {"pinching": {"bogus": 1}}})
        with pytest.raises(ConfigError, match="checks.nope"):
            merge_config({"checks": {"nope": {}}})
        with pytest.raises(ConfigError, match="schema"):
            merge_config({"schema": 2})
        with pytest.raises(ConfigError, match="extra"):
            merge_config({"extra": 1})

    def test_seed_override(self):
        cfg = {"checks": {k: False for k in DEFAULT_CONFIG["checks"]}, "seed": 9}
        cfg["checks"]["dpi"] = {"trials": 1}
        assert run_all(cfg).seed == 9
        assert run_all(cfg, seed=4).seed == 4
