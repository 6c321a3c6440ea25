"""Environment sampling and moment-formula tests.

Closed-form oracles: for the reinforced model with strength one on the
4-regular tree, the marginal parent probability is Beta(1, 2) (mean 1/3,
second moment 1/6) and each child probability is Beta(1/2, 5/2) (mean 1/6,
second moment 1/16).  The negative moment of the weight sum for b=5, p=2
is exactly 8/3 by the beta-function ratio.
"""

import math

import numpy as np
import pytest

from rwre.env import (
    EnvSpec,
    check_assumption_a,
    lerrw_fclt_condition,
    lerrw_gamma_shapes,
    lerrw_negative_moment_cf,
    lerrw_negative_moment_quadrature,
    marginal_weight_moment,
    moment_diagnostics,
    negative_moment_mc,
    parse_descriptor,
    sample_weights,
    transition_probs,
)
from rwre.errors import ConfigError, InvalidInputError
from rwre.tree import SENTINEL


class TestDescriptors:
    def test_parse_known_kinds(self):
        assert parse_descriptor("const:2.0") == ("const", (2.0,))
        assert parse_descriptor("gamma:3.0,1.5") == ("gamma", (3.0, 1.5))
        assert parse_descriptor("lerrw:1.0") == ("lerrw", (1.0,))

    def test_parse_rejects_garbage(self):
        for bad in ("nope:1", "gamma:", "gamma:1", "const:-1", "lerrw:0"):
            with pytest.raises(ConfigError):
                parse_descriptor(bad)

    def test_spec_validation(self):
        with pytest.raises(InvalidInputError):
            EnvSpec(b=0, kind="const:1.0", seed=0)
        with pytest.raises(ConfigError):
            EnvSpec(b=2, kind="bogus:1", seed=0)

    def test_subseed_changes_seed_only(self):
        spec = EnvSpec(b=3, kind="const:1.0", seed=5)
        sub = spec.subseed(b"t", 2)
        assert sub.b == spec.b and sub.kind == spec.kind
        assert sub.seed != spec.seed
        assert sub == spec.subseed(b"t", 2)


class TestTransitionProbs:
    def test_hand_computed_two_child_case(self):
        probs = transition_probs((2.0, 0.5))
        assert probs[0] == pytest.approx(2.0 / 7.0)
        assert probs[1] == pytest.approx(4.0 / 7.0)
        assert probs[2] == pytest.approx(1.0 / 7.0)

    def test_probabilities_sum_to_one(self):
        spec = EnvSpec(b=4, kind="lerrw:1.0", seed=3)
        for i in range(20):
            w = sample_weights(spec.subseed(b"p", i), ())
            assert math.fsum(transition_probs(w)) == pytest.approx(1.0)

    def test_rejects_bad_weights(self):
        with pytest.raises(InvalidInputError):
            transition_probs(())
        with pytest.raises(InvalidInputError):
            transition_probs((1.0, 0.0))
        with pytest.raises(InvalidInputError):
            transition_probs((1.0, math.inf))


class TestWeightSampling:
    def test_deterministic_per_vertex(self):
        spec = EnvSpec(b=3, kind="gamma:2.0,1.0", seed=9)
        assert sample_weights(spec, (1, 2)) == sample_weights(spec, (1, 2))
        assert sample_weights(spec, (1, 2)) != sample_weights(spec, (2, 1))

    def test_sentinel_has_no_weights(self):
        spec = EnvSpec(b=2, kind="const:1.0", seed=0)
        with pytest.raises(InvalidInputError):
            sample_weights(spec, SENTINEL)

    def test_const_weights_are_constant(self):
        spec = EnvSpec(b=2, kind="const:2.5", seed=4)
        assert sample_weights(spec, (1,)) == (2.5, 2.5)

    def test_reinforced_marginals_match_beta_oracle(self):
        spec = EnvSpec(b=4, kind="lerrw:1.0", seed=12)
        parents = np.empty(8000)
        children = np.empty(8000)
        for i in range(8000):
            probs = transition_probs(sample_weights(spec.subseed(b"m", i), ()))
            parents[i] = probs[0]
            children[i] = probs[1]
        assert parents.mean() == pytest.approx(1.0 / 3.0, abs=0.01)
        assert np.mean(parents ** 2) == pytest.approx(1.0 / 6.0, abs=0.01)
        assert children.mean() == pytest.approx(1.0 / 6.0, abs=0.008)
        assert np.mean(children ** 2) == pytest.approx(1.0 / 16.0, abs=0.006)


class TestGammaRepresentation:
    def test_shape_pair_identity(self):
        g0, g = lerrw_gamma_shapes(1.0)
        assert (g0, g) == (1.0, 0.5)
        g0, g = lerrw_gamma_shapes(0.5)
        assert (g0, g) == (1.5, 1.0)
        assert g0 == pytest.approx(g + 0.5)

    def test_marginal_moment_closed_form_vs_mc(self):
        spec = EnvSpec(b=4, kind="lerrw:1.0", seed=6)
        report = check_assumption_a(spec, method="mc", n_samples=40000)
        closed = check_assumption_a(spec, method="closed_form")
        assert report.estimate == pytest.approx(closed.estimate, rel=0.02)

    def test_fractional_moment_diverges_at_shape_boundary(self):
        spec = EnvSpec(b=2, kind="lerrw:1.0", seed=0)
        assert marginal_weight_moment(spec, 1.0) == math.inf
        assert marginal_weight_moment(spec, 0.5) < math.inf


class TestTransienceCriterion:
    def test_constant_unit_weights_pass_for_two_children(self):
        report = check_assumption_a(EnvSpec(b=2, kind="const:1.0", seed=0))
        assert report.passed
        assert report.estimate == pytest.approx(1.0)
        assert report.threshold == pytest.approx(0.5)

    def test_single_child_line_fails(self):
        report = check_assumption_a(EnvSpec(b=1, kind="const:1.0", seed=0))
        assert not report.passed

    @pytest.mark.parametrize("b", [2, 4, 5])
    def test_reinforced_walks_pass(self, b):
        report = check_assumption_a(EnvSpec(b=b, kind="lerrw:1.0", seed=0))
        assert report.passed


class TestNegativeMoments:
    def test_closed_form_value_for_five_children(self):
        assert lerrw_negative_moment_cf(5, 2.0) == pytest.approx(8.0 / 3.0)

    @pytest.mark.parametrize("b,p", [(5, 2.0), (6, 2.0), (5, 1.5)])
    def test_closed_form_matches_quadrature(self, b, p):
        cf = lerrw_negative_moment_cf(b, p)
        quad = lerrw_negative_moment_quadrature(b, p)
        assert abs(cf - quad) < 1e-8

    def test_divergent_case_reports_infinity(self):
        assert lerrw_negative_moment_cf(4, 2.0) == math.inf

    def test_mc_estimate_brackets_closed_form(self):
        spec = EnvSpec(b=5, kind="lerrw:1.0", seed=14)
        rep = negative_moment_mc(spec, 2.0, n_samples=200000)
        assert abs(rep.estimate - 8.0 / 3.0) <= 3.0 * rep.std_error

    def test_divergent_mc_is_flagged_suspect(self):
        spec = EnvSpec(b=4, kind="lerrw:1.0", seed=14)
        rep = negative_moment_mc(spec, 2.0, n_samples=200000)
        assert rep.suspect_divergence


class TestScalingCondition:
    def test_quarter_branching_boundary(self):
        assert not lerrw_fclt_condition(4, 1.0)
        assert lerrw_fclt_condition(5, 1.0)
        assert lerrw_fclt_condition(2, 0.4)
        assert not lerrw_fclt_condition(2, 0.5)


class TestMomentDiagnostics:
    def test_flat_samples_are_balanced(self):
        share, drift = moment_diagnostics(np.ones(800))
        assert share == pytest.approx(1.0 / 8.0)
        assert drift == pytest.approx(0.0)

    def test_single_spike_dominates(self):
        x = np.ones(800)
        x[700] = 1e9
        share, drift = moment_diagnostics(x)
        assert share > 0.9
