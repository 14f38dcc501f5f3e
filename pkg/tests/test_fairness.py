"""Tests for individual, group and intersectional fairness."""
import logging
import math

import numpy as np
import pytest

from faircox import fairness
from faircox.errors import ConfigError, DataError
from faircox.fairness import (
    FairnessAudit,
    FairnessPenalty,
    PenaltyKind,
    ProtectedSpace,
    group_fairness,
    individual_fairness,
    intersectional_fairness,
    penalty_value_and_subgradient,
)
from faircox.survival import CoxModel, standardizer_from
from tests.helpers import make_dataset, unit_model


def hazard_dataset(hazards, codes, declared=None, name="g"):
    """One covariate equal to log hazard, so a unit model with beta = 1 reproduces `hazards`."""
    codes = np.asarray(codes)
    declared = declared or tuple(sorted(set(codes.tolist())))
    return make_dataset(
        np.log(np.asarray(hazards, dtype=float)),
        np.arange(1.0, len(hazards) + 1.0),
        protected={name: codes},
        codes={name: declared},
    )


@pytest.fixture
def fitted_model(small_synthetic):
    means, scales = standardizer_from(small_synthetic)
    return CoxModel(np.zeros(3), means, scales, small_synthetic.feature_names)


@pytest.fixture
def audit(small_synthetic):
    return FairnessAudit.from_dataset(small_synthetic, group_attribute="group", distance_scale=0.5)


class TestIndividualFairness:
    def test_zero_beta_is_zero(self):
        X = np.random.default_rng(0).normal(size=(12, 3))
        assert individual_fairness(unit_model([0.0, 0.0, 0.0]), X) == 0.0

    def test_identical_covariates_contribute_nothing(self):
        X = np.array([[0.3, -1.0], [0.3, -1.0]])
        assert individual_fairness(unit_model([2.0, 1.0]), X) == 0.0

    def test_hand_value(self):
        """Test the two-subject hinge e^2 - 1 - 1 by hand."""
        value = individual_fairness(unit_model([2.0]), np.array([[0.0], [1.0]]), 1.0)
        assert value == pytest.approx(math.e ** 2 - 2, rel=1e-12)
        assert value == pytest.approx(5.389, abs=1e-3)

    def test_normalized_by_pair_count(self):
        X = np.array([[0.0], [1.0], [1.0]])
        value = individual_fairness(unit_model([2.0]), X, 1.0)
        # two of the three pairs have hinge excess e^2 - 2
        assert value == pytest.approx(2 * (math.e ** 2 - 2) / 3, rel=1e-12)

    def test_unnormalized_is_the_pair_sum(self):
        """Test that normalize_pairs=False returns the hinge sum without dividing by 3 pairs."""
        X = np.array([[0.0], [1.0], [1.0]])
        model = unit_model([2.0])
        total = individual_fairness(model, X, 1.0, normalize_pairs=False)
        assert total == pytest.approx(2 * (math.e ** 2 - 2), rel=1e-12)
        assert total == pytest.approx(3 * individual_fairness(model, X, 1.0), rel=1e-12)

    def test_single_subject_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            value = individual_fairness(unit_model([1.0]), np.array([[1.0]]))
        assert value == 0.0
        assert "at least two subjects" in caplog.text

    def test_invariant_to_row_permutation(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 2))
        model = unit_model([1.2, -0.8])
        shuffled = X[rng.permutation(30)]
        assert individual_fairness(model, shuffled, 0.5) == pytest.approx(
            individual_fairness(model, X, 0.5), rel=1e-12
        )

    def test_nonincreasing_in_distance_scale(self):
        """Test that a larger distance scale never raises F_i."""
        X = np.random.default_rng(2).normal(size=(25, 2))
        model = unit_model([1.5, 0.5])
        values = [individual_fairness(model, X, scale) for scale in (0.1, 0.5, 1.0, 2.0, 5.0)]
        assert all(later <= earlier for earlier, later in zip(values, values[1:]))

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ConfigError):
            individual_fairness(unit_model([1.0]), np.array([[0.0], [1.0]]), 0.0)

    def test_blocking_does_not_change_result(self, monkeypatch):
        """Test that the row block size does not change the value or subgradient."""
        rng = np.random.default_rng(3)
        Z = rng.normal(size=(40, 2))
        beta = np.array([0.9, -0.6])
        value, grad = fairness.individual_terms(Z, beta, 0.3)
        monkeypatch.setattr(fairness, "PAIR_BLOCK_ROWS", 7)
        blocked_value, blocked_grad = fairness.individual_terms(Z, beta, 0.3)
        assert blocked_value == pytest.approx(value, rel=1e-12)
        np.testing.assert_allclose(blocked_grad, grad, rtol=1e-12, atol=1e-14)


class TestGroupFairness:
    def test_zero_beta_is_zero(self, small_synthetic, fitted_model):
        assert group_fairness(fitted_model, small_synthetic, "group") == 0.0

    def test_everyone_in_one_group(self):
        dataset = hazard_dataset([1.0, 2.0, 5.0], [0, 0, 0])
        assert group_fairness(unit_model([1.0]), dataset, "g") == pytest.approx(0.0, abs=1e-12)

    def test_equal_group_means(self):
        dataset = hazard_dataset([1.0, 3.0, 2.0], [0, 0, 1])
        assert group_fairness(unit_model([1.0]), dataset, "g") == pytest.approx(0.0, abs=1e-12)

    def test_largest_deviation_from_population(self):
        """Test that F_g is the largest gap between a group mean and the population mean."""
        dataset = hazard_dataset([1.0, 1.0, 4.0], [0, 0, 1])
        assert group_fairness(unit_model([1.0]), dataset, "g") == pytest.approx(2.0, rel=1e-12)

    def test_unknown_attribute(self):
        dataset = hazard_dataset([1.0, 2.0], [0, 1])
        with pytest.raises(ConfigError):
            group_fairness(unit_model([1.0]), dataset, "race")

    def test_small_groups_skipped_with_warning(self, caplog):
        """Test that groups under min_subgroup_count drop out with a warning."""
        dataset = hazard_dataset([1.0, 1.0, 4.0], [0, 0, 1])
        with caplog.at_level(logging.WARNING):
            value = group_fairness(unit_model([1.0]), dataset, "g", min_subgroup_count=2)
        assert value == pytest.approx(1.0, rel=1e-12)
        assert "Skipping group 1" in caplog.text

    def test_all_groups_too_small(self):
        dataset = hazard_dataset([1.0, 4.0], [0, 1])
        with pytest.raises(DataError):
            group_fairness(unit_model([1.0]), dataset, "g", min_subgroup_count=5)

    def test_invariant_to_duplicating_data(self, small_synthetic):
        """Test that stacking the dataset twice leaves F_g unchanged."""
        means, scales = standardizer_from(small_synthetic)
        model = CoxModel(np.array([0.7, -0.4, 0.3]), means, scales, small_synthetic.feature_names)
        doubled = small_synthetic.subset(np.tile(np.arange(20), 2))
        assert group_fairness(model, doubled, "group") == pytest.approx(
            group_fairness(model, small_synthetic, "group"), rel=1e-12
        )


class TestIntersectionalFairness:
    def test_zero_beta_is_zero(self, small_synthetic, fitted_model):
        space = ProtectedSpace.from_dataset(small_synthetic)
        assert intersectional_fairness(fitted_model, small_synthetic, space) == 0.0

    def test_two_subgroups(self):
        dataset = hazard_dataset([1.0, math.e], [0, 1])
        space = ProtectedSpace(("g",), ((0, 1),))
        value = intersectional_fairness(unit_model([1.0]), dataset, space)
        assert value == pytest.approx(1.0, rel=1e-12)

    def test_largest_pairwise_log_ratio(self):
        """Test subgroup means 0.5, 2 and 1 give log 4."""
        dataset = hazard_dataset([0.5, 2.0, 1.0], [0, 1, 2])
        space = ProtectedSpace(("g",), ((0, 1, 2),))
        value = intersectional_fairness(unit_model([1.0]), dataset, space)
        assert value == pytest.approx(math.log(4), rel=1e-12)

    def test_symmetric_in_enumeration_order(self):
        """Test that the order the codes are declared in does not change F_eps."""
        dataset = hazard_dataset([0.5, 2.0, 1.0], [0, 1, 2])
        forward = ProtectedSpace(("g",), ((0, 1, 2),))
        backward = ProtectedSpace(("g",), ((2, 1, 0),))
        model = unit_model([1.0])
        assert intersectional_fairness(model, dataset, backward) == pytest.approx(
            intersectional_fairness(model, dataset, forward), rel=1e-12
        )

    def test_needs_two_populated_subgroups(self):
        dataset = hazard_dataset([1.0, 2.0], [0, 0], declared=(0, 1))
        space = ProtectedSpace(("g",), ((0, 1),))
        with pytest.raises(DataError, match="two populated subgroups"):
            intersectional_fairness(unit_model([1.0]), dataset, space)

    def test_binary_attribute_is_log_ratio_of_group_means(self):
        """Test that one binary attribute gives the log ratio of the two group means."""
        dataset = hazard_dataset([1.0, 3.0, 2.0, 6.0], [0, 0, 1, 1])
        space = ProtectedSpace(("g",), ((0, 1),))
        value = intersectional_fairness(unit_model([1.0]), dataset, space)
        assert value == pytest.approx(abs(math.log(2.0) - math.log(4.0)), rel=1e-12)

    def test_invariant_to_duplicating_data(self, small_synthetic):
        means, scales = standardizer_from(small_synthetic)
        model = CoxModel(np.array([0.7, -0.4, 0.3]), means, scales, small_synthetic.feature_names)
        space = ProtectedSpace.from_dataset(small_synthetic)
        doubled = small_synthetic.subset(np.tile(np.arange(20), 2))
        assert intersectional_fairness(model, doubled, space) == pytest.approx(
            intersectional_fairness(model, small_synthetic, space), rel=1e-12
        )

    def test_subgroups_are_the_cross_product(self):
        """Test that subgroups enumerate the code cross product in order."""
        space = ProtectedSpace(("a", "b"), ((0, 1), (0, 1, 2)))
        assert len(space.subgroups) == 6
        assert space.subgroups[0] == (0, 0)
        assert space.subgroups[-1] == (1, 2)


class TestPenalties:
    @pytest.mark.parametrize("kind", list(PenaltyKind))
    def test_zero_beta_value_and_subgradient(self, small_synthetic, fitted_model, audit, kind):
        value, grad = penalty_value_and_subgradient(audit.penalty(kind), fitted_model, small_synthetic)
        assert value == 0.0
        np.testing.assert_array_equal(grad, np.zeros(3))

    def test_inactive_hinge_has_zero_subgradient(self):
        """Test that pairs below the distance bound contribute no subgradient."""
        batch = make_dataset([[0.0], [1.0]], [1.0, 2.0])
        penalty = FairnessPenalty(PenaltyKind.INDIVIDUAL, distance_scale=1.0)
        value, grad = penalty_value_and_subgradient(penalty, unit_model([0.1]), batch)
        assert value == 0.0
        np.testing.assert_array_equal(grad, [0.0])

    @pytest.mark.parametrize("kind", list(PenaltyKind))
    def test_subgradient_matches_finite_differences(self, small_synthetic, fitted_model, audit, kind):
        """Test each subgradient against central differences at random betas."""
        penalty = audit.penalty(kind)
        rng = np.random.default_rng(17)
        step = 1e-6
        for _ in range(10):
            beta = rng.normal(scale=0.5, size=3)
            model = fitted_model.with_beta(beta)
            _, analytic = penalty_value_and_subgradient(penalty, model, small_synthetic)
            numeric = np.zeros(3)
            for k in range(3):
                offset = np.zeros(3)
                offset[k] = step
                upper, _ = penalty_value_and_subgradient(
                    penalty, model.with_beta(beta + offset), small_synthetic
                )
                lower, _ = penalty_value_and_subgradient(
                    penalty, model.with_beta(beta - offset), small_synthetic
                )
                numeric[k] = (upper - lower) / (2 * step)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7)

    def test_individual_penalty_rejects_attributes(self):
        with pytest.raises(ConfigError):
            FairnessPenalty(PenaltyKind.INDIVIDUAL, distance_scale=1.0, group_attribute="g")

    def test_group_penalty_needs_space(self):
        with pytest.raises(ConfigError):
            FairnessPenalty(PenaltyKind.GROUP, group_attribute="g")

    def test_group_attribute_must_be_in_space(self):
        space = ProtectedSpace(("sex",), ((0, 1),))
        with pytest.raises(ConfigError, match="not in the protected space"):
            FairnessPenalty(PenaltyKind.GROUP, group_attribute="group", space=space)

    @pytest.mark.parametrize("normalize, scale", [(True, 3.0), (False, 1.0)])
    def test_individual_penalty_pair_normalization(self, normalize, scale):
        """Test the hand value and subgradient of the penalty with and without normalization."""
        batch = make_dataset([[0.0], [1.0], [1.0]], [1.0, 2.0, 3.0])
        penalty = FairnessPenalty(
            PenaltyKind.INDIVIDUAL, distance_scale=1.0, normalize_pairs=normalize
        )
        value, grad = penalty_value_and_subgradient(penalty, unit_model([2.0]), batch)
        # two active pairs, each with excess e^2 - 2 and slope e^2
        assert value == pytest.approx(2 * (math.e ** 2 - 2) / scale, rel=1e-12)
        np.testing.assert_allclose(grad, [2 * math.e ** 2 / scale], rtol=1e-12)

    def test_normalize_pairs_is_individual_only(self, audit):
        with pytest.raises(ConfigError, match="normalize_pairs"):
            FairnessPenalty(
                PenaltyKind.GROUP, group_attribute="group", space=audit.space,
                normalize_pairs=False,
            )

    def test_missing_attribute_is_a_config_error(self, audit):
        """Test that a batch without the grouping column fails before any arithmetic."""
        batch = make_dataset([[0.0], [1.0]], [1.0, 2.0])
        for kind in (PenaltyKind.GROUP, PenaltyKind.INTERSECTIONAL):
            with pytest.raises(ConfigError, match="unknown protected attribute"):
                penalty_value_and_subgradient(audit.penalty(kind), unit_model([0.5]), batch)

    def test_measure_names(self, audit):
        assert [audit.penalty(kind).measure_name for kind in PenaltyKind] == ["F_i", "F_g", "F_eps"]


class TestFairnessAudit:
    def test_measures_all_three(self, small_synthetic, fitted_model, audit):
        assert audit.measure(fitted_model, small_synthetic) == {"F_i": 0.0, "F_g": 0.0, "F_eps": 0.0}

    def test_defaults_to_first_attribute(self, small_synthetic):
        """Test that without group_attribute the first declared attribute is used."""
        audit = FairnessAudit.from_dataset(small_synthetic)
        assert audit.group_attribute == "group"
        assert audit.space.attributes == ("group", "sex")

    def test_unknown_attribute(self, small_synthetic):
        with pytest.raises(ConfigError):
            FairnessAudit.from_dataset(small_synthetic, attributes=["race"])

    def test_dataset_without_protected_attributes(self):
        with pytest.raises(ConfigError):
            FairnessAudit.from_dataset(make_dataset([[0.0], [1.0]], [1.0, 2.0]))

    def test_unnormalized_audit(self, small_synthetic, fitted_model):
        """Test that an audit built with normalize_pairs=False reports the pair sum as F_i."""
        model = fitted_model.with_beta(np.array([1.5, -1.0, 0.8]))
        normalized = FairnessAudit.from_dataset(small_synthetic, distance_scale=0.5)
        summed = FairnessAudit.from_dataset(
            small_synthetic, distance_scale=0.5, normalize_pairs=False
        )
        assert summed.penalty(PenaltyKind.INDIVIDUAL).normalize_pairs is False
        n_pairs = 20 * 19 / 2
        assert summed.measure(model, small_synthetic)["F_i"] == pytest.approx(
            n_pairs * normalized.measure(model, small_synthetic)["F_i"], rel=1e-12
        )
