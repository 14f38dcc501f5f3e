"""Tests for the fair Cox objective and the Adam trainer."""
import logging

import numpy as np
import pytest

from faircox.data import SyntheticSpec, generate_synthetic
from faircox.errors import ConfigError, DataError, NumericalError
from faircox.fairness import (
    FairnessAudit,
    PenaltyKind,
    individual_fairness,
    penalty_value_and_subgradient,
)
from faircox.metrics import concordance_index
from faircox.optimizer import (
    Adam,
    Regime,
    TrainConfig,
    objective,
    objective_gradient,
    objective_terms,
    train,
)
from faircox.selection import SplitSpec, split
from faircox.survival import CoxModel, neg_log_partial_likelihood, standardizer_from
from tests.helpers import make_dataset


TRUE_BETA = (1.0, -0.5, 0.25)


@pytest.fixture
def recovery_data():
    return generate_synthetic(SyntheticSpec(n=2000, beta_true=TRUE_BETA, seed=42))


def without_protected(dataset):
    return make_dataset(dataset.covariates, dataset.event_time, dataset.event_indicator)


@pytest.fixture
def audit(small_synthetic):
    return FairnessAudit.from_dataset(small_synthetic, group_attribute="group")


@pytest.fixture
def model(small_synthetic):
    means, scales = standardizer_from(small_synthetic)
    return CoxModel(np.array([0.4, -0.2, 0.6]), means, scales, small_synthetic.feature_names)


class TestTrainConfig:
    def test_defaults(self):
        config = TrainConfig()
        assert config.learning_rate == 0.01
        assert config.iterations == 500
        assert config.epochs == 50
        assert config.batch_size == 128
        assert (config.adam_beta1, config.adam_beta2, config.adam_epsilon) == (0.9, 0.999, 1e-8)

    @pytest.mark.parametrize(
        "overrides",
        [{"lam": -1.0}, {"learning_rate": 0.0}, {"iterations": 0}, {"batch_size": 0},
         {"adam_beta1": 1.0}, {"regime": "sometimes"}],
    )
    def test_rejects_invalid_values(self, overrides):
        with pytest.raises(ConfigError):
            TrainConfig(**overrides)

    def test_auto_regime(self, audit):
        """Test that auto picks mini-batches only for a positive individual penalty."""
        config = TrainConfig(lam=1.0, regime=Regime.AUTO)
        assert config.resolved_regime(audit.penalty(PenaltyKind.INDIVIDUAL)) is Regime.MINI_BATCH
        assert config.resolved_regime(audit.penalty(PenaltyKind.GROUP)) is Regime.FULL_BATCH
        assert config.resolved_regime(None) is Regime.FULL_BATCH


class TestAdam:
    def test_first_step_is_bias_corrected(self):
        """Test that the first step moves each coordinate by about lr against its gradient sign."""
        optimizer = Adam(2, lr=0.1)
        grad = np.array([0.5, -2.0])
        params = optimizer.step(np.zeros(2), grad)
        np.testing.assert_allclose(params, -0.1 * grad / (np.abs(grad) + 1e-8), rtol=1e-12)

    def test_zero_gradient_does_not_move(self):
        optimizer = Adam(3)
        params = optimizer.step(np.ones(3), np.zeros(3))
        np.testing.assert_array_equal(params, np.ones(3))


class TestObjective:
    def test_zero_lambda_equals_loss(self, small_synthetic, model):
        assert objective(model, small_synthetic, None, 0.0) == neg_log_partial_likelihood(
            model, small_synthetic
        )

    @pytest.mark.parametrize("kind", list(PenaltyKind))
    def test_penalty_vanishes_at_zero_beta(self, small_synthetic, model, audit, kind):
        zero = model.with_beta(np.zeros(3))
        assert objective(zero, small_synthetic, audit.penalty(kind), 3.0) == pytest.approx(
            neg_log_partial_likelihood(zero, small_synthetic), rel=1e-15
        )

    @pytest.mark.parametrize("kind", list(PenaltyKind))
    def test_adds_lambda_times_penalty(self, small_synthetic, model, audit, kind):
        """Test that the objective is the loss plus lambda times the penalty."""
        penalty = audit.penalty(kind)
        value, grad = penalty_value_and_subgradient(penalty, model, small_synthetic)
        expected = neg_log_partial_likelihood(model, small_synthetic) + 2.0 * value
        assert objective(model, small_synthetic, penalty, 2.0) == pytest.approx(expected, rel=1e-12)
        gradient = objective_gradient(model, small_synthetic, penalty, 2.0)
        assert gradient.shape == grad.shape

    def test_positive_lambda_needs_penalty(self, small_synthetic, model):
        with pytest.raises(ConfigError):
            objective(model, small_synthetic, None, 1.0)

    @pytest.mark.parametrize("kind", [PenaltyKind.GROUP, PenaltyKind.INTERSECTIONAL])
    def test_missing_attribute_is_a_config_error(self, small_synthetic, model, audit, kind):
        """Test that a dataset without the grouping column raises ConfigError, not KeyError."""
        bare = without_protected(small_synthetic)
        penalty = audit.penalty(kind)
        with pytest.raises(ConfigError, match="unknown protected attribute"):
            objective(model, bare, penalty, 1.0)
        with pytest.raises(ConfigError, match="unknown protected attribute"):
            objective_gradient(model, bare, penalty, 1.0)
        with pytest.raises(ConfigError, match="unknown protected attribute"):
            train(bare, penalty, TrainConfig(lam=1.0, iterations=5))

    def test_unnormalized_individual_penalty(self, small_synthetic, model):
        """Test that the unnormalized objective adds lambda times 190 pairs times the mean."""
        summed = FairnessAudit.from_dataset(small_synthetic, normalize_pairs=False)
        normalized = FairnessAudit.from_dataset(small_synthetic)
        value, _ = penalty_value_and_subgradient(
            normalized.penalty(PenaltyKind.INDIVIDUAL), model, small_synthetic
        )
        expected = neg_log_partial_likelihood(model, small_synthetic) + 2.0 * 190 * value
        penalty = summed.penalty(PenaltyKind.INDIVIDUAL)
        assert objective(model, small_synthetic, penalty, 2.0) == pytest.approx(expected, rel=1e-12)

    def test_batch_without_events_has_no_loss(self):
        """Test that a mini-batch without events adds neither loss nor gradient."""
        Z = np.array([[0.1], [0.2]])
        value, penalty_value, grad = objective_terms(
            Z, np.array([1.0]), np.array([1.0, 2.0]), np.array([False, False]), {}, None, 0.0
        )
        assert (value, penalty_value) == (0.0, 0.0)
        np.testing.assert_array_equal(grad, [0.0])


class TestTrain:
    @pytest.mark.parametrize("n", [200, 2000])
    def test_recovers_true_coefficients(self, n):
        """Test that the default configuration recovers the generating coefficients."""
        dataset = generate_synthetic(SyntheticSpec(n=n, beta_true=TRUE_BETA, seed=42))
        model, report = train(dataset, None, TrainConfig())
        raw_beta = model.beta / model.feature_scales
        assert np.max(np.abs(raw_beta - np.array(TRUE_BETA))) <= 0.15
        assert report.gradient_norm <= 1e-4

    def test_same_seed_is_bitwise_identical(self, small_synthetic, audit):
        """Test that mini-batch training is bit-reproducible for a fixed seed."""
        config = TrainConfig(lam=0.5, regime=Regime.MINI_BATCH, epochs=5, batch_size=8, seed=9)
        penalty = audit.penalty(PenaltyKind.INDIVIDUAL)
        first, _ = train(small_synthetic, penalty, config)
        second, _ = train(small_synthetic, penalty, config)
        assert np.array_equal(first.beta, second.beta)

    def test_objective_trace_does_not_increase(self, recovery_data):
        """Test that full-batch Adam with the defaults never increases the objective."""
        _, report = train(recovery_data, None, TrainConfig())
        assert np.all(np.diff(report.loss_trace) <= 1e-9)

    def test_zero_lambda_ignores_penalty(self, small_synthetic, audit):
        """Test that lambda = 0 trains the same model whatever penalty is passed."""
        config = TrainConfig(iterations=100)
        plain, _ = train(small_synthetic, None, config)
        with_penalty, _ = train(small_synthetic, audit.penalty(PenaltyKind.GROUP), config)
        assert np.array_equal(plain.beta, with_penalty.beta)

    def test_mini_batch_step_count(self, small_synthetic):
        """Test 20 subjects in batches of 8: three near-equal batches per epoch."""
        config = TrainConfig(regime=Regime.MINI_BATCH, epochs=3, batch_size=8)
        _, report = train(small_synthetic, None, config)
        assert report.regime is Regime.MINI_BATCH
        assert report.n_steps == 3 * 3

    def test_report_traces(self, small_synthetic, audit):
        config = TrainConfig(lam=1.0, iterations=40)
        _, report = train(small_synthetic, audit.penalty(PenaltyKind.GROUP), config)
        assert report.n_steps == 40
        assert report.penalty_trace[0] == 0.0
        assert report.final_objective == report.loss_trace[-1]
        assert report.wall_time >= 0

    def test_divergence_names_the_iteration(self, biased_synthetic):
        """Test that a huge learning rate fails with the iteration in the message."""
        audit = FairnessAudit.from_dataset(biased_synthetic, group_attribute="group")
        config = TrainConfig(lam=1.0, learning_rate=1e3, iterations=10)
        with pytest.raises(NumericalError, match="iteration"):
            train(biased_synthetic, audit.penalty(PenaltyKind.GROUP), config)

    def test_no_events(self):
        dataset = make_dataset([[0.0], [1.0]], [1.0, 2.0], [False, False])
        with pytest.raises(DataError):
            train(dataset, None, TrainConfig())

    def test_logs_summary(self, small_synthetic, caplog):
        with caplog.at_level(logging.INFO):
            train(small_synthetic, None, TrainConfig(iterations=5))
        assert "Trained penalty=none" in caplog.text

    def test_strong_signal_gives_good_dev_ranking(self):
        dataset = generate_synthetic(SyntheticSpec(n=2000, beta_true=(2.0, 0.0), seed=5))
        train_set, dev_set, _ = split(dataset, SplitSpec(seed=5))
        model, _ = train(train_set, None, TrainConfig(iterations=300))
        scores = model.risk_scores(dev_set.covariates)
        assert concordance_index(scores, dev_set.event_time, dev_set.event_indicator) > 0.7


class TestPairSet:
    @pytest.fixture
    def penalty(self, audit):
        return audit.penalty(PenaltyKind.INDIVIDUAL)

    def test_training_rows_as_pair_set(self, small_synthetic, penalty):
        """Test that passing the training covariates as the pair set changes nothing."""
        config = TrainConfig(lam=0.5, iterations=50)
        default, _ = train(small_synthetic, penalty, config)
        explicit, _ = train(
            small_synthetic, penalty, config, pair_covariates=small_synthetic.covariates
        )
        assert np.array_equal(default.beta, explicit.beta)

    def test_single_subject_pair_set_has_no_penalty(self, small_synthetic, penalty):
        """Test that a one-subject pair set leaves the unpenalized model."""
        config = TrainConfig(lam=5.0, iterations=50)
        plain, _ = train(small_synthetic, None, TrainConfig(iterations=50))
        paired, report = train(
            small_synthetic, penalty, config, pair_covariates=small_synthetic.covariates[:1]
        )
        assert np.array_equal(plain.beta, paired.beta)
        assert not report.penalty_trace.any()

    def test_penalty_is_measured_on_the_pair_set(self, biased_synthetic):
        """Test that the penalty trace is F_i on the pair set, not on the training rows."""
        train_set, _, test_set = split(biased_synthetic, SplitSpec(seed=2))
        audit = FairnessAudit.from_dataset(train_set, distance_scale=0.01)
        penalty = audit.penalty(PenaltyKind.INDIVIDUAL)
        pairs = test_set.covariates
        first, _ = train(train_set, penalty, TrainConfig(lam=2.0, iterations=1), pairs)
        _, report = train(train_set, penalty, TrainConfig(lam=2.0, iterations=2), pairs)
        assert report.penalty_trace[1] == pytest.approx(
            individual_fairness(first, pairs, penalty.distance_scale), rel=1e-12
        )
        default, _ = train(train_set, penalty, TrainConfig(lam=2.0, iterations=30))
        paired, paired_report = train(
            train_set, penalty, TrainConfig(lam=2.0, iterations=30), pairs
        )
        assert paired_report.penalty_trace[-1] > 0
        assert not np.array_equal(default.beta, paired.beta)

    def test_mini_batch_with_pair_set(self, small_synthetic, penalty):
        config = TrainConfig(lam=0.5, regime=Regime.MINI_BATCH, epochs=4, batch_size=8, seed=1)
        pairs = small_synthetic.covariates[:9]
        first, report = train(small_synthetic, penalty, config, pair_covariates=pairs)
        second, _ = train(small_synthetic, penalty, config, pair_covariates=pairs)
        assert report.n_steps == 4 * 3
        assert np.array_equal(first.beta, second.beta)

    def test_only_for_the_individual_penalty(self, small_synthetic, audit):
        """Test that a pair set with the group penalty is a ConfigError."""
        config = TrainConfig(lam=1.0, iterations=5)
        with pytest.raises(ConfigError, match="individual penalty"):
            train(
                small_synthetic, audit.penalty(PenaltyKind.GROUP), config,
                pair_covariates=small_synthetic.covariates,
            )

    def test_column_count_must_match(self, small_synthetic, penalty):
        config = TrainConfig(lam=1.0, iterations=5)
        with pytest.raises(DataError, match="3 columns"):
            train(small_synthetic, penalty, config, pair_covariates=np.zeros((4, 2)))

    def test_rejects_non_finite_pairs(self, small_synthetic, penalty):
        pairs = small_synthetic.covariates[:4].copy()
        pairs[1, 0] = np.nan
        with pytest.raises(DataError, match="NaN"):
            train(
                small_synthetic, penalty, TrainConfig(lam=1.0, iterations=5),
                pair_covariates=pairs,
            )
