"""Ratio-of-signed-mixtures model: partitioning, composition, fitting."""

import math

import numpy as np
import pytest

from qdre.config import default_train_config
from qdre.data import Dataset, balance_classes, is_balanced, split
from qdre.errors import ConfigError, DataError
from qdre.mixtures import analytic_ratio, benchmark_spec, oracle_subratios, sample_mixture
from qdre.nn import init_mlp, params_checksum
from qdre.rosmm import (
    COEFFICIENT_ONLY,
    JOINT,
    RosmmModel,
    fit_rosmm,
    initial_theta,
    normalize_variant,
    rosmm_from_dict,
    rosmm_ratio,
    rosmm_risk,
    rosmm_to_dict,
    signed_partition,
    train_subratios,
)

SPEC = benchmark_spec()


def theta_for_c(c):
    # invert c = 1 + log(1 + e^theta)
    return math.log(math.expm1(c - 1.0))


@pytest.fixture(scope="module")
def bench_sample():
    return sample_mixture(SPEC, 2000, seed=11)


@pytest.fixture(scope="module")
def oracle_model():
    r_pp, r_pm, c_true = oracle_subratios(SPEC)
    return RosmmModel(r_pp=r_pp, r_pm=r_pm, theta_c=theta_for_c(c_true))


class TestVariant:
    def test_aliases(self):
        for raw in ["coefficient-only", "CoefficientOnly", " c ", "rosmm-c"]:
            assert normalize_variant(raw) == COEFFICIENT_ONLY
        for raw in ["joint", "JOINT", "r", "rosmm-r"]:
            assert normalize_variant(raw) == JOINT

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError):
            normalize_variant("both")

    def test_model_normalizes_variant_on_construction(self):
        m = RosmmModel(r_pp=lambda X: X[:, 0], r_pm=lambda X: X[:, 0], variant="ROSMM-R")
        assert m.variant == JOINT
        with pytest.raises(ConfigError):
            RosmmModel(r_pp=None, r_pm=None, variant="nope")


class TestCoefficient:
    def test_theta_zero_gives_one_plus_log_two(self):
        m = RosmmModel(r_pp=None, r_pm=None, theta_c=0.0)
        assert m.c == pytest.approx(1.0 + math.log(2.0), rel=1e-15)

    def test_c_stays_above_one(self):
        for theta in [-30.0, -5.0, 0.0, 3.0]:
            assert RosmmModel(r_pp=None, r_pm=None, theta_c=theta).c > 1.0

    def test_theta_for_c_round_trip(self):
        for c in [1.001, 1.3, 2.5, 7.0]:
            assert RosmmModel(r_pp=None, r_pm=None, theta_c=theta_for_c(c)).c == pytest.approx(
                c, rel=1e-12
            )


class TestSignedPartition:
    def test_partitions_are_balanced_and_positive(self, bench_sample):
        pp, pm = signed_partition(bench_sample)
        assert is_balanced(pp) and is_balanced(pm)
        assert np.all(pp.w[pp.y == 1] > 0)
        assert np.all(pm.w[pm.y == 1] > 0)

    def test_row_bookkeeping(self, bench_sample):
        class1 = bench_sample.class_subset(1)
        n_pos = int(np.sum(class1.w > 0))
        n_neg = int(np.sum(class1.w < 0))
        pp, pm = signed_partition(bench_sample)
        assert len(pp.class_subset(1)) == n_pos
        assert len(pm.class_subset(1)) == n_neg
        assert len(pp.class_subset(0)) == len(bench_sample.class_subset(0))
        # the negative part enters pm with its sign flipped, same locations
        np.testing.assert_array_equal(
            pm.class_subset(1).X, class1.subset(class1.w < 0).X
        )

    def test_requires_both_classes(self, bench_sample):
        with pytest.raises(DataError):
            signed_partition(bench_sample.class_subset(0))

    def test_requires_a_negative_part(self, bench_sample):
        class1 = bench_sample.class_subset(1)
        positive_only = Dataset.concatenate(
            [bench_sample.class_subset(0), class1.subset(class1.w > 0)]
        )
        with pytest.raises(DataError):
            signed_partition(positive_only)

    def test_rejects_negative_reference_weights(self):
        data = Dataset(
            np.zeros((4, 1)),
            np.array([1.0, -1.0, 1.6, -1.6]),
            np.array([0, 0, 1, 1]),
        )
        with pytest.raises(DataError):
            signed_partition(data)


class TestInitialTheta:
    def test_matches_empirical_positive_mass(self):
        # class 1 sums: positive 2.6, signed total 2.0, so m+ = 1.3
        data = Dataset(
            np.zeros((4, 1)),
            np.array([1.0, 1.3, 1.3, -0.6]),
            np.array([0, 1, 1, 1]),
        )
        theta = initial_theta(data)
        assert 1.0 + np.logaddexp(0.0, theta) == pytest.approx(1.3, rel=1e-12)

    def test_all_positive_weights_give_zero(self):
        data = Dataset(np.zeros((2, 1)), np.array([1.0, 2.0]), np.array([0, 1]))
        assert initial_theta(data) == 0.0

    def test_non_positive_total_rejected(self):
        data = Dataset(np.zeros((2, 1)), np.array([0.5, -1.0]), np.array([1, 1]))
        with pytest.raises(DataError):
            initial_theta(data)

    def test_benchmark_start_lands_near_truth(self, bench_sample):
        theta = initial_theta(bench_sample)
        c0 = 1.0 + float(np.logaddexp(0.0, theta))
        # n = 2000 per class; the empirical positive mass carries a few
        # percent of sampling noise
        assert abs(c0 - 1.3) < 0.1


class TestRosmmRatio:
    def test_oracle_composition_equals_analytic_ratio(self, oracle_model):
        x = np.linspace(-5.0, 5.0, 401).reshape(-1, 1)
        np.testing.assert_allclose(
            rosmm_ratio(oracle_model, x), analytic_ratio(SPEC, x), rtol=1e-12, atol=1e-12
        )

    def test_scalar_input_returns_float(self, oracle_model):
        out = rosmm_ratio(oracle_model, np.array([0.5]))
        assert isinstance(out, float)
        assert out == pytest.approx(float(analytic_ratio(SPEC, np.array([[0.5]]))[0]), rel=1e-12)

    def test_fresh_networks_compose_to_unit_ratio_at_origin(self):
        # fresh nets have zero biases, so a zero input gives s = 1/2 and
        # unit sub-ratios; the composition collapses to c + (1 - c) = 1
        # no matter the coefficient
        m = RosmmModel(r_pp=init_mlp(1, (8,), seed=0), r_pm=init_mlp(1, (8,), seed=1), theta_c=2.0)
        out = rosmm_ratio(m, np.array([[0.0]]))
        np.testing.assert_allclose(out, 1.0, rtol=1e-12)


class TestRosmmRisk:
    def test_matches_manual_computation(self, oracle_model):
        cfg_loss = default_train_config("rosmm-c").loss
        data = Dataset(
            np.array([[0.0], [1.0], [-1.0], [2.0]]),
            np.array([1.0, 1.6, -1.6, 1.0]),
            np.array([0, 1, 1, 0]),
        )
        r = rosmm_ratio(oracle_model, data.X)
        u = cfg_loss.ratio_to_output(r)
        expected = float(np.sum(data.w * cfg_loss.loss(u, data.y)) / np.sum(np.abs(data.w)))
        assert rosmm_risk(oracle_model, data, cfg_loss) == pytest.approx(expected, rel=1e-14)

    def test_empty_and_zero_weight_rejected(self, oracle_model):
        loss = default_train_config("rosmm-c").loss
        with pytest.raises(DataError):
            rosmm_risk(oracle_model, Dataset.empty(1), loss)

    def test_population_risk_minimized_near_true_coefficient(self):
        # the composed revert risk over the coefficient alone should bottom
        # out at the true positive mass of the target
        r_pp, r_pm, _ = oracle_subratios(SPEC)
        data = sample_mixture(SPEC, 30_000, seed=13)
        loss = default_train_config("rosmm-c").loss
        c_grid = np.linspace(1.05, 2.2, 24)
        risks = [
            rosmm_risk(RosmmModel(r_pp, r_pm, theta_c=theta_for_c(c)), data, loss)
            for c in c_grid
        ]
        c_best = c_grid[int(np.argmin(risks))]
        assert 1.2 < c_best < 1.4


@pytest.fixture(scope="module")
def fit_parts():
    data = sample_mixture(SPEC, 8000, seed=17)
    train_part, val_part, _ = split(data, seed=17)
    return balance_classes(train_part), balance_classes(val_part)


class TestFitRosmm:
    def test_requires_revert_loss(self, oracle_model, fit_parts):
        train_part, val_part = fit_parts
        bce_cfg = default_train_config("subratio-pp", max_epochs=2)
        with pytest.raises(ConfigError):
            fit_rosmm(oracle_model, train_part, val_part, bce_cfg)

    def test_joint_requires_network_subratios(self, oracle_model, fit_parts):
        train_part, val_part = fit_parts
        cfg = default_train_config("rosmm-r", max_epochs=2)
        with pytest.raises(DataError):
            fit_rosmm(oracle_model, train_part, val_part, cfg, variant=JOINT)

    def test_coefficient_recovery_with_oracle_subratios(self, fit_parts):
        train_part, val_part = fit_parts
        r_pp, r_pm, c_true = oracle_subratios(SPEC)
        model = RosmmModel(r_pp, r_pm, theta_c=1.0)  # start far away, c about 2.3
        cfg = default_train_config(
            "rosmm-c", seed=5, max_epochs=80, learning_rate=3e-3
        )
        report = fit_rosmm(model, train_part, val_part, cfg)
        assert not report.diverged
        assert abs(model.c - c_true) < 0.1
        assert report.best_val_loss == pytest.approx(min(report.val_loss_curve), rel=1e-12)
        # best-epoch coefficient is restored before returning
        assert rosmm_risk(model, val_part, cfg.loss) == pytest.approx(
            report.best_val_loss, rel=1e-12
        )

    def test_deterministic_in_seed(self, fit_parts):
        train_part, val_part = fit_parts
        r_pp, r_pm, _ = oracle_subratios(SPEC)
        cfg = default_train_config("rosmm-c", seed=3, max_epochs=4)
        thetas = []
        for _ in range(2):
            model = RosmmModel(r_pp, r_pm, theta_c=0.0)
            fit_rosmm(model, train_part, val_part, cfg)
            thetas.append(model.theta_c)
        assert thetas[0] == thetas[1]

    def test_joint_variant_moves_network_parameters(self):
        data = sample_mixture(SPEC, 1500, seed=19)
        train_part, val_part, _ = split(data, seed=19)
        train_part, val_part = balance_classes(train_part), balance_classes(val_part)
        r_pp, r_pm, _ = train_subratios(
            train_part, val_part, seed=19, hidden_dims=(8,), max_epochs=2
        )
        model = RosmmModel(r_pp, r_pm, theta_c=initial_theta(train_part), variant=JOINT)
        before_pp = params_checksum(model.r_pp.parameters())
        before_theta = model.theta_c
        cfg = default_train_config("rosmm-r", seed=19, max_epochs=2)
        report = fit_rosmm(model, train_part, val_part, cfg)
        assert not report.diverged
        assert params_checksum(model.r_pp.parameters()) != before_pp
        assert model.theta_c != before_theta


class TestTrainSubratios:
    def test_returns_two_trained_networks(self):
        data = sample_mixture(SPEC, 1500, seed=23)
        train_part, val_part, _ = split(data, seed=23)
        r_pp, r_pm, reports = train_subratios(
            train_part, val_part, seed=23, hidden_dims=(8,), max_epochs=2
        )
        assert set(reports) == {"r_pp", "r_pm"}
        assert reports["r_pp"].epochs_run >= 1
        assert reports["r_pm"].epochs_run >= 1
        # per-network derived seeds: the two fits must not share an init
        assert params_checksum(r_pp.parameters()) != params_checksum(r_pm.parameters())

    def test_deterministic_in_seed(self):
        data = sample_mixture(SPEC, 1500, seed=29)
        train_part, val_part, _ = split(data, seed=29)
        sums = []
        for _ in range(2):
            r_pp, _, _ = train_subratios(
                train_part, val_part, seed=29, hidden_dims=(8,), max_epochs=2
            )
            sums.append(params_checksum(r_pp.parameters()))
        assert sums[0] == sums[1]


class TestSerialization:
    def test_round_trip_preserves_everything(self):
        m = RosmmModel(
            r_pp=init_mlp(2, (8,), seed=3),
            r_pm=init_mlp(2, (8,), seed=4),
            theta_c=-0.7,
            variant=JOINT,
        )
        back = rosmm_from_dict(rosmm_to_dict(m))
        assert back.theta_c == m.theta_c
        assert back.variant == JOINT
        assert back.c == m.c
        X = np.random.default_rng(0).normal(size=(20, 2))
        np.testing.assert_array_equal(rosmm_ratio(back, X), rosmm_ratio(m, X))

    def test_callable_subratios_not_serializable(self, oracle_model):
        with pytest.raises(DataError):
            rosmm_to_dict(oracle_model)

    def test_format_and_version_checked(self):
        m = RosmmModel(r_pp=init_mlp(1, (4,), seed=0), r_pm=init_mlp(1, (4,), seed=1))
        obj = rosmm_to_dict(m)
        with pytest.raises(DataError):
            rosmm_from_dict({**obj, "format": "other"})
        with pytest.raises(DataError):
            rosmm_from_dict({**obj, "version": 2})
