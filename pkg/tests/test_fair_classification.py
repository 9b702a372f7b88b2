import math

import numpy as np
import pytest

from csspa.fair_classification import (TABLE2, ClassificationDataset, FairClfConfig,
                                       UndefinedMetricError, accuracy, build_constraint,
                                       build_fair_clf_problem, fair_inner, fair_outer,
                                       generate_two_group, huber_ratio, ingest_adult_csv,
                                       load_classification_csv, logistic_loss_oracle,
                                       risk_difference, save_classification_csv)
from csspa.model import ConfigError, Schedule
from csspa.reference import FullBatchEvaluator
from csspa.solver import run

from conftest import central_diff, rel_err

DATA = __import__("pathlib").Path(__file__).parent / "data"


@pytest.fixture(scope="module")
def four_rows():
    # one feature, w = (1) gives u = x; s+ rows first
    return ClassificationDataset(np.array([[0.5], [-0.5], [0.25], [-2.0]]), [1, 0, 1, 0],
                                 [True, True, False, False])


@pytest.fixture(scope="module")
def small_two_group():
    return generate_two_group(n_points=200, seed=4)


def _outer(z, approx, budget, eps=0.05):
    params = np.array([1.0, approx, budget, eps])
    return fair_outer(np.asarray(z, dtype=float), np.zeros((1, 1)), params, np.int64(0), np.zeros(0))


class TestPresets:
    def test_table_values(self):
        # tuning table as printed: tau -> (c1, c2, c3)
        assert TABLE2 == {0.3: (1.6706e-5, 1.3270, 1.3270), 0.25: (1.0048e-5, 2.0047, 7.9810),
                          0.2: (0.0016, 0.3972, 6.2946), 0.15: (4.2064e-4, 1.6746, 1.6746),
                          0.1: (3.9811e-4, 1.9953, 7.9433), 0.05: (0.0032, 0.3991, 3.9905)}

    def test_from_table(self):
        cfg = FairClfConfig.from_table2(0.05, "A3")
        assert (cfg.mu, cfg.c, cfg.tau) == (1.0, 3.9905, 0.05)
        assert FairClfConfig.from_table2(0.05, "A2", huber_eps=0.1).huber_eps == 0.1
        with pytest.raises(ConfigError):
            FairClfConfig.from_table2(0.07)

    @pytest.mark.parametrize("kw", [{"mu": -1}, {"tau": 0}, {"c": 0}, {"huber_eps": 0},
                                    {"approximation": "A4"}])
    def test_validation(self, kw):
        with pytest.raises(ConfigError):
            FairClfConfig(**kw)


class TestHuber:
    def test_examples(self):
        assert huber_ratio(0.2, 0.2, 0.1)[0] == pytest.approx(1.0)
        assert huber_ratio(0.05, 0.2, 0.1)[0] == pytest.approx(3.0)
        for z2 in (-1.0, 0.3, 2.0):
            assert huber_ratio(0.1, z2, 0.1)[0] == pytest.approx(z2 / 0.1)

    def test_gradients(self):
        v, g = huber_ratio(0.4, 0.2, 0.1)
        assert g.tolist() == pytest.approx([-0.2 / 0.16, 1 / 0.4])
        v, g = huber_ratio(0.05, 0.2, 0.1)
        assert g.tolist() == pytest.approx([-0.2 / 0.01, (2 - 0.5) / 0.1])
        for z1, z2 in ((0.3, 0.7), (0.02, -0.4), (-0.5, 0.1)):
            fd = central_diff(lambda z: huber_ratio(z[0], z[1], 0.1)[0], [z1, z2])[:, 0]
            assert rel_err(huber_ratio(z1, z2, 0.1)[1], fd) <= 1e-6

    def test_exact_ratio_and_continuity(self):
        eps = 0.05
        for z2 in np.linspace(-1, 1, 9):
            for z1 in np.linspace(2 * eps, 1.0, 40):
                assert huber_ratio(z1, z2, eps)[0] == z2 / z1
            grid = eps + np.linspace(-1e-3, 1e-3, 2001)
            vals = np.array([huber_ratio(z, z2, eps)[0] for z in grid])
            steps = np.abs(np.diff(vals))
            assert steps.max() <= 2 * abs(z2) / eps ** 2 * 1e-6 + 1e-15

    def test_bad_eps(self):
        with pytest.raises(ConfigError):
            huber_ratio(0.1, 0.1, 0.0)


class TestLogistic:
    def test_zero_weights(self, small_two_group):
        comp = logistic_loss_oracle(small_two_group, mu=1.0)
        table = small_two_group.table()
        for row in range(5):
            val, jac = comp.inner_at(np.zeros(small_two_group.n_features), row=row)
            y, x = table[row, -2], small_two_group.features[row]
            assert val[0] == pytest.approx(math.log(2))
            np.testing.assert_allclose(jac[:, 0], -(y / 2) * x, atol=1e-15)

    def test_single_point_gradient(self):
        ds = ClassificationDataset([[1.0, -2.0]], [1], [True])
        comp = logistic_loss_oracle(ds, mu=0.0)
        w = np.array([0.3, 0.1])
        fd = central_diff(lambda v: comp.inner_at(v, jac=False)[0], w)
        assert rel_err(comp.inner_at(w)[1], fd) <= 1e-6

    def test_ridge_term(self):
        ds = ClassificationDataset([[0.5, 0.0]], [0], [True])
        w = np.array([1.0, 0.0])
        with_ridge = logistic_loss_oracle(ds, mu=2.0).inner_at(w)[1][:, 0]
        without = logistic_loss_oracle(ds, mu=0.0).inner_at(w)[1][:, 0]
        np.testing.assert_allclose(with_ridge - without, [2.0, 0.0], atol=1e-15)


class TestRiskDifference:
    def test_fixture(self, four_rows):
        # predictions with w = (1): s+ {1, 0}, s- {1, 0}; with w = (-1): s+ {0, 1}, s- {0, 1}
        assert risk_difference(four_rows, [1.0]) == 0.0
        ds = ClassificationDataset([[1.0], [-1.0], [-1.0], [-3.0]], [1, 0, 0, 0], [1, 1, 0, 0])
        assert risk_difference(ds, [1.0]) == 0.5

    def test_zero_weights_and_symmetry(self, small_two_group):
        assert risk_difference(small_two_group, np.zeros(small_two_group.n_features)) == 0.0
        X = np.array([[1.0], [-1.0]])
        ds = ClassificationDataset(np.vstack([X, X]), [1, 0, 1, 0], [1, 1, 0, 0])
        assert risk_difference(ds, [2.0]) == 0.0

    def test_empty_group(self):
        ds = ClassificationDataset([[1.0], [2.0]], [0, 1], [True, True])
        with pytest.raises(UndefinedMetricError):
            risk_difference(ds, [1.0])
        with pytest.raises(UndefinedMetricError):
            build_constraint(ds, FairClfConfig())

    def test_accuracy(self, four_rows):
        assert accuracy(four_rows, [1.0]) == 1.0 and accuracy(four_rows, [-1.0]) == 0.0


class TestConstraintForms:
    def test_outer_examples(self):
        assert _outer([1, 0.4, 0.3, 1, 0.5, 0.2], 1, 0.1)[0][0] == pytest.approx(-0.2)
        assert _outer([1, 0.5, 1, 0.5], 2, 0.3)[0][0] == pytest.approx(-0.09)
        assert _outer([1, 0, 1, 1, 0, 1], 3, 1.0)[0][0] == pytest.approx(-4.0)

    def test_a1_full_batch_hand_enumeration(self, four_rows):
        cfg = FairClfConfig(mu=0.0, tau=0.2, c=1.0)
        ev = FullBatchEvaluator.from_problem(build_fair_clf_problem(four_rows, cfg))
        # mean h = [0.5, 0.5, 0, 0.5, 0.9375, 0.1875]
        np.testing.assert_allclose(ev.inner_constraint([1.0])[0],
                                   [0.5, 0.5, 0.0, 0.5, 0.9375, 0.1875], atol=1e-15)
        # l1 = 1 + 1.875 - 1 - 0.2, l2 = 1 - 0 - 0.375 - 0.2
        np.testing.assert_allclose(ev.constraint_values([1.0]), [1.675, 0.425], atol=1e-14)

    def test_dimensions(self, small_two_group):
        for tag, (k, J) in {"A1": (6, 2), "A2": (4, 1), "A3": (6, 1)}.items():
            comp = build_constraint(small_two_group, FairClfConfig(approximation=tag))
            val, jac = comp.inner_at(np.zeros(small_two_group.n_features))
            assert val.shape == (k,) and jac.shape == (small_two_group.n_features, k)
            assert comp.num_outputs == J

    @pytest.mark.parametrize("tag", ["A1", "A2", "A3"])
    def test_gradients_finite_differences(self, small_two_group, tag):
        cfg = FairClfConfig(tau=0.2, c=1.3, approximation=tag, weight_ball_radius=2.0)
        problem = build_fair_clf_problem(small_two_group, cfg)
        ev = FullBatchEvaluator.from_problem(problem)
        comp = problem.oracles.constraint
        rng = np.random.default_rng(7)
        n = problem.n
        for _ in range(10):
            w = rng.normal(size=n)
            w *= rng.uniform(0.1, 2.0) / np.linalg.norm(w)
            assert rel_err(ev.constraints(w)[1], central_diff(ev.constraint_values, w)) <= 1e-5
            assert rel_err(ev.objective(w)[1][:, None], central_diff(ev.objective_value, w)) <= 1e-5
            z = ev.inner_constraint(w)[0] + rng.uniform(0.0, 0.05, size=comp.inner_dim)
            fd = central_diff(lambda v: comp.outer_at(v)[0], z)
            assert rel_err(comp.outer_at(z)[1], fd) <= 1e-5
            row = int(rng.integers(comp.n_rows))
            fd = central_diff(lambda v: comp.inner_at(v, row=row, jac=False)[0], w)
            assert rel_err(comp.inner_at(w, row=row)[1], fd) <= 1e-5

    def test_exclusivity_and_hinge_dominance(self, small_two_group):
        comp = build_constraint(small_two_group, FairClfConfig())
        rng = np.random.default_rng(1)
        for _ in range(5):
            w = rng.normal(size=small_two_group.n_features)
            for row in range(comp.n_rows):
                val, _ = comp.inner_at(w, row=row)
                if small_two_group.sensitive[row]:
                    assert np.all(val[3:] == 0.0)
                else:
                    assert np.all(val[:3] == 0.0)
                u = small_two_group.features[row] @ w
                ind = float(u > 0)
                assert max(0.0, 1 + u) >= ind and -min(1.0, u) >= -ind
                assert max(0.0, 1 - u) >= 1 - ind


def test_tuned_run_meets_budget():
    ds = generate_two_group(seed=0)
    cfg = FairClfConfig(tau=0.2, c=5.5)
    x_hat, state, _ = run(build_fair_clf_problem(ds, cfg), Schedule(horizon=10 ** 5, delta_scale=1e-4),
                          trace_stride=10 ** 5)
    assert abs(risk_difference(ds, x_hat)) <= cfg.tau + 0.05
    assert np.linalg.norm(x_hat) <= cfg.weight_ball_radius and np.all(state.lam >= 0)


class TestIngestion:
    def test_fixture(self):
        ds = ingest_adult_csv(DATA / "adult_fixture.csv", DATA / "adult_schema.json")
        assert ds.n_rows == 5 and ds.info["skipped_rows"] == 3
        assert ds.labels.tolist() == [0, 1, 0, 1, 0]
        assert ds.sensitive.tolist() == [True, True, False, True, False]
        names = ds.info["feature_names"]
        assert "sex" not in " ".join(names)
        assert names[-1] == "bias" and np.all(ds.features[:, -1] == 1.0)
        numeric = ds.features[:, :3]
        assert numeric.min() == 0.0 and numeric.max() == 1.0

    def test_labels_and_one_hot_width(self):
        ds = ingest_adult_csv(DATA / "adult_three_rows.csv", DATA / "adult_schema.json")
        assert ds.labels.tolist() == [1, 0, 1]
        assert sum(n.startswith("workclass=") for n in ds.info["feature_names"]) == 3
        assert ds.n_features == 3 + 3 + 1

    def test_single_group(self):
        with pytest.raises(UndefinedMetricError):
            ingest_adult_csv(DATA / "adult_one_group.csv", DATA / "adult_schema.json")

    def test_schema_errors(self, tmp_path):
        schema = {"columns": {"age": "numeric", "sex": "sensitive", "income": "income",
                              "missing": "numeric"}, "sensitive_positive": "Male"}
        with pytest.raises(ConfigError, match="missing"):
            ingest_adult_csv(DATA / "adult_fixture.csv", schema)
        with pytest.raises(ConfigError):
            ingest_adult_csv(DATA / "adult_fixture.csv", {"columns": {"age": "weird"}})
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            ingest_adult_csv(DATA / "adult_fixture.csv", bad)
        with pytest.raises(OSError):
            ingest_adult_csv(tmp_path / "nope.csv", DATA / "adult_schema.json")

    def test_csv_round_trip(self, tmp_path):
        ds = ingest_adult_csv(DATA / "adult_fixture.csv", DATA / "adult_schema.json")
        save_classification_csv(ds, tmp_path / "ds.csv")
        back = load_classification_csv(tmp_path / "ds.csv")
        np.testing.assert_array_equal(back.features, ds.features)
        assert back.labels.tolist() == ds.labels.tolist()
        assert back.sensitive.tolist() == ds.sensitive.tolist()
        assert back.info["feature_names"] == ds.info["feature_names"]
