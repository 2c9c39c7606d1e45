import math
import os

import numpy as np
import pytest

from modlearn import graph as G
from modlearn.costs import CD, Cost, GaussianMSE, NLLSoftmax
from modlearn.datasets import DenseDesignMatrix, one_hot
from modlearn.models import MLP, RBM, CapabilityError, Linear, Softmax, Tanh
from modlearn.models.base import Model
from modlearn.monitor import EpochCounter, MonitorError
from modlearn.training import (BGD, SGD, DefaultTrainingAlgorithm, Momentum,
                               PolyakAveraging, Train, TrainingError)
from modlearn.training.linesearch import (armijo_holds, backtracking_armijo,
                                          bracketing)
from modlearn.checkpoint import load_checkpoint

from oracles import spd_matrix


class Quadratic(Model):
    """A bare parameter vector ``theta`` of shape (d, 1)."""

    kind = "quadratic"

    def __init__(self, theta):
        super().__init__()
        self.theta = np.array(theta, dtype=np.float64).reshape(-1, 1)

    def get_params(self):
        return {"theta": self.theta}

    def _set_param(self, name, value):
        self.theta = value


class QuadraticCost(Cost):
    """``0.5 theta' H theta - c' theta``, independent of the data."""

    def __init__(self, H, c):
        super().__init__()
        self.H = np.asarray(H, dtype=np.float64)
        self.c = np.asarray(c, dtype=np.float64).reshape(-1, 1)

    def cost_value(self, model, data):
        g = data["X"].graph
        theta = model.param_nodes(g)["theta"]
        Ht = g.constant(self.H) @ theta
        return G.sum(theta * Ht) * 0.5 - G.sum(theta * g.constant(self.c))

    def gradient(self, theta):
        return self.H @ theta - self.c


def dummy_dataset():
    return DenseDesignMatrix(np.zeros((1, 1)))


def classification_data(n=24, d=4, k=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    return DenseDesignMatrix(X, one_hot(rng.integers(0, k, n), k))


def run_epochs(algorithm, model, dataset, epochs):
    algorithm.termination_criterion = EpochCounter(epochs)
    Train(dataset, model, algorithm).main_loop()
    return model


class TestSGD:
    def test_single_step_example(self):
        # theta=1, lr=0.1, gradient 2 -> 0.8
        mlp = MLP([Linear(1, init_W=[[1.0]], init_b=[0.0])], nvis=1)
        ds = DenseDesignMatrix([[1.0]], [[0.0]])
        run_epochs(SGD(0.1, GaussianMSE(), 1), mlp, ds, 1)
        assert mlp.get_params()["h0_W"][0, 0] == pytest.approx(0.8, abs=1e-15)
        assert mlp.get_params()["h0_b"][0] == pytest.approx(-0.2, abs=1e-15)

    def test_zero_momentum_is_plain_sgd(self):
        ds = classification_data()

        def run(rule):
            mlp = MLP([Tanh(5), Softmax(3)], nvis=4, seed=1)
            run_epochs(SGD(0.05, NLLSoftmax(), 5, learning_rule=rule, seed=2),
                       mlp, ds, 3)
            return mlp.get_params()

        plain, zero = run(None), run(Momentum(0.0))
        for name in plain:
            assert plain[name].tobytes() == zero[name].tobytes()

    def test_momentum_velocity(self):
        rule = Momentum(0.5)
        params = {"w": np.array([1.0])}
        g = {"w": np.array([2.0])}
        params = rule.step(params, g, 0.1)
        np.testing.assert_allclose(params["w"], [0.8])
        params = rule.step(params, g, 0.1)
        # v = 0.5 * -0.2 - 0.2 = -0.3
        np.testing.assert_allclose(params["w"], [0.5])

    def test_invalid_momentum(self):
        with pytest.raises(ValueError):
            Momentum(1.0)

    def test_epoch_bitwise_reproducible(self):
        ds = classification_data(seed=1)

        def run():
            mlp = MLP([Tanh(5), Softmax(3)], nvis=4, seed=3)
            run_epochs(SGD(0.1, NLLSoftmax(), 7, seed=4,
                           learning_rule=Momentum(0.9)), mlp, ds, 2)
            return mlp.get_params()

        a, b = run(), run()
        for name in a:
            assert a[name].tobytes() == b[name].tobytes()

    def test_non_finite_gradient_names_parameter(self):
        mlp = MLP([Tanh(5), Softmax(3)], nvis=4, seed=0)
        mlp.set_params({"h1_W": np.full((5, 3), np.nan)})
        algo = SGD(0.1, NLLSoftmax(), 4)
        algo.termination_criterion = EpochCounter(1)
        with pytest.raises(TrainingError, match="non-finite gradient for "
                                                "parameter 'h"):
            Train(classification_data(), mlp, algo).main_loop()

    def test_missing_targets(self):
        algo = SGD(0.1, NLLSoftmax(), 4, termination_criterion=EpochCounter(1))
        mlp = MLP([Softmax(3)], nvis=4)
        with pytest.raises(TrainingError, match="targets"):
            algo.setup(mlp, DenseDesignMatrix(np.zeros((4, 4))))

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            SGD(0.0, NLLSoftmax(), 4)
        with pytest.raises(ValueError):
            SGD(0.1, NLLSoftmax(), 0)
        with pytest.raises(ValueError):
            SGD(0.1, NLLSoftmax(), 4, train_iteration_mode="backwards")

    def test_train_before_setup(self):
        with pytest.raises(TrainingError, match="setup"):
            SGD(0.1, NLLSoftmax(), 4).train(classification_data())

    def test_no_termination_criterion(self):
        algo = SGD(0.1, NLLSoftmax(), 4)
        with pytest.raises(MonitorError, match="termination"):
            Train(classification_data(), MLP([Softmax(3)], nvis=4),
                  algo).main_loop()


class TestPolyak:
    def test_constant_iterates(self):
        H = spd_matrix(3, np.random.default_rng(0))
        c = np.ones(3)
        opt = np.linalg.solve(H, c)
        model = Quadratic(opt)
        polyak = PolyakAveraging()
        algo = SGD(0.01, QuadraticCost(H, c), 1, polyak_averaging=polyak)
        run_epochs(algo, model, dummy_dataset(), 4)
        assert polyak.count == 4
        np.testing.assert_allclose(polyak.averaged["theta"], model.theta,
                                   rtol=0, atol=1e-14)

    def test_average_of_iterates(self):
        H = np.diag([1.0, 2.0])
        c = np.array([1.0, -1.0])
        model = Quadratic([3.0, 3.0])
        polyak = PolyakAveraging(start_epoch=2)
        algo = SGD(0.1, QuadraticCost(H, c), 1, polyak_averaging=polyak)
        iterates = []
        set_params = model.set_params

        def record(values):
            set_params(values)
            if algo.epochs_seen >= 2:
                iterates.append(model.theta.copy())
        model.set_params = record
        run_epochs(algo, model, dummy_dataset(), 6)
        assert len(iterates) == polyak.count == 4
        np.testing.assert_allclose(polyak.averaged["theta"],
                                   np.mean(iterates, axis=0), atol=1e-14)

    def test_deliver_averaged(self):
        model = Quadratic([3.0, 3.0])
        polyak = PolyakAveraging(deliver_averaged=True)
        algo = SGD(0.1, QuadraticCost(np.eye(2), np.zeros(2)), 1,
                   polyak_averaging=polyak)
        run_epochs(algo, model, dummy_dataset(), 3)
        # iterates 2.7, 2.43, 2.187
        np.testing.assert_allclose(model.theta.ravel(),
                                   [(2.7 + 2.43 + 2.187) / 3] * 2)


class TestLineSearch:
    def test_unit_step_accepted(self):
        f = lambda t: (t - 1.0) ** 2  # noqa: E731
        res = backtracking_armijo(f, 1.0, -2.0)
        assert res.success and res.step == 1.0 and res.evaluations == 1

    def test_backtracks(self):
        f = lambda t: (4.0 * t - 1.0) ** 2  # noqa: E731
        res = backtracking_armijo(f, 1.0, -8.0)
        assert res.success and res.step == 0.25
        assert armijo_holds(1.0, -8.0, res.step, res.value)

    def test_bracketing_exact_on_quadratic(self):
        f = lambda t: 3.0 * (t - 0.7) ** 2 + 1.0  # noqa: E731
        f0, slope0 = f(0.0), -6.0 * 0.7
        res = bracketing(f, f0, slope0)
        assert res.success
        assert abs(res.step - 0.7) < 1e-12

    def test_needs_descent_direction(self):
        for search in (backtracking_armijo, bracketing):
            with pytest.raises(ValueError, match="descent"):
                search(lambda t: t, 0.0, 0.0)
            with pytest.raises(ValueError):
                search(lambda t: t, 0.0, 1.0)

    def test_failure_returns_zero_step(self):
        res = backtracking_armijo(lambda t: math.inf, 0.0, -1.0,
                                  max_halvings=5)
        assert not res.success and res.step == 0.0 and res.evaluations == 6
        res = bracketing(lambda t: math.nan, 0.0, -1.0, max_halvings=3)
        assert not res.success and res.step == 0.0

    def test_armijo_holds(self):
        assert armijo_holds(1.0, -1.0, 1.0, 0.5)
        assert not armijo_holds(1.0, -1.0, 1.0, 1.0)
        assert not armijo_holds(1.0, -1.0, 1.0, math.nan)


def partition_gradient_error(seed):
    """Max abs difference between the size-weighted accumulation over a
    partition of a dataset and the one-batch gradient."""
    ds = classification_data(n=23, seed=seed)
    mlp = MLP([Tanh(5), Softmax(3)], nvis=4, seed=seed)
    algo = BGD(NLLSoftmax(), termination_criterion=EpochCounter(1))
    algo.setup(mlp, ds)
    X, y = ds.X, ds.y
    # uneven pieces: 5, 11, 7
    cuts = [0, 5, 16, 23]
    parts = [(X[a:b], y[a:b]) for a, b in zip(cuts, cuts[1:])]
    v_part, g_part, _ = algo.accumulate(parts)
    v_full, g_full, _ = algo.accumulate([(X, y)])
    err = abs(v_part - v_full)
    for name in g_full:
        err = max(err, float(np.max(np.abs(g_part[name] - g_full[name]))))
    return err


def cg_quadratic_run(seed=0, updates=5):
    """Conjugate gradient with exact line search on a random 5x5 SPD
    quadratic. Returns ``(algorithm, model, cost, minimizer, values)``."""
    rng = np.random.default_rng(seed)
    H = spd_matrix(5, rng, condition=10.0)
    c = rng.normal(size=5)
    model = Quadratic(rng.normal(size=5))
    cost = QuadraticCost(H, c)
    algo = BGD(cost, conjugate=True, line_search="bracketing",
               updates_per_batch=updates)
    values = []
    set_params = model.set_params

    def record(params):
        set_params(params)
        t = model.theta
        values.append(float(0.5 * t.ravel() @ H @ t.ravel() - c @ t.ravel()))
    model.set_params = record
    run_epochs(algo, model, dummy_dataset(), 1)
    return algo, model, cost, np.linalg.solve(H, c), values


class TestBGD:
    def test_partition_gradient_equals_full_batch(self):
        for seed in range(5):
            assert partition_gradient_error(seed) < 1e-10

    def test_conjugate_gradient_solves_quadratic(self):
        for seed in range(5):
            algo, model, cost, opt, values = cg_quadratic_run(seed)
            assert len(values) <= 5
            assert np.linalg.norm(cost.gradient(model.theta)) < 1e-8
            np.testing.assert_allclose(model.theta.ravel(), opt, atol=1e-8)
            assert all(b <= a for a, b in zip(values, values[1:]))

    def test_steepest_descent_is_slower(self):
        rng = np.random.default_rng(0)
        H = spd_matrix(5, rng, condition=100.0)
        c = rng.normal(size=5)
        model = Quadratic(rng.normal(size=5))
        cost = QuadraticCost(H, c)
        run_epochs(BGD(cost, line_search="bracketing", updates_per_batch=5),
                   model, dummy_dataset(), 1)
        assert np.linalg.norm(cost.gradient(model.theta)) > 1e-6

    def test_accepted_steps_satisfy_armijo(self):
        ds = classification_data(seed=5)
        for search, conjugate in [("backtracking", False),
                                  ("backtracking", True),
                                  ("bracketing", True)]:
            mlp = MLP([Tanh(5), Softmax(3)], nvis=4, seed=5)
            algo = BGD(NLLSoftmax(), batch_size=8, conjugate=conjugate,
                       line_search=search, updates_per_batch=3, seed=0)
            run_epochs(algo, mlp, ds, 3)
            assert len(algo.search_log) == 27
            for f0, slope0, step, f_step, success in algo.search_log:
                assert success
                assert slope0 < 0
                assert armijo_holds(f0, slope0, step, f_step, algo.c1)

    def test_failure_leaves_parameters_and_records_channel(self):
        # curvature 100: the unit step along -g overshoots, no halvings
        model = Quadratic([1.0])
        cost = QuadraticCost([[100.0]], [0.0])
        algo = BGD(cost, max_halvings=0, updates_per_batch=2,
                   termination_criterion=EpochCounter(1))
        _, records = Train(dummy_dataset(), model, algo).main_loop()
        assert model.theta[0, 0] == 1.0
        assert algo.failures_this_epoch == 2
        assert [r["line_search_failures"] for r in records] == [0.0, 2.0]

    def test_cost_without_value_rejected(self):
        algo = BGD(CD(), termination_criterion=EpochCounter(1))
        with pytest.raises(TrainingError, match="no value"):
            algo.setup(RBM(3, 2), DenseDesignMatrix(np.zeros((2, 3))))

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            BGD(NLLSoftmax(), line_search="golden")
        with pytest.raises(ValueError):
            BGD(NLLSoftmax(), batches_per_step=0)
        with pytest.raises(ValueError):
            BGD(NLLSoftmax(), c1=1.5)


class CountingRBM(RBM):
    calls = 0

    def train_batch(self, X, y=None):
        CountingRBM.calls += 1
        super().train_batch(X, y)


class TestDefaultAlgorithm:
    def test_calls_per_epoch(self):
        CountingRBM.calls = 0
        rbm = CountingRBM(3, 2, seed=0)
        ds = DenseDesignMatrix(np.ones((10, 3)))
        algo = DefaultTrainingAlgorithm(2, EpochCounter(3))
        Train(ds, rbm, algo).main_loop()
        assert CountingRBM.calls == 15

    def test_rbm_cd1_changes_parameters(self):
        rbm = RBM(4, 3, seed=0)
        before = {n: v.copy() for n, v in rbm.get_params().items()}
        ds = DenseDesignMatrix((np.arange(40).reshape(10, 4) % 3 == 0) * 1.0)
        run_epochs(DefaultTrainingAlgorithm(5), rbm, ds, 2)
        for name, value in rbm.get_params().items():
            assert not np.array_equal(value, before[name])

    def test_mlp_has_no_learning_rule(self):
        algo = DefaultTrainingAlgorithm(2, EpochCounter(1))
        with pytest.raises(CapabilityError, match="train_batch"):
            algo.setup(MLP([Softmax(3)], nvis=4), classification_data())


class TestHarness:
    def test_epoch_counter_rows(self):
        mlp = MLP([Softmax(3)], nvis=4, seed=0)
        algo = SGD(0.1, NLLSoftmax(), 6, termination_criterion=EpochCounter(3))
        _, records = Train(classification_data(), mlp, algo).main_loop()
        assert [r["epoch"] for r in records] == [0, 1, 2, 3]
        assert algo.epochs_seen == 3
        assert {"train_objective", "train_nll",
                "train_misclass"} <= set(records[0])

    def test_zero_epochs(self):
        mlp = MLP([Softmax(3)], nvis=4, seed=0)
        before = mlp.get_params()["h0_W"].copy()
        algo = SGD(0.1, NLLSoftmax(), 6, termination_criterion=EpochCounter(0))
        _, records = Train(classification_data(), mlp, algo).main_loop()
        assert len(records) == 1
        np.testing.assert_array_equal(mlp.get_params()["h0_W"], before)

    def test_runs_once(self):
        algo = SGD(0.1, NLLSoftmax(), 6, termination_criterion=EpochCounter(1))
        train = Train(classification_data(), MLP([Softmax(3)], nvis=4), algo)
        train.main_loop()
        with pytest.raises(RuntimeError):
            train.main_loop()

    def test_periodic_checkpoints(self, tmp_path):
        mlp = MLP([Softmax(3)], nvis=4, seed=0)
        algo = SGD(0.1, NLLSoftmax(), 6, termination_criterion=EpochCounter(5),
                   learning_rule=Momentum(0.5))
        Train(classification_data(), mlp, algo, save_path=str(tmp_path),
              save_freq=2, seed=9).main_loop()
        assert sorted(os.listdir(tmp_path)) == ["epoch_0002", "epoch_0004"]
        ckpt = load_checkpoint(tmp_path / "epoch_0004")
        assert ckpt.manifest["seeds"]["root"] == 9
        assert set(ckpt.state) == {"velocity_h0_W", "velocity_h0_b"}

    def test_model_trains_itself(self):
        rbm = RBM(3, 2, seed=0, max_epochs=2, batch_size=5)
        before = rbm.W.copy()
        _, records = Train(DenseDesignMatrix(np.ones((10, 3))),
                           rbm).main_loop()
        assert [r["epoch"] for r in records] == [0, 1]
        assert not np.array_equal(rbm.W, before)

    def test_negative_save_freq(self):
        with pytest.raises(ValueError):
            Train(classification_data(), MLP([Softmax(3)], nvis=4),
                  save_freq=-1)


def constrained_mlp(seed):
    return MLP([Tanh(6, max_norm=0.3, irange=2.0),
                Softmax(3, max_norm=0.5, irange=2.0)], nvis=4, seed=seed,
               nonnegative=("h1_b",))


def watch_constraints(model, limits):
    """Wrap ``model.set_params`` to record the worst constraint violation
    after every update."""
    worst = {"norm": -np.inf, "negative": 0.0, "updates": 0}
    set_params = model.set_params

    def checked(values):
        set_params(values)
        params = model.get_params()
        for name, limit in limits.items():
            norms = np.sqrt(np.sum(params[name] ** 2, axis=0))
            worst["norm"] = max(worst["norm"], float(np.max(norms - limit)))
        worst["negative"] = min(worst["negative"],
                                float(np.min(params["h1_b"])))
        worst["updates"] += 1
    model.set_params = checked
    return worst


class TestConstraints:
    limits = {"h0_W": 0.3, "h1_W": 0.5}

    @pytest.mark.parametrize("make", [
        lambda: SGD(1.0, NLLSoftmax(), 4, learning_rule=Momentum(0.9), seed=0),
        lambda: BGD(NLLSoftmax(), batch_size=8, updates_per_batch=2),
        lambda: BGD(NLLSoftmax(), conjugate=True, line_search="bracketing",
                    updates_per_batch=3),
    ])
    def test_hold_after_every_update(self, make):
        mlp = constrained_mlp(0)
        worst = watch_constraints(mlp, self.limits)
        run_epochs(make(), mlp, classification_data(seed=2), 4)
        assert worst["updates"] > 0
        assert worst["norm"] <= 1e-12
        assert worst["negative"] == 0.0
