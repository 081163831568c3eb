import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focscpt import mlp
from focscpt.data import Dataset
from focscpt.mlp import Layer, Mlp, StepNetwork, TrainConfig, to_step

from conftest import all_inputs


def random_net(rng, sizes, act="sigmoid"):
    layers = []
    for i, (a, b) in enumerate(zip(sizes, sizes[1:])):
        last = i == len(sizes) - 2
        layers.append(Layer(rng.normal(0, 1, (b, a)), rng.normal(0, 1, b),
                            "sigmoid" if last else act))
    return Mlp(tuple(layers))


def finite_difference(net, X, y, w, h=1e-5):
    theta = net.get_flat()
    g = np.empty_like(theta)
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        g[i] = (mlp.cross_entropy(net.with_flat(tp), X, y, w)
                - mlp.cross_entropy(net.with_flat(tm), X, y, w)) / (2 * h)
    return g


def assert_gradient_matches(net, X, y, w):
    g = mlp.flat_gradient(net, X, y, w)
    fd = finite_difference(net, X, y, w)
    # relative error, floored so that near-zero coordinates compare absolutely
    rel = np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-4)
    assert rel.max() <= 1e-4, rel.max()


class TestEval:
    def test_paper_values(self, fig1_net):
        assert mlp.eval(fig1_net, [0, 0]) == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-12)
        assert mlp.eval(fig1_net, [1, 0]) == pytest.approx(1 / (1 + math.exp(2)), abs=1e-12)
        assert mlp.eval(fig1_net, [0, 0]) == pytest.approx(0.8808, abs=1e-4)
        assert mlp.eval(fig1_net, [1, 0]) == pytest.approx(0.1192, abs=1e-4)

    def test_zero_network(self):
        net = Mlp((Layer(np.zeros((4, 3)), np.zeros(4), "relu"),
                   Layer(np.zeros((1, 4)), np.zeros(1), "sigmoid")))
        for u in all_inputs(3):
            assert mlp.eval(net, u) == 0.5

    def test_output_in_open_interval(self):
        rng = np.random.default_rng(0)
        net = random_net(rng, [6, 5, 1], "relu")
        p = net.predict_proba(all_inputs(6))
        assert np.all((p > 0) & (p < 1)) and np.all(np.isfinite(p))

    def test_arity_checked(self, fig1_net):
        with pytest.raises(ValueError):
            mlp.eval(fig1_net, [1, 0, 1])


class TestGradient:
    def test_random_2_4_1(self):
        rng = np.random.default_rng(1)
        net = random_net(rng, [2, 4, 1])
        X = rng.integers(0, 2, (12, 2)).astype(float)
        y = rng.integers(0, 2, 12).astype(float)
        assert_gradient_matches(net, X, y, None)

    @pytest.mark.parametrize("seed", range(20))
    def test_property_random_nets(self, seed):
        rng = np.random.default_rng(100 + seed)
        sizes = [int(rng.integers(1, 6)), int(rng.integers(1, 6)), 1]
        if seed % 4 == 3:
            sizes.insert(2, int(rng.integers(1, 4)))
        net = random_net(rng, sizes, "sigmoid" if seed % 2 else "relu")
        # shift relu pre-activations away from the kink so differences are smooth
        X = rng.integers(0, 2, (int(rng.integers(3, 15)), sizes[0])).astype(float)
        y = rng.integers(0, 2, X.shape[0]).astype(float)
        w = rng.integers(1, 4, X.shape[0]).astype(float)
        assert_gradient_matches(net, X, y, w)

    def test_stationary_constant_model(self):
        y = np.array([1, 1, 1, 0], dtype=float)
        logodds = math.log(3)
        net = Mlp((Layer(np.zeros((2, 2)), np.zeros(2), "relu"),
                   Layer(np.zeros((1, 2)), [logodds], "sigmoid")))
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        (_, _), (_, db) = mlp.gradient(net, X, y)
        assert abs(db[0]) < 1e-12

    def test_not_scale_invariant(self):
        rng = np.random.default_rng(5)
        net = random_net(rng, [3, 4, 1])
        X = rng.integers(0, 2, (8, 3)).astype(float)
        y = rng.integers(0, 2, 8).astype(float)
        g1 = mlp.flat_gradient(net, X, y)
        g2 = mlp.flat_gradient(net.with_flat(2 * net.get_flat()), X, y)
        assert not np.allclose(g1, g2)

    def test_empty_batch(self, fig1_net):
        with pytest.raises(ValueError):
            mlp.gradient(fig1_net, np.zeros((0, 2)), np.zeros(0))


class TestTrain:
    def test_xor_learned(self):
        view = Dataset(["U1", "U2", "X"], [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]]).family("X")
        net = mlp.train(view, TrainConfig(16, "relu", 2000, 0.1, None, seed=0))
        pred = (net.predict_proba(view.X) >= 0.5).astype(int)
        assert pred.tolist() == view.y.tolist()

    def test_constant_target(self):
        view = Dataset(["A", "B", "X"], [[a, b, 1] for a in (0, 1) for b in (0, 1)]).family("X")
        net = mlp.train(view, TrainConfig(4, "sigmoid", 300, 0.1, 2, seed=0))
        assert np.all(net.predict_proba(view.X) >= 0.9)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        rows = rng.integers(0, 2, (60, 4))
        view = Dataset(["A", "B", "C", "X"], rows).family("X")
        cfg = TrainConfig(5, "relu", 20, 0.05, 8, seed=3)
        a, b = mlp.train(view, cfg), mlp.train(view, cfg)
        assert np.array_equal(a.get_flat(), b.get_flat())
        assert a.loss_curve == b.loss_curve

    def test_best_snapshot_returned(self):
        rng = np.random.default_rng(2)
        view = Dataset(["A", "B", "X"], rng.integers(0, 2, (40, 3))).family("X")
        net = mlp.train(view, TrainConfig(4, "relu", 30, 0.5, 4, seed=0))
        loss = mlp.cross_entropy(net, view.X, view.y)
        assert loss == pytest.approx(min(net.loss_curve), rel=1e-9)

    def test_divergence_reported(self):
        view = Dataset(["A", "X"], [[0, 0], [1, 1]] * 5).family("X")
        with pytest.raises(mlp.TrainingDivergedError, match="epoch"):
            mlp.train(view, TrainConfig(4, "relu", 50, 1e300, None, seed=0))

    def test_fig1_fit_beats_single_context(self, fig1):
        from focscpt.cpt import cll, learn_focs

        net = mlp.train(fig1, TrainConfig(8, "relu", 500, 0.05, None, seed=0))
        base = cll(fig1, learn_focs(fig1, net, 1))
        assert cll(fig1, learn_focs(fig1, net, 2, min_gain=-math.inf)) >= base


class TestStep:
    def test_boundaries(self):
        net = to_step(Mlp((Layer([[1.0]], [-0.3], "sigmoid"), Layer([[2.0]], [0.5], "sigmoid"))))
        assert net.hidden(np.array([[0.0]]))[0, 0] == 0.0
        assert net.output(np.array([[0.0]]))[0] == 0.5
        tie = to_step(Mlp((Layer([[1.0]], [-1.0], "relu"), Layer([[2.0]], [0.5], "sigmoid"))))
        assert tie.hidden(np.array([[1.0]]))[0, 0] == 1.0

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        net = to_step(random_net(rng, [4, 3, 1]))
        again = to_step(net)
        assert isinstance(again, StepNetwork)
        X = all_inputs(4)
        assert np.array_equal(net.output(X), again.output(X))

    def test_weights_unchanged(self):
        rng = np.random.default_rng(1)
        net = random_net(rng, [3, 2, 1])
        assert np.array_equal(to_step(net).get_flat(), net.get_flat())

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_scalar_path_matches_vector_path(self, seed):
        rng = np.random.default_rng(seed)
        net = to_step(random_net(rng, [5, 4, 1]))
        X = all_inputs(5)
        vec = net.output(X)
        assert [net.output_one(u) for u in X] == vec.tolist()

    def test_sigmoid_threshold_equivalence(self):
        rng = np.random.default_rng(3)
        net = to_step(random_net(rng, [4, 6, 1]))
        o = net.output(all_inputs(4))
        for t in o:
            assert np.array_equal(o <= t, mlp.sigmoid(o) <= mlp.sigmoid(np.array([t]))[0])


def test_json_round_trip(tmp_path, fig1_net):
    mlp.save_model(fig1_net, tmp_path / "m.json")
    back = mlp.load_model(tmp_path / "m.json")
    assert type(back) is Mlp
    assert np.array_equal(back.get_flat(), fig1_net.get_flat())
    step = to_step(fig1_net)
    mlp.save_model(step, tmp_path / "s.json")
    assert isinstance(mlp.load_model(tmp_path / "s.json"), StepNetwork)


def test_estimator_api():
    from sklearn.base import clone

    rng = np.random.default_rng(0)
    X = rng.integers(0, 2, (80, 3))
    y = X[:, 0] | X[:, 1]
    est = mlp.MLPScorer(hidden_units=6, epochs=300, batch_size=None, learning_rate=0.1)
    assert clone(est).get_params()["hidden_units"] == 6
    est.fit(X, y)
    assert est.predict_proba(X).shape == (80, 2)
    assert (est.predict(X) == y).mean() == 1.0
    assert isinstance(est.to_step(), StepNetwork)
