import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpbrem import dqn
from dpbrem.dqn import Adam, QNetwork, TrainSample
from dpbrem.netsim import n_active
from dpbrem.rem import RemEntry, RemStore


def small_net(seed):
    net = QNetwork.init([4, 3, 3, 4], seed)
    rng = np.random.default_rng(seed + 1)
    # non-zero biases keep hidden units away from the ReLU kink
    net.biases = [rng.uniform(-0.5, 0.5, b.shape) for b in net.biases]
    return net


def random_sample(rng, n_actions=4, dim=4):
    return TrainSample(tuple(rng.uniform(-1, 1, dim)), int(rng.integers(n_actions)),
                       float(rng.uniform(0, 2)))


class TestInit:
    def test_same_seed_same_net(self):
        assert QNetwork.init([18, 16, 64, 128, 64, 32], 3) == QNetwork.init([18, 16, 64, 128, 64, 32], 3)
        assert QNetwork.init([4, 3, 2], 3) != QNetwork.init([4, 3, 2], 4)

    def test_biases_zero_weights_bounded(self):
        net = QNetwork.init([18, 16, 64], 0)
        assert all(np.all(b == 0) for b in net.biases)
        assert np.all(np.abs(net.weights[0]) <= 1 / np.sqrt(18))

    def test_parameter_count(self):
        dims = dqn.network_dims(18, 32)
        assert dims == [18, 16, 64, 128, 64, 32]
        expected = sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
        # 304 + 1088 + 8320 + 8256 + 2080
        assert QNetwork.init(dims, 0).n_params == expected == 20048

    def test_invalid_dims(self):
        with pytest.raises(ValueError):
            QNetwork.init([4], 0)


class TestForward:
    def test_zero_net(self):
        net = QNetwork.init([18, 16, 64, 128, 64, 32], 0)
        net.weights = [np.zeros_like(w) for w in net.weights]
        q = net.forward(np.ones(18))
        assert q.shape == (32,) and np.all(q == 0)

    def test_hand_computed(self):
        net = QNetwork([np.array([[1.0, -1.0], [2.0, 0.5]]), np.array([[1.0, 2.0], [3.0, -1.0]])],
                       [np.array([0.5, -1.0]), np.array([0.1, 0.2])])
        # hidden pre-activation (5.5, -1.0) -> ReLU (5.5, 0)
        np.testing.assert_allclose(net.forward([1.0, 2.0]), [5.6, 11.2], rtol=1e-15)

    def test_batch_matches_single(self, rng):
        net = QNetwork.init([6, 5, 4], 1)
        x = rng.normal(size=(7, 6))
        np.testing.assert_allclose(net.forward(x)[3], net.forward(x[3]), rtol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            QNetwork.init([6, 5, 4], 1).forward(np.zeros(5))


class TestTrainStep:
    def test_zero_loss_zero_gradient(self, rng):
        net = small_net(0)
        states = rng.uniform(-1, 1, (5, 4))
        actions = rng.integers(0, 4, 5)
        targets = net.forward(states)[np.arange(5), actions]
        loss, grads = net.loss_and_grads(states, actions, targets)
        assert loss == 0.0 and all(np.all(g == 0) for g in grads)

    def test_loss_nonnegative(self, rng):
        net = small_net(1)
        opt = Adam()
        for _ in range(20):
            assert dqn.train_step(net, [random_sample(rng) for _ in range(8)], opt) >= 0.0

    def test_single_adam_step_closed_form(self):
        net = QNetwork([np.array([[0.5]])], [np.array([0.25])])
        sample = TrainSample((2.0,), 0, 3.0)
        loss = dqn.train_step(net, [sample], Adam(lr=1e-3))
        # q = 1.25, error -1.75, dL/dw = -7, dL/db = -3.5; first Adam step = lr * g / (|g| + eps)
        assert loss == pytest.approx(1.75 ** 2)
        assert net.weights[0][0, 0] == pytest.approx(0.5 + 1e-3 * 7 / (7 + 1e-8), rel=1e-14)
        assert net.biases[0][0] == pytest.approx(0.25 + 1e-3 * 3.5 / (3.5 + 1e-8), rel=1e-14)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_detected(self):
        net = QNetwork([np.array([[1e200]])], [np.array([0.0])])
        with pytest.raises(dqn.TrainingDivergedError):
            dqn.train_step(net, [TrainSample((1e200,), 0, 0.0)], Adam())

    def test_empty_batch(self):
        with pytest.raises(ValueError):
            dqn.train_step(small_net(0), [], Adam())

    def test_untaken_actions_get_no_output_gradient(self, rng):
        net = small_net(3)
        s = random_sample(rng)
        _, grads = net.loss_and_grads([s.state], [s.action], [s.target])
        w_last, b_last = grads[-2], grads[-1]
        others = [a for a in range(4) if a != s.action]
        assert np.all(w_last[:, others] == 0.0) and np.all(b_last[others] == 0.0)


class TestTrain:
    def test_zero_steps_returns_same_net(self, desk_rem):
        net = QNetwork.init(dqn.network_dims(12, 8), 0)
        trained, trace = dqn.train(net, desk_rem, steps=0)
        assert trained == net and trace == []

    def test_defaults(self):
        import inspect

        params = inspect.signature(dqn.train).parameters
        assert params["steps"].default == 50000 and params["batch_size"].default == 8

    def test_empty_rem(self):
        with pytest.raises(ValueError):
            dqn.train(QNetwork.init([12, 8], 0), RemStore(), steps=1)

    def test_reproducible(self, desk_rem):
        net = QNetwork.init(dqn.network_dims(12, 8), 5)
        a, ta = dqn.train(net, desk_rem, steps=300, seed=9)
        b, tb = dqn.train(net, desk_rem, steps=300, seed=9)
        assert a == b and ta == tb and len(ta) == 3

    @pytest.mark.slow
    def test_smoothed_loss_decreases(self, desk_rem):
        net = QNetwork.init(dqn.network_dims(12, 8), 0)
        trained, trace = dqn.train(net, desk_rem, steps=50000, batch_size=8, seed=0)
        losses = [loss for _, loss in trace]
        assert len(losses) == 500
        # trace rows are 100-step means, so five rows form a 500-step window
        assert np.mean(losses[-5:]) < np.mean(losses[:5])
        assert all(np.all(np.isfinite(p)) for p in trained.params())


class TestActGreedy:
    def _net_with_q(self, q):
        q = np.asarray(q, dtype=float)
        return QNetwork([np.zeros((3, q.size))], [q])

    def test_unique_max(self):
        q = np.zeros(32)
        q[7] = 1.0
        assert dqn.act_greedy(self._net_with_q(q), np.zeros(3)) == 7

    def test_all_equal(self):
        assert dqn.act_greedy(self._net_with_q(np.ones(32)), np.zeros(3)) == 31

    def test_matches_linear_scan(self, rng):
        for trial in range(150):
            q = rng.integers(0, 5, 16) if trial % 2 else rng.normal(size=16)
            best = None
            for m, v in enumerate(q):
                key = (v, n_active(m), -m)
                if best is None or key > best[0]:
                    best = (key, m)
            assert dqn.act_greedy(self._net_with_q(q), np.zeros(3)) == best[1]

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.01, 100), shift=st.floats(-50, 50))
    def test_invariant_to_increasing_transform(self, seed, scale, shift):
        q = np.random.default_rng(seed).normal(size=8)
        a = dqn.act_greedy(self._net_with_q(q), np.zeros(3))
        assert dqn.act_greedy(self._net_with_q(scale * q + shift), np.zeros(3)) == a
        assert dqn.act_greedy(self._net_with_q(np.exp(q)), np.zeros(3)) == a

    def test_rem_excludes_disconnecting_patterns(self):
        state = (0.1, 0.2, 0.3)
        store = RemStore([RemEntry(0, state, 0, 0.0, 0.0, 1.0, False),
                          RemEntry(0, state, 1, 0.2, 2e7, 3e7, True)])
        net = self._net_with_q([5.0, 1.0])
        assert dqn.act_greedy(net, state) == 0
        assert dqn.act_greedy(net, state, store) == 1


class TestGradCheck:
    def test_random_nets(self):
        rng = np.random.default_rng(0)
        errors = [dqn.grad_check(small_net(i), random_sample(rng)) for i in range(20)]
        assert max(errors) < 1e-4

    def test_detects_zeroed_gradient(self):
        rng = np.random.default_rng(1)
        net, sample = small_net(42), random_sample(rng)

        def corrupted(net, states, actions, targets):
            grads = net.loss_and_grads(states, actions, targets)[1]
            w = grads[0]
            w[np.unravel_index(np.argmax(np.abs(w)), w.shape)] = 0.0
            return grads

        assert dqn.grad_check(net, sample) < 1e-4
        assert dqn.grad_check(net, sample, gradient=corrupted) > 1e-2

    def test_zero_loss_point(self):
        net = small_net(7)
        state = (0.3, -0.2, 0.9, 0.1)
        target = float(net.forward(state)[2])
        assert dqn.grad_check(net, TrainSample(state, 2, target)) < 1e-4

    def test_epsilon_must_be_positive(self, rng):
        with pytest.raises(ValueError):
            dqn.grad_check(small_net(0), random_sample(rng), epsilon=0.0)


class TestModelFile:
    def test_round_trip(self, tmp_path, rng):
        for seed in range(10):
            dims = [int(d) for d in rng.integers(1, 12, int(rng.integers(2, 6)))]
            net = QNetwork.init(dims, seed)
            net.biases = [rng.normal(size=b.shape) for b in net.biases]
            dqn.save_model(net, tmp_path / "m.txt")
            assert dqn.load_model(tmp_path / "m.txt") == net

    def test_header_and_dims(self, tmp_path):
        dqn.save_model(QNetwork.init([3, 2], 0), tmp_path / "m.txt")
        lines = (tmp_path / "m.txt").read_text().splitlines()
        assert lines[:2] == ["qnetv1", "3 2"] and len(lines) == 4

    def test_malformed(self, tmp_path):
        path = tmp_path / "m.txt"
        path.write_text("qnetv1\n3 2\n1 2 3\n0 0\n")
        with pytest.raises(dqn.ModelFormatError, match="line 3"):
            dqn.load_model(path)
        path.write_text("nope\n")
        with pytest.raises(dqn.ModelFormatError):
            dqn.load_model(path)
