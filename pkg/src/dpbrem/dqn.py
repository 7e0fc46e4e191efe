"""Multilayer-perceptron Q-network trained on REM experience.

The network maps an encoded state to one approximated reward per muting
pattern. Training regresses only the output of the taken action (masked
squared error) and updates parameters with Adam.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .netsim import argmax_pattern

HIDDEN_LAYERS = (16, 64, 128, 64)
MODEL_SCHEMA = "qnetv1"


class TrainingDivergedError(FloatingPointError):
    pass


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrainSample:
    state: tuple
    action: int
    target: float


def network_dims(state_dim: int, n_actions: int, hidden=HIDDEN_LAYERS) -> list[int]:
    return [state_dim, *hidden, n_actions]


class QNetwork:
    """Affine layers with ReLU on hidden layers and an identity output.

    ``weights[i]`` has shape ``(dims[i], dims[i + 1])``.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray]):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("inconsistent layer shapes")
        for w_in, w_out in zip(self.weights[:-1], self.weights[1:]):
            if w_in.shape[1] != w_out.shape[0]:
                raise ValueError("consecutive layers do not chain")

    @classmethod
    def init(cls, dims: Sequence[int], seed: int) -> "QNetwork":
        if len(dims) < 2 or any(int(d) < 1 for d in dims):
            raise ValueError(f"invalid layer dims {list(dims)}")
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(weights, biases)

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in storage order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "QNetwork":
        return QNetwork([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __eq__(self, other):
        return (isinstance(other, QNetwork) and self.dims == other.dims
                and all(np.array_equal(a, b) for a, b in zip(self.params(), other.params())))

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.dims[0]:
            raise ValueError(f"state has length {x.shape[-1]}, network expects {self.dims[0]}")

    def forward(self, state) -> np.ndarray:
        """Q-values for one state (1-D) or a batch of states (2-D)."""
        x = np.asarray(state, dtype=float)
        self._check_input(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = x @ w + b
            if i < last:
                x = np.maximum(x, 0.0)
        return x

    def loss_and_grads(self, states, actions, targets):
        """Masked mean squared error and its gradient w.r.t. every parameter."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        self._check_input(x)
        actions = np.asarray(actions, dtype=int)
        targets = np.asarray(targets, dtype=float)
        n = x.shape[0]
        last = len(self.weights) - 1

        acts = [x]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w + b
            acts.append(np.maximum(z, 0.0) if i < last else z)
        q = acts[-1]
        rows = np.arange(n)
        err = q[rows, actions] - targets
        loss = float(np.mean(err ** 2))

        delta = np.zeros_like(q)
        delta[rows, actions] = 2.0 * err / n
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(last, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0.0)
        grads = []
        for gw, gb in zip(grads_w, grads_b):
            grads += [gw, gb]
        return loss, grads


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _step_arrays(net: QNetwork, states, actions, targets, optimizer: Adam) -> float:
    loss, grads = net.loss_and_grads(states, actions, targets)
    if not np.isfinite(loss):
        raise TrainingDivergedError(f"non-finite training loss {loss}")
    optimizer.step(net.params(), grads)
    if not all(np.all(np.isfinite(p)) for p in net.params()):
        raise TrainingDivergedError("non-finite parameters after update")
    return loss


def train_step(net: QNetwork, batch: Sequence[TrainSample], optimizer: Adam) -> float:
    """One Adam update on a batch; returns the pre-update loss."""
    if not batch:
        raise ValueError("empty batch")
    states = np.array([s.state for s in batch], dtype=float)
    actions = np.array([s.action for s in batch], dtype=int)
    targets = np.array([s.target for s in batch], dtype=float)
    return _step_arrays(net, states, actions, targets, optimizer)


def train(net: QNetwork, store, steps: int = 50000, batch_size: int = 8, seed: int = 0,
          log_every: int = 100, optimizer: Adam | None = None):
    """Experience replay over the REM: uniform sampling with replacement.

    Returns ``(trained_net, trace)`` where ``trace`` has one row
    ``(step, mean batch loss over the last log_every steps)`` per
    ``log_every`` steps. The input network is left untouched.
    """
    if len(store) == 0:
        raise ValueError("cannot train on an empty REM")
    net = net.copy()
    optimizer = optimizer or Adam()
    states, actions, targets = store.states(), store.actions(), store.rewards()
    if states.shape[1] != net.dims[0] or actions.max() >= net.dims[-1]:
        raise ValueError("REM does not match the network dimensions")
    rng = np.random.default_rng(seed)
    trace = []
    window = []
    for step in range(1, steps + 1):
        idx = rng.integers(0, len(states), size=batch_size)
        window.append(_step_arrays(net, states[idx], actions[idx], targets[idx], optimizer))
        if step % log_every == 0:
            trace.append((step, float(np.mean(window))))
            window = []
    return net, trace


def act_greedy(net: QNetwork, state, rem=None) -> int:
    """Pattern with the highest approximated reward.

    When a REM is given and holds entries for exactly this state, patterns
    it recorded as disconnecting are never chosen.
    """
    q = net.forward(state)
    if rem is not None:
        key = tuple(float(v) for v in state)
        dead = [e.pattern for e in rem if e.state == key and not e.all_connected]
        if len(dead) < q.size:
            q = q.copy()
            q[dead] = -np.inf
    return argmax_pattern(q)


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    return np.where(scale < floor, diff, diff / np.where(scale < floor, 1.0, scale))


def grad_check(net: QNetwork, sample: TrainSample, epsilon: float = 1e-5,
               gradient: Callable | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``gradient(net, states, actions, targets) -> list of arrays`` overrides
    the analytic route (used to check that the comparison catches bugs).
    Entries where both gradients are below 1e-8 use absolute error.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    states = np.array([sample.state], dtype=float)
    actions = np.array([sample.action])
    targets = np.array([sample.target], dtype=float)
    if gradient is None:
        analytic = net.loss_and_grads(states, actions, targets)[1]
    else:
        analytic = gradient(net, states, actions, targets)
    probe = net.copy()
    worst = 0.0
    for p, g in zip(probe.params(), analytic):
        numeric = np.empty_like(p)
        for i in np.ndindex(p.shape):
            orig = p[i]
            p[i] = orig + epsilon
            up = probe.loss_and_grads(states, actions, targets)[0]
            p[i] = orig - epsilon
            down = probe.loss_and_grads(states, actions, targets)[0]
            p[i] = orig
            numeric[i] = (up - down) / (2.0 * epsilon)
        worst = max(worst, float(_relative_errors(np.asarray(g), numeric).max()))
    return worst


def save_model(net: QNetwork, path) -> None:
    lines = [MODEL_SCHEMA, " ".join(str(d) for d in net.dims)]
    for w, b in zip(net.weights, net.biases):
        lines.append(" ".join(repr(float(v)) for v in w.ravel()))
        lines.append(" ".join(repr(float(v)) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> QNetwork:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != MODEL_SCHEMA:
        raise ModelFormatError(f"line 1: expected header {MODEL_SCHEMA!r}")
    try:
        dims = [int(d) for d in lines[1].split()]
    except (IndexError, ValueError) as exc:
        raise ModelFormatError("line 2: bad layer dims") from exc
    n_layers = len(dims) - 1
    if n_layers < 1 or len(lines) != 2 + 2 * n_layers:
        raise ModelFormatError(f"expected {2 + 2 * max(n_layers, 1)} lines, got {len(lines)}")
    weights, biases = [], []
    for i in range(n_layers):
        w_line, b_line = 2 + 2 * i, 3 + 2 * i
        try:
            w = np.array([float(v) for v in lines[w_line].split()])
            b = np.array([float(v) for v in lines[b_line].split()])
        except ValueError as exc:
            raise ModelFormatError(f"line {w_line + 1}: {exc}") from exc
        if w.size != dims[i] * dims[i + 1]:
            raise ModelFormatError(f"line {w_line + 1}: expected {dims[i] * dims[i + 1]} weights")
        if b.size != dims[i + 1]:
            raise ModelFormatError(f"line {b_line + 1}: expected {dims[i + 1]} biases")
        weights.append(w.reshape(dims[i], dims[i + 1]))
        biases.append(b)
    return QNetwork(weights, biases)
