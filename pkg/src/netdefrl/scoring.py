"""Score models used to rank candidate bit flips.

A scorer answers two questions about defender-space observations: which
action it would take (``best_action``) and how much it likes a given action
in a batch of observations (``score``).
"""
from __future__ import annotations

import numpy as np

from .neuralnet import Mlp, softmax


class QScorer:
    """``Q(s, a)`` from a Q-head network."""

    kind = "q"

    def __init__(self, net: Mlp):
        self.net = net

    def best_action(self, x: np.ndarray) -> int:
        return int(np.argmax(self.net.forward(x)))

    def score(self, xs: np.ndarray, action: int) -> np.ndarray:
        return self.net.forward(xs)[:, action]


class PolicyScorer:
    """``pi(a | s)`` from an actor-critic network."""

    kind = "policy"

    def __init__(self, net: Mlp):
        self.net = net

    def best_action(self, x: np.ndarray) -> int:
        return int(np.argmax(self.net.forward(x)[:-1]))

    def score(self, xs: np.ndarray, action: int) -> np.ndarray:
        return softmax(self.net.forward(xs)[:, :-1])[:, action]


class LinearScorer:
    """``score(s, a) = s @ weights[:, a] + bias[a]``; handy for constructed cases."""

    kind = "q"

    def __init__(self, weights: np.ndarray, bias: np.ndarray | None = None):
        self.weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        if self.weights.shape[0] == 1:
            self.weights = self.weights.T
        self.bias = np.zeros(self.weights.shape[1]) if bias is None else np.asarray(bias, dtype=np.float64)

    def q(self, xs):
        return np.asarray(xs) @ self.weights + self.bias

    def best_action(self, x: np.ndarray) -> int:
        return int(np.argmax(self.q(x)))

    def score(self, xs: np.ndarray, action: int) -> np.ndarray:
        return self.q(xs)[:, action]


class MappedScorer:
    """Run ``inner`` on the sub-vector the attacker can see.

    ``columns`` lists, for each surrogate input, the defender-space column
    it reads from.
    """

    def __init__(self, inner, columns):
        self.inner = inner
        self.kind = inner.kind
        self.columns = np.asarray(columns, dtype=np.int64)

    def best_action(self, x: np.ndarray) -> int:
        return self.inner.best_action(np.asarray(x)[self.columns])

    def score(self, xs: np.ndarray, action: int) -> np.ndarray:
        return self.inner.score(np.asarray(xs)[:, self.columns], action)


def scorer_for(net: Mlp):
    return QScorer(net) if net.head == "q" else PolicyScorer(net)
