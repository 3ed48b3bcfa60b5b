"""Proportional prioritised replay."""
from __future__ import annotations

import numpy as np

from .. import kernels
from .._accel import USE_NUMBA


class EmptyBufferError(RuntimeError):
    pass


class PerBuffer:
    """Ring buffer sampling entry ``i`` with probability ``p_i**alpha / sum_j p_j**alpha``.

    New entries get the largest priority seen so far.  With numba enabled
    sampling walks a sum tree; otherwise it bisects a cumulative sum.
    """

    def __init__(self, capacity: int, alpha: float = 0.6, floor: float = 1e-3, use_tree: bool | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.alpha = float(alpha)
        self.floor = float(floor)
        self.items: list = []
        self.pos = 0
        self.max_priority = 1.0
        self.scaled = np.zeros(self.capacity)
        self.use_tree = USE_NUMBA if use_tree is None else use_tree
        size = 1
        while size < self.capacity:
            size *= 2
        self.tree = np.zeros(2 * size) if self.use_tree else None
        self._s = self._s2 = None
        self._a = np.zeros(self.capacity, dtype=np.int64)
        self._r = np.zeros(self.capacity)
        self._term = np.zeros(self.capacity, dtype=bool)

    def __len__(self):
        return len(self.items)

    def _write(self, idx: np.ndarray, scaled: np.ndarray) -> None:
        self.scaled[idx] = scaled
        if self.tree is not None:
            kernels.sumtree_set(self.tree, idx.astype(np.int64), self.scaled[idx])

    def add(self, exp, priority: float | None = None) -> int:
        p = self.max_priority if priority is None else max(float(priority), self.floor)
        idx = self.pos
        if len(self.items) < self.capacity:
            self.items.append(exp)
        else:
            self.items[idx] = exp
        if self._s is None:
            width = np.shape(exp.s)[-1]
            self._s = np.zeros((self.capacity, width))
            self._s2 = np.zeros((self.capacity, width))
        self._s[idx] = exp.s
        self._s2[idx] = exp.s_next
        self._a[idx] = exp.a
        self._r[idx] = exp.r
        self._term[idx] = exp.terminal
        self._write(np.array([idx]), np.array([p ** self.alpha]))
        self.pos = (self.pos + 1) % self.capacity
        return idx

    def set_priorities(self, priorities) -> None:
        """Overwrite all current priorities (test helper)."""
        p = np.maximum(np.asarray(priorities, dtype=np.float64), self.floor)
        idx = np.arange(len(self.items))
        self._write(idx, p ** self.alpha)
        self.max_priority = max(self.max_priority, float(p.max()))

    def update_priorities(self, indices, td_errors) -> None:
        p = np.abs(np.asarray(td_errors, dtype=np.float64)) + self.floor
        self._write(np.asarray(indices, dtype=np.int64), p ** self.alpha)
        self.max_priority = max(self.max_priority, float(p.max()))

    def columns(self, idx):
        """``(s, a, s_next, r, terminal)`` arrays for the given slots."""
        return self._s[idx], self._a[idx], self._s2[idx], self._r[idx], self._term[idx]

    def probabilities(self) -> np.ndarray:
        s = self.scaled[:len(self.items)]
        return s / s.sum()

    def sample(self, batch_size: int, rng: np.random.Generator, beta: float = 0.4):
        """Draw ``batch_size`` entries with replacement.

        Returns ``(indices, experiences, weights)`` with importance weights
        ``(n * P_i) ** -beta`` divided by the largest weight in the buffer.
        """
        n = len(self.items)
        if n == 0:
            raise EmptyBufferError("cannot sample from an empty buffer")
        scaled = self.scaled[:n]
        total = scaled.sum()
        u = rng.random(batch_size) * total
        if self.tree is not None:
            idx = kernels.sumtree_find(self.tree, u, n)
        else:
            idx = kernels.proportional_find_numpy(self.scaled, u, n)
        probs = scaled[idx] / total
        weights = (n * probs) ** (-beta)
        max_w = (n * scaled.min() / total) ** (-beta)
        return idx, [self.items[i] for i in idx], weights / max_w
