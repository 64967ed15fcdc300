"""Time-windowed replay store of encoded (state, label) pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class SampleSpec:
    batch_size: int = 512
    new_fraction: float = 0.5
    stratify: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise WindowError("batch_size must be at least 1")
        if not 0.0 <= self.new_fraction <= 1.0:
            raise WindowError("new_fraction must lie in [0, 1]")


@dataclass(eq=False)
class _Block:
    states: np.ndarray
    labels: np.ndarray
    raw: np.ndarray | None


class ReplayWindow:
    """Entries older than ``capacity_periods`` relative to the newest period
    pushed are dropped on every push.

    Each block may carry the raw (pre-encoder) features alongside the states
    so the window can be re-encoded when the encoders are refitted.
    """

    def __init__(self, capacity_periods: int = 4):
        if capacity_periods < 1:
            raise WindowError("capacity_periods must be at least 1")
        self.capacity_periods = capacity_periods
        self.current_period: int | None = None
        self.dim: int | None = None
        self._blocks: dict[int, _Block] = {}

    def __len__(self) -> int:
        return sum(len(b.labels) for b in self._blocks.values())

    @property
    def periods(self) -> list[int]:
        return sorted(self._blocks)

    def counts(self) -> dict[int, int]:
        return {p: len(self._blocks[p].labels) for p in self.periods}

    @property
    def entries(self) -> list[tuple[int, np.ndarray, int]]:
        return [(p, s, int(y)) for p in self.periods
                for s, y in zip(self._blocks[p].states, self._blocks[p].labels)]

    def push_batch(self, states, labels, period: int, raw=None) -> "ReplayWindow":
        states = np.atleast_2d(np.asarray(states, dtype=float))
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if self.current_period is not None and period < self.current_period:
            raise WindowError(f"period {period} precedes current period {self.current_period}")
        if len(labels) and states.shape[0] != len(labels):
            raise WindowError("states and labels differ in length")
        if len(labels):
            if self.dim is not None and states.shape[1] != self.dim:
                raise WindowError(f"state dimension {states.shape[1]} != window dimension {self.dim}")
            self.dim = states.shape[1]
            raw = None if raw is None else np.atleast_2d(np.asarray(raw, dtype=float))
            old = self._blocks.get(period)
            if old is None:
                self._blocks[period] = _Block(states.copy(), labels.copy(),
                                              None if raw is None else raw.copy())
            else:
                self._blocks[period] = _Block(
                    np.vstack([old.states, states]), np.concatenate([old.labels, labels]),
                    None if raw is None or old.raw is None else np.vstack([old.raw, raw]))
        self.current_period = period
        return self.evict_stale()

    def evict_stale(self) -> "ReplayWindow":
        if self.current_period is not None:
            for p in [p for p in self._blocks
                      if self.current_period - p >= self.capacity_periods]:
                del self._blocks[p]
        return self

    def arrays(self, periods=None) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (states, labels) for the given periods (default: all)."""
        periods = self.periods if periods is None else [p for p in periods if p in self._blocks]
        if not periods:
            return np.zeros((0, self.dim or 0)), np.zeros(0, dtype=np.int64)
        return (np.vstack([self._blocks[p].states for p in periods]),
                np.concatenate([self._blocks[p].labels for p in periods]))

    def raw_arrays(self) -> np.ndarray | None:
        blocks = [self._blocks[p] for p in self.periods]
        if not blocks or any(b.raw is None for b in blocks):
            return None
        return np.vstack([b.raw for b in blocks])

    def replace_states(self, encode) -> None:
        """Recompute every block's states from its raw features."""
        for b in self._blocks.values():
            if b.raw is None:
                raise WindowError("window holds no raw features to re-encode")
            b.states = encode(b.raw)
            self.dim = b.states.shape[1]

    def newest(self) -> tuple[np.ndarray, np.ndarray]:
        return self.arrays([self.current_period])

    def sample_batch(self, spec: SampleSpec) -> tuple[np.ndarray, np.ndarray]:
        """Draw a rehearsal batch mixing the newest period with older ones.

        ``ceil(new_fraction * batch_size)`` rows come from the newest period
        and the rest from strictly older periods; an empty group is replaced
        by the whole window. Draws are uniform with replacement, or split
        evenly between labels when ``stratify`` is set.
        """
        if len(self) == 0:
            raise WindowError("cannot sample from an empty window")
        rng = np.random.default_rng(spec.seed)
        all_s, all_y = self.arrays()
        new_s, new_y = self.newest()
        old_s, old_y = self.arrays([p for p in self.periods if p != self.current_period])
        if len(new_y) == 0:
            new_s, new_y = all_s, all_y
        if len(old_y) == 0:
            old_s, old_y = all_s, all_y
        n_new = math.ceil(spec.new_fraction * spec.batch_size)
        parts = [_draw(rng, new_s, new_y, n_new, spec.stratify),
                 _draw(rng, old_s, old_y, spec.batch_size - n_new, spec.stratify)]
        return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _draw(rng, states, labels, k, stratify):
    if k == 0:
        return states[:0], labels[:0]
    if stratify:
        pos, neg = np.flatnonzero(labels == 1), np.flatnonzero(labels == 0)
        if len(pos) and len(neg):
            idx = np.concatenate([rng.choice(neg, k - k // 2), rng.choice(pos, k // 2)])
            return states[idx], labels[idx]
    idx = rng.integers(0, len(labels), k)
    return states[idx], labels[idx]
