"""Online execution of a sequential labeling policy for one object.

A policy object (solved table or baseline) exposes:

    T             truncation length
    workers       tuple of WorkerParams, indexed by worker id
    stop_bounds(n)        -> (upper, lower) boundary at step n
    decide(l)             -> terminal decision in {0, 1}
    choose_worker(l, n, available) -> next worker index

The engine keeps the per-object running state, asks the policy for the
next action, and pulls labels from a LabelSource until the policy stops
(boundary hit, truncation, or worker exhaustion).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .model import WorkerParams, log_lr_increment


class SequentialPolicy(Protocol):
    T: int
    workers: tuple[WorkerParams, ...]

    def stop_bounds(self, n: int) -> tuple[float, float]: ...

    def decide(self, l: float) -> int: ...

    def choose_worker(self, l: float, n: int, available: frozenset[int] | set[int] | None) -> int: ...


@dataclass(frozen=True)
class SequentialState:
    """Running state of one labeling episode; a new value per step."""

    l: float = 0.0
    n: int = 0
    queried: frozenset[int] = frozenset()
    trace: tuple[tuple[int, int], ...] = ()  # (worker index, label) pairs


@dataclass(frozen=True)
class Continue:
    worker: int


@dataclass(frozen=True)
class Stop:
    decision: int


Action = Continue | Stop


def step(state: SequentialState, worker: WorkerParams, worker_index: int, label: int) -> SequentialState:
    """Fold one observed label into the state."""
    return SequentialState(
        l=state.l + log_lr_increment(worker, label),
        n=state.n + 1,
        queried=state.queried | {worker_index},
        trace=state.trace + ((worker_index, label),),
    )


def next_action(
    policy: SequentialPolicy,
    state: SequentialState,
    available: frozenset[int] | set[int] | None = None,
) -> Action:
    """Stop (with a decision) or continue (with a worker) at the current state.

    available=None means any worker can be queried again (repeat mode,
    precomputed selection). A set restricts the choice to those indices
    and recomputes the one-step argmin; an empty set forces a stop with
    the current posterior decision.
    """
    if state.n >= policy.T:
        return Stop(policy.decide(state.l))
    if available is not None and not available:
        return Stop(policy.decide(state.l))
    upper, lower = policy.stop_bounds(state.n)
    if state.l >= upper or state.l <= lower:
        return Stop(policy.decide(state.l))
    return Continue(policy.choose_worker(state.l, state.n, available))


class LabelSource(Protocol):
    """Answers label queries for one object."""

    def available(self) -> frozenset[int] | None:
        """Workers that can still answer; None means all, indefinitely."""
        ...

    def draw(self, worker: int) -> int | None:
        """Label from the worker, or None if it cannot answer."""
        ...


class PoolSource:
    """Simulation source: fresh independent labels given the fixed truth."""

    def __init__(self, workers: tuple[WorkerParams, ...], theta: int, rng: np.random.Generator):
        self._workers = workers
        self._theta = theta
        self._rng = rng

    def available(self) -> frozenset[int] | None:
        return None

    def draw(self, worker: int) -> int | None:
        w = self._workers[worker]
        p_one = w.tau11 if self._theta == 1 else 1.0 - w.tau00
        return int(self._rng.random() < p_one)


class ReplaySource:
    """Replays recorded labels; each worker can answer at most once."""

    def __init__(self, labels: dict[int, int]):
        self._labels = dict(labels)

    def available(self) -> frozenset[int] | None:
        return frozenset(self._labels)

    def draw(self, worker: int) -> int | None:
        return self._labels.pop(worker, None)


@dataclass(frozen=True)
class Episode:
    """Outcome of one finished labeling episode."""

    n_labels: int
    decision: int
    trace: tuple[tuple[int, int], ...]

    def lr_path(self, workers: tuple[WorkerParams, ...]) -> list[float]:
        """Log-likelihood ratio after each label in the trace."""
        path = []
        l = 0.0
        for idx, label in self.trace:
            l += log_lr_increment(workers[idx], label)
            path.append(l)
        return path


def run_episode(policy: SequentialPolicy, source: LabelSource, mode: str = "repeat") -> Episode:
    """Drive a policy against a label source until it stops.

    mode="repeat": workers may answer any number of times (simulation).
    mode="no-repeat": each worker at most once; the selection argmin is
    recomputed over the still-available workers each step. A source that
    runs dry forces a stop with the current posterior decision.
    """
    if mode not in ("repeat", "no-repeat"):
        raise ValueError(f"mode must be 'repeat' or 'no-repeat', got {mode!r}")
    state = SequentialState()
    while True:
        if mode == "no-repeat":
            avail = source.available()
            if avail is None:
                avail = frozenset(range(len(policy.workers)))
            avail = avail - state.queried
            action = next_action(policy, state, avail)
        else:
            action = next_action(policy, state, None)
        if isinstance(action, Stop):
            return Episode(state.n, action.decision, state.trace)
        label = source.draw(action.worker)
        if label is None:
            return Episode(state.n, policy.decide(state.l), state.trace)
        state = step(state, policy.workers[action.worker], action.worker, label)


def episode_json(object_id: str, episode: Episode, workers: tuple[WorkerParams, ...]) -> str:
    """One JSON line per episode: steps with post-update LR, count, decision."""
    path = episode.lr_path(workers)
    return json.dumps(
        {
            "object_id": object_id,
            "steps": [
                {"worker": w, "label": x, "l_after": l}
                for (w, x), l in zip(episode.trace, path)
            ],
            "N": episode.n_labels,
            "D": episode.decision,
        }
    )
