"""Reference policies to compare the solved table against.

The KL-information policy is the classical asymptotically-optimal design:
flat stopping boundaries derived from the label cost and the pool's best
one-sided KL information, with the next worker picked as the KL argmax on
the side of the current posterior mode. Majority vote over a fixed batch
is the naive aggregation baseline.

Anything fancier (index policies from other frameworks) plugs in through
the same SequentialPolicy protocol the engine consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError
from .model import CostConfig, Prior, WorkerParams, kl_info, posterior
from .policy import Action, SequentialState, next_action


@dataclass(frozen=True)
class KLPolicy:
    """Flat-boundary policy driven by worker KL information."""

    A: float
    B: float
    best0: int
    best1: int
    T: int
    prior: Prior
    cost: CostConfig
    workers: tuple[WorkerParams, ...]

    def __post_init__(self) -> None:
        if self.B > self.A:
            raise ConfigError(f"need B <= A, got B={self.B} > A={self.A}")

    @property
    def threshold(self) -> float:
        """Posterior-argmax decision threshold (unweighted)."""
        return math.log(self.prior.pi0) - math.log(self.prior.pi1)

    def decide(self, l: float) -> int:
        return 1 if l >= self.threshold else 0

    def stop_bounds(self, n: int) -> tuple[float, float]:
        return self.A, self.B

    def choose_worker(self, l: float, n: int, available: frozenset[int] | set[int] | None) -> int:
        # Posterior mode at 0 picks the theta=0 specialist; ties go to the theta=1 side.
        side = 0 if l < self.threshold else 1
        if available is None:
            return self.best0 if side == 0 else self.best1
        return max(sorted(available), key=lambda i: kl_info(self.workers[i], side))


def kl_build(
    workers: Sequence[WorkerParams], prior: Prior, cost: CostConfig, T: int
) -> KLPolicy:
    """Boundaries: A = -log c + log(pi0 * maxKL(1) / pi1), B mirrored with maxKL(0)."""
    if not workers:
        raise ConfigError("worker pool is empty")
    if not (0.0 < prior.pi1 < 1.0):
        raise ConfigError(f"KL policy needs an interior prior, got pi1={prior.pi1}")
    if cost.c <= 0.0:
        raise ConfigError("KL boundaries need a positive label cost")
    kl0 = [kl_info(w, 0) for w in workers]
    kl1 = [kl_info(w, 1) for w in workers]
    if max(kl0) <= 0.0 or max(kl1) <= 0.0:
        raise ConfigError("pool has zero KL information on one side; boundaries undefined")
    best0 = int(max(range(len(workers)), key=lambda i: kl0[i]))
    best1 = int(max(range(len(workers)), key=lambda i: kl1[i]))
    A = -math.log(cost.c) + math.log(prior.pi0 * max(kl1)) - math.log(prior.pi1)
    B = math.log(cost.c) + math.log(prior.pi0) - math.log(prior.pi1 * max(kl0))
    return KLPolicy(
        A=A, B=B, best0=best0, best1=best1, T=T, prior=prior, cost=cost, workers=tuple(workers)
    )


def kl_next_action(policy: KLPolicy, state: SequentialState) -> Action:
    """Engine step under the KL policy (flat bounds, posterior-argmax decision)."""
    return next_action(policy, state, None)


def fixed_majority(labels: Sequence[int], prior: Prior) -> int:
    """Majority label of a fixed batch; ties break to the prior mode, then to 1."""
    if not labels:
        raise ConfigError("majority vote needs at least one label")
    ones = sum(1 for x in labels if x == 1)
    zeros = len(labels) - ones
    if ones > zeros:
        return 1
    if zeros > ones:
        return 0
    p0, p1 = posterior(0.0, prior)
    return 1 if p1 >= p0 else 0
