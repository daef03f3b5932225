"""Two-coin response model primitives.

A binary labeling task has an unknown true label theta in {0, 1}. Each
worker is a pair of conditional accuracies: tau00 = P(label 0 | theta=0)
and tau11 = P(label 1 | theta=1). Everything downstream (the dynamic
program, the policies, the estimators) is built on the log-likelihood
ratio of the observed labels, the posterior it induces under a class
prior, and the per-label cost.

All functions here are pure; all types are immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError

# exp() overflows past ~709; posteriors saturate to {0,1} well before that.
_EXP_CLAMP = 700.0


@dataclass(frozen=True)
class WorkerParams:
    """One worker's conditional accuracies under the two-coin model."""

    tau00: float
    tau11: float

    def __post_init__(self) -> None:
        if not (0.0 < self.tau00 < 1.0 and 0.0 < self.tau11 < 1.0):
            raise ConfigError(
                f"worker accuracies must lie strictly inside (0, 1), "
                f"got tau00={self.tau00}, tau11={self.tau11}"
            )

    @property
    def informative(self) -> bool:
        """False iff the worker's two response distributions coincide."""
        return self.tau00 + self.tau11 != 1.0


@dataclass(frozen=True)
class Prior:
    """Class prior P(theta=1) = pi1, with optional decision weights.

    The weights w0/w1 scale the cost of a false positive / false negative;
    the default (1, 1) is the plain misclassification-probability risk.
    """

    pi1: float
    w0: float = 1.0
    w1: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.pi1 <= 1.0):
            raise ConfigError(f"pi1 must lie in [0, 1], got {self.pi1}")
        if self.w0 <= 0.0 or self.w1 <= 0.0:
            raise ConfigError(f"weights must be positive, got w0={self.w0}, w1={self.w1}")

    @property
    def pi0(self) -> float:
        return 1.0 - self.pi1

    def lr_threshold(self) -> float:
        """Log-LR level at which the two weighted posterior risks are equal.

        Deciding 1 is (weakly) preferred iff l >= this value. Equals
        log(pi0/pi1) for unit weights; +/-inf for degenerate priors.
        """
        if self.pi1 == 0.0:
            return math.inf
        if self.pi1 == 1.0:
            return -math.inf
        return math.log(self.pi0 * self.w0) - math.log(self.pi1 * self.w1)

    def clamped(self, lo: float, hi: float) -> "Prior":
        """Copy with pi1 forced into [lo, hi] (empirical-Bayes guard)."""
        return Prior(min(max(self.pi1, lo), hi), self.w0, self.w1)


@dataclass(frozen=True)
class CostConfig:
    """Relative cost of one label, on the same scale as one unit of error."""

    c: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.c <= 1.0):
            raise ConfigError(f"label cost c must lie in [0, 1], got {self.c}")


def log_lr_increment(w: WorkerParams, label: int) -> float:
    """Additive log-likelihood-ratio contribution of one observed label.

    label=1 -> log(tau11 / (1 - tau00)); label=0 -> log((1 - tau11) / tau00).
    """
    if label == 1:
        return math.log(w.tau11) - math.log(1.0 - w.tau00)
    if label == 0:
        return math.log(1.0 - w.tau11) - math.log(w.tau00)
    raise ConfigError(f"label must be 0 or 1, got {label!r}")


def posterior(l: float, prior: Prior) -> tuple[float, float]:
    """Posterior (P(theta=0 | l), P(theta=1 | l)) under the class prior.

    Computed through stable sigmoids so that large |l| saturates to {0, 1}
    instead of overflowing.
    """
    if prior.pi1 == 0.0:
        return 1.0, 0.0
    if prior.pi1 == 1.0:
        return 0.0, 1.0
    # z = log posterior odds for theta=1
    z = l + math.log(prior.pi1) - math.log(prior.pi0)
    if z >= _EXP_CLAMP:
        return 0.0, 1.0
    if z <= -_EXP_CLAMP:
        return 1.0, 0.0
    if z >= 0.0:
        e = math.exp(-z)
        return e / (1.0 + e), 1.0 / (1.0 + e)
    e = math.exp(z)
    return 1.0 / (1.0 + e), e / (1.0 + e)


def response_prob_one(l: float, prior: Prior, w: WorkerParams) -> float:
    """Predictive probability that the worker's next label is 1, given l."""
    p0, p1 = posterior(l, prior)
    return p0 * (1.0 - w.tau00) + p1 * w.tau11


def loss(decision: int, theta: int, n: int, cost: CostConfig) -> float:
    """Realized loss of one finished task: decision error plus label cost."""
    if n < 0:
        raise ConfigError(f"label count must be nonnegative, got {n}")
    return (1.0 if decision != theta else 0.0) + cost.c * n


def kl_info(w: WorkerParams, theta: int) -> float:
    """KL divergence of the worker's response law under theta vs. not-theta.

    Measures how informative one label from this worker is when the true
    label is theta. Zero iff tau00 + tau11 = 1.
    """
    if theta == 1:
        return w.tau11 * (math.log(w.tau11) - math.log(1.0 - w.tau00)) + (
            1.0 - w.tau11
        ) * (math.log(1.0 - w.tau11) - math.log(w.tau00))
    if theta == 0:
        return w.tau00 * (math.log(w.tau00) - math.log(1.0 - w.tau11)) + (
            1.0 - w.tau00
        ) * (math.log(1.0 - w.tau00) - math.log(w.tau11))
    raise ConfigError(f"theta must be 0 or 1, got {theta!r}")


def pool_is_identifiable(workers: list[WorkerParams] | tuple[WorkerParams, ...]) -> bool:
    """True iff at least one worker in the pool carries information.

    Individual coin-flip workers are allowed; a pool consisting only of
    them cannot distinguish the hypotheses at any sample size.
    """
    return any(w.informative for w in workers)
