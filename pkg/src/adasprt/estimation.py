"""Parameter estimation from accumulated labels.

Fits the class prior and per-worker accuracies by MAP-EM on the marginal
likelihood of the observed label matrix, with independent Beta(alpha, beta)
priors on every accuracy parameter keeping the estimates interior when a
worker has labeled few objects. The empirical-Bayes driver threads these
estimates through a sequence of objects: solve the policy under the
current prior estimate, label the object, re-estimate, repeat.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .model import CostConfig, Prior, WorkerParams
from .policy import Episode, LabelSource, run_episode
from .solver import GridConfig, PolicyTable, solve

_PI_FLOOR = 1e-12  # keeps log(pi) finite regardless of user clamps


@dataclass(frozen=True)
class EstimationConfig:
    """Knobs for the MAP-EM fit.

    alpha/beta are the Beta-prior pseudo-counts on every tau (alpha > beta
    encodes better-than-chance workers); tol is the stop threshold on the
    objective change; clamp_eps keeps taus interior; prior_clamp bounds the
    fitted class prior.
    """

    alpha: float = 4.0
    beta: float = 2.0
    tol: float = 1e-8
    max_iter: int = 500
    clamp_eps: float = 1e-6
    prior_clamp: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self) -> None:
        if self.alpha < 1.0 or self.beta < 1.0:
            raise ConfigError(
                f"Beta hyperparameters must be >= 1, got alpha={self.alpha}, beta={self.beta}"
            )
        if self.tol <= 0.0:
            raise ConfigError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 0:
            raise ConfigError(f"max_iter must be >= 0, got {self.max_iter}")
        if not (0.0 < self.clamp_eps < 0.5):
            raise ConfigError(f"clamp_eps must lie in (0, 0.5), got {self.clamp_eps}")
        lo, hi = self.prior_clamp
        if not (0.0 <= lo <= hi <= 1.0):
            raise ConfigError(f"prior_clamp must be a sub-interval of [0, 1], got {self.prior_clamp}")

    def tau_mode(self) -> float:
        """Maximizer of the Beta penalty alone; the no-data estimate."""
        if self.alpha + self.beta > 2.0:
            return (self.alpha - 1.0) / (self.alpha + self.beta - 2.0)
        return 0.5


class LabelMatrix:
    """Sparse (object, worker, label) triples, at most one label per pair."""

    def __init__(
        self,
        objects: np.ndarray,
        workers: np.ndarray,
        labels: np.ndarray,
        n_objects: int,
        n_workers: int,
        validate: bool = True,
        allow_repeats: bool = False,
    ):
        self.objects = np.asarray(objects, dtype=np.int64)
        self.workers = np.asarray(workers, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int8)
        self.n_objects = int(n_objects)
        self.n_workers = int(n_workers)
        if validate:
            self._validate(allow_repeats)

    @classmethod
    def from_triples(
        cls,
        triples: Sequence[tuple[int, int, int]],
        n_objects: int | None = None,
        n_workers: int | None = None,
        allow_repeats: bool = False,
    ) -> "LabelMatrix":
        if triples:
            objs, wks, labs = (np.asarray(col) for col in zip(*triples))
        else:
            objs = wks = labs = np.empty(0, dtype=np.int64)
        n_objects = int(objs.max()) + 1 if n_objects is None and len(objs) else (n_objects or 0)
        n_workers = int(wks.max()) + 1 if n_workers is None and len(wks) else (n_workers or 0)
        return cls(objs, wks, labs, n_objects, n_workers, allow_repeats=allow_repeats)

    def _validate(self, allow_repeats: bool) -> None:
        if not (len(self.objects) == len(self.workers) == len(self.labels)):
            raise DataError("ragged label triples")
        if len(self.objects) == 0:
            return
        if self.objects.min() < 0 or self.objects.max() >= self.n_objects:
            raise DataError("object index out of range")
        if self.workers.min() < 0 or self.workers.max() >= self.n_workers:
            raise DataError("worker index out of range")
        bad = ~np.isin(self.labels, (0, 1))
        if bad.any():
            raise DataError(f"labels must be 0/1; first bad entry at position {np.flatnonzero(bad)[0]}")
        if allow_repeats:
            # repeat-mode simulation can legitimately ask one worker twice;
            # the likelihood sums over responses, not (object, worker) pairs
            return
        keys = self.objects * self.n_workers + self.workers
        if len(np.unique(keys)) != len(keys):
            uniq, counts = np.unique(keys, return_counts=True)
            k = uniq[counts > 1][0]
            raise DataError(
                f"duplicate label for object {k // self.n_workers}, worker {k % self.n_workers}"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def labeled_mask(self) -> np.ndarray:
        """Boolean mask over objects that received at least one label."""
        mask = np.zeros(self.n_objects, dtype=bool)
        mask[self.objects] = True
        return mask


@dataclass(frozen=True)
class Estimates:
    """Fitted parameters plus fit diagnostics."""

    pi1: float
    tau00: np.ndarray
    tau11: np.ndarray
    objective: float = math.nan
    iters: int = 0
    converged: bool = False

    def worker_params(self) -> tuple[WorkerParams, ...]:
        return tuple(WorkerParams(float(a), float(b)) for a, b in zip(self.tau00, self.tau11))


def initial_estimates(n_workers: int, cfg: EstimationConfig) -> Estimates:
    """Neutral start: even prior, all taus at the Beta-prior mode."""
    mode = cfg.tau_mode()
    pi = min(max(0.5, cfg.prior_clamp[0]), cfg.prior_clamp[1])
    return Estimates(
        pi1=pi,
        tau00=np.full(n_workers, mode),
        tau11=np.full(n_workers, mode),
    )


def _per_label_loglik(est: Estimates, data: LabelMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-object log-likelihood sums (L0, L1) of the observed labels."""
    t00 = est.tau00[data.workers]
    t11 = est.tau11[data.workers]
    labs = data.labels.astype(np.float64)
    lc0 = (1.0 - labs) * np.log(t00) + labs * np.log1p(-t00)
    lc1 = labs * np.log(t11) + (1.0 - labs) * np.log1p(-t11)
    L0 = np.bincount(data.objects, weights=lc0, minlength=data.n_objects)
    L1 = np.bincount(data.objects, weights=lc1, minlength=data.n_objects)
    return L0, L1


def reg_neg_loglik(est: Estimates, data: LabelMatrix, cfg: EstimationConfig) -> float:
    """Penalized negative log-likelihood of the fit.

    Marginal negative log-likelihood over objects (summing out each true
    label under the class prior) minus the Beta log-prior of every tau, so
    the penalty term pulls the accuracies toward the prior mode.
    """
    pi1 = min(max(est.pi1, _PI_FLOOR), 1.0 - _PI_FLOOR)
    L0, L1 = _per_label_loglik(est, data)
    nll = -np.logaddexp(math.log1p(-pi1) + L0, math.log(pi1) + L1).sum()
    pen = -(
        (cfg.alpha - 1.0) * (np.log(est.tau00).sum() + np.log(est.tau11).sum())
        + (cfg.beta - 1.0) * (np.log1p(-est.tau00).sum() + np.log1p(-est.tau11).sum())
    )
    return float(nll + pen)


def e_step(est: Estimates, data: LabelMatrix) -> np.ndarray:
    """Posterior probability that each object's true label is 1."""
    pi1 = min(max(est.pi1, _PI_FLOOR), 1.0 - _PI_FLOOR)
    L0, L1 = _per_label_loglik(est, data)
    z = (math.log(pi1) - math.log1p(-pi1)) + L1 - L0
    pos = z >= 0.0
    ez = np.exp(np.where(pos, -z, z))
    return np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def m_step(q: np.ndarray, data: LabelMatrix, cfg: EstimationConfig) -> Estimates:
    """MAP update given responsibilities.

    tau11_i = (alpha-1 + sum_j q_j Z_ji) / (alpha+beta-2 + sum_j q_j) over the
    objects worker i labeled; tau00_i mirrors it with (1-q_j)(1-Z_ji). The
    class prior is the responsibility mean over objects that have labels
    (unlabeled objects carry no likelihood information).
    """
    qe = q[data.objects]
    labs = data.labels.astype(np.float64)
    M = data.n_workers
    a1 = cfg.alpha - 1.0
    ab2 = cfg.alpha + cfg.beta - 2.0

    num11 = a1 + np.bincount(data.workers, weights=qe * labs, minlength=M)
    den11 = ab2 + np.bincount(data.workers, weights=qe, minlength=M)
    num00 = a1 + np.bincount(data.workers, weights=(1.0 - qe) * (1.0 - labs), minlength=M)
    den00 = ab2 + np.bincount(data.workers, weights=1.0 - qe, minlength=M)
    with np.errstate(invalid="ignore"):
        tau11 = np.where(den11 > 0.0, num11 / np.maximum(den11, 1e-300), 0.5)
        tau00 = np.where(den00 > 0.0, num00 / np.maximum(den00, 1e-300), 0.5)
    eps = cfg.clamp_eps
    tau11 = np.clip(tau11, eps, 1.0 - eps)
    tau00 = np.clip(tau00, eps, 1.0 - eps)

    labeled = data.labeled_mask()
    pi1 = float(q[labeled].mean()) if labeled.any() else float(q.mean()) if len(q) else 0.5
    pi1 = min(max(pi1, cfg.prior_clamp[0]), cfg.prior_clamp[1])
    pi1 = min(max(pi1, _PI_FLOOR), 1.0 - _PI_FLOOR)
    return Estimates(pi1=pi1, tau00=tau00, tau11=tau11)


def em_iterates(
    data: LabelMatrix, cfg: EstimationConfig, init: Estimates
) -> Iterator[Estimates]:
    """Yield successive EM iterates, objective evaluated, starting from init."""
    est = replace(init, objective=reg_neg_loglik(init, data, cfg), iters=0)
    yield est
    for it in range(1, cfg.max_iter + 1):
        q = e_step(est, data)
        est = m_step(q, data, cfg)
        est = replace(est, objective=reg_neg_loglik(est, data, cfg), iters=it)
        yield est


def em_fit(data: LabelMatrix, cfg: EstimationConfig, init: Estimates | None = None) -> Estimates:
    """Run EM to convergence (objective change below tol) or max_iter.

    Non-convergence is reported through converged=False, never an error.
    Empty data returns the penalty-only maximizer (taus at the Beta mode).
    """
    if init is None:
        init = initial_estimates(data.n_workers, cfg)
    if len(init.tau00) != data.n_workers:
        raise ConfigError(
            f"init covers {len(init.tau00)} workers but data has {data.n_workers}"
        )
    last = None
    prev_obj = math.inf
    for est in em_iterates(data, cfg, init):
        last = est
        if est.iters > 0 and abs(prev_obj - est.objective) < cfg.tol:
            return replace(est, converged=True)
        prev_obj = est.objective
    assert last is not None
    return replace(last, converged=False)  # max_iter hit (or zero); reported, not raised


def fit_prior_known_workers(
    L0: np.ndarray,
    L1: np.ndarray,
    labeled: np.ndarray,
    pi_init: float,
    clamp: tuple[float, float],
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """MLE of the class prior when worker accuracies are fixed.

    Takes precomputed per-object log-likelihood sums; iterates the
    responsibility mean, which is EM on the one remaining parameter.
    """
    if not labeled.any():
        return min(max(pi_init, clamp[0]), clamp[1])
    d = (L1 - L0)[labeled]
    pi = min(max(pi_init, clamp[0]), clamp[1])
    for _ in range(max_iter):
        z = math.log(max(pi, _PI_FLOOR)) - math.log(max(1.0 - pi, _PI_FLOOR)) + d
        pos = z >= 0.0
        ez = np.exp(np.where(pos, -z, z))
        q = np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))
        pi_new = min(max(float(q.mean()), clamp[0]), clamp[1])
        if abs(pi_new - pi) < tol:
            return pi_new
        pi = pi_new
    return pi


@dataclass(frozen=True)
class EBHistoryRow:
    k: int
    pi1_hat: float
    mean_abs_tau_error: float  # nan when true accuracies are unknown
    em_iters: int
    objective: float


@dataclass
class EBRunResult:
    episodes: list[Episode]
    history: list[EBHistoryRow]
    estimates: Estimates

    def history_rows(self) -> list[tuple]:
        return [
            (r.k, r.pi1_hat, r.mean_abs_tau_error, r.em_iters, r.objective)
            for r in self.history
        ]


def _effective_prior_clamp(cfg: EstimationConfig, c: float) -> tuple[float, float]:
    lo = max(cfg.prior_clamp[0], c)
    hi = min(cfg.prior_clamp[1], 1.0 - c)
    if lo > hi:  # degenerate (c >= 0.5): pin to the midpoint
        lo = hi = 0.5
    return lo, hi


def smoothed_solver_prior(pi_mle: float, n_labeled: int) -> float:
    """Posterior-mean prior estimate fed to the solver between objects.

    The plain responsibility mean after very few objects can sit at an
    extreme where the clamped solve believes stopping with no labels ties
    with sampling, freezing the run in a never-sample state. Add-one
    smoothing keeps the early solver prior interior and vanishes at rate
    1/k, so the procedure's estimate remains consistent.
    """
    return (1.0 + pi_mle * n_labeled) / (2.0 + n_labeled)


def empirical_bayes_run(
    objects: Sequence[LabelSource],
    cost: CostConfig,
    T: int,
    cfg: EstimationConfig,
    workers_known: bool,
    workers: Sequence[WorkerParams] | None = None,
    n_workers: int | None = None,
    grid: GridConfig | None = None,
    mode: str = "repeat",
    true_workers: Sequence[WorkerParams] | None = None,
    cache: dict | None = None,
    cache_decimals: int | None = 4,
) -> EBRunResult:
    """Label a sequence of objects, re-estimating the prior between them.

    Starts from an even prior. For each object, solves (or reuses from
    cache) the policy under the current clamped prior estimate, runs the
    episode, folds the new labels into the estimates, and moves on. With
    workers_known=True the supplied accuracies drive both the solver and
    the likelihood, and only the prior is re-fitted; otherwise the worker
    accuracies are re-estimated by full EM with warm starts.

    The prior estimate is always clamped to [c, 1-c] before a solve.
    Per-object failures are not possible by construction (estimation falls
    back to the previous values on empty data); the run never aborts.
    """
    if len(objects) < 1:
        raise ConfigError("empirical Bayes run needs at least one object")
    if workers_known:
        if workers is None:
            raise ConfigError("workers_known=True requires the worker accuracies")
        pool = tuple(workers)
        M = len(pool)
    else:
        if n_workers is None:
            raise ConfigError("workers_known=False requires n_workers")
        M = n_workers
    clamp = _effective_prior_clamp(cfg, cost.c)
    cfg_eff = replace(cfg, prior_clamp=clamp)
    est = initial_estimates(M, cfg_eff)
    if workers_known:
        t00 = np.array([w.tau00 for w in pool])
        t11 = np.array([w.tau11 for w in pool])
        est = replace(est, tau00=t00, tau11=t11)
    if cache is None:
        cache = {}

    truth_t00 = truth_t11 = None
    if true_workers is not None:
        truth_t00 = np.array([w.tau00 for w in true_workers])
        truth_t11 = np.array([w.tau11 for w in true_workers])

    K = len(objects)
    triples: list[tuple[int, int, int]] = []
    # Per-object log-likelihood sums under the known accuracies (incremental).
    L0 = np.zeros(K)
    L1 = np.zeros(K)
    labeled = np.zeros(K, dtype=bool)
    episodes: list[Episode] = []
    history: list[EBHistoryRow] = []

    n_labeled = 0
    for k, source in enumerate(objects):
        pi_used = min(max(smoothed_solver_prior(est.pi1, n_labeled), clamp[0]), clamp[1])
        if workers_known:
            solver_pool = pool
            key = (round(pi_used, cache_decimals),) if cache_decimals is not None else None
        else:
            solver_pool = est.worker_params()
            key = (
                (
                    round(pi_used, cache_decimals),
                    tuple(np.round(est.tau00, cache_decimals)),
                    tuple(np.round(est.tau11, cache_decimals)),
                )
                if cache_decimals is not None
                else None
            )
        policy = cache.get(key) if key is not None else None
        if policy is None:
            policy = solve(T, cost, Prior(pi_used), solver_pool, grid)
            if key is not None:
                cache[key] = policy

        ep = run_episode(policy, source, mode)
        episodes.append(ep)
        for w_idx, label in ep.trace:
            triples.append((k, w_idx, label))
        if ep.trace:
            n_labeled += 1

        if workers_known:
            if ep.trace:
                labeled[k] = True
                for w_idx, label in ep.trace:
                    if label == 1:
                        L0[k] += math.log1p(-t00[w_idx])
                        L1[k] += math.log(t11[w_idx])
                    else:
                        L0[k] += math.log(t00[w_idx])
                        L1[k] += math.log1p(-t11[w_idx])
            pi_new = fit_prior_known_workers(
                L0[: k + 1], L1[: k + 1], labeled[: k + 1], est.pi1, clamp
            )
            est = replace(est, pi1=pi_new, iters=0, objective=math.nan)
            em_iters, objective = 0, math.nan
        else:
            data = LabelMatrix.from_triples(
                triples, n_objects=k + 1, n_workers=M, allow_repeats=(mode == "repeat")
            )
            est = em_fit(data, cfg_eff, init=est)
            em_iters, objective = est.iters, est.objective

        tau_err = math.nan
        if truth_t00 is not None:
            tau_err = float(
                (np.abs(est.tau00 - truth_t00).sum() + np.abs(est.tau11 - truth_t11).sum())
                / (2 * len(truth_t00))
            )
        pi_next = min(max(smoothed_solver_prior(est.pi1, n_labeled), clamp[0]), clamp[1])
        history.append(EBHistoryRow(k, pi_next, tau_err, em_iters, objective))

    return EBRunResult(episodes=episodes, history=history, estimates=est)
