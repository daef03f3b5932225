"""Reproducible Monte Carlo experiments over simulated worker pools.

Replications are processed in fixed-size chunks; each chunk derives its
own generator from (master seed, cell tags, chunk index), so results are
bit-identical regardless of execution order and policies being compared
consume the same underlying uniforms (common random numbers: the same
true label and the same per-worker label streams per replication).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .baselines import KLPolicy, kl_build
from .errors import ConfigError
from .estimation import EstimationConfig, empirical_bayes_run
from .model import CostConfig, Prior, WorkerParams
from .policy import LabelSource
from .rng import rng_for as _rng_for
from .solver import GridConfig, PolicyTable, solve

_CHUNK = 4096  # fixed so that seeding is independent of scheduling


def gen_worker_pool(M: int, seed: int) -> list[WorkerParams]:
    """Pool on the unit-circle arc: tau00 = sin(g), tau11 = cos(g), g ~ U(0, pi/2).

    By construction no worker dominates another on both accuracies.
    """
    if M < 1:
        raise ConfigError(f"pool size must be >= 1, got {M}")
    rng = _rng_for(seed, 0)
    g = rng.uniform(0.0, math.pi / 2.0, size=M)
    while np.any(g == 0.0):  # uniform() includes its left endpoint
        g[g == 0.0] = rng.uniform(0.0, math.pi / 2.0, size=int(np.sum(g == 0.0)))
    return [WorkerParams(math.sin(x), math.cos(x)) for x in g]


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation cell: pool, truth, cost, policy and prior handling."""

    pool_size: int = 50
    pool_seed: int = 0
    reps: int = 50_000
    c: float = 2.0**-12
    pi1_true: float = 0.5
    T: int = 10
    policy: str = "ada"  # ada | kl
    prior_mode: str = "true"  # true | fixed
    prior_fixed: float = 0.5
    seed: int = 0
    grid_points: int = 2001
    macro_reps: int = 200
    workers: tuple[WorkerParams, ...] | None = None  # overrides generated pool

    def __post_init__(self) -> None:
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.policy not in ("ada", "kl"):
            raise ConfigError(f"policy must be 'ada' or 'kl', got {self.policy!r}")
        if self.prior_mode not in ("true", "fixed"):
            raise ConfigError(f"prior_mode must be 'true' or 'fixed', got {self.prior_mode!r}")

    def pool(self) -> tuple[WorkerParams, ...]:
        if self.workers is not None:
            return self.workers
        return tuple(gen_worker_pool(self.pool_size, self.pool_seed))

    def solver_prior(self) -> Prior:
        return Prior(self.pi1_true if self.prior_mode == "true" else self.prior_fixed)


@dataclass(frozen=True)
class Metrics:
    """Replication averages with standard errors.

    avg_loss is computed from the identity (1 - accuracy) + c * avg_stop,
    so the consistency relation holds exactly.
    """

    avg_stop: float
    accuracy: float
    avg_loss: float
    se_stop: float
    se_accuracy: float
    se_loss: float
    reps: int

    CSV_FIELDS = ("reps", "avg_stop", "se_stop", "accuracy", "se_accuracy", "avg_loss", "se_loss")

    def row(self) -> tuple:
        return (
            self.reps,
            self.avg_stop,
            self.se_stop,
            self.accuracy,
            self.se_accuracy,
            self.avg_loss,
            self.se_loss,
        )


class _Accum:
    """Streaming mean/variance accumulation for (N, correct, loss)."""

    def __init__(self, c: float):
        self.c = c
        self.n = 0
        self.s = np.zeros(3)
        self.s2 = np.zeros(3)

    def add(self, N: np.ndarray, D: np.ndarray, theta: np.ndarray) -> None:
        err = (D != theta).astype(np.float64)
        lossv = err + self.c * N
        for i, v in enumerate((N.astype(np.float64), 1.0 - err, lossv)):
            self.s[i] += v.sum()
            self.s2[i] += (v * v).sum()
        self.n += len(N)

    def metrics(self) -> Metrics:
        n = self.n
        mean = self.s / n
        if n > 1:
            var = np.maximum(self.s2 - n * mean**2, 0.0) / (n - 1)
            se = np.sqrt(var / n)
        else:
            se = np.zeros(3)
        avg_stop, accuracy = float(mean[0]), float(mean[1])
        return Metrics(
            avg_stop=avg_stop,
            accuracy=accuracy,
            avg_loss=(1.0 - accuracy) + self.c * avg_stop,
            se_stop=float(se[0]),
            se_accuracy=float(se[1]),
            se_loss=float(se[2]),
            reps=n,
        )


class _PairedAccum:
    """Per-replication differences (first minus second policy) for paired tests."""

    def __init__(self, c: float):
        self.c = c
        self.n = 0
        self.s = np.zeros(3)  # d_stop, d_acc, d_loss
        self.s2 = np.zeros(3)

    def add(self, N1, D1, N2, D2, theta) -> None:
        e1 = (D1 != theta).astype(np.float64)
        e2 = (D2 != theta).astype(np.float64)
        dn = N1.astype(np.float64) - N2.astype(np.float64)
        da = e2 - e1  # accuracy difference
        dl = (e1 + self.c * N1) - (e2 + self.c * N2)
        for i, v in enumerate((dn, da, dl)):
            self.s[i] += v.sum()
            self.s2[i] += (v * v).sum()
        self.n += len(theta)

    def diff(self) -> "PairedDiff":
        n = self.n
        mean = self.s / n
        var = np.maximum(self.s2 - n * mean**2, 0.0) / max(n - 1, 1)
        se = np.sqrt(var / n)
        return PairedDiff(
            d_stop=float(mean[0]),
            se_stop=float(se[0]),
            d_accuracy=float(mean[1]),
            se_accuracy=float(se[1]),
            d_loss=float(mean[2]),
            se_loss=float(se[2]),
            reps=n,
        )


@dataclass(frozen=True)
class PairedDiff:
    d_stop: float
    se_stop: float
    d_accuracy: float
    se_accuracy: float
    d_loss: float
    se_loss: float
    reps: int


class _VecTable:
    """Array view of a solved PolicyTable for vectorized episodes."""

    def __init__(self, table: PolicyTable):
        self.T = table.T
        self.A = table.A
        self.B = table.B
        self.thresh = table.threshold
        self._sel = table.select
        self._l_min = table.l_min
        self._h = table.spacing
        self._P = table.num_points

    def select_vec(self, l: np.ndarray, n: int) -> np.ndarray:
        i = np.rint((l - self._l_min) / self._h).astype(np.int64)
        np.clip(i, 0, self._P - 1, out=i)
        return self._sel[n, i]


class _VecKL:
    """Array view of a KLPolicy."""

    def __init__(self, kl: KLPolicy):
        self.T = kl.T
        self.A = np.full(kl.T + 1, kl.A)
        self.B = np.full(kl.T + 1, kl.B)
        self.thresh = kl.threshold
        self._best0 = kl.best0
        self._best1 = kl.best1

    def select_vec(self, l: np.ndarray, n: int) -> np.ndarray:
        return np.where(l < self.thresh, self._best0, self._best1)


def _vec_adapter(policy) -> "_VecTable | _VecKL":
    if isinstance(policy, PolicyTable):
        return _VecTable(policy)
    if isinstance(policy, KLPolicy):
        return _VecKL(policy)
    raise ConfigError(f"no vectorized runner for policy type {type(policy).__name__}")


def _run_chunk(adapter, tau00, tau11, inc1, inc0, theta, U):
    """Run one chunk of episodes under a policy; returns (N, D) arrays.

    theta: (R,) true labels. U: (R, M, T) uniforms; U[r, w, k] drives the
    k-th answer of worker w in replication r, shared across policies.
    """
    R = theta.shape[0]
    T = adapter.T
    l = np.zeros(R)
    N = np.full(R, T, dtype=np.int32)
    D = np.empty(R, dtype=np.int8)
    alive = np.ones(R, dtype=bool)
    counts = np.zeros((R, U.shape[1]), dtype=np.int32)
    for n in range(T):
        a, b = adapter.A[n], adapter.B[n]
        stopped = alive & ((l >= a) | (l <= b))
        if stopped.any():
            N[stopped] = n
            D[stopped] = l[stopped] >= adapter.thresh
            alive &= ~stopped
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        w = adapter.select_vec(l[idx], n)
        cnt = counts[idx, w]
        u = U[idx, w, cnt]
        counts[idx, w] = cnt + 1
        p_one = np.where(theta[idx] == 1, tau11[w], 1.0 - tau00[w])
        got_one = u < p_one
        l[idx] += np.where(got_one, inc1[w], inc0[w])
    D[alive] = l[alive] >= adapter.thresh  # truncation: N stays T
    return N, D


def _pool_arrays(workers: Sequence[WorkerParams]):
    tau00 = np.array([w.tau00 for w in workers])
    tau11 = np.array([w.tau11 for w in workers])
    inc1 = np.log(tau11) - np.log1p(-tau00)
    inc0 = np.log1p(-tau11) - np.log(tau00)
    return tau00, tau11, inc1, inc0


def build_policy(
    kind: str,
    cost: CostConfig,
    prior: Prior,
    workers: Sequence[WorkerParams],
    T: int,
    grid_points: int = 2001,
):
    if kind == "ada":
        return solve(T, cost, prior, workers, GridConfig(num_points=grid_points))
    if kind == "kl":
        return kl_build(workers, prior, cost, T)
    raise ConfigError(f"unknown policy kind {kind!r}")


def simulate(cfg: ExperimentConfig, cell: int = 0) -> Metrics:
    """Monte Carlo estimate of one policy cell.

    Per replication: theta ~ Bernoulli(pi1_true), labels drawn from the
    two-coin law of whichever worker the policy queries.
    """
    workers = cfg.pool()
    policy = build_policy(
        cfg.policy, CostConfig(cfg.c), cfg.solver_prior(), workers, cfg.T, cfg.grid_points
    )
    return _simulate_built(policy, workers, cfg, cell)[0][0]


def _simulate_built(policy, workers, cfg: ExperimentConfig, cell: int):
    """Shared chunk loop; returns ([Metrics...], [PairedDiff...]) for 1+ policies."""
    policies = policy if isinstance(policy, (list, tuple)) else [policy]
    adapters = [_vec_adapter(p) for p in policies]
    tau00, tau11, inc1, inc0 = _pool_arrays(workers)
    M = len(workers)
    T = max(a.T for a in adapters)
    acc = [_Accum(cfg.c) for _ in policies]
    paired = [_PairedAccum(cfg.c) for _ in policies[1:]]
    done = 0
    chunk_i = 0
    while done < cfg.reps:
        R = min(_CHUNK, cfg.reps - done)
        rng = _rng_for(cfg.seed, cell, chunk_i)
        theta = (rng.random(R) < cfg.pi1_true).astype(np.int8)
        U = rng.random((R, M, T))
        first = None
        for j, ad in enumerate(adapters):
            N, D = _run_chunk(ad, tau00, tau11, inc1, inc0, theta, U)
            acc[j].add(N, D, theta)
            if j == 0:
                first = (N, D)
            else:
                paired[j - 1].add(first[0], first[1], N, D, theta)
        done += R
        chunk_i += 1
    return [a.metrics() for a in acc], [p.diff() for p in paired]


def averaged_loss(episodes: Sequence[tuple[int, int, int]], c: float) -> float:
    """Mean of per-object losses over (N, D, theta) records."""
    if not episodes:
        raise ConfigError("averaged_loss needs at least one episode")
    return float(np.mean([(1.0 if d != t else 0.0) + c * n for n, d, t in episodes]))


def sweep_T(
    cfg: ExperimentConfig, T_list: Sequence[int], boundaries_dir: str | None = None
) -> dict[int, Metrics]:
    """Simulate the configured policy across truncation lengths.

    Optionally writes the solved boundary curves (one CSV per T) for
    external plotting.
    """
    out: dict[int, Metrics] = {}
    workers = cfg.pool()
    for i, T in enumerate(T_list):
        cfg_t = replace(cfg, T=T)
        policy = build_policy(
            cfg_t.policy, CostConfig(cfg.c), cfg.solver_prior(), workers, T, cfg.grid_points
        )
        out[T] = _simulate_built(policy, workers, cfg_t, cell=i)[0][0]
        if boundaries_dir is not None and isinstance(policy, PolicyTable):
            write_boundaries_csv(policy, f"{boundaries_dir}/boundaries_T{T}.csv")
    return out


def write_boundaries_csv(policy: PolicyTable, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(("n", "A", "B"))
        for n in range(policy.T + 1):
            wr.writerow((n, float(policy.A[n]), float(policy.B[n])))


@dataclass
class ComparisonResult:
    """Per-policy metrics plus paired differences against the first policy."""

    metrics: dict[str, dict]
    diffs: dict[str, dict]  # kind -> {sweep value: PairedDiff vs first kind}


def compare_policies(
    cfg: ExperimentConfig,
    kinds: Sequence[str] = ("ada", "kl"),
    sweep_values: Sequence = (),
    sweep_param: str = "T",
) -> ComparisonResult:
    """Run several policies on common random numbers across a sweep.

    sweep_param is "T" or "c"; an empty sweep runs the configured cell
    once. Identical policy kinds produce identical metrics by construction.
    """
    if sweep_param not in ("T", "c"):
        raise ConfigError(f"sweep_param must be 'T' or 'c', got {sweep_param!r}")
    values = list(sweep_values) or [getattr(cfg, sweep_param)]
    workers = cfg.pool()
    metrics: dict[str, dict] = {k: {} for k in kinds}
    diffs: dict[str, dict] = {k: {} for k in kinds[1:]}
    for i, v in enumerate(values):
        cfg_v = replace(cfg, **{sweep_param: v})
        policies = [
            build_policy(
                k, CostConfig(cfg_v.c), cfg_v.solver_prior(), workers, cfg_v.T, cfg.grid_points
            )
            for k in kinds
        ]
        ms, ds = _simulate_built(policies, workers, cfg_v, cell=i)
        for k, m in zip(kinds, ms):
            metrics[k][v] = m
        for k, d in zip(kinds[1:], ds):
            diffs[k][v] = d
    return ComparisonResult(metrics=metrics, diffs=diffs)


class _TensorSource(LabelSource):
    """Label source backed by a preallocated uniform tensor (CRN across arms)."""

    def __init__(self, tau00, tau11, theta: int, uniforms: np.ndarray):
        self._t00 = tau00
        self._t11 = tau11
        self._theta = theta
        self._u = uniforms  # (M, T)
        self._cnt = np.zeros(uniforms.shape[0], dtype=np.int32)

    def available(self) -> frozenset[int] | None:
        return None

    def draw(self, worker: int) -> int | None:
        k = self._cnt[worker]
        if k >= self._u.shape[1]:
            return None
        self._cnt[worker] = k + 1
        p_one = self._t11[worker] if self._theta == 1 else 1.0 - self._t00[worker]
        return int(self._u[worker, k] < p_one)


@dataclass(frozen=True)
class ArmResult:
    """Macro-replication summary of one prior-handling arm.

    The per-macro arrays are aligned across arms (same macro index means
    the same objects and label streams), so differences are paired.
    """

    loss_mean: float
    loss_se: float
    stop_mean: float
    accuracy_mean: float
    losses: np.ndarray
    stops: np.ndarray
    accuracies: np.ndarray


def eb_prior_study(
    workers: Sequence[WorkerParams],
    pi1_true: float,
    c: float,
    T: int,
    K: int,
    macro_reps: int,
    seed: int,
    grid_points: int = 801,
    arms: Sequence[str] = ("true", "eb", "fixed"),
    fixed_pi: float = 0.5,
    est_cfg: EstimationConfig | None = None,
) -> dict[str, ArmResult]:
    """Averaged loss of prior-handling variants over macro-replications.

    Each macro-replication draws K objects (theta ~ Bernoulli(pi1_true))
    and a shared label-uniform tensor; every arm labels the same objects
    with the same worker answer streams. "true" solves once under the true
    prior, "fixed" under fixed_pi, "eb" re-estimates the prior object by
    object with the worker accuracies known.
    """
    workers = tuple(workers)
    M = len(workers)
    cost = CostConfig(c)
    tau00, tau11, inc1, inc0 = _pool_arrays(workers)
    grid = GridConfig(num_points=grid_points)
    static: dict[str, _VecTable] = {}
    if "true" in arms:
        static["true"] = _VecTable(solve(T, cost, Prior(pi1_true), workers, grid))
    if "fixed" in arms:
        static["fixed"] = _VecTable(solve(T, cost, Prior(fixed_pi), workers, grid))
    if est_cfg is None:
        est_cfg = EstimationConfig()
    eb_cache: dict = {}

    sums = {a: [] for a in arms}
    stops = {a: [] for a in arms}
    accs = {a: [] for a in arms}
    for m in range(macro_reps):
        rng = _rng_for(seed, 9001, m)
        theta = (rng.random(K) < pi1_true).astype(np.int8)
        U = rng.random((K, M, T))
        for a in arms:
            if a in static:
                N, D = _run_chunk(static[a], tau00, tau11, inc1, inc0, theta, U)
            else:
                sources = [_TensorSource(tau00, tau11, int(theta[k]), U[k]) for k in range(K)]
                res = empirical_bayes_run(
                    sources,
                    cost,
                    T,
                    est_cfg,
                    workers_known=True,
                    workers=workers,
                    grid=grid,
                    mode="repeat",
                    cache=eb_cache,
                )
                N = np.array([ep.n_labels for ep in res.episodes], dtype=np.int32)
                D = np.array([ep.decision for ep in res.episodes], dtype=np.int8)
            err = (D != theta).astype(np.float64)
            sums[a].append(float(np.mean(err + c * N)))
            stops[a].append(float(np.mean(N)))
            accs[a].append(float(np.mean(1.0 - err)))

    out = {}
    for a in arms:
        losses = np.asarray(sums[a])
        se = float(losses.std(ddof=1) / math.sqrt(len(losses))) if len(losses) > 1 else 0.0
        out[a] = ArmResult(
            loss_mean=float(losses.mean()),
            loss_se=se,
            stop_mean=float(np.mean(stops[a])),
            accuracy_mean=float(np.mean(accs[a])),
            losses=losses,
            stops=np.asarray(stops[a]),
            accuracies=np.asarray(accs[a]),
        )
    return out


def write_metrics_csv(rows: Mapping[str, Metrics], path: str, key_name: str = "cell") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow((key_name,) + Metrics.CSV_FIELDS)
        for key, m in rows.items():
            wr.writerow((key,) + m.row())
