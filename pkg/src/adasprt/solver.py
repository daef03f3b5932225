"""Backward-induction solver for the truncated adaptive sequential test.

Solves, offline, for the optimal policy of a single labeling task under a
hard cap of T labels: a risk table G(l, n) over a uniform grid of
log-likelihood-ratio values, a per-step worker selection map, and the
stopping boundaries A(n) (upper) and B(n) (lower) extracted from the
continuation region at each step.

Conventions fixed here and relied on elsewhere:

* The continuation set at step n holds the grid points where continuing
  is *strictly* better than stopping; on an exact tie the policy stops
  (equal risk, fewer labels).
* Off-grid evaluations of G use piecewise-linear interpolation inside the
  grid and the exact stopping risk outside it. The default grid spans the
  theoretical outer bounds of all continuation regions, so the analytic
  tail introduces no extrapolation error.
* A(T) = B(T) equals the prior's decision threshold, so the stop rule
  automatically enforces N <= T.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .model import (
    CostConfig,
    Prior,
    WorkerParams,
    log_lr_increment,
    pool_is_identifiable,
    posterior,
    response_prob_one,
)

POLICY_SCHEMA_VERSION = 1


class ContinuationError(RuntimeError):
    """Continuation set on the grid is not a contiguous interval.

    The optimal continuation region is an interval; a hole on the grid
    signals insufficient resolution (or a numerical defect), never a
    legitimate policy.
    """


@dataclass(frozen=True)
class GridConfig:
    """Discretization of the log-likelihood-ratio axis.

    With l_min/l_max unset the span is derived from the problem: the
    outer boundary bounds widened by the largest one-step increment of
    the pool, so every continuation region lies strictly inside.
    num_points must be odd so the decision threshold can sit on-grid.
    """

    num_points: int = 2001
    l_min: float | None = None
    l_max: float | None = None

    def __post_init__(self) -> None:
        if self.num_points < 3:
            raise ConfigError(f"grid needs at least 3 points, got {self.num_points}")
        if self.num_points % 2 == 0:
            raise ConfigError(f"num_points must be odd, got {self.num_points}")
        if self.l_min is not None and self.l_max is not None and not (self.l_min < self.l_max):
            raise ConfigError(f"need l_min < l_max, got [{self.l_min}, {self.l_max}]")


def _stable_posteriors(l: np.ndarray, prior: Prior) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (P(theta=0|l), P(theta=1|l)); saturates instead of overflowing."""
    z = l + (math.log(prior.pi1) - math.log(prior.pi0))
    pos = z >= 0.0
    ez = np.exp(np.where(pos, -z, z))  # always exp of a nonpositive number
    p1 = np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    p0 = np.where(pos, ez / (1.0 + ez), 1.0 / (1.0 + ez))
    return p0, p1


def stopping_risk(l: float, n: int, prior: Prior, cost: CostConfig) -> float:
    """Risk of stopping now with n labels spent: best weighted posterior error plus sunk cost."""
    p0, p1 = posterior(l, prior)
    return min(prior.w0 * p0, prior.w1 * p1) + n * cost.c


def expected_next_risk(
    g_next: Callable[[float], float], l: float, prior: Prior, w: WorkerParams
) -> float:
    """Expected risk after one more label from worker w, given current l.

    g_next must evaluate the step-(n+1) risk function at any real l.
    """
    p1 = response_prob_one(l, prior, w)
    up = g_next(l + log_lr_increment(w, 1))
    down = g_next(l + log_lr_increment(w, 0))
    return p1 * up + (1.0 - p1) * down


def boundaries_from_continuation(
    cont_mask: np.ndarray, grid: np.ndarray, threshold: float
) -> tuple[float, float]:
    """Extract (upper, lower) stopping boundaries from a grid continuation set.

    Empty set: both boundaries collapse onto the decision threshold.
    Raises ContinuationError when the set has holes.
    """
    idx = np.flatnonzero(cont_mask)
    if idx.size == 0:
        return threshold, threshold
    if idx[-1] - idx[0] + 1 != idx.size:
        raise ContinuationError(
            "continuation set on the grid is non-contiguous; "
            "increase num_points or inspect the pool for degenerate workers"
        )
    return float(grid[idx[-1]]), float(grid[idx[0]])


@dataclass
class PolicyTable:
    """Solved policy for one (pool, prior, cost, T) instance.

    Arrays are laid out as:
      G[n]       risk over the grid after n labels, n = 0..T
      C[n]       continuation value (best worker's one-step expectation)
                 over the grid at step n, n = 0..T-1
      select[n]  worker index for label n+1 given l, n = 0..T-1
      A[n], B[n] stopping boundaries at step n, n = 0..T (A[T] = B[T] = threshold)

    G is the min of the analytic stopping risk and C; keeping C separate
    lets off-grid evaluation take that min at the query point, so the
    stopping branch never suffers interpolation error. Without this the
    boundaries collapse inward once the label cost drops below the
    interpolation error of the stopping risk's curvature.

    Instances are frozen by convention after solve(); everything reads, nothing writes.
    """

    T: int
    cost: CostConfig
    prior: Prior
    workers: tuple[WorkerParams, ...]
    num_points: int
    l_min: float
    l_max: float
    G: np.ndarray  # (T+1, P)
    C: np.ndarray  # (T, P)
    select: np.ndarray  # (T, P) int32, original worker indices
    A: np.ndarray  # (T+1,)
    B: np.ndarray  # (T+1,)

    @property
    def spacing(self) -> float:
        return (self.l_max - self.l_min) / (self.num_points - 1)

    @property
    def threshold(self) -> float:
        """Decision threshold: decide 1 iff l >= threshold."""
        return self.prior.lr_threshold()

    def grid(self) -> np.ndarray:
        return self.l_min + self.spacing * np.arange(self.num_points)

    def decide(self, l: float) -> int:
        return 1 if l >= self.threshold else 0

    def stop_bounds(self, n: int) -> tuple[float, float]:
        return float(self.A[n]), float(self.B[n])

    def risk_eval(self, l: float, n: int) -> float:
        """G(l, n): min of the exact stopping risk and the interpolated continuation value."""
        stop = stopping_risk(l, n, self.prior, self.cost)
        if n >= self.T or l < self.l_min or l > self.l_max:
            return stop
        h = self.spacing
        pos = (l - self.l_min) / h
        i = min(int(pos), self.num_points - 2)
        f = pos - i
        row = self.C[n]
        return min(stop, float((1.0 - f) * row[i] + f * row[i + 1]))

    def risk_fn(self, n: int) -> Callable[[float], float]:
        return lambda l: self.risk_eval(l, n)

    def select_at(self, l: float, n: int) -> int:
        """Tabled worker choice for the n-th label (n in 1..T) given l after n-1 labels."""
        pos = (l - self.l_min) / self.spacing
        i = int(round(pos))
        i = min(max(i, 0), self.num_points - 1)
        return int(self.select[n - 1, i])

    def choose_worker(self, l: float, n: int, available: set[int] | frozenset[int] | None) -> int:
        """Worker for label n+1 at state (l, n).

        available=None reads the precomputed selection map (repeat mode);
        otherwise the one-step argmin is recomputed over the given worker
        indices against the stored G(., n+1).
        """
        if available is None:
            return self.select_at(l, n + 1)
        g_next = self.risk_fn(n + 1)
        best_idx = -1
        best_val = math.inf
        for idx in sorted(available):
            val = expected_next_risk(g_next, l, self.prior, self.workers[idx])
            if val < best_val:
                best_val = val
                best_idx = idx
        if best_idx < 0:
            raise ConfigError("choose_worker called with no available workers")
        return best_idx

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": POLICY_SCHEMA_VERSION,
            "T": self.T,
            "c": self.cost.c,
            "pi1": self.prior.pi1,
            "w0": self.prior.w0,
            "w1": self.prior.w1,
            "workers": [[w.tau00, w.tau11] for w in self.workers],
            "grid": {
                "num_points": self.num_points,
                "l_min": self.l_min,
                "l_max": self.l_max,
            },
            "G": [row.tolist() for row in self.G],
            "C": [row.tolist() for row in self.C],
            "select": [row.tolist() for row in self.select],
            "A": self.A.tolist(),
            "B": self.B.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyTable":
        if d.get("version") != POLICY_SCHEMA_VERSION:
            raise ConfigError(f"unsupported policy schema version: {d.get('version')!r}")
        return cls(
            T=int(d["T"]),
            cost=CostConfig(float(d["c"])),
            prior=Prior(float(d["pi1"]), float(d["w0"]), float(d["w1"])),
            workers=tuple(WorkerParams(t00, t11) for t00, t11 in d["workers"]),
            num_points=int(d["grid"]["num_points"]),
            l_min=float(d["grid"]["l_min"]),
            l_max=float(d["grid"]["l_max"]),
            G=np.asarray(d["G"], dtype=np.float64),
            C=np.asarray(d["C"], dtype=np.float64),
            select=np.asarray(d["select"], dtype=np.int32),
            A=np.asarray(d["A"], dtype=np.float64),
            B=np.asarray(d["B"], dtype=np.float64),
        )

    def dump(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str) -> "PolicyTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def risk_at_start(policy: PolicyTable) -> float:
    """Minimal truncated risk estimate: G at zero evidence before any label."""
    return policy.risk_eval(0.0, 0)


def _auto_span(
    prior: Prior, cost: CostConfig, T: int, dmax: float, threshold: float
) -> tuple[float, float]:
    """Default grid span: hull of the outer boundary bounds, padded by one step."""
    c_eff = cost.c / max(prior.w0, prior.w1)
    lo = threshold - dmax
    hi = threshold + dmax
    if 0.0 < c_eff < 1.0:
        outer = math.log(1.0 - c_eff) - math.log(c_eff)
        hi = max(hi, threshold + outer + dmax)
        lo = min(lo, threshold - outer - dmax)
    else:
        # Free labels: no finite outer bound, fall back to what is reachable in T steps.
        hi = max(hi, threshold + (T + 1) * dmax)
        lo = min(lo, threshold - (T + 1) * dmax)
    return lo, hi


def _shift_eval(
    c_col: np.ndarray | None,
    shift: float,
    h: float,
    stop_at_query: np.ndarray,
) -> np.ndarray:
    """Evaluate G(grid + shift, n') as min(stopping risk, interp continuation).

    stop_at_query holds the analytic stopping risk at grid + shift; c_col
    is the step-n' continuation values on the grid (None at the terminal
    step, where stopping is forced). Points falling outside the grid take
    the stopping risk alone: the grid spans all continuation regions.
    Exploits the constant fractional offset of a shifted uniform grid, so
    no per-point search is needed.
    """
    if c_col is None:
        return stop_at_query.copy()
    P = c_col.shape[0]
    t = shift / h
    k = math.floor(t)
    f = t - k
    out = stop_at_query.copy()
    if f == 0.0:
        lo = max(0, -k)
        hi = min(P - 1, P - 1 - k)  # inclusive
        if lo <= hi:
            np.minimum(out[lo : hi + 1], c_col[lo + k : hi + k + 1], out=out[lo : hi + 1])
    else:
        lo = max(0, -k)
        hi = min(P - 1, P - 2 - k)  # inclusive; needs both i+k and i+k+1 in range
        if lo <= hi:
            interp = (1.0 - f) * c_col[lo + k : hi + k + 1] + f * c_col[
                lo + k + 1 : hi + k + 2
            ]
            np.minimum(out[lo : hi + 1], interp, out=out[lo : hi + 1])
    return out


def _dedup_workers(
    workers: Sequence[WorkerParams],
) -> tuple[list[WorkerParams], np.ndarray]:
    """Collapse duplicate (tau00, tau11) pairs; DP values are invariant to copies.

    Returns the unique workers plus the original index each one represents
    (first occurrence wins, keeping selection deterministic).
    """
    uniq: list[WorkerParams] = []
    rep: list[int] = []
    seen: dict[tuple[float, float], int] = {}
    for i, w in enumerate(workers):
        key = (w.tau00, w.tau11)
        if key not in seen:
            seen[key] = len(uniq)
            uniq.append(w)
            rep.append(i)
    return uniq, np.asarray(rep, dtype=np.int32)


def solve(
    T: int,
    cost: CostConfig,
    prior: Prior,
    workers: Sequence[WorkerParams],
    grid: GridConfig | None = None,
) -> PolicyTable:
    """Solve the truncated problem by backward induction over the LR grid.

    Initializes the step-T risk as the forced-stop risk, then walks n from
    T-1 down to 0, at each grid point taking the best worker's one-step
    expected risk against G(., n+1) and comparing it with stopping now.
    Deterministic: worker ties break to the lowest index, value ties stop.
    """
    if T < 1:
        raise ConfigError(f"truncation length must be >= 1, got {T}")
    if not workers:
        raise ConfigError("worker pool is empty")
    if not (0.0 < prior.pi1 < 1.0):
        raise ConfigError(f"solver needs an interior prior, got pi1={prior.pi1}")
    if not pool_is_identifiable(workers):
        raise ConfigError("no informative worker in the pool (all have tau00 + tau11 = 1)")
    if grid is None:
        grid = GridConfig()

    threshold = prior.lr_threshold()
    uniq, rep = _dedup_workers(workers)
    inc1 = np.array([log_lr_increment(w, 1) for w in uniq])
    inc0 = np.array([log_lr_increment(w, 0) for w in uniq])
    dmax = float(np.max(np.abs(np.concatenate([inc1, inc0]))))

    if grid.l_min is None or grid.l_max is None:
        lo, hi = _auto_span(prior, cost, T, dmax, threshold)
        l_min = lo if grid.l_min is None else grid.l_min
        l_max = hi if grid.l_max is None else grid.l_max
    else:
        l_min, l_max = grid.l_min, grid.l_max
    if not (l_min < threshold < l_max):
        raise ConfigError(
            f"grid [{l_min}, {l_max}] must bracket the decision threshold {threshold}"
        )

    # Symmetrize around the threshold so it lands on the center grid point.
    half = max(threshold - l_min, l_max - threshold)
    P = grid.num_points
    h = 2.0 * half / (P - 1)
    l_min = threshold - half
    l_max = threshold + half
    lgrid = l_min + h * np.arange(P)

    p0g, p1g = _stable_posteriors(lgrid, prior)
    phi = np.minimum(prior.w0 * p0g, prior.w1 * p1g)  # weighted posterior error on grid
    c = cost.c
    U = len(uniq)

    # Predictive P(X=1) per unique worker, fixed across steps.
    pred1 = p0g[None, :] * (1.0 - np.array([w.tau00 for w in uniq]))[:, None] + p1g[
        None, :
    ] * np.array([w.tau11 for w in uniq])[:, None]

    # Weighted posterior-error at the shifted grids: the exact stopping-risk
    # term of every possible query point, reused at every step.
    tails1 = np.empty((U, P))
    tails0 = np.empty((U, P))
    for u in range(U):
        q0, q1 = _stable_posteriors(lgrid + inc1[u], prior)
        tails1[u] = np.minimum(prior.w0 * q0, prior.w1 * q1)
        q0, q1 = _stable_posteriors(lgrid + inc0[u], prior)
        tails0[u] = np.minimum(prior.w0 * q0, prior.w1 * q1)

    G = np.empty((T + 1, P))
    Cv = np.empty((T, P))
    select = np.empty((T, P), dtype=np.int32)
    A = np.empty(T + 1)
    B = np.empty(T + 1)
    G[T] = phi + T * c
    A[T] = B[T] = threshold

    vals = np.empty((U, P))
    for n in range(T - 1, -1, -1):
        c_next = Cv[n + 1] if n + 1 < T else None
        cost_next = (n + 1) * c
        for u in range(U):
            up = _shift_eval(c_next, float(inc1[u]), h, tails1[u] + cost_next)
            down = _shift_eval(c_next, float(inc0[u]), h, tails0[u] + cost_next)
            vals[u] = pred1[u] * up + (1.0 - pred1[u]) * down
        best = np.argmin(vals, axis=0)  # ties -> lowest unique index
        cont = vals[best, np.arange(P)]
        stop = phi + n * c
        Cv[n] = cont
        G[n] = np.minimum(cont, stop)
        select[n] = rep[best]
        cont_mask = stop > cont  # strict: ties stop
        A[n], B[n] = boundaries_from_continuation(cont_mask, lgrid, threshold)

    return PolicyTable(
        T=T,
        cost=cost,
        prior=prior,
        workers=tuple(workers),
        num_points=P,
        l_min=float(l_min),
        l_max=float(l_max),
        G=G,
        C=Cv,
        select=select,
        A=A,
        B=B,
    )
