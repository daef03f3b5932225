"""Dataset ingestion and the replay protocol for recorded label corpora.

A dataset is a CSV of (object_id, worker_id, label) rows, at most one
label per pair, plus an optional ground-truth CSV for accuracy reporting.
Replay shuffles the objects, spends the first quarter as a calibration
set (all of its labels consumed, no selection) to seed the parameter
estimates, then labels the remaining objects sequentially with the
adaptive policy in no-repeat mode, re-estimating after every object.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .estimation import (
    EstimationConfig,
    Estimates,
    LabelMatrix,
    e_step,
    em_fit,
    initial_estimates,
    smoothed_solver_prior,
)
from .model import CostConfig, Prior
from .policy import ReplaySource, run_episode
from .rng import rng_for
from .solver import GridConfig, solve

_HEADER = ["object_id", "worker_id", "label"]
_TRUTH_HEADER = ["object_id", "truth"]


@dataclass
class LabelDataset:
    """Dense-indexed label corpus with id dictionaries and optional truth."""

    matrix: LabelMatrix
    object_ids: list[str]
    worker_ids: list[str]
    truth: dict[int, int] | None = None
    _by_object: list[dict[int, int]] | None = field(default=None, repr=False)

    @property
    def n_objects(self) -> int:
        return self.matrix.n_objects

    @property
    def n_workers(self) -> int:
        return self.matrix.n_workers

    def labels_for_object(self, j: int) -> dict[int, int]:
        if self._by_object is None:
            groups: list[dict[int, int]] = [{} for _ in range(self.n_objects)]
            for o, w, x in zip(self.matrix.objects, self.matrix.workers, self.matrix.labels):
                groups[o][int(w)] = int(x)
            self._by_object = groups
        return self._by_object[j]


def _parse_binary(text: str, what: str, line_no: int) -> int:
    if text not in ("0", "1"):
        raise DataError(f"line {line_no}: {what} must be 0 or 1, got {text!r}")
    return int(text)


def load_dataset(path: str, truth_path: str | None = None) -> LabelDataset:
    """Read a label CSV (and optional truth CSV) into a validated dataset.

    All malformed input is reported with its line number.
    """
    for p in (path, truth_path):
        if p is not None and not os.path.exists(p):
            raise DataError(f"no such file: {p}")
    obj_index: dict[str, int] = {}
    wk_index: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    objs: list[int] = []
    wks: list[int] = []
    labs: list[int] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if [h.strip() for h in header] != _HEADER:
            raise DataError(f"{path} line 1: expected header {','.join(_HEADER)!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"line {line_no}: expected 3 fields, got {len(row)}")
            oid, wid, lab = (f.strip() for f in row)
            if not oid or not wid:
                raise DataError(f"line {line_no}: empty object or worker id")
            j = obj_index.setdefault(oid, len(obj_index))
            i = wk_index.setdefault(wid, len(wk_index))
            if (j, i) in seen:
                raise DataError(
                    f"line {line_no}: duplicate label for object {oid!r}, worker {wid!r}"
                )
            seen.add((j, i))
            objs.append(j)
            wks.append(i)
            labs.append(_parse_binary(lab, "label", line_no))
    matrix = LabelMatrix(
        np.asarray(objs, dtype=np.int64),
        np.asarray(wks, dtype=np.int64),
        np.asarray(labs, dtype=np.int8),
        n_objects=len(obj_index),
        n_workers=len(wk_index),
        validate=False,  # enforced above, with line numbers
    )
    ds = LabelDataset(
        matrix=matrix,
        object_ids=list(obj_index),
        worker_ids=list(wk_index),
    )
    if truth_path is not None:
        truth: dict[int, int] = {}
        with open(truth_path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != _TRUTH_HEADER:
                raise DataError(f"{truth_path} line 1: expected header {','.join(_TRUTH_HEADER)!r}")
            for line_no, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 2:
                    raise DataError(f"line {line_no}: expected 2 fields, got {len(row)}")
                oid, t = (f.strip() for f in row)
                if oid not in obj_index:
                    raise DataError(f"line {line_no}: truth for unknown object {oid!r}")
                truth[obj_index[oid]] = _parse_binary(t, "truth", line_no)
        ds.truth = truth
    return ds


@dataclass(frozen=True)
class ObjectOutcome:
    object_id: str
    n_queried: int
    decision: int
    correct: bool | None
    calibration: bool
    zero_label: bool


@dataclass(frozen=True)
class OrderingResult:
    total_queried: int
    accuracy_all: float
    accuracy_noncalib: float
    zero_label_objects: int
    calib_queried: int

    def queried_identity_holds(self, T: int, calib_count: int, noncalib_total: int) -> bool:
        return self.total_queried == noncalib_total + self.calib_queried


@dataclass
class RunReport:
    """Replay summary: per-ordering metrics plus their mean/std."""

    orderings: list[OrderingResult]
    calib_count: int
    accuracy_mean: float
    accuracy_std: float
    accuracy_noncalib_mean: float
    accuracy_noncalib_std: float
    total_queried_mean: float
    total_queried_std: float
    per_object: list[ObjectOutcome]  # detail of the first ordering
    config: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "calib_count": self.calib_count,
            "accuracy_mean": self.accuracy_mean,
            "accuracy_std": self.accuracy_std,
            "accuracy_noncalib_mean": self.accuracy_noncalib_mean,
            "accuracy_noncalib_std": self.accuracy_noncalib_std,
            "total_queried_mean": self.total_queried_mean,
            "total_queried_std": self.total_queried_std,
            "orderings": [
                {
                    "total_queried": o.total_queried,
                    "accuracy_all": o.accuracy_all,
                    "accuracy_noncalib": o.accuracy_noncalib,
                    "zero_label_objects": o.zero_label_objects,
                    "calib_queried": o.calib_queried,
                }
                for o in self.orderings
            ],
            "per_object": [
                {
                    "object_id": p.object_id,
                    "N": p.n_queried,
                    "D": p.decision,
                    "correct": p.correct,
                    "calibration": p.calibration,
                    "zero_label": p.zero_label,
                }
                for p in self.per_object
            ],
        }


def _accuracy(flags: list[bool | None]) -> float:
    known = [f for f in flags if f is not None]
    if not known:
        return math.nan
    return sum(known) / len(known)


def run_dataset(
    ds: LabelDataset,
    cost: CostConfig,
    T: int,
    cfg: EstimationConfig,
    orderings: int = 20,
    seed: int = 0,
    grid: GridConfig | None = None,
    cache_decimals: int | None = 4,
) -> RunReport:
    """Replay the corpus under the adaptive policy with estimated parameters.

    Per ordering: shuffle objects, consume up to T labels for each of the
    first quarter (calibration), fit the estimates, then run each
    remaining object in no-repeat mode with a re-fit after every object.
    Calibration objects are decided by posterior argmax under the
    post-calibration estimates; both all-object and non-calibration
    accuracies are reported.
    """
    if orderings < 1:
        raise ConfigError(f"orderings must be >= 1, got {orderings}")
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    K = ds.n_objects
    if K < 1:
        raise DataError("dataset has no objects")
    M = ds.n_workers
    calib_count = max(1, K // 4)
    clamp = (cost.c, 1.0 - cost.c) if cost.c < 0.5 else (0.5, 0.5)
    cache: dict = {}
    results: list[OrderingResult] = []
    first_detail: list[ObjectOutcome] = []

    for o in range(orderings):
        rng = rng_for(seed, 7001, o)
        perm = rng.permutation(K)
        triples: list[tuple[int, int, int]] = []
        n_by_object = np.zeros(K, dtype=np.int64)
        decisions = np.full(K, -1, dtype=np.int64)
        zero_label: set[int] = set()

        calib_objs = perm[:calib_count]
        for j in calib_objs:
            labels = ds.labels_for_object(int(j))
            widx = sorted(labels)
            order = rng.permutation(len(widx))
            take = min(T, len(widx))
            for t in order[:take]:
                w = widx[int(t)]
                triples.append((int(j), w, labels[w]))
            n_by_object[j] = take
            if take == 0:
                zero_label.add(int(j))

        data = LabelMatrix.from_triples(triples, n_objects=K, n_workers=M)
        est = em_fit(data, cfg, init=initial_estimates(M, cfg))
        est = _clamp_prior(est, clamp)
        q = e_step(est, data)
        for j in calib_objs:
            decisions[j] = 1 if q[j] >= 0.5 else 0
        calib_queried = int(n_by_object[calib_objs].sum())

        n_labeled = int((n_by_object[calib_objs] > 0).sum())
        for j in perm[calib_count:]:
            j = int(j)
            pi_used = min(max(smoothed_solver_prior(est.pi1, n_labeled), clamp[0]), clamp[1])
            key = None
            if cache_decimals is not None:
                key = (
                    round(pi_used, cache_decimals),
                    tuple(np.round(est.tau00, cache_decimals)),
                    tuple(np.round(est.tau11, cache_decimals)),
                )
            policy = cache.get(key) if key is not None else None
            if policy is None:
                policy = solve(T, cost, Prior(pi_used), est.worker_params(), grid)
                if key is not None:
                    cache[key] = policy
            labels = ds.labels_for_object(j)
            if not labels:
                zero_label.add(j)
            ep = run_episode(policy, ReplaySource(labels), mode="no-repeat")
            n_by_object[j] = ep.n_labels
            decisions[j] = ep.decision
            if ep.trace:
                n_labeled += 1
            for w_idx, label in ep.trace:
                triples.append((j, w_idx, label))
            data = LabelMatrix.from_triples(triples, n_objects=K, n_workers=M)
            est = em_fit(data, cfg, init=est)
            est = _clamp_prior(est, clamp)

        correct: list[bool | None] = [
            (int(decisions[j]) == ds.truth[j]) if ds.truth and j in ds.truth else None
            for j in range(K)
        ]
        noncalib = set(int(j) for j in perm[calib_count:])
        results.append(
            OrderingResult(
                total_queried=int(n_by_object.sum()),
                accuracy_all=_accuracy(correct),
                accuracy_noncalib=_accuracy([correct[j] for j in sorted(noncalib)]),
                zero_label_objects=len(zero_label),
                calib_queried=calib_queried,
            )
        )
        if o == 0:
            first_detail = [
                ObjectOutcome(
                    object_id=ds.object_ids[j],
                    n_queried=int(n_by_object[j]),
                    decision=int(decisions[j]),
                    correct=correct[j],
                    calibration=j not in noncalib,
                    zero_label=j in zero_label,
                )
                for j in range(K)
            ]

    acc = np.array([r.accuracy_all for r in results])
    accn = np.array([r.accuracy_noncalib for r in results])
    tot = np.array([r.total_queried for r in results], dtype=np.float64)

    def _mean(x):
        return float(np.mean(x)) if not np.isnan(x).all() else math.nan

    def _std(x):
        return float(np.std(x, ddof=1)) if len(x) > 1 and not np.isnan(x).any() else 0.0

    return RunReport(
        orderings=results,
        calib_count=calib_count,
        accuracy_mean=_mean(acc),
        accuracy_std=_std(acc),
        accuracy_noncalib_mean=_mean(accn),
        accuracy_noncalib_std=_std(accn),
        total_queried_mean=float(tot.mean()),
        total_queried_std=float(tot.std(ddof=1)) if len(tot) > 1 else 0.0,
        per_object=first_detail,
        config={
            "c": cost.c,
            "T": T,
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "orderings": orderings,
            "seed": seed,
            "n_objects": K,
            "n_workers": M,
            "total_labels": len(ds.matrix),
        },
    )


def _clamp_prior(est: Estimates, clamp: tuple[float, float]) -> Estimates:
    from dataclasses import replace

    return replace(est, pi1=min(max(est.pi1, clamp[0]), clamp[1]))


def full_data_decision_accuracy(ds: LabelDataset, cfg: EstimationConfig) -> float:
    """Accuracy of posterior-argmax decisions when every label is used."""
    if not ds.truth:
        raise DataError("full-data accuracy needs ground truth")
    est = em_fit(ds.matrix, cfg, init=initial_estimates(ds.n_workers, cfg))
    q = e_step(est, ds.matrix)
    hits = [int(q[j] >= 0.5) == t for j, t in ds.truth.items()]
    return sum(hits) / len(hits)
