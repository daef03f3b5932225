import numpy as np
import pytest

from adasprt import CostConfig, DataError, EstimationConfig, GridConfig, load_dataset
from adasprt.data import full_data_decision_accuracy, run_dataset
from adasprt.rng import rng_for


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def make_synthetic_corpus(
    tmp_path,
    n_objects=40,
    n_workers=12,
    labels_per_object=6,
    pi1=0.6,
    seed=0,
    tau_lo=0.6,
    tau_hi=0.9,
):
    """Small replay corpus from known two-coin parameters, with truth file."""
    rng = rng_for(seed, 55)
    t00 = rng.uniform(tau_lo, tau_hi, n_workers)
    t11 = rng.uniform(tau_lo, tau_hi, n_workers)
    theta = (rng.random(n_objects) < pi1).astype(int)
    rows = ["object_id,worker_id,label"]
    for j in range(n_objects):
        picks = rng.choice(n_workers, size=labels_per_object, replace=False)
        for i in picks:
            p1 = t11[i] if theta[j] == 1 else 1.0 - t00[i]
            z = int(rng.random() < p1)
            rows.append(f"obj{j},w{i},{z}")
    truth = ["object_id,truth"] + [f"obj{j},{theta[j]}" for j in range(n_objects)]
    labels_path = _write(tmp_path, "labels.csv", "\n".join(rows) + "\n")
    truth_path = _write(tmp_path, "truth.csv", "\n".join(truth) + "\n")
    return labels_path, truth_path, theta


class TestLoadDataset:
    def test_toy_file(self, tmp_path):
        path = _write(
            tmp_path,
            "toy.csv",
            "object_id,worker_id,label\na,w1,1\na,w2,0\nb,w1,1\n",
        )
        ds = load_dataset(path)
        assert ds.n_objects == 2 and ds.n_workers == 2
        assert len(ds.matrix) == 3
        assert ds.labels_for_object(0) == {0: 1, 1: 0}

    def test_duplicate_rejected_with_line(self, tmp_path):
        path = _write(
            tmp_path,
            "dup.csv",
            "object_id,worker_id,label\na,w1,1\na,w1,0\n",
        )
        with pytest.raises(DataError, match="line 3"):
            load_dataset(path)

    def test_bad_label_rejected_with_line(self, tmp_path):
        path = _write(tmp_path, "bad.csv", "object_id,worker_id,label\na,w1,2\n")
        with pytest.raises(DataError, match="line 2"):
            load_dataset(path)

    def test_bad_header(self, tmp_path):
        path = _write(tmp_path, "hdr.csv", "obj,worker,label\na,w1,1\n")
        with pytest.raises(DataError, match="header"):
            load_dataset(path)

    def test_unknown_truth_object(self, tmp_path):
        labels = _write(tmp_path, "l.csv", "object_id,worker_id,label\na,w1,1\n")
        truth = _write(tmp_path, "t.csv", "object_id,truth\nzzz,1\n")
        with pytest.raises(DataError, match="unknown object"):
            load_dataset(labels, truth)

    def test_rte_shaped_corpus_loads(self, tmp_path):
        rng = rng_for(1, 2)
        rows = ["object_id,worker_id,label"]
        for j in range(800):
            for i in rng.choice(164, size=10, replace=False):
                rows.append(f"o{j},w{i},{int(rng.random() < 0.7)}")
        path = _write(tmp_path, "rte.csv", "\n".join(rows) + "\n")
        ds = load_dataset(path)
        assert ds.n_objects == 800
        assert len(ds.matrix) == 8000


class TestRunDataset:
    def test_negligible_cost_uses_all_informative_labels(self, tmp_path):
        # Calibration must be large enough to see both classes, otherwise a
        # collapsed prior estimate legitimately stops everything at zero labels.
        # Even at c -> 0 the optimal rule skips a label once the remaining
        # budget cannot flip the decision (equal error, positive cost), so
        # "all labels" is an upper bound approached from below.
        labels, truth, _ = make_synthetic_corpus(
            tmp_path, n_objects=40, labels_per_object=6, pi1=0.6
        )
        ds = load_dataset(labels, truth)
        report = run_dataset(
            ds,
            CostConfig(2.0**-30),
            T=6,
            cfg=EstimationConfig(),
            orderings=1,
            seed=1,
            grid=GridConfig(num_points=801),
        )
        assert report.orderings[0].total_queried >= 0.8 * len(ds.matrix)
        full = full_data_decision_accuracy(ds, EstimationConfig())
        assert report.orderings[0].accuracy_all == pytest.approx(full, abs=0.15)

    def test_huge_cost_queries_only_calibration(self, tmp_path):
        labels, truth, _ = make_synthetic_corpus(tmp_path, n_objects=20, labels_per_object=4)
        ds = load_dataset(labels, truth)
        report = run_dataset(
            ds, CostConfig(0.6), T=4, cfg=EstimationConfig(), orderings=2, seed=2,
            grid=GridConfig(num_points=401),
        )
        for o in report.orderings:
            assert o.total_queried == o.calib_queried

    def test_queried_identity(self, tmp_path):
        labels, truth, _ = make_synthetic_corpus(tmp_path, n_objects=24, labels_per_object=5)
        ds = load_dataset(labels, truth)
        T = 5
        report = run_dataset(
            ds, CostConfig(2.0**-6), T=T, cfg=EstimationConfig(), orderings=2, seed=3,
            grid=GridConfig(num_points=401),
        )
        calib = report.calib_count
        for o in report.orderings:
            # every calibration object here has exactly T labels
            assert o.calib_queried == T * calib
            noncalib_total = o.total_queried - o.calib_queried
            assert o.queried_identity_holds(T, calib, noncalib_total)

    def test_ordering_determinism(self, tmp_path):
        labels, truth, _ = make_synthetic_corpus(tmp_path, n_objects=16, labels_per_object=4)
        ds = load_dataset(labels, truth)
        kw = dict(cost=CostConfig(2.0**-6), T=4, cfg=EstimationConfig(), orderings=2,
                  seed=9, grid=GridConfig(num_points=401))
        r1 = run_dataset(ds, **kw)
        r2 = run_dataset(ds, **kw)
        assert r1.orderings == r2.orderings

    def test_zero_label_object_flagged(self, tmp_path):
        path = _write(
            tmp_path,
            "sparse.csv",
            "object_id,worker_id,label\n"
            + "\n".join(f"a{k},w{k % 3},1" for k in range(8))
            + "\n",
        )
        ds = load_dataset(path)
        # object b never appears; craft it via truth only -> not possible, so instead
        # check the flag machinery on an object whose labels run out immediately
        report = run_dataset(
            ds, CostConfig(2.0**-6), T=2, cfg=EstimationConfig(), orderings=1, seed=4,
            grid=GridConfig(num_points=401),
        )
        assert report.per_object  # runs to completion; nothing to flag here
        assert report.orderings[0].zero_label_objects == 0
