import math

import numpy as np
import pytest

from adasprt import (
    ConfigError,
    CostConfig,
    GridConfig,
    PolicyTable,
    Prior,
    WorkerParams,
    boundaries_from_continuation,
    expected_next_risk,
    risk_at_start,
    solve,
    stopping_risk,
)
from adasprt.solver import ContinuationError
from conftest import random_worker
from oracles import exhaustive_optimal_risk


def _solve(T, c, pi1, workers, points=2001, **kw):
    return solve(T, CostConfig(c), Prior(pi1, **kw), workers, GridConfig(num_points=points))


class TestStoppingRisk:
    def test_even_prior_with_cost(self):
        v = stopping_risk(0.0, 3, Prior(0.5), CostConfig(2.0**-12))
        assert v == pytest.approx(0.5 + 3 / 4096, abs=1e-12)

    def test_zero_samples(self):
        assert stopping_risk(0.0, 0, Prior(0.5), CostConfig(0.9)) == 0.5

    def test_posterior_certainty(self):
        assert stopping_risk(1e4, 0, Prior(0.5), CostConfig(0.1)) == pytest.approx(0.0, abs=1e-12)

    def test_weighted(self):
        # min(2*p0, 1*p1) at l=0, even prior
        v = stopping_risk(0.0, 0, Prior(0.5, w0=2.0, w1=1.0), CostConfig(0.0))
        assert v == pytest.approx(0.5, abs=1e-12)


class TestExpectedNextRisk:
    def test_hand_example(self, symmetric_worker, even_prior):
        c = CostConfig(0.01)
        g1 = lambda l: stopping_risk(l, 1, even_prior, c)
        v = expected_next_risk(g1, 0.0, even_prior, symmetric_worker)
        assert v == pytest.approx(0.21, abs=1e-12)

    def test_uninformative_worker_identity(self, even_prior):
        w = WorkerParams(0.5, 0.5)
        g = lambda l: 0.123 + 0.01 * l  # arbitrary affine function
        assert expected_next_risk(g, 0.7, even_prior, w) == pytest.approx(g(0.7), abs=1e-15)

    def test_tail_matches_analytic_extension(self, symmetric_worker):
        # far above the continuation region the policy stops, so G(., 1) there
        # is exactly the one-label stopping risk
        p = _solve(3, 0.05, 0.5, [symmetric_worker])
        l = p.A[1] + 5.0
        direct = expected_next_risk(p.risk_fn(1), l, p.prior, symmetric_worker)
        p1 = 0.8 * (1 / (1 + math.exp(-l))) + 0.2 * (1 - 1 / (1 + math.exp(-l)))
        up = stopping_risk(l + math.log(4), 1, p.prior, p.cost)
        down = stopping_risk(l - math.log(4), 1, p.prior, p.cost)
        assert direct == pytest.approx(p1 * up + (1 - p1) * down, abs=1e-9)


class TestSolveSmall:
    def test_t1_hand_value(self, symmetric_worker):
        p = _solve(1, 0.01, 0.5, [symmetric_worker], points=8001)
        assert risk_at_start(p) == pytest.approx(0.21, abs=1e-6)
        # continuation at n=0 includes l=0
        assert p.B[0] < 0.0 < p.A[0]

    def test_t2_policy_stops_after_one_informative_label(self, symmetric_worker):
        p = _solve(2, 0.01, 0.5, [symmetric_worker], points=8001)
        assert risk_at_start(p) == pytest.approx(0.21, abs=1e-6)
        # C(1) excludes +/- log 4
        assert p.A[1] < math.log(4)
        assert p.B[1] > -math.log(4)

    def test_large_cost_stops_immediately(self, symmetric_worker):
        for T in (1, 3, 7):
            p = _solve(T, 0.5, 0.5, [symmetric_worker])
            assert risk_at_start(p) == pytest.approx(0.5, abs=1e-12)
            assert p.A[0] == p.B[0] == p.threshold

    def test_risk_monotone_in_T(self, symmetric_worker):
        p1 = _solve(1, 0.01, 0.5, [symmetric_worker])
        p2 = _solve(2, 0.01, 0.5, [symmetric_worker])
        assert risk_at_start(p2) <= risk_at_start(p1) + 1e-9

    def test_rejections(self, symmetric_worker):
        with pytest.raises(ConfigError):
            solve(0, CostConfig(0.1), Prior(0.5), [symmetric_worker])
        with pytest.raises(ConfigError):
            solve(2, CostConfig(0.1), Prior(0.5), [])
        with pytest.raises(ConfigError):
            solve(2, CostConfig(0.1), Prior(0.5), [symmetric_worker],
                  GridConfig(num_points=101, l_min=1.0, l_max=2.0))
        with pytest.raises(ConfigError):
            solve(2, CostConfig(0.1), Prior(0.5), [WorkerParams(0.5, 0.5)])

    def test_duplicate_workers_collapse(self, symmetric_worker):
        p1 = _solve(2, 0.01, 0.5, [symmetric_worker])
        p2 = _solve(2, 0.01, 0.5, [symmetric_worker, WorkerParams(0.8, 0.8)])
        assert risk_at_start(p1) == risk_at_start(p2)
        assert np.array_equal(p2.select, p1.select)  # representative index is 0


class TestOracleEquivalence:
    def test_randomized_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(20):
            M = int(rng.integers(1, 4))
            T = int(rng.integers(1, 5))
            c = float(rng.choice([0.01, 0.05, 0.2]))
            pi1 = float(rng.choice([0.3, 0.5, 0.8]))
            workers = [random_worker(rng) for _ in range(M)]
            want = exhaustive_optimal_risk(T, c, pi1, workers)
            got = risk_at_start(_solve(T, c, pi1, workers, points=8001))
            assert got == pytest.approx(want, abs=1e-6), (M, T, c, pi1, workers)

    def test_weighted_instance(self):
        rng = np.random.default_rng(5)
        workers = [random_worker(rng) for _ in range(2)]
        want = exhaustive_optimal_risk(3, 0.05, 0.4, workers, w0=1.5, w1=0.7)
        p = solve(3, CostConfig(0.05), Prior(0.4, w0=1.5, w1=0.7), workers,
                  GridConfig(num_points=8001))
        assert risk_at_start(p) == pytest.approx(want, abs=1e-6)


class TestBoundaryStructure:
    @pytest.mark.parametrize("seed", range(6))
    def test_structure_invariants(self, seed):
        rng = np.random.default_rng(seed)
        M = int(rng.integers(1, 6))
        T = int(rng.integers(2, 9))
        c = float(rng.uniform(0.001, 0.2))
        pi1 = float(rng.uniform(0.2, 0.8))
        workers = [random_worker(rng) for _ in range(M)]
        p = _solve(T, c, pi1, workers)
        h = p.spacing
        thr = p.threshold
        # endpoint identity
        assert abs(p.A[T] - thr) <= h and abs(p.B[T] - thr) <= h
        # monotonicity and nesting
        for n in range(p.T):
            assert p.A[n + 1] <= p.A[n] + 1e-12
            assert p.B[n + 1] >= p.B[n] - 1e-12
        # outer bounds at n=1
        outer = math.log(p.prior.pi0 * (1 - c)) - math.log(p.prior.pi1 * c)
        assert p.A[1] <= outer + h
        outer_b = math.log(p.prior.pi0 * c) - math.log(p.prior.pi1 * (1 - c))
        assert p.B[1] >= outer_b - h

    def test_boundaries_from_continuation_edges(self):
        grid = np.linspace(-2.0, 2.0, 41)
        full = np.ones(41, dtype=bool)
        assert boundaries_from_continuation(full, grid, 0.0) == (2.0, -2.0)
        empty = np.zeros(41, dtype=bool)
        assert boundaries_from_continuation(empty, grid, 0.0) == (0.0, 0.0)
        holey = full.copy()
        holey[20] = False
        with pytest.raises(ContinuationError):
            boundaries_from_continuation(holey, grid, 0.0)


class TestConvergenceAndContinuity:
    def test_risk_nonincreasing_in_T_pool(self, pool50):
        c = 2.0**-12
        risks = [risk_at_start(_solve(T, c, 0.5, pool50, points=1001)) for T in (2, 4, 6, 8)]
        for a, b in zip(risks, risks[1:]):
            assert b <= a + 1e-9

    def test_grid_refinement_shrinks_steps(self, symmetric_worker):
        # G(., n) is continuous: adjacent-point jumps shrink when the grid doubles
        coarse = _solve(4, 0.02, 0.5, [symmetric_worker], points=501)
        fine = _solve(4, 0.02, 0.5, [symmetric_worker], points=1001)
        for n in (0, 2, 4):
            dc = np.max(np.abs(np.diff(coarse.G[n])))
            df = np.max(np.abs(np.diff(fine.G[n])))
            assert df <= 0.6 * dc + 1e-12

    def test_risk_eval_interpolates_continuously(self, symmetric_worker):
        p = _solve(3, 0.02, 0.5, [symmetric_worker])
        ls = np.linspace(p.l_min - 1.0, p.l_max + 1.0, 4001)
        vals = np.array([p.risk_eval(float(l), 1) for l in ls])
        assert np.max(np.abs(np.diff(vals))) < 0.01


class TestSerialization:
    def test_round_trip_bits(self, tmp_path, pool50):
        p = _solve(5, 0.01, 0.65, list(pool50)[:10])
        path = tmp_path / "policy.json"
        p.dump(str(path))
        q = PolicyTable.load(str(path))
        assert q.T == p.T and q.num_points == p.num_points
        assert np.array_equal(q.G, p.G)
        assert np.array_equal(q.select, p.select)
        assert np.array_equal(q.A, p.A) and np.array_equal(q.B, p.B)
        assert q.l_min == p.l_min and q.l_max == p.l_max
        # identical behavior on a trace of probe states
        rng = np.random.default_rng(3)
        for _ in range(200):
            l = float(rng.uniform(p.l_min, p.l_max))
            n = int(rng.integers(0, p.T))
            assert q.risk_eval(l, n) == p.risk_eval(l, n)
            assert q.select_at(l, n + 1) == p.select_at(l, n + 1)

    def test_version_check(self, tmp_path, symmetric_worker):
        p = _solve(1, 0.1, 0.5, [symmetric_worker])
        d = p.to_dict()
        d["version"] = 99
        with pytest.raises(ConfigError):
            PolicyTable.from_dict(d)
