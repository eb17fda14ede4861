import json
import math

import numpy as np
import pytest

from uflkit.datasets import generate_dataset
from uflkit.geometry import PointSet
from uflkit.hierarchy import build_hierarchy
from uflkit.projection import target_dim
from uflkit.ptas import (DistanceOracle, PtasConfig, candidate_set,
                         ptas_discrete, ptas_euclidean, trace_to_jsonl)
from uflkit.solvers import (approx_ufl, brute_force_ufl_continuous,
                            brute_force_ufl_discrete)
from uflkit.util import spawn_seeds

from conftest import line, random_points


class TestConfig:
    def test_derived_values(self):
        cfg = PtasConfig(eps=0.2, ddim=2.0, alpha=6.0, kappa_cap=32.0)
        assert cfg.kappa == 32.0                       # (2/0.2)^2 = 100 clamps to the cap
        assert cfg.tau == pytest.approx(2.0 ** 20 * 6.0 * 32.0)
        assert cfg.m == target_dim(0.2, cfg.tau, cfg.c3)
        assert cfg.tau >= cfg.kappa and cfg.m >= 1

    def test_kappa_floor(self):
        cfg = PtasConfig(eps=0.9, ddim=1.0, c2=0.01)
        assert cfg.kappa == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            PtasConfig(eps=0.0)
        with pytest.raises(ValueError):
            PtasConfig(ddim=0.5)
        with pytest.raises(ValueError):
            PtasConfig(c3=-1.0)


class TestEuclidean:
    def test_single_point(self):
        sol, traces = ptas_euclidean(line(3.0), PtasConfig(seed=1))
        assert sol.total == 1.0
        assert traces == []

    def test_tight_cluster_uses_last_part(self, rng):
        X = PointSet(rng.random((10, 2)) * 0.01)
        cfg = PtasConfig(eps=0.3, ddim=2.0, kappa_cap=20.0, seed=4)
        sol, traces = ptas_euclidean(X, cfg)
        assert len(traces) == 1                        # kappa far above any local value
        oracle = brute_force_ufl_continuous(X.coords)
        assert sol.total <= approx_ufl(X).total * (1 + 1e-9)
        assert sol.total <= 6.0 * oracle

    def test_quality_on_small_instances(self):
        cfg_seed_pairs = spawn_seeds(42, 12)
        within = 0
        for s in cfg_seed_pairs:
            ds, run = spawn_seeds(s, 2)
            X = generate_dataset("subspace", 12, 64, 2, ds)
            sol, _ = ptas_euclidean(X, PtasConfig(eps=0.2, ddim=2.0, seed=run))
            ratio = sol.total / brute_force_ufl_continuous(X.coords)
            assert ratio <= 6.0 + 1e-9
            if ratio <= 1.5:
                within += 1
        assert within >= 11

    def test_solution_is_feasible_and_costed_correctly(self, rng):
        X = random_points(rng, 14, 3)
        sol, _ = ptas_euclidean(X, PtasConfig(eps=0.3, ddim=2.0, seed=9))
        assert sol.assignment.shape == (14,)
        recomputed = sum(np.linalg.norm(X.coords[i] - sol.facilities[sol.assignment[i]])
                         for i in range(14))
        assert sol.connection_cost == pytest.approx(recomputed, rel=1e-9)
        assert len(np.unique(sol.facilities, axis=0)) == sol.num_facilities

    def test_deterministic(self, rng):
        X = random_points(rng, 12, 4)
        cfg = PtasConfig(eps=0.25, ddim=2.0, seed=123)
        s1, t1 = ptas_euclidean(X, cfg)
        s2, t2 = ptas_euclidean(X, cfg)
        assert s1.total == s2.total
        assert trace_to_jsonl(t1) == trace_to_jsonl(t2)

    def test_fallback_fires_with_crushed_target_dimension(self, rng):
        # two tight groups force a two-facility constant-factor solution;
        # c3 tiny forces m = 1, so the facility pair contracts on roughly
        # half the seeds and the constant-factor clustering takes over
        X = PointSet(np.vstack([rng.random((6, 2)) * 0.2,
                                rng.random((6, 2)) * 0.2 + 5.0]))
        oracle = brute_force_ufl_continuous(X.coords)
        assert PtasConfig(eps=0.2, ddim=2.0, c3=1e-6, seed=0).m == 1
        fallbacks = 0
        for seed in range(12):
            sol, traces = ptas_euclidean(X, PtasConfig(eps=0.2, ddim=2.0,
                                                       c3=1e-6, seed=seed))
            fallbacks += sum(t.adopted == "fallback" for t in traces)
            assert sol.total <= 6.0 * oracle * (1 + 1e-9)
        assert fallbacks >= 1

    def test_fallback_designated_within_approx_dumbbell(self, rng):
        X = PointSet(np.vstack([rng.random((6, 2)) * 0.2,
                                rng.random((6, 2)) * 0.2 + 5.0]))
        for seed in range(12):
            _, traces = ptas_euclidean(X, PtasConfig(eps=0.2, ddim=2.0,
                                                     c3=1e-6, seed=seed))
            for t in traces:
                if t.adopted == "fallback":
                    assert t.designated_cost <= t.approx_cost * (1 + 1e-9)

    def test_trace_arithmetic_bounds_total(self, rng):
        # designated original-space costs from the trace dominate the final
        # nearest-assignment connection cost
        X = random_points(rng, 13, 3)
        sol, traces = ptas_euclidean(X, PtasConfig(eps=0.3, ddim=2.0, seed=17))
        designated = sum(t.designated_cost for t in traces)
        assert sol.connection_cost <= designated * (1 + 1e-9) + 1e-12
        assert sol.total <= designated + sol.num_facilities + 1e-9

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            ptas_euclidean(PointSet(np.zeros((1, 0))), PtasConfig())


class TestTrace:
    def test_jsonl_schema(self, rng):
        X = random_points(rng, 10, 2)
        _, traces = ptas_euclidean(X, PtasConfig(eps=0.3, ddim=2.0, seed=2))
        for entry in trace_to_jsonl(traces).strip().split("\n"):
            rec = json.loads(entry)
            assert set(rec) == {"part", "level", "event_G", "event_H", "k_star",
                                "v", "adopted", "approx_cost", "designated_cost"}
            assert rec["adopted"] in ("median", "fallback")


class TestDiscrete:
    def test_single_point(self):
        sol, traces = ptas_discrete(DistanceOracle.from_points(line(5.0)),
                                    PtasConfig(seed=3))
        assert sol.total == 1.0

    def test_dominates_continuous_optimum(self, rng):
        X = random_points(rng, 10, 2)
        sol, _ = ptas_discrete(DistanceOracle.from_points(X),
                               PtasConfig(eps=0.3, ddim=2.0, seed=6))
        assert sol.total >= brute_force_ufl_continuous(X.coords) * (1 - 1e-9)

    def test_quality_on_small_instances(self):
        within = 0
        for s in spawn_seeds(7, 10):
            ds, run = spawn_seeds(s, 2)
            X = generate_dataset("subspace", 12, 16, 2, ds)
            sol, _ = ptas_discrete(DistanceOracle.from_points(X),
                                   PtasConfig(eps=0.2, ddim=2.0, seed=run))
            if sol.total <= 1.5 * brute_force_ufl_discrete(X.coords):
                within += 1
        assert within >= 9

    def test_solution_well_formed(self, rng):
        X = random_points(rng, 15, 2)
        sol, _ = ptas_discrete(DistanceOracle.from_points(X),
                               PtasConfig(eps=0.3, ddim=2.0, seed=8))
        D = X.distance_matrix()
        assert len(set(sol.facility_ids.tolist())) == len(sol.facility_ids)
        conn = D[:, sol.facility_ids].min(axis=1).sum()
        assert sol.connection_cost == pytest.approx(conn)
        assert sol.total == pytest.approx(len(sol.facility_ids) + conn)

    def test_metric_violation_rejected(self):
        D = np.array([[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]])
        with pytest.raises(ValueError, match="triangle"):
            ptas_discrete(DistanceOracle(D), PtasConfig(seed=0))

    def test_asymmetry_rejected(self):
        D = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ValueError, match="symmetry"):
            DistanceOracle(D).spot_check()

    def test_candidate_containment_along_tree(self, rng):
        # the candidate set of a child cluster is contained in its parent's
        X = random_points(rng, 20, 2)
        H = build_hierarchy(X, 5)
        eps = 0.4
        sets = {c.cid: set(candidate_set(H, c.cid, eps).tolist()) for c in H.clusters}
        for c in H.clusters:
            for child in c.children:
                assert sets[child] <= sets[c.cid]


class TestCandidateSet:
    def test_root_covers_everything(self, rng):
        X = random_points(rng, 12, 2)
        H = build_hierarchy(X, 1)
        root = H.levels[H.ell + 1][0]
        assert len(candidate_set(H, root, 0.5)) == 12

    def test_isolated_cluster_stays_local(self):
        X = line(0.0, 1.0, 1e9)
        H = build_hierarchy(X, 2)
        cid = int(H.membership[0, 2])               # singleton {far point} at level 0
        ids = candidate_set(H, cid, 0.99)
        assert list(ids) == [2]                     # 100/eps * gamma << 1e9

    def test_matches_direct_scan(self, rng):
        X = random_points(rng, 18, 2)
        H = build_hierarchy(X, 3)
        eps = 0.35
        D = X.distance_matrix()
        for c in H.clusters:
            radius = (100.0 / eps) * H.rang(c.level)
            direct = {j for j in range(18)
                      if min(D[j, m] for m in c.members) <= radius}
            assert set(candidate_set(H, c.cid, eps).tolist()) == direct
