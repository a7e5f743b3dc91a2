import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mlconstructive.candidates import build_candidates, build_promising_list
from mlconstructive.constructive import (ConfigurationError, Policy, SolveConfig,
                                         clarke_wright_complete, phase1, restricted_two_opt,
                                         solve)
from mlconstructive.instance import (Instance, Metric, random_instance, tour_edges,
                                     tour_length, validate_tour)
from mlconstructive.models import Baseline, Logistic, feature_dim
from mlconstructive.oracle import held_karp
from mlconstructive.partial import InvariantViolation, PartialSolution

from conftest import square


def improving_move_exists(inst, tour, fixed=frozenset(), tol=1e-10):
    """Exhaustive scan of every admissible 2-opt move."""
    D = inst.cost_matrix()
    n = len(tour)
    fixed = {tuple(sorted(e)) for e in fixed}
    for i in range(n - 1):
        a, b = tour[i], tour[i + 1]
        if tuple(sorted((a, b))) in fixed:
            continue
        for j in range(i + 2, n if i > 0 else n - 1):
            c, d = tour[j], tour[(j + 1) % n]
            if tuple(sorted((c, d))) in fixed:
                continue
            if D[a, c] + D[b, d] - D[a, b] - D[c, d] < -tol:
                return True
    return False


def is_disjoint_paths(edges, n):
    ps = PartialSolution.from_edges(n, edges)
    ps.validate()
    return True


def zero_logistic(k=5, rank=1, bias=0.0):
    return Logistic(rank, feature_dim(k), np.zeros(feature_dim(k)), bias)


# -- phase 1 ------------------------------------------------------------------

def test_nn_rule_on_square_takes_sides_only():
    sq = square()
    cl = build_candidates(sq, "knn", 3)
    partial = phase1(sq, cl, build_promising_list(sq, cl), Policy.nearest())
    assert partial.fixed_edges and partial.fixed_edges <= {(0, 1), (1, 2), (2, 3), (0, 3)}


def test_threshold_above_one_fixes_nothing():
    inst = random_instance(40, 1)
    cl = build_candidates(inst)
    lp = build_promising_list(inst, cl)
    m = zero_logistic(bias=50.0)
    partial = phase1(inst, cl, lp, Policy.model(m, zero_logistic(rank=2, bias=50.0),
                                                (1.01, 1.01)))
    assert partial.n_edges == 0


def test_model_dimension_mismatch():
    inst = random_instance(40, 1)
    cl = build_candidates(inst, k=4)
    policy = Policy.model(zero_logistic(), zero_logistic(rank=2))
    with pytest.raises(ConfigurationError):
        phase1(inst, cl, build_promising_list(inst, cl), policy)
    with pytest.raises(ConfigurationError):
        Policy.model(zero_logistic(5), zero_logistic(4, rank=2))
    with pytest.raises(ConfigurationError):
        Policy("magic")


def test_opt_policy_fixes_optimal_subpaths():
    for seed in range(20):
        inst = random_instance(8, seed)
        opt = held_karp(inst)
        cl = build_candidates(inst)
        partial = phase1(inst, cl, build_promising_list(inst, cl), Policy.opt(opt.edge_set))
        assert partial.fixed_edges <= opt.edge_set
        assert len(partial.fixed_edges) < 8
        partial.validate()


def test_baseline_draws_are_seeded():
    inst = random_instance(60, 2)
    cl = build_candidates(inst)
    lp = build_promising_list(inst, cl)
    a = phase1(inst, cl, lp, Policy.baseline((0.6, 0.4)), seed=3).fixed_edges
    b = phase1(inst, cl, lp, Policy.baseline((0.6, 0.4)), seed=3).fixed_edges
    assert a == b
    assert phase1(inst, cl, lp, Policy.baseline((0.0, 0.0))).n_edges == 0


def test_model_policy_uses_current_partial():
    # probability above 0.5 only when the patch already holds an edge: the first
    # entry is rejected (empty partial) and so is everything after it
    k = 5
    w = np.zeros(feature_dim(k))
    w[feature_dim(k) // 2:] = 100.0
    m1, m2 = Logistic(1, feature_dim(k), w, -1.0), Logistic(2, feature_dim(k), w, -1.0)
    inst = random_instance(30, 4)
    cl = build_candidates(inst)
    lp = build_promising_list(inst, cl)
    assert phase1(inst, cl, lp, Policy.model(m1, m2)).n_edges == 0
    m1b = Logistic(1, feature_dim(k), w, 1.0)
    assert phase1(inst, cl, lp, Policy.model(m1b, m2)).n_edges > 0


# -- phase 2 ------------------------------------------------------------------

def test_cw_square_from_empty():
    sq = square()
    tour = clarke_wright_complete(sq, PartialSolution(4))
    assert tour_length(sq, tour) == pytest.approx(4.0)


def test_cw_keeps_a_fixed_edge():
    for seed in range(100):
        inst = random_instance(50, seed)
        u, v = (int(a) for a in np.random.default_rng(seed).choice(50, 2, replace=False))
        partial = PartialSolution.from_edges(50, [(u, v)])
        tour = clarke_wright_complete(inst, partial)
        validate_tour(inst, tour)
        assert (min(u, v), max(u, v)) in tour_edges(tour.tolist())


def test_cw_closes_a_hamiltonian_path():
    inst = random_instance(30, 7)
    order = np.random.default_rng(0).permutation(30).tolist()
    partial = PartialSolution.from_edges(30, zip(order, order[1:]))
    tour = clarke_wright_complete(inst, partial)
    assert tour_edges(tour.tolist()) == tour_edges(order)


def test_cw_rejects_cycle():
    ps = PartialSolution.from_edges(5, [(0, 1), (1, 2)])
    ps.insert(0, 2, check=False)
    with pytest.raises(InvariantViolation):
        clarke_wright_complete(random_instance(5, 0), ps)


def test_cw_does_not_modify_input():
    inst = random_instance(20, 3)
    ps = PartialSolution.from_edges(20, [(0, 1)])
    clarke_wright_complete(inst, ps)
    assert ps.n_edges == 1


# -- phase 3 ------------------------------------------------------------------

def test_two_opt_uncrosses_square():
    sq = square()
    out = restricted_two_opt(sq, [0, 2, 1, 3])
    assert tour_length(sq, out) == pytest.approx(4.0)


def test_two_opt_respects_fixed_diagonals():
    sq = square()
    out = restricted_two_opt(sq, [0, 2, 1, 3], fixed={(0, 2), (1, 3)})
    assert tour_length(sq, out) == pytest.approx(2 + 2 * math.sqrt(2))
    assert {(0, 2), (1, 3)} <= tour_edges(out.tolist())


def test_two_opt_requires_fixed_in_tour():
    with pytest.raises(ValueError):
        restricted_two_opt(square(), [0, 1, 2, 3], fixed={(0, 2)})


def test_two_opt_random_tours_reach_local_optimum():
    for seed in range(100):
        inst = random_instance(40, seed)
        t = np.random.default_rng(seed).permutation(40)
        out = restricted_two_opt(inst, t, max_passes=10_000)
        assert tour_length(inst, out) <= tour_length(inst, t)
        assert not improving_move_exists(inst, out.tolist())


def test_two_opt_with_fixed_edges_against_scan():
    for seed in range(30):
        inst = random_instance(30, seed)
        rng = np.random.default_rng(seed)
        t = rng.permutation(30).tolist()
        edges = sorted(tour_edges(t))
        fixed = {edges[i] for i in rng.choice(len(edges), 8, replace=False)}
        out = restricted_two_opt(inst, t, fixed, max_passes=10_000)
        assert fixed <= tour_edges(out.tolist())
        assert tour_length(inst, out) <= tour_length(inst, t)
        assert not improving_move_exists(inst, out.tolist(), fixed)


def test_two_opt_integral_metric_exact():
    rng = np.random.default_rng(9)
    inst = Instance("i", np.round(rng.uniform(0, 100, (60, 2))), Metric.EUC_2D)
    out = restricted_two_opt(inst, np.arange(60), max_passes=10_000)
    assert not improving_move_exists(inst, out.tolist(), tol=0)


def test_two_opt_pass_cap():
    inst = random_instance(200, 0)
    t = np.random.default_rng(0).permutation(200)
    one = restricted_two_opt(inst, t, max_passes=1)
    full = restricted_two_opt(inst, t, max_passes=10_000)
    assert tour_length(inst, full) <= tour_length(inst, one) < tour_length(inst, t)


# -- solve --------------------------------------------------------------------

def test_solve_nn_phase3_improves_on_phase2():
    inst = random_instance(150, 2)
    res = solve(inst, SolveConfig(Policy.nearest(), enable_phase3=True))
    validate_tour(inst, res.tour)
    assert res.length <= res.phase2_length
    assert res.fixed_count <= res.promising_size <= 2 * inst.n
    assert set(res.timings) == {"candidates", "phase1", "phase2", "phase3"}


def test_solve_opt_never_beats_held_karp():
    for seed in range(10):
        inst = random_instance(8, seed)
        opt = held_karp(inst)
        res = solve(inst, SolveConfig(Policy.opt(opt.edge_set), enable_phase3=True))
        assert res.length >= opt.length - 1e-12


def test_solve_three_nodes():
    inst = Instance("tri", np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]), Metric.EUC_2D)
    for cl_kind in ("knn", "delaunay"):
        res = solve(inst, SolveConfig(Policy.nearest(), cl_kind=cl_kind))
        assert res.length == 12


def test_solve_is_deterministic_for_all_policies():
    inst = random_instance(70, 5)
    opt_edges = tour_edges(list(range(70)))
    policies = [Policy.nearest(), Policy.baseline((0.8, 0.6)), Policy.opt(opt_edges),
                Policy.model(Baseline(1, 60, 0.7), Baseline(2, 60, 0.3))]
    for policy in policies:
        for cl_kind in ("knn", "delaunay"):
            cfg = SolveConfig(policy, cl_kind=cl_kind, seed=4)
            a, b = solve(inst, cfg), solve(inst, cfg)
            assert np.array_equal(a.tour, b.tour)


@given(st.integers(0, 2**32), st.integers(3, 80),
       st.sampled_from(["nn", "baseline", "model", "opt"]),
       st.sampled_from(["knn", "delaunay"]), st.booleans())
def test_pipeline_invariants(seed, n, kind, cl_kind, ls):
    inst = random_instance(n, seed)
    rng = np.random.default_rng(seed)
    if kind == "nn":
        policy = Policy.nearest()
    elif kind == "baseline":
        policy = Policy.baseline(tuple(rng.random(2)))
    elif kind == "model":
        d = feature_dim(5)
        policy = Policy.model(Logistic(1, d, rng.normal(0, 2, d), 0.0),
                              Logistic(2, d, rng.normal(0, 2, d), 0.0))
    else:
        policy = Policy.opt(tour_edges(rng.permutation(n).tolist()))
    cl = build_candidates(inst, cl_kind)
    lp = build_promising_list(inst, cl)
    partial = phase1(inst, cl, lp, policy, seed)
    assert is_disjoint_paths(partial.fixed_edges, n)
    res = solve(inst, SolveConfig(policy, cl_kind=cl_kind, enable_phase3=ls, seed=seed))
    validate_tour(inst, res.tour)
    assert res.fixed_edges == frozenset(partial.fixed_edges)
    assert res.fixed_edges <= tour_edges(res.tour.tolist())
    assert res.length <= res.phase2_length + 1e-12
