import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_bounds, random_volumes, simplex_scores
from volmbo import oracle
from volmbo.errors import ConstraintError, InputError, ParameterError
from volmbo.osstat import (Clustering, Exact, Interval, assignment_reduce,
                           direction, error_energy, feasible_seed_for_interval,
                           induced_clustering, lagrange_multiplier, objective,
                           satisfies_interval_criterion, separation_violation,
                           solve_equality, solve_interval,
                           variational_objective)


# -- induced clustering and error energy --------------------------------------

def test_induced_translation_invariant(rng):
    u = simplex_scores(rng, 50, 4)
    m = rng.normal(size=4)
    a = induced_clustering(u, m).assign
    assert np.array_equal(a, induced_clustering(u, m + 3.7).assign)


def test_induced_direct_argmax():
    assert induced_clustering([[0.7, 0.3]], [0.5, 0.5]).assign[0] == 0


def test_induced_tie_goes_to_lowest_index():
    u = np.full((1, 3), 1 / 3)
    assert induced_clustering(u, np.full(3, 1 / 3)).assign[0] == 0


def test_error_energy_examples(rng):
    c = Clustering(np.zeros(4, int), 2)
    assert error_energy(c, [2, 2]) == 4
    assert error_energy(Clustering([0, 1, 0, 1], 2), [2, 2]) == 0
    for _ in range(20):
        P = int(rng.integers(2, 6))
        n = int(rng.integers(1, 40))
        c = Clustering(rng.integers(0, P, n), P)
        V = random_volumes(rng, n, P)
        recount = sum(abs(sum(c.assign == i) - V[i]) for i in range(P))
        assert error_energy(c, V) == recount
        assert error_energy(c, V) % 2 == 0


def test_error_energy_rejects_interval():
    with pytest.raises(ConstraintError):
        error_energy(Clustering([0, 1], 2), Interval([0, 0], [2, 2]))


# -- direction ---------------------------------------------------------------

@pytest.mark.parametrize("T,expected", [
    ({0}, [-1.0, 0.5, 0.5]),
    ({0, 1}, [-0.5, -0.5, 1.0]),
])
def test_direction_examples(T, expected):
    assert np.allclose(direction(T, 3), expected, atol=1e-15)


@given(P=st.integers(2, 9), data=st.data())
def test_direction_rates(P, data):
    T = data.draw(st.sets(st.integers(0, P - 1), min_size=1, max_size=P - 1))
    d = direction(T, P)
    assert abs(d.sum()) < 1e-12
    c = 1 + 1 / (P - 1)
    for i in T:
        for j in set(range(P)) - T:
            assert abs((d[j] - d[i]) - c) < 1e-12
        for i2 in T:
            assert abs(d[i] - d[i2]) < 1e-12


def test_direction_full_set_rejected():
    with pytest.raises(ParameterError):
        direction({0, 1, 2}, 3)


# -- equality solver ---------------------------------------------------------

def test_equality_already_feasible():
    os_, stats = solve_equality([[1, 0], [0, 1]], [1, 1], [0.5, 0.5])
    assert stats.outer_iterations == 0
    assert list(os_.assign) == [0, 1]


def test_equality_against_exhaustive(rng):
    for _ in range(50):
        n = int(rng.integers(1, 13))
        P = int(rng.integers(2, 4))
        u = simplex_scores(rng, n, P)
        V = random_volumes(rng, n, P)
        os_, stats = solve_equality(u, V, rng.normal(size=P))
        best, _ = oracle.exhaustive_optimum(u, V)
        assert objective(u, os_.induced) == pytest.approx(best, abs=1e-12)
        assert np.array_equal(os_.induced.volumes, V)


def test_equality_against_flow(rng):
    for _ in range(40):
        n = int(rng.integers(4, 300))
        P = int(rng.integers(2, 9))
        u = simplex_scores(rng, n, P)
        V = random_volumes(rng, n, P)
        os_, stats = solve_equality(u, V)
        assert objective(u, os_.induced) == pytest.approx(
            oracle.mincostflow_optimum(u, V), abs=1e-9)
        assert separation_violation(u, os_.m, os_.assign) <= os_.tol
        e0 = error_energy(induced_clustering(u, np.zeros(P)), V)
        assert 2 * stats.outer_iterations == e0 == stats.initial_error


def test_equality_scalar_case_is_order_statistic(rng):
    for _ in range(30):
        n = int(rng.integers(2, 80))
        t = rng.random(n)
        u = np.stack([t, 1 - t], axis=1)
        V1 = int(rng.integers(1, n))
        os_, _ = solve_equality(u, [V1, n - V1])
        chosen = np.sort(t[os_.assign == 0])
        assert np.array_equal(chosen, np.sort(t)[n - V1:])


def test_equality_translation_of_start(rng):
    u = simplex_scores(rng, 120, 5)
    V = random_volumes(rng, 120, 5)
    m0 = rng.normal(size=5)
    a = solve_equality(u, V, m0)[0].assign
    b = solve_equality(u, V, m0 + 2.5)[0].assign
    assert np.array_equal(a, b)


def test_equality_empty_cluster(rng):
    u = simplex_scores(rng, 30, 4)
    V = np.array([0, 10, 20, 0])
    os_, _ = solve_equality(u, V)
    assert np.array_equal(os_.induced.volumes, V)
    assert objective(u, os_.induced) == pytest.approx(oracle.mincostflow_optimum(u, V), abs=1e-12)


def test_equality_single_cluster():
    os_, stats = solve_equality(np.ones((5, 1)), [5])
    assert np.all(os_.assign == 0) and stats.outer_iterations == 0


def test_equality_errors():
    with pytest.raises(ConstraintError):
        solve_equality(np.ones((3, 2)), [1, 1])
    with pytest.raises(InputError):
        solve_equality(np.array([[np.nan, 0], [0, 1]]), [1, 1])
    with pytest.raises(ConstraintError):
        solve_equality(np.ones((3, 2)), [1, 1, 1])


def test_debug_trace_records_paths(rng):
    u = simplex_scores(rng, 60, 4)
    V = random_volumes(rng, 60, 4)
    os_, stats = solve_equality(u, V, debug=True)
    assert len(os_.trace) == stats.outer_iterations
    for p in os_.trace:
        assert len(p.nodes) == len(p.points) + 1
        assert p.nodes[-1] in p.tree and p.nodes[0] in p.tree
        assert p.gain == pytest.approx(p.predicted_gain, abs=1e-9)
    lines = os_.trace_jsonl().splitlines()
    assert len(lines) == len(os_.trace)
    rec = json.loads(lines[0])
    assert set(rec) >= {"iteration", "nodes", "points", "m_before", "m_after"}


# -- interval solver ---------------------------------------------------------

def test_interval_collapses_to_equality(rng):
    for _ in range(20):
        n, P = int(rng.integers(2, 100)), int(rng.integers(2, 6))
        u = simplex_scores(rng, n, P)
        V = random_volumes(rng, n, P)
        a = objective(u, solve_equality(u, V)[0].induced)
        b = objective(u, solve_interval(u, Interval(V, V))[0].induced)
        assert a == pytest.approx(b, abs=1e-12)


def test_interval_vacuous_bounds(rng):
    u = simplex_scores(rng, 80, 4)
    os_, _ = solve_interval(u, Interval(np.zeros(4), np.full(4, 80)))
    assert objective(u, os_.induced) == pytest.approx(u.max(axis=1).sum(), abs=1e-12)


def test_interval_against_oracles(rng):
    for _ in range(60):
        n = int(rng.integers(1, 11))
        P = int(rng.integers(2, 4))
        u = simplex_scores(rng, n, P)
        LU = Interval(*random_bounds(rng, n, P))
        os_, _ = solve_interval(u, LU, rng.normal(size=P), debug=True)
        best, _ = oracle.exhaustive_optimum(u, LU)
        assert objective(u, os_.induced) == pytest.approx(best, abs=1e-12)
        assert LU.admits(os_.induced.volumes)
        assert satisfies_interval_criterion(os_.m, os_.induced.volumes, LU, os_.tol)


def test_interval_paths_have_positive_gain(rng):
    seen = 0
    for _ in range(30):
        n, P = 200, int(rng.integers(2, 7))
        u = simplex_scores(rng, n, P)
        V = random_volumes(rng, n, P)
        LU = Interval(np.maximum(V - 15, 0), V + 15)
        os_, stats = solve_interval(u, LU, np.zeros(P), debug=True)
        paths = [p for p in os_.trace if p.phase == "interval"]
        seen += len(paths)
        assert stats.interval_iterations == len(paths)
        for p in paths:
            assert p.gain > 0
            assert p.gain == pytest.approx(p.predicted_gain, abs=1e-9)
    assert seen > 0


def test_feasible_seed_examples():
    u = np.tile([1.0, 0.0], (10, 1))
    assert list(feasible_seed_for_interval(u, Interval([3, 3], [7, 7]))) == [7, 3]
    u = np.eye(2)[[0, 0, 1, 1]]
    assert list(feasible_seed_for_interval(u, Interval([1, 1], [3, 3]))) == [2, 2]
    assert list(feasible_seed_for_interval(u, Interval([1, 3], [1, 3]))) == [1, 3]


@given(st.integers(0, 10_000))
@settings(max_examples=50, deadline=None)
def test_feasible_seed_in_bounds(seed):
    rng = np.random.default_rng(seed)
    n, P = int(rng.integers(1, 60)), int(rng.integers(2, 6))
    L, U = random_bounds(rng, n, P)
    V = feasible_seed_for_interval(simplex_scores(rng, n, P), Interval(L, U))
    assert V.sum() == n and np.all(V >= L) and np.all(V <= U)


def test_interval_infeasible():
    with pytest.raises(ConstraintError):
        solve_interval(np.ones((5, 2)), Interval([3, 3], [4, 4]))
    with pytest.raises(ConstraintError):
        Interval([2, 0], [1, 3])


def test_criterion_checker_detects_violation():
    LU = Interval([0, 0], [5, 5])
    assert satisfies_interval_criterion([0.5, 0.5], [2, 3], LU)
    assert not satisfies_interval_criterion([0.9, 0.1], [2, 3], LU)
    assert satisfies_interval_criterion([0.9, 0.1], [5, 0], LU)


# -- closed forms ------------------------------------------------------------

def test_lagrange_multiplier():
    assert np.allclose(lagrange_multiplier(np.full(4, 0.25), 0.3), 0)
    m = np.array([0.1, 0.5, 0.2])
    lam = lagrange_multiplier(m, 2.0)
    assert abs(lam.sum()) < 1e-12
    assert np.allclose(lam, lagrange_multiplier(m + 5, 2.0), atol=1e-12)


def test_variational_objective_minimized(rng):
    u = simplex_scores(rng, 100, 4)
    V = random_volumes(rng, 100, 4)
    os_, _ = solve_equality(u, V)
    F = variational_objective(u, os_.m, V)
    assert variational_objective(u, os_.m + 3.0, V) == pytest.approx(F, abs=1e-9)
    for eps in (1e-1, 1e-3, 1e-6):
        for _ in range(300):
            assert F <= variational_objective(u, os_.m + eps * rng.normal(size=4), V) + 1e-9


def test_variational_grid_search(rng):
    u = simplex_scores(rng, 8, 2)
    V = [3, 5]
    os_, _ = solve_equality(u, V)
    grid = np.linspace(-1.5, 1.5, 3001)
    vals = [variational_objective(u, [0.0, g], V) for g in grid]
    F = variational_objective(u, os_.m, V)
    assert F <= min(vals) + 1e-12
    assert min(vals) - F < 2e-3


def test_assignment_reduce(rng):
    assert list(assignment_reduce(1 - np.eye(5))) == list(range(5))
    for _ in range(20):
        C = rng.integers(0, 20, (3, 3)).astype(float)
        perm = assignment_reduce(C)
        best = min(sum(C[i, p[i]] for i in range(3)) for p in itertools.permutations(range(3)))
        assert sum(C[i, perm[i]] for i in range(3)) == best
        assert sorted(perm) == [0, 1, 2]
    with pytest.raises(ParameterError):
        assignment_reduce(np.ones((2, 3)))


def test_clustering_types():
    c = Clustering([0, 2, 2], 3)
    assert list(c.volumes) == [1, 0, 2]
    assert c.onehot().sum() == 3
    with pytest.raises(ValueError):
        Clustering([0, 3], 3)
    with pytest.raises(ConstraintError):
        Exact([1.5, 2])
