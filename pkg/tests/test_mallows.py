import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_min_simplex, random_mallows_problem
from rsa_ensemble.errors import DegenerateSampleError, InvalidInputError
from rsa_ensemble.linalg import Dataset
from rsa_ensemble.mallows import (MallowsProblem, SimplexWeights, estimate_sigma2,
                                  mallows_criterion, solve_simplex_qp)


def _kkt(problem, w):
    G = problem.F.T @ problem.F
    g = G @ w - problem.F.T @ problem.y + problem.sigma2 * problem.dims
    return float(np.min(g - g @ w))


def test_simplex_weights_invariants():
    SimplexWeights([0.25, 0.75])
    for bad in ([0.5, 0.6], [-0.1, 1.1], [], [[1.0]]):
        with pytest.raises(InvalidInputError):
            SimplexWeights(bad)
    u = SimplexWeights.uniform(7)
    assert abs(u.w.sum() - 1) <= 1e-12 and len(u) == 7


def test_problem_validation():
    with pytest.raises(InvalidInputError):
        MallowsProblem(np.ones((3, 2)), [1.0], 1.0, np.ones(3))
    with pytest.raises(InvalidInputError):
        MallowsProblem(np.ones((3, 1)), [-1.0], 1.0, np.ones(3))
    with pytest.raises(InvalidInputError):
        MallowsProblem(np.ones((3, 1)), [1.0], 0.0, np.ones(3))
    with pytest.raises(InvalidInputError):
        MallowsProblem(np.full((3, 1), np.nan), [1.0], 1.0, np.ones(3))
    with pytest.raises(InvalidInputError):
        MallowsProblem(np.ones((2, 1)), [1.0], 1.0, np.ones(3))


def test_criterion_examples():
    y = np.array([1.0, -2.0, 0.5])
    p1 = MallowsProblem(y[:, None], [2.0], 1.0, y)
    assert mallows_criterion(p1, [1.0]) == pytest.approx(4.0)
    p2 = MallowsProblem(np.eye(2), [1.0, 2.0], 1.0, np.ones(2))
    assert mallows_criterion(p2, SimplexWeights([1.0, 0.0])) == pytest.approx(3.0)
    assert grid_min_simplex(np.eye(2), [1.0, 2.0], 1.0, np.ones(2)) == pytest.approx(3.0)
    with pytest.raises(InvalidInputError):
        mallows_criterion(p2, [1.0])


def test_vertex_reduction():
    g = np.random.default_rng(0)
    F, d, s2, y = random_mallows_problem(g, 4)
    p = MallowsProblem(F, d, s2, y)
    for m in range(4):
        e = np.eye(4)[m]
        direct = float((y - F[:, m]) @ (y - F[:, m]) + 2 * s2 * d[m])
        assert mallows_criterion(p, e) == pytest.approx(direct)


def test_solver_examples():
    assert solve_simplex_qp(MallowsProblem(np.ones((3, 1)), [1.0], 1.0, np.ones(3))).w.tolist() == [1.0]
    c = np.array([1.0, 2.0, -1.0, 0.5])
    dup = solve_simplex_qp(MallowsProblem(np.column_stack([c, c]), [1.0, 1.0], 1.0, 2 * c))
    np.testing.assert_allclose(dup.w, [0.5, 0.5], atol=1e-12)
    p = MallowsProblem(np.eye(2), [1.0, 2.0], 1.0, np.ones(2))
    w = solve_simplex_qp(p)
    np.testing.assert_allclose(w.w, [1.0, 0.0], atol=1e-12)
    assert mallows_criterion(p, w) == pytest.approx(3.0)
    with pytest.raises(InvalidInputError):
        solve_simplex_qp(p, tol=0.1)
    with pytest.raises(InvalidInputError):
        solve_simplex_qp(p, tol=0.0)


def test_min_norm_on_flat_face():
    # Three identical candidates: every simplex point is optimal; the minimum-norm one is uniform.
    c = np.array([1.0, 0.0, 2.0])
    w = solve_simplex_qp(MallowsProblem(np.column_stack([c, c, c]), [2.0] * 3, 0.5, c + 1))
    np.testing.assert_allclose(w.w, np.full(3, 1 / 3), atol=1e-12)
    # Two identical plus one clearly worse candidate: split the duplicates evenly.
    F = np.column_stack([c, c, -c])
    w = solve_simplex_qp(MallowsProblem(F, [1.0, 1.0, 1.0], 0.1, c))
    np.testing.assert_allclose(w.w, [0.5, 0.5, 0.0], atol=1e-12)


@pytest.mark.parametrize("M", [2, 3])
def test_grid_oracle_small(M):
    g = np.random.default_rng(100 + M)
    for _ in range(15):
        F, d, s2, y = random_mallows_problem(g, M)
        w = solve_simplex_qp(MallowsProblem(F, d, s2, y))
        assert mallows_criterion(MallowsProblem(F, d, s2, y), w) <= grid_min_simplex(F, d, s2, y, 200) + 1e-6


problems = st.tuples(st.integers(1, 25), st.integers(2, 40), st.integers(0, 2**32 - 1),
                     st.sampled_from(["plain", "dup", "collinear", "lowrank"]))


@settings(max_examples=300, deadline=None)
@given(problems)
def test_solver_contract(args):
    M, N, seed, kind = args
    g = np.random.default_rng(seed)
    F = g.standard_normal((N, M))
    if kind == "dup" and M > 1:
        F[:, -1] = F[:, 0]
    elif kind == "collinear" and M > 2:
        F[:, -1] = 0.5 * F[:, 0] + 0.5 * F[:, 1]
    elif kind == "lowrank":
        F = F[:, :1] @ g.standard_normal((1, M))
    y = g.standard_normal(N) * g.uniform(0.1, 10)
    d = g.uniform(0, 5, M)
    p = MallowsProblem(F, d, g.uniform(0.1, 2), y)
    w = solve_simplex_qp(p)
    assert np.all(w.w >= 0) and np.all(w.w <= 1) and abs(w.w.sum() - 1) <= 1e-12
    vertex_best = min(mallows_criterion(p, np.eye(M)[m]) for m in range(M))
    assert mallows_criterion(p, w) <= vertex_best + 1e-9 * max(1.0, abs(vertex_best))
    scale = max(1.0, float(y @ y), float(np.max(np.sum(F**2, axis=0))))
    assert _kkt(p, w.w) / scale >= -1e-9
    assert w.kkt_residual <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_duplicate_column_never_increases_optimum(M, seed):
    g = np.random.default_rng(seed)
    F, d, s2, y = random_mallows_problem(g, M)
    p = MallowsProblem(F, d, s2, y)
    j = int(g.integers(M))
    p2 = MallowsProblem(np.column_stack([F, F[:, j]]), np.append(d, d[j]), s2, y)
    v1 = mallows_criterion(p, solve_simplex_qp(p))
    v2 = mallows_criterion(p2, solve_simplex_qp(p2))
    assert v2 <= v1 + 1e-9 * max(1.0, abs(v1))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1), st.floats(1.01, 10))
def test_effective_dimension_decreases_with_penalty(M, seed, factor):
    g = np.random.default_rng(seed)
    F, d, s2, y = random_mallows_problem(g, M)
    w1 = solve_simplex_qp(MallowsProblem(F, d, s2, y)).w
    w2 = solve_simplex_qp(MallowsProblem(F, d, s2 * factor, y)).w
    assert d @ w2 <= d @ w1 + 1e-6


def test_estimate_sigma2_noise_free_and_small():
    g = np.random.default_rng(0)
    X = g.standard_normal((20, 4))
    assert estimate_sigma2(Dataset(X, X @ np.ones(4))) == pytest.approx(1e-12, abs=1e-12)
    X3 = np.array([[1.0, 5.0], [2.0, -1.0], [2.0, 0.0]])
    y3 = np.array([1.0, 1.0, 3.0])
    # k* = min(2, 1) = 1, rank 1: RSS of the single-column fit over N - 1 = 2.
    b = (X3[:, 0] @ y3) / (X3[:, 0] @ X3[:, 0])
    rss = float(np.sum((y3 - b * X3[:, 0]) ** 2))
    assert estimate_sigma2(Dataset(X3, y3)) == pytest.approx(rss / 2)


def test_estimate_sigma2_degenerate():
    with pytest.raises(DegenerateSampleError):
        estimate_sigma2(Dataset(np.array([[1.0]]), np.array([2.0])))
    # N = 2 leaves one degree of freedom after the single-column fit.
    d = Dataset(np.array([[1.0], [1.0]]), np.array([1.0, 3.0]))
    assert estimate_sigma2(d) == pytest.approx(2.0)


def test_estimate_sigma2_concentration():
    g = np.random.default_rng(4)
    N, K = 400, 10
    est = []
    for _ in range(100):
        Q, _ = np.linalg.qr(g.standard_normal((N, K)))
        est.append(estimate_sigma2(Dataset(Q * np.sqrt(N), g.standard_normal(N))))
    est = np.array(est)
    assert np.all(np.abs(est - 1) <= 0.2)


@pytest.mark.parametrize("M", [2, 3, 4])
def test_fast_grid_oracle_matches_enumeration(M):
    from oracles import _grid_min_bruteforce
    g = np.random.default_rng(M)
    for _ in range(5):
        F, d, s2, y = random_mallows_problem(g, M)
        assert grid_min_simplex(F, d, s2, y, 24) == pytest.approx(
            _grid_min_bruteforce(F, d, s2, y, 24), rel=1e-12, abs=1e-12)
