"""Mallows model averaging over the probability simplex.

The weighting problem is

    minimize  ||y - F w||^2 + 2 sigma2 * dims . w   over  w >= 0, sum(w) = 1,

a convex (possibly only semidefinite) quadratic program. It is solved exactly
by a primal active-set method; when the minimizer is not unique the
minimum-Euclidean-norm minimizer is returned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from rsa_ensemble.errors import DegenerateSampleError, InvalidInputError
from rsa_ensemble.linalg import DEFAULT_RTOL, Dataset, least_squares_min_norm

DEFAULT_TOL = 1e-9
SIGMA2_FLOOR = 1e-12

# Reduced-Hessian eigenvalues below this fraction of max(lambda_max, 1) count as flat.
_CURVATURE_RTOL = 1e-11


@dataclass(frozen=True)
class MallowsProblem:
    """Data of one Mallows weighting round.

    Column ``m`` of ``F`` is the fitted vector of candidate ``m`` and
    ``dims[m]`` its effective dimension.
    """

    F: np.ndarray
    dims: np.ndarray
    sigma2: float
    y: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        if F.ndim == 1:
            F = F[:, None]
        dims = np.atleast_1d(np.asarray(self.dims, dtype=float))
        y = np.asarray(self.y, dtype=float)
        if F.ndim != 2 or y.ndim != 1 or dims.ndim != 1:
            raise InvalidInputError("F must be 2-d, y and dims 1-d")
        if F.shape[0] != y.shape[0]:
            raise InvalidInputError(f"F has {F.shape[0]} rows but y has length {y.shape[0]}")
        if F.shape[1] != dims.shape[0]:
            raise InvalidInputError(f"F has {F.shape[1]} columns but dims has length {dims.shape[0]}")
        if F.shape[1] < 1:
            raise InvalidInputError("need at least one candidate")
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(y)) and np.all(np.isfinite(dims))):
            raise InvalidInputError("Mallows problem data must be finite")
        if np.any(dims < 0):
            raise InvalidInputError("effective dimensions must be nonnegative")
        sigma2 = float(self.sigma2)
        if not (np.isfinite(sigma2) and sigma2 > 0):
            raise InvalidInputError(f"sigma2 must be positive and finite, got {self.sigma2}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def M(self) -> int:
        return self.F.shape[1]


@dataclass(frozen=True)
class SimplexWeights:
    """Convex weights: entries in [0, 1] summing to one."""

    w: np.ndarray
    kkt_residual: float = 0.0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.w, dtype=float)).copy()
        if w.ndim != 1 or w.size == 0:
            raise InvalidInputError("weights must be a non-empty 1-d vector")
        if np.any(w < 0) or np.any(w > 1) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"weights are not on the simplex: {w}")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def uniform(cls, M: int) -> "SimplexWeights":
        return cls(np.full(M, 1.0 / M))

    def __len__(self):
        return self.w.shape[0]


def _normalize(w):
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    # One Newton-like correction pushes the sum to within an ulp of 1.
    i = int(np.argmax(w))
    w[i] += 1.0 - w.sum()
    return np.clip(w, 0.0, 1.0)


def estimate_sigma2(dataset: Dataset, rtol: float = DEFAULT_RTOL) -> float:
    """Residual variance of the nested model on the first ``min(K, N // 2)`` columns."""
    if dataset.N < 2:
        raise DegenerateSampleError("cannot estimate sigma2 from a single observation")
    k_star = min(dataset.K, dataset.N // 2)
    sol = least_squares_min_norm(dataset.X[:, :k_star], dataset.y, rtol)
    dof = dataset.N - sol.rank
    if dof <= 0:
        raise DegenerateSampleError(
            f"cannot estimate sigma2: N - rank = {dof} with N={dataset.N}"
        )
    return max(sol.rss / dof, SIGMA2_FLOOR)


def mallows_value(y, fitted, dim, sigma2) -> float:
    """Mallows criterion of a single prediction vector with effective dimension ``dim``."""
    r = np.asarray(y, dtype=float) - np.asarray(fitted, dtype=float)
    return float(r @ r + 2.0 * sigma2 * dim)


def mallows_criterion(problem: MallowsProblem, w) -> float:
    w = w.w if isinstance(w, SimplexWeights) else np.asarray(w, dtype=float)
    if w.shape != (problem.M,):
        raise InvalidInputError(f"weights have shape {w.shape}, expected ({problem.M},)")
    return mallows_value(problem.y, problem.F @ w, problem.dims @ w, problem.sigma2)


def _complement_basis(n):
    """Orthonormal basis (n x n-1) of the vectors summing to zero."""
    q, _ = np.linalg.qr(np.ones((n, 1)), mode="complete")
    return q[:, 1:]


def _reduced_eig(G, S):
    Z = _complement_basis(len(S))
    H = Z.T @ G[np.ix_(S, S)] @ Z
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    flat = lam <= _CURVATURE_RTOL * max(lam.max(initial=0.0), 1.0)
    return Z, lam, V, flat


def _step(G, g, S, grad_tol):
    """Step on the free set ``S`` keeping sum(w) fixed.

    Returns ``(p, bounded)``; ``p`` is None when the current point already
    minimizes over the face. ``bounded`` is False for a zero-curvature descent
    direction, which must be followed until a bound becomes active.
    """
    if len(S) < 2:
        return None, True
    Z, lam, V, flat = _reduced_eig(G, S)
    rv = V.T @ (Z.T @ g[S])
    descent = flat & (np.abs(rv) > grad_tol)
    q = np.zeros_like(rv)
    if descent.any():
        q[descent] = -rv[descent]
        return Z @ (V @ q), False
    q[~flat] = -rv[~flat] / lam[~flat]
    p = Z @ (V @ q)
    if np.max(np.abs(p)) <= 1e-15:
        return None, True
    return p, True


def _min_norm_tiebreak(G, w, g, tol):
    """Move to the minimum-norm point of the optimal face through ``w``."""
    nu = g - g @ w
    T = np.flatnonzero((w > 0) | (nu <= tol))
    if T.size < 2:
        return w
    Z, lam, V, flat = _reduced_eig(G, T)
    if not flat.any():
        return w
    Nb = Z @ V[:, flat]
    wT = w[T]
    perp = wT - Nb @ (Nb.T @ wT)
    # Least-distance program  min ||x||  s.t.  Nb x >= -perp, via NNLS.
    r = Nb.shape[1]
    A = np.vstack([Nb.T, -perp[None, :]])
    b = np.zeros(r + 1)
    b[-1] = 1.0
    u, _ = nnls(A, b, maxiter=50 * A.shape[1])
    res = A @ u - b
    if abs(res[-1]) < 1e-14:
        return w
    x = -res[:r] / res[-1]
    out = np.zeros_like(w)
    out[T] = np.clip(perp + Nb @ x, 0.0, None)
    return out


def solve_simplex_qp(problem: MallowsProblem, tol: float = DEFAULT_TOL) -> SimplexWeights:
    """Exact minimizer of the Mallows criterion over the simplex.

    The KKT residual is measured on the criterion divided by
    ``max(1, ||y||^2, max_m ||F_m||^2)``: at the returned point the
    directional derivative towards every vertex is at least ``-tol``.
    """
    if not 0.0 < tol <= 1e-2:
        raise InvalidInputError(f"tol must lie in (0, 1e-2], got {tol}")
    F, y, d = problem.F, problem.y, problem.dims
    M = problem.M
    if M == 1:
        return SimplexWeights(np.ones(1))

    G = F.T @ F
    c = -(F.T @ y) + problem.sigma2 * d
    scale = max(1.0, float(y @ y), float(np.max(np.diag(G))))
    G = G / scale
    c = c / scale
    grad_tol = 1e-3 * tol

    # Start from the best vertex, then only descend.
    j0 = int(np.argmin(0.5 * np.diag(G) + c))
    w = np.zeros(M)
    w[j0] = 1.0
    S = [j0]
    at_face_min = True
    for _ in range(50 * M + 100):
        g = G @ w + c
        # After a full unblocked step w already minimizes over the current face.
        p, bounded = (None, True) if at_face_min else _step(G, g, S, grad_tol)
        if p is None:
            nu = g - g[S].mean()
            nu[S] = np.inf
            i = int(np.argmin(nu))
            if nu[i] >= -tol:
                break
            S.append(i)
            at_face_min = False
            continue
        alpha = 1.0 if bounded else np.inf
        blocking = None
        for pos, j in enumerate(S):
            if p[pos] < 0:
                a = w[j] / -p[pos]
                if a < alpha:
                    alpha, blocking = a, j
        w[S] += alpha * p
        if blocking is not None:
            w[blocking] = 0.0
            S.remove(blocking)
        w[w < 0] = 0.0
        at_face_min = bounded and blocking is None

    g = G @ w + c
    w = _min_norm_tiebreak(G, w, g, tol)
    w = _normalize(w)
    g = G @ w + c
    resid = max(0.0, -float(np.min(g - g @ w)))
    return SimplexWeights(w, kkt_residual=resid)
