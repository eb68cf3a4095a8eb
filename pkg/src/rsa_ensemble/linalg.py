"""Rank-safe least squares.

Every estimator in the package fits its candidates through
:func:`least_squares_min_norm`, which returns the minimum-norm solution
computed from a thin SVD with a relative singular-value cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rsa_ensemble.errors import InvalidInputError

DEFAULT_RTOL = 1e-10


def _as_matrix(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return X


def _as_vector(y, name="y"):
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise InvalidInputError(f"{name} must be 1-dimensional, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return y


def _check_rtol(rtol):
    if not 0.0 < rtol < 1.0:
        raise InvalidInputError(f"rtol must lie in (0, 1), got {rtol}")


@dataclass(frozen=True)
class Dataset:
    """Regression sample: an ``N x K`` design matrix and a length-``N`` response."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _as_matrix(self.X)
        y = _as_vector(self.y)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise InvalidInputError(f"design must have N >= 1 and K >= 1, got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise InvalidInputError(f"y has length {y.shape[0]} but X has {X.shape[0]} rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def N(self) -> int:
        return self.X.shape[0]

    @property
    def K(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows])


@dataclass(frozen=True)
class LsqSolution:
    """Minimum-norm least-squares fit on a column subset."""

    beta: np.ndarray
    rank: int
    rss: float


def _svd_rank(s, rtol):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rtol * s[0]))


def least_squares_min_norm(Xsub, y, rtol: float = DEFAULT_RTOL) -> LsqSolution:
    """Minimum-norm least-squares solution of ``Xsub @ beta ~ y``.

    Singular values at or below ``rtol`` times the largest one are dropped,
    so ``rank`` is the numerical rank of ``Xsub``. A design with zero columns
    yields an empty coefficient vector, rank 0 and ``rss = ||y||^2``.
    """
    _check_rtol(rtol)
    y = _as_vector(y)
    Xsub = np.asarray(Xsub, dtype=float)
    if Xsub.ndim == 2 and Xsub.shape[1] == 0:
        if Xsub.shape[0] != y.shape[0]:
            raise InvalidInputError("row count of Xsub does not match length of y")
        return LsqSolution(beta=np.zeros(0), rank=0, rss=float(y @ y))
    Xsub = _as_matrix(Xsub, "Xsub")
    if Xsub.shape[0] != y.shape[0]:
        raise InvalidInputError(
            f"Xsub has {Xsub.shape[0]} rows but y has length {y.shape[0]}"
        )
    U, s, Vt = np.linalg.svd(Xsub, full_matrices=False)
    r = _svd_rank(s, rtol)
    coef = (U[:, :r].T @ y) / s[:r]
    beta = Vt[:r].T @ coef
    resid = y - Xsub @ beta
    return LsqSolution(beta=beta, rank=r, rss=float(resid @ resid))


def fitted_values(Xsub, solution: LsqSolution) -> np.ndarray:
    """``Xsub @ beta``: the projection of the fitted response onto span(Xsub)."""
    Xsub = np.asarray(Xsub, dtype=float)
    if Xsub.ndim != 2:
        raise InvalidInputError(f"Xsub must be 2-dimensional, got shape {Xsub.shape}")
    if Xsub.shape[1] != solution.beta.shape[0]:
        raise InvalidInputError(
            f"Xsub has {Xsub.shape[1]} columns but solution has {solution.beta.shape[0]} coefficients"
        )
    if Xsub.shape[1] == 0:
        return np.zeros(Xsub.shape[0])
    return Xsub @ solution.beta


def projection_dim(Xsub, rtol: float = DEFAULT_RTOL) -> int:
    """Numerical rank of ``Xsub``, i.e. the trace of its column-space projector."""
    _check_rtol(rtol)
    Xsub = np.asarray(Xsub, dtype=float)
    if Xsub.ndim == 2 and Xsub.shape[1] == 0:
        return 0
    Xsub = _as_matrix(Xsub, "Xsub")
    s = np.linalg.svd(Xsub, compute_uv=False)
    return _svd_rank(s, rtol)
