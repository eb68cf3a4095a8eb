"""Comparison estimators built on the same least-squares core.

* RSR: equal-weight average of OLS fits on random subsets of fixed size ``P``.
* Nested MMA: Mallows averaging over prefix models ``{1}, {1,2}, ...``.
* RPR: equal-weight average of OLS fits on Gaussian random projections.
* Naive: equal-weight average over every candidate of a mask ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rsa_ensemble.errors import InvalidInputError
from rsa_ensemble.linalg import DEFAULT_RTOL, Dataset, least_squares_min_norm
from rsa_ensemble.mallows import (
    DEFAULT_TOL,
    MallowsProblem,
    SimplexWeights,
    estimate_sigma2,
    solve_simplex_qp,
)
from rsa_ensemble.rsa import fit_candidates
from rsa_ensemble.subsets import MaskEnsemble, RngStream, fixed_size_mask, gaussian_projection, nested_masks

DEFAULT_B = 500

# Stream namespaces so RSR and RPR draws from one seed never coincide.
_RSR_STREAM = 0
_RPR_STREAM = 1


@dataclass(frozen=True)
class BaselineModel:
    kind: str
    beta_agg: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    weights: SimplexWeights
    meta: dict = field(default_factory=dict)


def _uniform_average(dataset, candidates, kind, meta):
    F = np.column_stack([c.fitted for c in candidates])
    B = np.column_stack([c.beta_padded for c in candidates])
    return BaselineModel(kind, B.mean(axis=1), F.mean(axis=1),
                         SimplexWeights.uniform(len(candidates)), meta)


def fit_rsr(dataset: Dataset, P: int, B: int = DEFAULT_B, seed: int = 0,
            rtol: float = DEFAULT_RTOL) -> BaselineModel:
    if not 1 <= P <= dataset.K:
        raise InvalidInputError(f"need 1 <= P <= K, got P={P}, K={dataset.K}")
    if B < 1:
        raise InvalidInputError(f"B must be positive, got {B}")
    masks = [fixed_size_mask(P, dataset.K, RngStream(seed, (_RSR_STREAM, b))) for b in range(B)]
    candidates = fit_candidates(dataset, masks, rtol)
    return _uniform_average(dataset, candidates, "rsr", {"P": P, "B": B, "seed": seed})


def fit_nested_mma(dataset: Dataset, sigma2: float | None = None,
                   rtol: float = DEFAULT_RTOL, tol: float = DEFAULT_TOL) -> BaselineModel:
    """Mallows averaging over the first ``min(K, N - 2)`` nested models."""
    if dataset.N < 4:
        raise InvalidInputError(f"nested MMA needs N >= 4, got N={dataset.N}")
    masks = nested_masks(dataset.K, min(dataset.K, dataset.N - 2))
    candidates = fit_candidates(dataset, masks, rtol)
    if sigma2 is None:
        sigma2 = estimate_sigma2(dataset, rtol)
    F = np.column_stack([c.fitted for c in candidates])
    B = np.column_stack([c.beta_padded for c in candidates])
    dims = np.array([c.k for c in candidates])
    w = solve_simplex_qp(MallowsProblem(F, dims, sigma2, dataset.y), tol)
    return BaselineModel("mma", B @ w.w, F @ w.w, w,
                         {"n_models": len(masks), "sigma2": float(sigma2)})


def fit_rpr(dataset: Dataset, P: int, B: int = DEFAULT_B, seed: int = 0,
            projections=None, rtol: float = DEFAULT_RTOL) -> BaselineModel:
    """Average of OLS fits on ``X @ R_b`` for Gaussian ``K x P`` projections ``R_b``.

    ``projections`` overrides the random draws with explicit ``K x P``
    matrices (``B`` is then their count).
    """
    if P < 1:
        raise InvalidInputError(f"P must be positive, got {P}")
    if projections is None:
        if B < 1:
            raise InvalidInputError(f"B must be positive, got {B}")
        projections = (gaussian_projection(dataset.K, P, RngStream(seed, (_RPR_STREAM, b)))
                       for b in range(B))
    fits, betas = [], []
    for R in projections:
        R = np.asarray(R, dtype=float)
        if R.shape != (dataset.K, P):
            raise InvalidInputError(f"projection must be {dataset.K} x {P}, got {R.shape}")
        Z = dataset.X @ R
        sol = least_squares_min_norm(Z, dataset.y, rtol)
        fits.append(Z @ sol.beta)
        betas.append(R @ sol.beta)
    if not fits:
        raise InvalidInputError("need at least one projection")
    n = len(fits)
    return BaselineModel("rpr", np.mean(betas, axis=0), np.mean(fits, axis=0),
                         SimplexWeights.uniform(n), {"P": P, "B": n, "seed": seed})


def fit_naive(dataset: Dataset, ensemble: MaskEnsemble, rtol: float = DEFAULT_RTOL) -> BaselineModel:
    candidates = fit_candidates(dataset, ensemble.masks(), rtol)
    return _uniform_average(dataset, candidates, "naive", {"M": ensemble.M, "L": ensemble.L})
