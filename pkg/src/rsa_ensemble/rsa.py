"""The two-layer random subset averaging estimator.

Layer one fits OLS on ``M * L`` random covariate subsets. Layer two combines
the ``M`` fits of each group with simplex weights (Mallows or uniform). The
output layer combines the ``L`` group predictions by a second Mallows round
whose penalty uses each group's weighted effective dimension.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
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
from rsa_ensemble.subsets import MaskEnsemble, SelectionMask, broadcast_probs, draw_ensemble

FIRST_ROUND_SCHEMES = ("mallows", "uniform")


@dataclass(frozen=True)
class CandidateFit:
    mask: SelectionMask
    beta_padded: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    k: float


@dataclass(frozen=True)
class GroupFit:
    candidates: tuple
    weights: SimplexWeights
    fitted: np.ndarray = field(repr=False)
    effective_dim: float
    beta: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class RsaConfig:
    """Tuning of one RSA fit.

    ``probs`` is a common selection probability or a per-covariate vector.
    ``sigma2=None`` estimates the noise variance from the data; a number is
    used as given in both weighting rounds.
    """

    probs: object = 0.1
    M: int = 30
    L: int = 30
    first_round: str = "mallows"
    sigma2: float | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.M) != self.M or int(self.L) != self.L or self.M < 1 or self.L < 1:
            raise InvalidInputError(f"M and L must be positive integers, got M={self.M}, L={self.L}")
        if self.first_round not in FIRST_ROUND_SCHEMES:
            raise InvalidInputError(
                f"first_round must be one of {FIRST_ROUND_SCHEMES}, got {self.first_round!r}"
            )
        if self.sigma2 is not None and not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidInputError(f"supplied sigma2 must be positive, got {self.sigma2}")
        p = np.asarray(self.probs, dtype=float)
        if not np.all((p >= 0) & (p <= 1)):
            raise InvalidInputError("selection probabilities must lie in [0, 1]")
        if p.ndim == 1:
            object.__setattr__(self, "probs", tuple(float(v) for v in p))
        elif p.ndim == 0:
            object.__setattr__(self, "probs", float(p))
        else:
            raise InvalidInputError("probs must be a scalar or a 1-d vector")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def sigma2_mode(self) -> str:
        return "estimate" if self.sigma2 is None else "supplied"


@dataclass(frozen=True)
class RsaModel:
    groups: tuple
    outer_weights: SimplexWeights
    fitted: np.ndarray = field(repr=False)
    beta_agg: np.ndarray = field(repr=False)
    sigma2: float
    config: RsaConfig

    @property
    def effective_dim(self) -> float:
        dims = np.array([g.effective_dim for g in self.groups])
        return float(dims @ self.outer_weights.w)

    @property
    def ensemble(self) -> MaskEnsemble:
        return MaskEnsemble([[c.mask for c in g.candidates] for g in self.groups])


def fit_candidates(dataset: Dataset, masks, rtol: float = DEFAULT_RTOL) -> list:
    """OLS fit on each mask's columns; an empty mask predicts zero with ``k = 0``."""
    masks = list(masks)
    if not masks:
        raise InvalidInputError("need at least one mask")
    out = []
    for mask in masks:
        if mask.K != dataset.K:
            raise InvalidInputError(f"mask has length {mask.K}, dataset has K={dataset.K}")
        idx = mask.indices
        beta = np.zeros(dataset.K)
        if idx.size == 0:
            out.append(CandidateFit(mask, beta, np.zeros(dataset.N), 0.0))
            continue
        Xs = dataset.X[:, idx]
        sol = least_squares_min_norm(Xs, dataset.y, rtol)
        beta[idx] = sol.beta
        out.append(CandidateFit(mask, beta, Xs @ sol.beta, float(sol.rank)))
    return out


def fit_group(dataset: Dataset, candidates, sigma2: float, scheme: str = "mallows",
              tol: float = DEFAULT_TOL) -> GroupFit:
    candidates = tuple(candidates)
    if not candidates:
        raise InvalidInputError("a group needs at least one candidate")
    if scheme not in FIRST_ROUND_SCHEMES:
        raise InvalidInputError(f"unknown weighting scheme {scheme!r}")
    F = np.column_stack([c.fitted for c in candidates])
    dims = np.array([c.k for c in candidates])
    B = np.column_stack([c.beta_padded for c in candidates])
    M = len(candidates)
    if M == 1:
        weights = SimplexWeights(np.ones(1))
    elif scheme == "uniform":
        weights = SimplexWeights.uniform(M)
    else:
        weights = solve_simplex_qp(MallowsProblem(F, dims, sigma2, dataset.y), tol)
    if scheme == "uniform":
        fitted = F.mean(axis=1)
        beta = B.mean(axis=1)
    else:
        fitted = F @ weights.w
        beta = B @ weights.w
    return GroupFit(candidates, weights, fitted, float(dims @ weights.w), beta)


def fit_rsa(dataset: Dataset, config: RsaConfig, ensemble: MaskEnsemble | None = None,
            threads: int | None = None, rtol: float = DEFAULT_RTOL,
            tol: float = DEFAULT_TOL) -> RsaModel:
    """Fit the two-layer ensemble.

    Masks are drawn from ``config`` unless an explicit ``ensemble`` is passed
    (then ``config.M``, ``config.L`` and ``config.probs`` are ignored for the
    draw). ``threads`` bounds the pool used to fit groups; the result does not
    depend on it.
    """
    if ensemble is None:
        probs = broadcast_probs(config.probs, dataset.K)
        ensemble = draw_ensemble(probs, config.M, config.L, config.seed)
    sigma2 = config.sigma2 if config.sigma2 is not None else estimate_sigma2(dataset, rtol)

    def one_group(masks):
        return fit_group(dataset, fit_candidates(dataset, masks, rtol), sigma2,
                         config.first_round, tol)

    if threads and threads > 1 and ensemble.L > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            groups = tuple(pool.map(one_group, ensemble.groups))
    else:
        groups = tuple(one_group(g) for g in ensemble.groups)

    F = np.column_stack([g.fitted for g in groups])
    B = np.column_stack([g.beta for g in groups])
    dims = np.array([g.effective_dim for g in groups])
    if len(groups) == 1:
        outer = SimplexWeights(np.ones(1))
    else:
        outer = solve_simplex_qp(MallowsProblem(F, dims, sigma2, dataset.y), tol)
    return RsaModel(groups, outer, F @ outer.w, B @ outer.w, float(sigma2), config)


def predict(model, Xnew) -> np.ndarray:
    """Linear prediction ``Xnew @ beta_agg`` for any fitted model exposing ``beta_agg``."""
    X = np.asarray(Xnew, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    K = model.beta_agg.shape[0]
    if X.ndim != 2 or X.shape[1] != K:
        raise InvalidInputError(f"Xnew must have {K} columns, got shape {X.shape}")
    return X @ model.beta_agg
