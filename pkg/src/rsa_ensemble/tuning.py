"""K-fold cross-validation over the ``(p, M, L)`` grid of RSA."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from rsa_ensemble.errors import InvalidInputError, RsaError
from rsa_ensemble.linalg import Dataset
from rsa_ensemble.rsa import RsaConfig, fit_rsa, predict
from rsa_ensemble.subsets import RngStream

_FOLD_STREAM = 20


def _arange(start, stop, step):
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(n))


@dataclass(frozen=True)
class CvGrid:
    p_values: tuple
    M_values: tuple
    L_values: tuple = (30,)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("p_values", "M_values", "L_values"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise InvalidInputError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        if any(not 0.0 <= p <= 1.0 for p in self.p_values):
            raise InvalidInputError("p_values must lie in [0, 1]")
        if any(int(v) != v or v < 1 for v in self.M_values + self.L_values):
            raise InvalidInputError("M_values and L_values must be positive integers")
        if self.folds < 2:
            raise InvalidInputError(f"folds must be at least 2, got {self.folds}")

    def cells(self):
        return list(product(self.p_values, self.M_values, self.L_values))


# Grids used for the two subperiods of the return-forecasting study.
PRESETS = {
    "paper-precrisis": dict(p_values=_arange(0.01, 0.3, 0.02), M_values=_arange(1, 29, 2),
                            L_values=(30,)),
    "paper-postcrisis": dict(p_values=_arange(0.1, 0.3, 0.02), M_values=_arange(1, 29, 2),
                             L_values=(30,)),
}


def preset_grid(name: str, folds: int = 5, seed: int = 0) -> CvGrid:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise InvalidInputError(f"unknown grid preset {name!r}; known: {sorted(PRESETS)}") from None
    return CvGrid(spec["p_values"], tuple(int(m) for m in spec["M_values"]),
                  spec["L_values"], folds, seed)


def kfold_split(N: int, folds: int, seed: int) -> list:
    """Seeded random partition of ``range(N)`` into ``folds`` near-equal validation sets.

    The first ``N % folds`` folds get one extra index.
    """
    if folds < 2 or folds > N:
        raise InvalidInputError(f"need 2 <= folds <= N, got folds={folds}, N={N}")
    perm = RngStream(seed, (_FOLD_STREAM, 0)).generator().permutation(N)
    out = []
    for val in np.array_split(perm, folds):
        val = np.sort(val)
        train = np.setdiff1d(np.arange(N), val, assume_unique=True)
        out.append((train, val))
    return out


@dataclass
class CvCell:
    p: float
    M: int
    L: int
    fold_errors: list = field(default_factory=list)
    error: str | None = None

    @property
    def mean_error(self) -> float:
        if self.error is not None or not self.fold_errors:
            return float("nan")
        return math.fsum(self.fold_errors) / len(self.fold_errors)


def _score_cell(dataset, splits, cell, grid, first_round, sigma2):
    p, M, L = cell
    out = CvCell(p, int(M), int(L))
    for f, (tr, va) in enumerate(splits):
        cfg = RsaConfig(probs=p, M=int(M), L=int(L), first_round=first_round,
                        sigma2=sigma2, seed=grid.seed + f)
        try:
            model = fit_rsa(dataset.subset(tr), cfg)
        except (RsaError, np.linalg.LinAlgError) as exc:
            out.error = f"fold {f}: {type(exc).__name__}: {exc}"
            out.fold_errors = []
            return out
        resid = predict(model, dataset.X[va]) - dataset.y[va]
        out.fold_errors.append(float(np.mean(resid**2)))
    return out


def cv_grid_search(dataset: Dataset, grid: CvGrid, first_round: str = "mallows",
                   sigma2: float | None = None, threads: int | None = None):
    """Return ``(best RsaConfig, list of CvCell)``.

    The best cell minimizes the mean validation MSE against observed ``y``;
    exact ties go to smaller ``p``, then ``M``, then ``L``. Cells with a
    failed fold are reported but never selected.
    """
    if grid.folds > dataset.N:
        raise InvalidInputError(f"folds={grid.folds} exceeds N={dataset.N}")
    splits = kfold_split(dataset.N, grid.folds, grid.seed)
    cells = grid.cells()

    def task(cell):
        return _score_cell(dataset, splits, cell, grid, first_round, sigma2)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            table = list(pool.map(task, cells))
    else:
        table = [task(c) for c in cells]

    ok = [c for c in table if c.error is None]
    if not ok:
        raise RsaError("every grid cell failed; see the score table for reasons")
    best = min(ok, key=lambda c: (c.mean_error, c.p, c.M, c.L))
    cfg = RsaConfig(probs=best.p, M=best.M, L=best.L, first_round=first_round,
                    sigma2=sigma2, seed=grid.seed)
    return cfg, table


def heatmap_rows(table, L: int | None = None) -> list:
    """``(p, M, L, mean_cv_error)`` rows, optionally restricted to one ``L``."""
    return [(c.p, c.M, c.L, c.mean_error) for c in table if L is None or c.L == L]
