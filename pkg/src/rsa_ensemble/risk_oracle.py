"""Closed-form squared-L2 risks for the orthogonal design ``X'X = N I``.

All formulas take a :class:`RiskSpec` ``(beta, sigma2, N)`` and work with the
per-coordinate signal strengths ``a_j = N beta_j^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rsa_ensemble.errors import InvalidInputError


@dataclass(frozen=True)
class RiskSpec:
    beta: np.ndarray
    sigma2: float
    N: int

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if beta.ndim != 1 or beta.size == 0 or not np.all(np.isfinite(beta)):
            raise InvalidInputError("beta must be a non-empty finite vector")
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise InvalidInputError(f"sigma2 must be positive, got {self.sigma2}")
        if int(self.N) != self.N or self.N < 1:
            raise InvalidInputError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "N", int(self.N))

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    @property
    def signal(self) -> np.ndarray:
        """``N * beta_j^2`` per coordinate."""
        return self.N * self.beta**2

    @property
    def total_signal(self) -> float:
        return float(self.signal.sum())


def rsa_risk_fixed_p(spec: RiskSpec) -> float:
    """Minimal risk with a common selection probability: ``K s2 S / (S + K s2)``."""
    S, Ks2 = spec.total_signal, spec.K * spec.sigma2
    return Ks2 * S / (S + Ks2)


def rsa_risk_varying_p(spec: RiskSpec) -> float:
    """Minimal risk with covariate-specific probabilities: ``sum a_j s2 / (a_j + s2)``."""
    a = spec.signal
    return float(np.sum(a * spec.sigma2 / (a + spec.sigma2)))


def ma_risk(spec: RiskSpec) -> float:
    """Minimal risk of nested model averaging; ``|beta|`` must be non-increasing."""
    ab = np.abs(spec.beta)
    if np.any(np.diff(ab) > 0):
        raise InvalidInputError("ma_risk requires |beta| sorted in non-increasing order")
    a = spec.signal[1:]
    return spec.sigma2 + float(np.sum(a * spec.sigma2 / (a + spec.sigma2)))


def rsr_risk(spec: RiskSpec, P: float) -> float:
    """Risk of subset (or projection) averaging with subset size ``P``, real-valued."""
    K = spec.K
    if not 0.0 <= P <= K:
        raise InvalidInputError(f"P must lie in [0, K={K}], got {P}")
    return spec.sigma2 * P**2 / K + spec.total_signal * (K - P) ** 2 / K**2


def optimal_P(spec: RiskSpec) -> float:
    S = spec.total_signal
    return spec.K * S / (spec.K * spec.sigma2 + S)


def _check_M(M):
    if int(M) != M or M < 2:
        raise InvalidInputError(f"M must be an integer >= 2, got {M}")


def optimal_p_fixed(spec: RiskSpec, M: int) -> float:
    """Risk-minimizing common selection probability for ``M`` uniformly averaged candidates."""
    _check_M(M)
    S, Ks2 = spec.total_signal, spec.K * spec.sigma2
    p = M / (M - 1) * S / (S + Ks2) - 1.0 / (2 * (M - 1))
    return float(np.clip(p, 0.0, 1.0))


def optimal_eta(spec: RiskSpec, M: int) -> np.ndarray:
    """Coordinatewise risk-minimizing selection probabilities, clipped to [0, 1]."""
    _check_M(M)
    a = spec.signal
    eta = M / (M - 1) * a / (a + spec.sigma2) - 1.0 / (2 * (M - 1))
    return np.clip(eta, 0.0, 1.0)


def uniform_ensemble_risk(spec: RiskSpec, p: float, n_candidates: int) -> float:
    """Exact risk of the equal-weight average of ``n_candidates`` independent Bernoulli(p) fits.

    A single candidate has risk ``D = (1-p) S + K s2 p``; two independent
    candidates have cross moment ``C = (1-p)^2 S + K s2 p^2``.
    """
    S, Ks2 = spec.total_signal, spec.K * spec.sigma2
    D = (1 - p) * S + Ks2 * p
    C = (1 - p) ** 2 * S + Ks2 * p**2
    return D / n_candidates + C * (1 - 1 / n_candidates)
