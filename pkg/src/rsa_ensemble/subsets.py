"""Candidate-model structures: random masks, nested prefixes and Gaussian projections.

Randomness is drawn from counter-based Philox streams keyed by
``(master_seed, stream_id)``, so a mask depends only on its own key and
never on the order in which masks are generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rsa_ensemble.errors import InvalidInputError

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by a master seed and a tuple of ints."""

    master_seed: int
    stream_id: tuple = (0, 0)

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            int(self.master_seed) & _SEED_MASK,
            spawn_key=tuple(int(i) for i in self.stream_id),
        )
        return np.random.Generator(np.random.Philox(ss))


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise InvalidInputError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True, eq=False)
class SelectionMask:
    """Boolean inclusion vector over the ``K`` covariates."""

    bits: np.ndarray = field(repr=False)

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool).copy()
        if bits.ndim != 1:
            raise InvalidInputError("mask bits must be a 1-d vector")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def k(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def K(self) -> int:
        return self.bits.shape[0]

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits)

    @classmethod
    def from_indices(cls, indices, K: int) -> "SelectionMask":
        bits = np.zeros(K, dtype=bool)
        bits[np.asarray(indices, dtype=int)] = True
        return cls(bits)

    def __eq__(self, other):
        if not isinstance(other, SelectionMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash(self.bits.tobytes())

    def __repr__(self):
        return f"SelectionMask(K={self.K}, indices={self.indices.tolist()})"


@dataclass(frozen=True)
class MaskEnsemble:
    """``L`` groups of ``M`` masks each."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(g) for g in self.groups)
        if not groups or not groups[0]:
            raise InvalidInputError("ensemble needs at least one group with one mask")
        M = len(groups[0])
        if any(len(g) != M for g in groups):
            raise InvalidInputError("every group must contain the same number of masks")
        object.__setattr__(self, "groups", groups)

    @property
    def L(self) -> int:
        return len(self.groups)

    @property
    def M(self) -> int:
        return len(self.groups[0])

    def masks(self) -> list:
        return [m for g in self.groups for m in g]


def broadcast_probs(probs, K: int) -> np.ndarray:
    """Expand a scalar selection probability to length ``K`` and validate the range."""
    p = np.asarray(probs, dtype=float)
    if p.ndim == 0:
        p = np.full(K, float(p))
    if p.shape != (K,):
        raise InvalidInputError(f"probs must be a scalar or have length {K}, got shape {p.shape}")
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise InvalidInputError("selection probabilities must lie in [0, 1]")
    return p


def bernoulli_mask(probs, rng) -> SelectionMask:
    """Include covariate ``j`` independently with probability ``probs[j]``."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1:
        raise InvalidInputError("probs must be a 1-d vector")
    p = broadcast_probs(p, p.shape[0])
    u = _generator(rng).random(p.shape[0])
    return SelectionMask(u < p)


def draw_ensemble(probs, M: int, L: int, master_seed: int) -> MaskEnsemble:
    """Draw ``M * L`` independent Bernoulli masks; mask ``(l, m)`` uses stream ``(l, m)``."""
    if M < 1 or L < 1:
        raise InvalidInputError(f"M and L must be positive, got M={M}, L={L}")
    p = np.asarray(probs, dtype=float)
    groups = [
        [bernoulli_mask(p, RngStream(master_seed, (ell, m))) for m in range(M)]
        for ell in range(L)
    ]
    return MaskEnsemble(groups)


def fixed_size_mask(P: int, K: int, rng) -> SelectionMask:
    """Uniformly random subset of exactly ``P`` of the ``K`` covariates."""
    if not 1 <= P <= K:
        raise InvalidInputError(f"need 1 <= P <= K, got P={P}, K={K}")
    idx = _generator(rng).choice(K, size=P, replace=False)
    return SelectionMask.from_indices(idx, K)


def nested_masks(K: int, cap: int) -> list:
    """Prefix masks ``{1}, {1,2}, ..., {1..min(K, cap)}`` in the natural column order."""
    if cap < 1 or K < 1:
        raise InvalidInputError(f"need K >= 1 and cap >= 1, got K={K}, cap={cap}")
    out = []
    for j in range(1, min(K, cap) + 1):
        bits = np.zeros(K, dtype=bool)
        bits[:j] = True
        out.append(SelectionMask(bits))
    return out


def gaussian_projection(K: int, P: int, rng) -> np.ndarray:
    """``K x P`` matrix with i.i.d. N(0, 1/P) entries."""
    if P < 1 or K < 1:
        raise InvalidInputError(f"need K >= 1 and P >= 1, got K={K}, P={P}")
    return _generator(rng).standard_normal((K, P)) / np.sqrt(P)
