from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsa_ensemble.errors import InvalidInputError
from rsa_ensemble.subsets import (MaskEnsemble, RngStream, SelectionMask, bernoulli_mask,
                                  draw_ensemble, fixed_size_mask, gaussian_projection,
                                  nested_masks)


def test_rng_stream_is_value_semantic():
    a = RngStream(7, (1, 2)).generator().random(5)
    b = RngStream(7, (1, 2)).generator().random(5)
    c = RngStream(7, (2, 1)).generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    # Negative and huge seeds are folded into 64 bits.
    RngStream(-1).generator().random()
    RngStream(2**70).generator().random()


def test_mask_basics():
    m = SelectionMask.from_indices([0, 3], 5)
    assert m.k == 2 and m.K == 5 and m.indices.tolist() == [0, 3]
    assert m == SelectionMask(np.array([1, 0, 0, 1, 0], dtype=bool))
    assert len({m, SelectionMask.from_indices([3, 0], 5)}) == 1
    with pytest.raises(ValueError):
        m.bits[0] = False


def test_bernoulli_all_or_nothing():
    g = RngStream(1)
    assert bernoulli_mask(np.ones(7), g).k == 7
    assert bernoulli_mask(np.zeros(7), g).k == 0
    with pytest.raises(InvalidInputError):
        bernoulli_mask(np.array([0.5, 1.2]), g)
    with pytest.raises(InvalidInputError):
        bernoulli_mask(np.array([-0.1]), g)


def test_bernoulli_mean_size():
    g = np.random.default_rng(0)
    K, p, n = 100, 0.1, 10_000
    ks = np.array([bernoulli_mask(np.full(K, p), g).k for _ in range(n)])
    bound = 3 * np.sqrt(K * p * (1 - p) / n)
    assert abs(ks.mean() - K * p) <= bound
    assert 9.0 <= ks.mean() <= 11.0


def test_draw_ensemble_shape_and_determinism():
    one = draw_ensemble(np.full(4, 0.5), 1, 1, 3)
    assert (one.L, one.M) == (1, 1) and len(one.masks()) == 1
    a = draw_ensemble(np.full(50, 0.3), 5, 5, 11)
    b = draw_ensemble(np.full(50, 0.3), 5, 5, 11)
    c = draw_ensemble(np.full(50, 0.3), 5, 5, 12)
    assert a.masks() == b.masks()
    assert a.masks() != c.masks()
    with pytest.raises(InvalidInputError):
        draw_ensemble(np.full(3, 0.3), 0, 1, 0)
    with pytest.raises(InvalidInputError):
        draw_ensemble(np.full(3, 0.3), 1, 0, 0)


def test_draw_ensemble_is_order_independent():
    # Each mask is a function of its own (l, m) stream, so drawing in another order agrees.
    p = np.full(20, 0.4)
    ens = draw_ensemble(p, 3, 4, 99)
    for ell in reversed(range(4)):
        for m in reversed(range(3)):
            assert bernoulli_mask(p, RngStream(99, (ell, m))) == ens.groups[ell][m]
    with ThreadPoolExecutor(max_workers=4) as pool:
        parallel = list(pool.map(lambda s: draw_ensemble(p, 3, 4, s).masks(), [99] * 4))
    assert all(x == ens.masks() for x in parallel)


def test_ensemble_masks_are_independent():
    K, M, L, n = 4, 2, 2, 1000
    bits = np.array([
        np.stack([m.bits for m in draw_ensemble(np.full(K, 0.3), M, L, s).masks()])
        for s in range(n)
    ], dtype=float)  # n x (M*L) x K
    flat = bits.reshape(n, -1)
    corr = np.corrcoef(flat, rowvar=False)
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    assert np.max(np.abs(off)) <= 3 * 1.5 / np.sqrt(n)
    # Typical correlation is at the 1/sqrt(n) scale.
    assert np.mean(np.abs(off)) <= 3 / np.sqrt(n)


def test_mask_ensemble_validation():
    m = SelectionMask.from_indices([0], 2)
    with pytest.raises(InvalidInputError):
        MaskEnsemble([[m], [m, m]])
    with pytest.raises(InvalidInputError):
        MaskEnsemble([])


def test_fixed_size_mask():
    g = np.random.default_rng(5)
    assert fixed_size_mask(4, 4, g).k == 4
    assert all(fixed_size_mask(2, 3, g).k == 2 for _ in range(50))
    counts = np.zeros(4)
    for _ in range(40_000):
        counts[fixed_size_mask(1, 4, g).indices[0]] += 1
    assert np.all(np.abs(counts - 10_000) <= 500)
    with pytest.raises(InvalidInputError):
        fixed_size_mask(5, 4, g)
    with pytest.raises(InvalidInputError):
        fixed_size_mask(0, 4, g)


def test_nested_masks():
    ms = nested_masks(3, 3)
    assert [m.indices.tolist() for m in ms] == [[0], [0, 1], [0, 1, 2]]
    big = nested_masks(500, 98)
    assert len(big) == 98 and big[-1].k == 98 and big[-1].K == 500
    assert [m.indices.tolist() for m in nested_masks(1, 5)] == [[0]]
    with pytest.raises(InvalidInputError):
        nested_masks(3, 0)


def test_gaussian_projection_moments():
    g = np.random.default_rng(8)
    draws = np.array([gaussian_projection(1, 1, g)[0, 0] for _ in range(100_000)])
    assert abs(draws.var() - 1.0) <= 0.03
    assert abs(draws.mean()) <= 0.01
    R = gaussian_projection(50, 4, RngStream(1))
    np.testing.assert_array_equal(R, gaussian_projection(50, 4, RngStream(1)))
    big = gaussian_projection(200, 25, g)
    assert abs(big.var() - 1 / 25) <= 0.003


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 40), st.floats(0, 1), st.integers(0, 2**63))
def test_popcount_invariant(K, p, seed):
    m = bernoulli_mask(np.full(K, p), RngStream(seed))
    assert m.k == int(m.bits.sum()) == m.indices.size
