"""Block low-rank quadratic loss model."""

import numpy as np
import pytest

from falcon import LowRankQuadratic, ProblemBundle, block_partition, build_model
from falcon.errors import DimensionError


def tiny_model():
    """One sample, two coordinates, one block: X=(1,2), ridge picked so
    n*lambda = 1."""
    X = np.array([[1.0, 2.0]])
    return LowRankQuadratic(
        w_bar=np.zeros(2), X=X, g=np.array([1.0, 2.0]),
        block_offsets=np.array([0, 2]), rho=1.0, ridge=1.0, n=1)


def test_block_partition_ceil_split():
    offs = np.array([0, 3, 5])
    np.testing.assert_array_equal(block_partition(offs, 2), np.array([0, 2, 3, 5]))


def test_block_partition_single_block():
    offs = np.array([0, 7])
    np.testing.assert_array_equal(block_partition(offs, 100), np.array([0, 7]))


def test_block_partition_nests_in_groups():
    rng = np.random.default_rng(41)
    for _ in range(50):
        sizes = rng.integers(1, 30, size=rng.integers(1, 6))
        offs = np.concatenate(([0], np.cumsum(sizes)))
        bsize = int(rng.integers(1, 12))
        blocks = block_partition(offs, bsize)
        assert np.all(np.diff(blocks) >= 1)
        assert np.all(np.diff(blocks) <= bsize)
        # every group boundary must appear among the block boundaries
        assert np.isin(offs, blocks).all()


def test_build_model_gradient_mean():
    bundle = ProblemBundle(
        p=2, n=2, group_offsets=np.array([0, 2]),
        group_flop_cost=np.array([1.0]), block_offsets=np.array([0, 2]),
        weights=np.zeros(2, dtype=np.float32),
        gradsamples=np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32))
    m = build_model(bundle, ridge=0.0, rho=1.0, block_size=2)
    np.testing.assert_allclose(m.g, np.array([0.5, 0.5]))


def test_objective_hand_values():
    m = tiny_model()
    assert m.objective(np.zeros(2)) == 0.0
    assert m.objective(np.array([1.0, 0.0])) == pytest.approx(2.0)
    assert m.objective(np.array([0.0, 1.0])) == pytest.approx(4.5)


def test_gradient_hand_values():
    m = tiny_model()
    np.testing.assert_allclose(m.gradient(np.zeros(2)), np.array([1.0, 2.0]))
    np.testing.assert_allclose(m.gradient(np.array([1.0, 0.0])), np.array([3.0, 4.0]))


def test_dimension_mismatch():
    m = tiny_model()
    with pytest.raises(DimensionError):
        m.objective(np.zeros(3))
    with pytest.raises(DimensionError):
        m.gradient(np.zeros(1))


def random_model(rng, p=None, n=None, blocks=True):
    p = p or int(rng.integers(2, 40))
    n = n or int(rng.integers(1, 12))
    X = rng.normal(size=(n, p)).astype(np.float32)
    if blocks:
        cuts = np.sort(rng.choice(np.arange(1, p), size=min(3, p - 1), replace=False))
        block_offsets = np.concatenate(([0], cuts, [p]))
    else:
        block_offsets = np.array([0, p])
    return LowRankQuadratic(
        w_bar=rng.normal(size=p), X=X,
        g=(X.astype(np.float64).T @ rng.normal(size=n)) / n,
        block_offsets=block_offsets, rho=float(rng.uniform(0.5, 3)),
        ridge=float(rng.uniform(1e-3, 1e-1)), n=n)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    for _ in range(20):
        m = random_model(rng)
        w = rng.normal(size=m.p)
        grad = m.gradient(w)
        for i in rng.choice(m.p, size=min(5, m.p), replace=False):
            h = 1e-5 * (1 + abs(w[i]))
            e = np.zeros(m.p)
            e[i] = h
            fd = (m.objective(w + e) - m.objective(w - e)) / (2 * h)
            assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_objective_dominates_linear_part():
    rng = np.random.default_rng(43)
    for _ in range(50):
        m = random_model(rng)
        w = rng.normal(size=m.p) * 3
        assert m.objective(w) >= float(m.g @ (w - m.w_bar)) - 1e-9


def test_blockwise_equals_dense_hessian():
    rng = np.random.default_rng(44)
    for _ in range(30):
        m = random_model(rng)
        X64 = m.X.astype(np.float64)
        H = np.zeros((m.p, m.p))
        for j in range(m.num_blocks):
            lo, hi = m.block_offsets[j], m.block_offsets[j + 1]
            H[lo:hi, lo:hi] = m.rho * X64[:, lo:hi].T @ X64[:, lo:hi]
        w = rng.normal(size=m.p)
        d = w - m.w_bar
        q_dense = float(m.g @ d + 0.5 * d @ H @ d + 0.5 * m.n_lambda * d @ d)
        assert m.objective(w) == pytest.approx(q_dense, rel=1e-10, abs=1e-10)
        grad_dense = m.g + H @ d + m.n_lambda * d
        np.testing.assert_allclose(m.gradient(w), grad_dense, rtol=1e-9, atol=1e-9)


def test_reference_point_is_zero():
    rng = np.random.default_rng(45)
    m = random_model(rng)
    assert m.objective(m.w_bar.copy()) == 0.0
