"""Block low-rank local quadratic loss model.

The curvature term is a block-diagonal restriction of the sample Gram
matrix (per-sample gradients stacked row-wise), scaled by a majorization
factor, plus a ridge.  The dense curvature matrix is never materialized:
objective and gradient stream over row chunks of the sample matrix and
accumulate per block in float64, in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import ProblemBundle
from .errors import DimensionError, DomainError

# Row-chunk budget for streaming over a memory-mapped sample matrix.
_CHUNK_BYTES = 128 << 20


@dataclass(frozen=True)
class LowRankQuadratic:
    """Quadratic model around reference weights with low-rank block curvature."""

    w_bar: np.ndarray          # length p, float64
    X: np.ndarray              # n x p per-sample gradients (float32/64 or memmap)
    g: np.ndarray              # length p gradient estimate, float64
    block_offsets: np.ndarray  # K+1 monotone indices, blocks nested in groups
    rho: float
    ridge: float               # per-sample ridge strength
    n: int

    @property
    def p(self) -> int:
        return int(self.w_bar.shape[0])

    @property
    def num_blocks(self) -> int:
        return int(self.block_offsets.shape[0]) - 1

    @property
    def n_lambda(self) -> float:
        return self.n * self.ridge

    def _check(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.p,):
            raise DimensionError(f"vector length {w.shape} != p = {self.p}")
        return w

    def _row_chunk(self) -> int:
        row_bytes = max(self.p * self.X.dtype.itemsize, 1)
        return max(1, min(self.n, _CHUNK_BYTES // row_bytes))

    def objective(self, w: np.ndarray) -> float:
        """g'(w-wb) + (rho/2) sum_b |X_b (w-wb)_b|^2 + (n*ridge/2) |w-wb|^2."""
        delta = self._check(w) - self.w_bar
        value = float(self.g @ delta) + 0.5 * self.n_lambda * float(delta @ delta)
        offs = self.block_offsets
        chunk = self._row_chunk()
        quad = 0.0
        for i0 in range(0, self.n, chunk):
            rows = np.asarray(self.X[i0:i0 + chunk, :])
            for j in range(self.num_blocks):
                lo, hi = int(offs[j]), int(offs[j + 1])
                seg = rows[:, lo:hi].astype(np.float64) @ delta[lo:hi]
                quad += float(seg @ seg)
        return value + 0.5 * self.rho * quad

    def gradient(self, w: np.ndarray) -> np.ndarray:
        """g + rho * blockdiag(X_b'X_b)(w-wb) + n*ridge*(w-wb)."""
        delta = self._check(w) - self.w_bar
        out = self.g + self.n_lambda * delta
        offs = self.block_offsets
        chunk = self._row_chunk()
        # Pass 1: per-block sample-space products y_b = X_b delta_b.
        y = np.zeros((self.n, self.num_blocks), dtype=np.float64)
        for i0 in range(0, self.n, chunk):
            rows = np.asarray(self.X[i0:i0 + chunk, :])
            for j in range(self.num_blocks):
                lo, hi = int(offs[j]), int(offs[j + 1])
                y[i0:i0 + rows.shape[0], j] = \
                    rows[:, lo:hi].astype(np.float64) @ delta[lo:hi]
        # Pass 2: pull back, out_b += rho * X_b' y_b.
        for i0 in range(0, self.n, chunk):
            rows = np.asarray(self.X[i0:i0 + chunk, :])
            for j in range(self.num_blocks):
                lo, hi = int(offs[j]), int(offs[j + 1])
                out[lo:hi] += self.rho * (
                    rows[:, lo:hi].astype(np.float64).T @ y[i0:i0 + rows.shape[0], j])
        return out

    def block_times(self, j: int, v_block: np.ndarray) -> np.ndarray:
        """X_b @ v for block j, with v indexed over the block's columns."""
        lo, hi = int(self.block_offsets[j]), int(self.block_offsets[j + 1])
        out = np.empty(self.n, dtype=np.float64)
        chunk = self._row_chunk()
        for i0 in range(0, self.n, chunk):
            rows = np.asarray(self.X[i0:i0 + chunk, lo:hi])
            out[i0:i0 + rows.shape[0]] = rows.astype(np.float64) @ v_block
        return out

    def block_columns(self, j: int, idx: np.ndarray) -> np.ndarray:
        """Float64 copy of the sample-matrix columns ``idx`` (within block j)."""
        lo, hi = int(self.block_offsets[j]), int(self.block_offsets[j + 1])
        if idx.size and (idx.min() < lo or idx.max() >= hi):
            raise DomainError(f"indices outside block {j} range [{lo}, {hi})")
        cols = np.empty((self.n, idx.shape[0]), dtype=np.float64)
        chunk = self._row_chunk()
        for i0 in range(0, self.n, chunk):
            rows = np.asarray(self.X[i0:i0 + chunk, lo:hi])
            cols[i0:i0 + rows.shape[0], :] = rows[:, idx - lo].astype(np.float64)
        return cols


def block_partition(group_offsets: np.ndarray, block_size: int) -> np.ndarray:
    """Split each group range into near-equal contiguous blocks of size <= block_size."""
    if block_size < 1:
        raise DomainError("block size must be >= 1")
    offsets = [0]
    for j in range(group_offsets.shape[0] - 1):
        lo, hi = int(group_offsets[j]), int(group_offsets[j + 1])
        size = hi - lo
        nblocks = math.ceil(size / block_size)
        base, extra = divmod(size, nblocks)
        pos = lo
        for k in range(nblocks):
            pos += base + (1 if k < extra else 0)
            offsets.append(pos)
    return np.asarray(offsets, dtype=np.int64)


def build_model(
    bundle: ProblemBundle,
    ridge: float,
    rho: float,
    block_size: int,
) -> LowRankQuadratic:
    """Model at the bundle's reference weights with a fresh block partition."""
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    if rho <= 0:
        raise DomainError("rho must be positive")
    X = bundle.gradsamples
    w_bar = np.asarray(bundle.weights, dtype=np.float64)
    if X.shape != (bundle.n, w_bar.shape[0]):
        raise DimensionError(
            f"sample matrix shape {X.shape} inconsistent with "
            f"n = {bundle.n}, p = {w_bar.shape[0]}")
    g = _mean_row(X)
    return LowRankQuadratic(
        w_bar=w_bar, X=X, g=g,
        block_offsets=block_partition(bundle.group_offsets, block_size),
        rho=float(rho), ridge=float(ridge), n=int(bundle.n))


def _mean_row(X) -> np.ndarray:
    """(1/n) X' 1 accumulated in float64, streaming over row chunks."""
    n, p = X.shape
    acc = np.zeros(p, dtype=np.float64)
    chunk = max(1, min(n, _CHUNK_BYTES // max(p * X.dtype.itemsize, 1)))
    for i0 in range(0, n, chunk):
        acc += np.asarray(X[i0:i0 + chunk, :]).astype(np.float64).sum(axis=0)
    return acc / n
