"""Compact WY form ``I - 2 W Y^T`` of a product of Householder matrices.

Blocks are built by prepending factors: with ``P = I - 2 W Y^T`` for
``H_{j+1} ... H_b`` and ``u = v_j/|v_j|``,

    H_j P = I - 2 [u, W] [P^T u, Y]^T,

so each factor adds one column pair at the cost of one application of
``P^T``. Column ``j`` of ``W`` and ``Y`` belongs to the ``j``-th source vector.

Several blocks are handled at once as stacks of shape ``(q, d, b)``. A
ragged final block is padded with zero columns, which contribute nothing.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import HouseholderChain, as_matrix, as_vector
from .errors import DimensionMismatchError, HouseholderError
from .parallel import StageCounter, parallel_chunks


@dataclass(frozen=True, eq=False)
class WYBlock:
    W: np.ndarray  # (d, b)
    Y: np.ndarray  # (d, b)
    source_vectors: np.ndarray  # (b, d), kept for the backward pass

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    @property
    def width(self) -> int:
        return self.W.shape[1]

    def to_dense(self) -> np.ndarray:
        return np.eye(self.dim) - 2.0 * self.W @ self.Y.T


def _unit_rows(V: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(V, axis=-1, keepdims=True)
    return np.divide(V, norms, out=np.zeros_like(V), where=norms > 0)


def compact_stack(V: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Compact a stack of blocks at once.

    ``V`` is ``(q, b, d)``; all-zero rows are padding. Returns ``W, Y`` of
    shape ``(q, d, b)`` and the number of sequential steps taken (``b``).
    """
    q, b, d = V.shape
    U = _unit_rows(V)
    W = np.zeros((q, d, b))
    Y = np.zeros((q, d, b))
    steps = 0
    for j in range(b - 1, -1, -1):
        u = U[:, j, :]
        W[:, :, j] = u
        if j == b - 1:
            Y[:, :, j] = u
        else:
            Wt_u = np.swapaxes(W[:, :, j + 1 :], 1, 2) @ u[:, :, None]  # (q, b-j-1, 1)
            Y[:, :, j] = u - 2.0 * (Y[:, :, j + 1 :] @ Wt_u)[:, :, 0]
        steps += 1
    return W, Y, steps


def wy_compact(vectors, dim: int | None = None, counter: StageCounter | None = None) -> WYBlock:
    """Build ``(W, Y)`` with ``I - 2 W Y^T = H_1 ... H_b``."""
    if isinstance(vectors, HouseholderChain):
        chain = vectors
    else:
        vectors = list(vectors) if not isinstance(vectors, np.ndarray) else vectors
        if len(vectors) == 0:
            raise HouseholderError("wy_compact needs at least one Householder vector")
        chain = HouseholderChain(np.stack([as_vector(v) for v in vectors]), dim=dim)
    if len(chain) == 0:
        raise HouseholderError("wy_compact needs at least one Householder vector")
    if dim is not None and chain.dim != dim:
        raise DimensionMismatchError(f"vectors have length {chain.dim}, expected {dim}")
    W, Y, steps = compact_stack(chain.vectors[None])
    if counter is not None:
        counter.tick(steps)
    return WYBlock(W[0], Y[0], chain.vectors)


def wy_apply(block: WYBlock, X) -> np.ndarray:
    """``X - 2 W (Y^T X)``."""
    X = as_matrix(X, rows=block.dim)
    return X - 2.0 * block.W @ (block.Y.T @ X)


def wy_apply_transpose(block: WYBlock, X) -> np.ndarray:
    """``X - 2 Y (W^T X)``, i.e. the transposed block applied to ``X``."""
    X = as_matrix(X, rows=block.dim)
    return X - 2.0 * block.Y @ (block.W.T @ X)


@dataclass(frozen=True, eq=False)
class CompactedChain:
    """A chain split into consecutive WY blocks ``P_1 ... P_q``.

    ``W``, ``Y`` are stacked ``(q, d, b)``; ``V`` holds the source vectors as
    ``(q, b, d)``, zero-padded in the tail of a ragged last block.
    """

    dim: int
    block_width: int
    n: int
    W: np.ndarray
    Y: np.ndarray
    V: np.ndarray

    def __len__(self) -> int:
        return self.W.shape[0]

    @property
    def widths(self) -> list[int]:
        q, b = len(self), self.block_width
        return [min(b, self.n - i * b) for i in range(q)]

    @property
    def blocks(self) -> list[WYBlock]:
        return [
            WYBlock(self.W[i, :, :w], self.Y[i, :, :w], self.V[i, :w])
            for i, w in enumerate(self.widths)
        ]

    def source_vectors(self) -> np.ndarray:
        return self.V.reshape(-1, self.dim)[: self.n]


def compact_chain(
    chain: HouseholderChain, block_width: int, counter: StageCounter | None = None
) -> CompactedChain:
    """Partition into ``ceil(n/b)`` groups and compact each one.

    Groups are independent; chunks of them run concurrently when the
    library is configured with more than one thread.
    """
    n, d = len(chain), chain.dim
    b = int(block_width)
    if b < 1:
        raise HouseholderError(f"block width must be >= 1, got {block_width}")
    if n and b > n:
        raise HouseholderError(f"block width {b} exceeds chain length {n}")
    q = -(-n // b) if n else 0
    V = np.zeros((q, b, d))
    V.reshape(-1, d)[:n] = chain.vectors
    W = np.empty((q, d, b))
    Y = np.empty((q, d, b))

    def task(lo, hi):
        # the chunk holding only a ragged block needs fewer steps
        width = min(b, n - lo * b) if hi - lo == 1 else b
        Wc, Yc, steps = compact_stack(V[lo:hi, :width])
        W[lo:hi] = 0.0
        Y[lo:hi] = 0.0
        W[lo:hi, :, :width] = Wc
        Y[lo:hi, :, :width] = Yc
        return steps

    steps = parallel_chunks(task, q)
    if counter is not None:
        counter.merge_parallel(steps)
    return CompactedChain(d, b, n, W, Y, V)
