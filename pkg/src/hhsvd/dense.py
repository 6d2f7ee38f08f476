"""Dense float64 substrate and single-Householder primitives.

Matrices are plain C-ordered (row-major) ``numpy.float64`` arrays. A
Householder vector ``v`` stands for ``H = I - 2 v v^T / |v|^2``; chains of
them are stored as the rows of an ``(n, d)`` array.
"""
from __future__ import annotations

import numpy as np

from .errors import DegenerateVectorError, DimensionMismatchError, NonFiniteError

# Vectors with squared norm at or below this are rejected, never treated as I.
DEGENERATE_NORM_SQ = 1e-30


def as_matrix(X, name: str = "X", rows: int | None = None) -> np.ndarray:
    """Validate user input as a finite 2-D float64 array (row-major)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise DimensionMismatchError(f"{name} must be a non-empty matrix, got shape {X.shape}")
    if rows is not None and X.shape[0] != rows:
        raise DimensionMismatchError(f"{name} has {X.shape[0]} rows, expected {rows}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return np.ascontiguousarray(X)


def as_vector(v, name: str = "v") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DimensionMismatchError(f"{name} must be a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return v


def _check_householder(v, name="v") -> tuple[np.ndarray, float]:
    v = as_vector(v, name)
    s = float(v @ v)
    if s <= DEGENERATE_NORM_SQ:
        raise DegenerateVectorError(f"{name} has squared norm {s:.3g} <= {DEGENERATE_NORM_SQ}")
    return v, s


def reflect(v: np.ndarray, s, X: np.ndarray) -> np.ndarray:
    """``X - (2/s) v (v^T X)``, broadcasting over leading batch axes.

    ``v`` is ``(..., d)``, ``s`` its squared norm ``(...)`` and ``X`` is
    ``(..., d, m)``. No validation; callers own that.
    """
    proj = v[..., None, :] @ X  # (..., 1, m)
    scale = (2.0 / np.asarray(s))[..., None, None]
    return X - (scale * v[..., :, None]) * proj


def grad_kernel(v: np.ndarray, s, A_next: np.ndarray, G: np.ndarray, va=None, vg=None) -> np.ndarray:
    """Gradient of ``<G, H(v) A_next>`` w.r.t. ``v``, summed over columns.

    Batched like :func:`reflect`. ``va = v^T A_next`` and ``vg = v^T G``
    (shape ``(..., m)``) may be passed in when already known.
    """
    if va is None:
        va = (v[..., None, :] @ A_next)[..., 0, :]
    if vg is None:
        vg = (v[..., None, :] @ G)[..., 0, :]
    scale = (2.0 / np.asarray(s))[..., None]
    term = (G @ va[..., None])[..., 0] + (A_next @ vg[..., None])[..., 0]
    cross = np.sum(va * vg, axis=-1)[..., None]
    return -scale * (term - scale * cross * v)


def backward_step(v: np.ndarray, s, A: np.ndarray, G: np.ndarray):
    """Step back through one reflection ``A = H(v) A_next``.

    Given the reflection's output ``A`` and ``G = dL/dA``, returns
    ``(A_next, grad_v, G_next)`` with ``A_next = H A`` (as ``H^-1 = H``) and
    ``G_next = H G``. ``A`` and ``G`` are overwritten with ``A_next`` and
    ``G_next``. Batched over leading axes. This is the only gradient kernel:
    the blocked and the sequential backward passes both call it.
    """
    sv = (2.0 / np.asarray(s))[..., None] * v  # (..., d)
    pa = (v[..., None, :] @ A)[..., 0, :]  # v^T A
    pg = (v[..., None, :] @ G)[..., 0, :]  # v^T G
    A -= sv[..., :, None] * pa[..., None, :]
    # v^T (H A) = -v^T A since H v = -v
    grad = grad_kernel(v, s, A, G, va=-pa, vg=pg)
    G -= sv[..., :, None] * pg[..., None, :]
    return A, grad, G


class HouseholderChain:
    """Ordered Householder vectors ``v_1..v_n`` representing ``H_1 ... H_n``.

    Applying the chain to ``X`` computes ``H_1 (H_2 (... (H_n X)))``.
    """

    __slots__ = ("_vectors", "_dim")

    def __init__(self, vectors, dim: int | None = None):
        V = np.array(vectors, dtype=np.float64, copy=True)
        if V.size == 0:
            if dim is None:
                dim = V.shape[-1] if V.ndim == 2 else None
            if not dim or dim < 1:
                raise DimensionMismatchError("an empty chain needs a positive dim")
            V = np.zeros((0, dim))
        if V.ndim == 1:
            V = V.reshape(1, -1)
        if V.ndim != 2:
            raise DimensionMismatchError(f"vectors must be (n, d), got shape {V.shape}")
        if dim is not None and V.shape[1] != dim:
            raise DimensionMismatchError(f"vectors have length {V.shape[1]}, expected {dim}")
        if not np.all(np.isfinite(V)):
            raise NonFiniteError("Householder vectors contain NaN or Inf")
        norms = np.einsum("ij,ij->i", V, V)
        bad = np.flatnonzero(norms <= DEGENERATE_NORM_SQ)
        if bad.size:
            raise DegenerateVectorError(
                f"Householder vector {bad[0]} is degenerate (|v|^2={norms[bad[0]]:.3g})",
                index=int(bad[0]),
            )
        V.setflags(write=False)
        self._vectors = V
        self._dim = V.shape[1]

    @classmethod
    def random(cls, dim: int, n: int | None = None, rng=None, normalize: bool = True):
        """Gaussian Householder vectors, unit length by default."""
        rng = np.random.default_rng(rng)
        n = dim if n is None else n
        V = rng.standard_normal((n, dim))
        if normalize and n:
            V /= np.linalg.norm(V, axis=1, keepdims=True)
        return cls(V, dim=dim)

    @classmethod
    def identity(cls, dim: int):
        return cls(np.zeros((0, dim)), dim=dim)

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @property
    def dim(self) -> int:
        return self._dim

    def __len__(self) -> int:
        return self._vectors.shape[0]

    def norms_sq(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self._vectors, self._vectors)

    def reversed(self) -> "HouseholderChain":
        """The transposed product ``H_n ... H_1`` (each factor is symmetric)."""
        return HouseholderChain(self._vectors[::-1], dim=self._dim)

    def __repr__(self) -> str:
        return f"HouseholderChain(dim={self._dim}, n={len(self)})"


def householder_apply_left(v, X) -> np.ndarray:
    """Return ``(I - 2 v v^T/|v|^2) X`` in O(dm) without forming the matrix."""
    v, s = _check_householder(v)
    X = as_matrix(X, rows=v.shape[0])
    return reflect(v, s, X)


def chain_apply_sequential(chain: HouseholderChain, X) -> np.ndarray:
    """One reflection at a time, from ``H_n`` inward to ``H_1``."""
    X = as_matrix(X, rows=chain.dim)
    out = X
    for v, s in zip(chain.vectors[::-1], chain.norms_sq()[::-1]):
        out = reflect(v, s, out)
    return out if out is not X else X.copy()


def chain_to_dense(chain: HouseholderChain) -> np.ndarray:
    return chain_apply_sequential(chain, np.eye(chain.dim))


def householder_grad(v, A_next, G) -> np.ndarray:
    """Gradient of ``L`` w.r.t. ``v`` for one reflection ``A = H(v) A_next``.

    ``G`` is ``dL/dA``. The result is summed (not averaged) over the ``m``
    columns.
    """
    v, s = _check_householder(v)
    d = v.shape[0]
    A_next = as_matrix(A_next, "A_next", rows=d)
    G = as_matrix(G, "G", rows=d)
    if A_next.shape != G.shape:
        raise DimensionMismatchError(f"A_next {A_next.shape} and G {G.shape} differ")
    return grad_kernel(v, s, A_next, G)
