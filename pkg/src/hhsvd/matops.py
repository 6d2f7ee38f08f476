"""Matrix operations that are O(min-dim) once the SVD is known.

The sigma-level work in each function is a single pass over the singular
values; applying the result to data costs two chain multiplications.
"""
from __future__ import annotations

import numpy as np

from .dense import as_matrix
from .errors import DimensionMismatchError, PoleError, SingularMatrixError
from .parallel import StageCounter
from .svd import SvdParam, chain_forward, svd_forward


def _require_square(p: SvdParam, what: str) -> None:
    if not p.is_square:
        raise DimensionMismatchError(f"{what} needs a square matrix, got {p.out_dim}x{p.in_dim}")


def _require_nonsingular(p: SvdParam, what: str) -> None:
    if np.any(p.sigma == 0.0):
        raise SingularMatrixError(f"{what}: matrix has a zero singular value")


def _require_symmetric(p: SvdParam, what: str) -> None:
    if len(p.V) != 0 or not p.is_square:
        raise DimensionMismatchError(f"{what} needs a symmetric parameter (U only, V empty)")


def log_abs_det(p: SvdParam) -> float:
    _require_square(p, "log_abs_det")
    _require_nonsingular(p, "log_abs_det")
    return float(np.sum(np.log(np.abs(p.sigma))))


def inverse_param(p: SvdParam) -> SvdParam:
    """``W^{-1} = V Sigma^{-1} U^T`` as another SVD parameter."""
    _require_square(p, "inverse")
    _require_nonsingular(p, "inverse")
    return SvdParam(p.V, p.U, 1.0 / p.sigma)


def apply_inverse(p: SvdParam, X, block_width=None, algo="fasth") -> np.ndarray:
    return svd_forward(inverse_param(p), X, block_width, algo)[0]


def largest_singular_value(p: SvdParam) -> float:
    return float(np.max(np.abs(p.sigma)))


def exponential_param(p: SvdParam) -> SvdParam:
    _require_symmetric(p, "matrix exponential")
    return SvdParam(p.U, p.U, np.exp(p.sigma))


def apply_exponential(p: SvdParam, X, block_width=None, algo="fasth") -> np.ndarray:
    """``exp(W) X = U exp(Sigma) U^T X`` for symmetric ``W = U Sigma U^T``."""
    return svd_forward(exponential_param(p), X, block_width, algo)[0]


def cayley_param(p: SvdParam) -> SvdParam:
    _require_symmetric(p, "Cayley map")
    if np.any(p.sigma == -1.0):
        raise PoleError("Cayley map is undefined when an eigenvalue equals -1")
    return SvdParam(p.U, p.U, (1.0 - p.sigma) / (1.0 + p.sigma))


def apply_cayley(p: SvdParam, X, block_width=None, algo="fasth") -> np.ndarray:
    """``(I - W)(I + W)^{-1} X`` for symmetric ``W = U Sigma U^T``."""
    return svd_forward(cayley_param(p), X, block_width, algo)[0]


def frobenius_sq(p: SvdParam) -> float:
    return float(p.sigma @ p.sigma)


def condition_number(p: SvdParam) -> float:
    a = np.abs(p.sigma)
    lo = a.min()
    if lo == 0.0:
        raise SingularMatrixError("condition number is infinite: zero singular value")
    return float(a.max() / lo)


def select_kth_largest(values, k: int, counter: StageCounter | None = None) -> float:
    """k-th largest value (1-based) by median-of-medians selection, O(n).

    ``counter`` (if given) is ticked once per element examined.
    """
    vals = [float(x) for x in values]
    if not 1 <= k <= len(vals):
        raise ValueError(f"k={k} out of range for {len(vals)} values")
    return _select(vals, len(vals) - k, counter)  # k-th largest = (n-k)-th smallest


def _select(vals: list, idx: int, counter) -> float:
    while True:
        n = len(vals)
        if counter is not None:
            counter.tick(n)
        if n <= 5:
            return sorted(vals)[idx]
        medians = [sorted(vals[i : i + 5])[len(vals[i : i + 5]) // 2] for i in range(0, n, 5)]
        pivot = _select(medians, len(medians) // 2, counter)
        lows = [x for x in vals if x < pivot]
        n_eq = sum(1 for x in vals if x == pivot)
        if idx < len(lows):
            vals = lows
        elif idx < len(lows) + n_eq:
            return pivot
        else:
            idx -= len(lows) + n_eq
            vals = [x for x in vals if x > pivot]


def truncate_rank(p: SvdParam, k: int, method: str = "select", counter: StageCounter | None = None) -> SvdParam:
    """Zero all but the ``k`` largest ``|sigma|``; ties keep the lower index."""
    r = p.rank_dim
    if not 1 <= k <= r:
        raise ValueError(f"k must lie in [1, {r}], got {k}")
    mags = np.abs(p.sigma)
    if method == "select":
        threshold = select_kth_largest(mags, k, counter)
        keep = mags > threshold
        ties = np.flatnonzero(mags == threshold)
        keep[ties[: k - int(keep.sum())]] = True
    elif method == "sort":
        order = np.argsort(-mags, kind="stable")
        keep = np.zeros(r, dtype=bool)
        keep[order[:k]] = True
    else:
        raise ValueError(f"unknown selection method {method!r}")
    return p.replace(sigma=np.where(keep, p.sigma, 0.0))


def pseudo_inverse_sigma(sigma: np.ndarray, tol: float = 0.0) -> np.ndarray:
    big = np.abs(sigma) > tol
    return np.divide(1.0, sigma, out=np.zeros_like(sigma), where=big)


def apply_pseudo_inverse(p: SvdParam, X, tol: float = 0.0, block_width=None, algo="fasth") -> np.ndarray:
    """``W^+ X = V Sigma^+ U^T X``; singular values with ``|s| <= tol`` are dropped."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    X = as_matrix(X, rows=p.out_dim)
    t = chain_forward(p.U.reversed(), X, algo, block_width).output
    r = p.rank_dim
    z = np.zeros((p.in_dim, X.shape[1]))
    z[:r] = pseudo_inverse_sigma(p.sigma, tol)[:, None] * t[:r]
    return np.array(chain_forward(p.V, z, algo, block_width).output, copy=True)
