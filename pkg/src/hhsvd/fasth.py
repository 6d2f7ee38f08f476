"""Blocked Householder multiplication and its backward pass.

Forward: compact the chain into WY blocks (independent, parallel), then
apply the ``q = ceil(n/b)`` blocks right to left, saving every intermediate
``A_i``. Backward: propagate ``dL/dA_i`` through the transposed blocks
(sequential, ``q`` stages), then solve one gradient subproblem per block
(parallel, ``b`` stages each) by reconstructing the in-block activations
with ``H^T = H^{-1}`` instead of storing them.

Sequential work is ``O(n/b + b)`` matrix operations instead of ``O(n)``
vector operations.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .dense import HouseholderChain, as_matrix, backward_step
from .errors import DimensionMismatchError, HouseholderError
from .parallel import StageCounter, get_num_threads, parallel_chunks
from .wy import CompactedChain, compact_chain


@dataclass(frozen=True, eq=False)
class TapeForward:
    """``activations[i]`` is ``A_{i+1}``: index 0 is the output, index ``q`` the input."""

    compacted: CompactedChain
    activations: np.ndarray  # (q + 1, d, m)

    @property
    def output(self) -> np.ndarray:
        return self.activations[0]

    @property
    def input(self) -> np.ndarray:
        return self.activations[-1]


@dataclass(frozen=True, eq=False)
class BackwardResult:
    grad_input: np.ndarray  # (d, m)
    grad_vectors: np.ndarray  # (n, d), row k is dL/dv_k


def resolve_block_width(block_width, n: int, m: int) -> int:
    """Default ``b = m``; values above ``n`` are clamped to ``n``."""
    b = m if block_width is None else int(block_width)
    if b < 1:
        raise HouseholderError(f"block width must be >= 1, got {block_width}")
    return max(1, min(b, n)) if n else b


def fasth_forward(
    chain: HouseholderChain, X, block_width: int | None = None, counter: StageCounter | None = None
) -> TapeForward:
    X = as_matrix(X, rows=chain.dim)
    b = resolve_block_width(block_width, len(chain), X.shape[1])
    cc = compact_chain(chain, b, counter=counter)
    q = len(cc)
    A = np.empty((q + 1,) + X.shape)
    A[q] = X
    for i in range(q - 1, -1, -1):
        A[i] = A[i + 1] - 2.0 * cc.W[i] @ (cc.Y[i].T @ A[i + 1])
        if counter is not None:
            counter.tick()
    return TapeForward(cc, A)


def _block_gradients(V: np.ndarray, A: np.ndarray, G: np.ndarray) -> tuple[np.ndarray, int]:
    """Gradient subproblems for a stack of blocks.

    ``V`` is ``(c, b, d)`` (zero rows are padding), ``A`` and ``G`` are the
    block outputs ``A_i`` and ``dL/dA_i`` stacked as ``(c, d, m)``.
    """
    c, b, d = V.shape
    s_all = np.einsum("cbd,cbd->cb", V, V)
    s_all[s_all == 0.0] = 1.0  # padding: v = 0 reflects as the identity
    grads = np.empty((c, b, d))
    A_hat, G_hat = A.copy(), G.copy()
    steps = 0
    for j in range(b):
        _, grads[:, j], _ = backward_step(V[:, j], s_all[:, j], A_hat, G_hat)
        steps += 1
    return grads, steps


def fasth_backward(
    tape: TapeForward, grad_output, counter: StageCounter | None = None
) -> BackwardResult:
    cc = tape.compacted
    G1 = as_matrix(grad_output, "grad_output")
    if G1.shape != tape.output.shape:
        raise DimensionMismatchError(
            f"grad_output has shape {G1.shape}, tape output is {tape.output.shape}"
        )
    q, b, d = len(cc), cc.block_width, cc.dim
    G = np.empty_like(tape.activations)
    G[0] = G1
    for i in range(q):
        G[i + 1] = G[i] - 2.0 * cc.Y[i] @ (cc.W[i].T @ G[i])
        if counter is not None:
            counter.tick()

    grads = np.empty((q, b, d))

    def task(lo, hi):
        width = min(b, cc.n - lo * b) if hi - lo == 1 else b
        g, steps = _block_gradients(cc.V[lo:hi, :width], tape.activations[lo:hi], G[lo:hi])
        grads[lo:hi, :width] = g
        return steps

    steps = parallel_chunks(task, q)
    if counter is not None:
        counter.merge_parallel(steps)
    grad_vectors = grads.reshape(-1, d)[: cc.n].copy()
    return BackwardResult(G[q].copy(), grad_vectors)


def fasth_apply(chain: HouseholderChain, X, block_width: int | None = None) -> np.ndarray:
    return fasth_forward(chain, X, block_width).output.copy()


_TUNED: dict[tuple[int, int, int], int] = {}


def default_candidates(d: int, m: int) -> list[int]:
    top = 2 * math.ceil(math.sqrt(d))
    cands = set(range(2, top + 1)) | {m}
    return sorted(c for c in cands if 1 <= c <= d) or [1]


def tune_block_width(d: int, m: int, candidates=None, timed: bool = True, seed: int = 0, reps: int = 2) -> int:
    """Pick a block width for ``d x d`` chains acting on ``d x m`` inputs.

    With ``timed=False`` this returns ``round(sqrt(d))``, which minimises the
    sequential stage count. Otherwise every candidate is timed on a full
    forward+backward over synthetic data and the fastest wins; the choice is
    cached per ``(d, m)`` and thread count when the default candidate set
    is used.
    """
    if not timed:
        return max(1, round(math.sqrt(d)))
    key = (d, m, get_num_threads())
    if candidates is None and key in _TUNED:
        return _TUNED[key]
    cands = default_candidates(d, m) if candidates is None else sorted(set(candidates))
    rng = np.random.default_rng(seed)
    chain = HouseholderChain.random(d, d, rng)
    X = rng.standard_normal((d, m))
    G = rng.standard_normal((d, m))
    best, best_t = cands[0], math.inf
    for b in cands:
        t = math.inf
        for _ in range(reps):
            t0 = time.perf_counter()
            fasth_backward(fasth_forward(chain, X, b), G)
            t = min(t, time.perf_counter() - t0)
        if t < best_t:
            best, best_t = b, t
    if candidates is None:
        _TUNED[key] = best
    return best


def count_sequential_stages(d: int, n: int, m: int, b: int, seed: int = 0) -> tuple[int, int]:
    """Run an instrumented forward and backward pass; return both stage counts."""
    if min(d, n, m, b) < 1:
        raise ValueError("d, n, m and b must be positive")
    rng = np.random.default_rng(seed)
    chain = HouseholderChain.random(d, n, rng)
    X = rng.standard_normal((d, m))
    fwd, bwd = StageCounter(), StageCounter()
    tape = fasth_forward(chain, X, b, counter=fwd)
    fasth_backward(tape, rng.standard_normal((d, m)), counter=bwd)
    return fwd.stages, bwd.stages
