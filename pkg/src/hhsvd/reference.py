"""Baselines: the one-reflection-at-a-time algorithm and dense materialisation.

Both serve as correctness oracles and benchmark comparators. The sequential
backward uses the same gradient kernel as the blocked one, so any
disagreement points at the blocking logic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense import HouseholderChain, as_matrix, backward_step, chain_apply_sequential, chain_to_dense
from .errors import DimensionMismatchError
from .fasth import BackwardResult


@dataclass(frozen=True, eq=False)
class SequentialTape:
    chain: HouseholderChain
    output: np.ndarray


@dataclass(frozen=True, eq=False)
class DenseTape:
    chain: HouseholderChain
    input: np.ndarray
    matrix: np.ndarray
    output: np.ndarray


def sequential_forward(chain: HouseholderChain, X) -> SequentialTape:
    return SequentialTape(chain, chain_apply_sequential(chain, X))


def sequential_backward(tape: SequentialTape, grad_output) -> BackwardResult:
    """Walk ``H_1 .. H_n``, rebuilding each factor's input from the output."""
    chain = tape.chain
    g = as_matrix(grad_output, "grad_output")
    if g.shape != tape.output.shape:
        raise DimensionMismatchError(f"grad_output {g.shape} != output {tape.output.shape}")
    a = np.array(tape.output, copy=True)
    g = np.array(g, copy=True)
    grads = np.empty((len(chain), chain.dim))
    for j, (v, s) in enumerate(zip(chain.vectors, chain.norms_sq())):
        _, grads[j], _ = backward_step(v, s, a, g)
    return BackwardResult(g, grads)


def sequential_forward_backward(chain: HouseholderChain, X, grad_output):
    tape = sequential_forward(chain, X)
    return tape.output, sequential_backward(tape, grad_output)


def dense_parallel_forward(chain: HouseholderChain, X) -> np.ndarray:
    """Materialise ``H_1 ... H_n`` (O(d^3)) and multiply once."""
    X = as_matrix(X, rows=chain.dim)
    return chain_to_dense(chain) @ X


def dense_forward(chain: HouseholderChain, X) -> DenseTape:
    X = as_matrix(X, rows=chain.dim)
    Q = chain_to_dense(chain)
    return DenseTape(chain, X, Q, Q @ X)


def dense_backward(tape: DenseTape, grad_output) -> BackwardResult:
    # dL/dX from the dense matrix; vector gradients reuse the sequential walk
    g = as_matrix(grad_output, "grad_output")
    if g.shape != tape.output.shape:
        raise DimensionMismatchError(f"grad_output {g.shape} != output {tape.output.shape}")
    grads = sequential_backward(SequentialTape(tape.chain, tape.output), g).grad_vectors
    return BackwardResult(tape.matrix.T @ g, grads)
