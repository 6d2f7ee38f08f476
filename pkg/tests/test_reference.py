import numpy as np
import pytest

from hhsvd import HouseholderChain, chain_apply_sequential, fasth_backward, fasth_forward, householder_apply_left, householder_grad
from hhsvd.reference import dense_backward, dense_forward, dense_parallel_forward, sequential_forward_backward
from oracles import rel_err


def test_empty_chain(rng):
    X, G = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
    out, res = sequential_forward_backward(HouseholderChain.identity(4), X, G)
    np.testing.assert_array_equal(out, X)
    np.testing.assert_array_equal(res.grad_input, G)
    assert res.grad_vectors.size == 0


def test_single_factor(rng):
    v = rng.standard_normal(5)
    X, G = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    out, res = sequential_forward_backward(HouseholderChain([v]), X, G)
    np.testing.assert_allclose(out, householder_apply_left(v, X), atol=1e-15)
    np.testing.assert_allclose(res.grad_vectors[0], householder_grad(v, X, G), rtol=1e-13, atol=1e-14)


def test_dense_parallel_hand_case(rng):
    X = rng.standard_normal((3, 2))
    np.testing.assert_allclose(dense_parallel_forward(HouseholderChain([[1.0, 0, 0]]), X), np.diag([-1.0, 1, 1]) @ X)
    np.testing.assert_allclose(dense_parallel_forward(HouseholderChain.identity(3), X), X)


@pytest.mark.parametrize("d", [3, 32, 128])
def test_three_strategies_agree(rng, d):
    chain = HouseholderChain.random(d, d, rng)
    X, G = rng.standard_normal((d, 4)), rng.standard_normal((d, 4))
    seq, seq_grad = sequential_forward_backward(chain, X, G)
    tape = fasth_forward(chain, X, 4)
    fast_grad = fasth_backward(tape, G)
    assert rel_err(dense_parallel_forward(chain, X), seq) < 1e-10
    assert rel_err(tape.output, seq) < 1e-10
    assert rel_err(fast_grad.grad_vectors, seq_grad.grad_vectors) < 1e-10
    dense_grad = dense_backward(dense_forward(chain, X), G)
    assert rel_err(dense_grad.grad_input, seq_grad.grad_input) < 1e-10
    assert rel_err(dense_grad.grad_vectors, seq_grad.grad_vectors) < 1e-10


def test_sequential_does_not_crash_at_512(rng):
    d = 512
    chain = HouseholderChain.random(d, d, rng)
    X, G = rng.standard_normal((d, 32)), rng.standard_normal((d, 32))
    out, res = sequential_forward_backward(chain, X, G)
    assert np.all(np.isfinite(out)) and np.all(np.isfinite(res.grad_vectors))
    assert rel_err(out, chain_apply_sequential(chain, X)) < 1e-12
