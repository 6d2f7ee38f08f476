import struct

import numpy as np
import pytest

from hhsvd import (
    DegenerateVectorError,
    DimensionMismatchError,
    HouseholderChain,
    NonFiniteError,
    SvdParam,
    chain_to_dense,
    clamp_sigma,
    load_svd,
    materialize,
    save_svd,
    svd_backward,
    svd_forward,
    svd_step,
)
from hhsvd.svd import SvdGradients, from_bytes, to_bytes
from oracles import dense_product, fd_close, finite_diff, rel_err, svd_dense


def random_param(rng, out_dim, in_dim, n_u=None, n_v=None):
    sigma = rng.uniform(0.5, 2.0, min(out_dim, in_dim)) * rng.choice([-1.0, 1.0], min(out_dim, in_dim))
    return SvdParam.random(out_dim, in_dim, rng, n_u=n_u, n_v=n_v, sigma=sigma)


def test_identity_forward(rng):
    X = rng.standard_normal((4, 3))
    Y, _ = svd_forward(SvdParam.identity(4), X)
    np.testing.assert_array_equal(Y, X)


def test_diagonal_forward():
    p = SvdParam.identity(2).replace(sigma=[2.0, 3.0])
    Y, _ = svd_forward(p, np.eye(2))
    np.testing.assert_array_equal(Y, np.diag([2.0, 3.0]))


@pytest.mark.parametrize("algo", ["fasth", "sequential", "dense-parallel"])
def test_forward_matches_dense(rng, algo):
    p = random_param(rng, 8, 8)
    X = rng.standard_normal((8, 3))
    Y, _ = svd_forward(p, X, 3, algo=algo)
    W = svd_dense(p.U.vectors, p.V.vectors, p.sigma, 8, 8)
    assert rel_err(Y, W @ X) < 1e-10


@pytest.mark.parametrize("out_dim,in_dim", [(6, 4), (4, 6), (5, 5)])
def test_rectangular_forward(rng, out_dim, in_dim):
    p = random_param(rng, out_dim, in_dim)
    X = rng.standard_normal((in_dim, 2))
    Y, _ = svd_forward(p, X, 2)
    S = np.zeros((out_dim, in_dim))
    S[np.arange(p.rank_dim), np.arange(p.rank_dim)] = p.sigma
    W = dense_product(p.U.vectors) @ S @ dense_product(p.V.vectors).T
    assert Y.shape == (out_dim, 2)
    assert rel_err(Y, W @ X) < 1e-10
    assert rel_err(materialize(p), W) < 1e-12


def test_singular_values_are_abs_sigma(rng):
    p = random_param(rng, 7, 5)
    s = np.linalg.svd(materialize(p), compute_uv=False)
    np.testing.assert_allclose(s, np.sort(np.abs(p.sigma))[::-1], rtol=1e-12)


def test_forward_shape_error(rng):
    with pytest.raises(DimensionMismatchError):
        svd_forward(random_param(rng, 4, 3), np.ones((4, 2)))


def test_backward_zero(rng):
    p = random_param(rng, 5, 5)
    _, tape = svd_forward(p, rng.standard_normal((5, 2)))
    g = svd_backward(p, tape, np.zeros((5, 2)))
    for a in (g.grad_U_vectors, g.grad_V_vectors, g.grad_sigma, g.grad_input):
        assert not np.any(a)


def test_backward_empty_chains(rng):
    p = SvdParam.identity(3).replace(sigma=[2.0, -1.0, 0.5])
    X, G = rng.standard_normal((3, 4)), rng.standard_normal((3, 4))
    _, tape = svd_forward(p, X)
    g = svd_backward(p, tape, G)
    np.testing.assert_allclose(g.grad_sigma, np.sum(G * X, axis=1), rtol=1e-14)
    np.testing.assert_allclose(g.grad_input, p.sigma[:, None] * G, rtol=1e-14)


@pytest.mark.parametrize("out_dim,in_dim", [(6, 6), (6, 4), (3, 5)])
def test_backward_finite_differences(rng, out_dim, in_dim):
    p = random_param(rng, out_dim, in_dim)
    p = SvdParam(HouseholderChain(p.U.vectors * 1.7), HouseholderChain(p.V.vectors * 0.6), p.sigma)
    m = 2
    X, G = rng.standard_normal((in_dim, m)), rng.standard_normal((out_dim, m))
    _, tape = svd_forward(p, X, 2)
    g = svd_backward(p, tape, G)

    def loss(Uv=p.U.vectors, Vv=p.V.vectors, s=p.sigma, Z=X):
        return np.sum(G * (svd_dense(Uv, Vv, s, out_dim, in_dim) @ Z))

    assert fd_close(g.grad_U_vectors, finite_diff(lambda a: loss(Uv=a), p.U.vectors))
    assert fd_close(g.grad_V_vectors, finite_diff(lambda a: loss(Vv=a), p.V.vectors))
    assert fd_close(g.grad_sigma, finite_diff(lambda a: loss(s=a), p.sigma))
    assert fd_close(g.grad_input, finite_diff(lambda a: loss(Z=a), X))


def test_backward_matches_dense_chain_rule(rng):
    d = 12
    p = random_param(rng, d, d)
    X, G = rng.standard_normal((d, 3)), rng.standard_normal((d, 3))
    _, tape = svd_forward(p, X, 4)
    g = svd_backward(p, tape, G)
    U, V = chain_to_dense(p.U), chain_to_dense(p.V)
    # explicit dense chain rule for Y = U S V^T X
    np.testing.assert_allclose(g.grad_input, V @ np.diag(p.sigma) @ U.T @ G, atol=1e-9)
    np.testing.assert_allclose(g.grad_sigma, np.diag(U.T @ G @ X.T @ V), atol=1e-9)


def test_step_zero_is_identity(rng):
    p = random_param(rng, 4, 4)
    _, tape = svd_forward(p, rng.standard_normal((4, 2)))
    g = svd_backward(p, tape, rng.standard_normal((4, 2)))
    q = svd_step(p, g, 0.0)
    np.testing.assert_array_equal(q.U.vectors, p.U.vectors)
    np.testing.assert_array_equal(q.V.vectors, p.V.vectors)
    np.testing.assert_array_equal(q.sigma, p.sigma)


def test_step_updates_and_stays_orthogonal(rng):
    d = 16
    p = random_param(rng, d, d)
    for _ in range(100):
        X, G = rng.standard_normal((d, 4)), rng.standard_normal((d, 4))
        _, tape = svd_forward(p, X, 4)
        g = svd_backward(p, tape, G)
        q = svd_step(p, g, 0.05)
        np.testing.assert_allclose(q.sigma, p.sigma - 0.05 * g.grad_sigma)
        np.testing.assert_allclose(q.U.vectors, p.U.vectors - 0.05 * g.grad_U_vectors)
        p = q
        for Q in (chain_to_dense(p.U), chain_to_dense(p.V)):
            assert np.linalg.norm(Q.T @ Q - np.eye(d)) < 1e-10


def test_step_reports_degenerate_vector():
    p = SvdParam(HouseholderChain([[1.0, 0.0]]), HouseholderChain([[0.0, 1.0], [1.0, 1.0]]), [1.0, 1.0])
    g = SvdGradients(np.zeros((1, 2)), np.array([[0.0, 0.0], [1.0, 1.0]]), np.zeros(2), np.zeros((2, 1)))
    with pytest.raises(DegenerateVectorError) as exc:
        svd_step(p, g, 1.0)
    assert exc.value.chain == "V" and exc.value.index == 1


def test_clamp_sigma():
    p = SvdParam.identity(3).replace(sigma=[0.5, 1.0, 2.0])
    np.testing.assert_allclose(clamp_sigma(p, 0.1).sigma, [0.9, 1.0, 1.1])
    np.testing.assert_array_equal(clamp_sigma(p, 0.0).sigma, [1.0, 1.0, 1.0])
    inside = p.replace(sigma=[0.95, 1.0, 1.05])
    np.testing.assert_array_equal(clamp_sigma(inside, 0.1).sigma, inside.sigma)
    with pytest.raises(ValueError):
        clamp_sigma(p, 1.0)


def test_param_validation():
    with pytest.raises(DimensionMismatchError):
        SvdParam(HouseholderChain.identity(3), HouseholderChain.identity(2), [1.0, 1.0, 1.0])
    with pytest.raises(NonFiniteError):
        SvdParam.identity(2).replace(sigma=[1.0, np.nan])


def test_serialization_layout():
    p = SvdParam(HouseholderChain([[1.0, 2.0, 3.0]]), HouseholderChain.identity(2), [4.0, 5.0])
    data = to_bytes(p)
    assert data[:4] == b"OSVD"
    assert struct.unpack_from("<5I", data, 4) == (1, 3, 2, 1, 0)
    assert np.frombuffer(data[24:], "<f8").tolist() == [1.0, 2.0, 3.0, 4.0, 5.0]


@pytest.mark.parametrize("seed", range(20))
def test_serialization_round_trip(tmp_path, seed):
    rng = np.random.default_rng(seed)
    out_dim, in_dim = (int(x) for x in rng.integers(1, 10, 2))
    p = SvdParam.random(out_dim, in_dim, rng, n_u=int(rng.integers(0, out_dim + 1)),
                        n_v=int(rng.integers(0, in_dim + 1)), sigma=rng.standard_normal(min(out_dim, in_dim)))
    path = tmp_path / "p.osvd"
    save_svd(p, path)
    q = load_svd(path)
    assert q.U.vectors.tobytes() == p.U.vectors.tobytes()
    assert q.V.vectors.tobytes() == p.V.vectors.tobytes()
    assert q.sigma.tobytes() == p.sigma.tobytes()


def test_deserialization_errors():
    p = SvdParam.identity(2)
    data = to_bytes(p)
    with pytest.raises(ValueError):
        from_bytes(b"XSVD" + data[4:])
    with pytest.raises(ValueError):
        from_bytes(data[:-1])
    with pytest.raises(ValueError):
        from_bytes(data[:4] + struct.pack("<I", 9) + data[8:])
    bad = bytearray(data)
    bad[-8:] = struct.pack("<d", float("nan"))
    with pytest.raises(NonFiniteError):
        from_bytes(bytes(bad))
