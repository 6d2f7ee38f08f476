"""Weights kept in SVD form ``W = U diag(sigma) V^T``.

``U`` and ``V`` are Householder chains, so gradient steps on their vectors
can never break orthogonality. ``sigma`` has ``min(out_dim, in_dim)``
entries; for rectangular weights the diagonal is padded with zero rows or
columns.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import reference
from .dense import DEGENERATE_NORM_SQ, HouseholderChain, as_matrix, chain_to_dense
from .errors import DegenerateVectorError, DimensionMismatchError, HouseholderError, NonFiniteError
from .fasth import BackwardResult, TapeForward, fasth_backward, fasth_forward

ALGORITHMS = ("fasth", "sequential", "dense-parallel")


@dataclass(frozen=True, eq=False)
class SvdParam:
    U: HouseholderChain
    V: HouseholderChain
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=np.float64, copy=True).reshape(-1)
        if sigma.shape[0] != min(self.U.dim, self.V.dim):
            raise DimensionMismatchError(
                f"sigma has {sigma.shape[0]} entries, expected min({self.U.dim}, {self.V.dim})"
            )
        if not np.all(np.isfinite(sigma)):
            raise NonFiniteError("sigma contains NaN or Inf")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    @property
    def out_dim(self) -> int:
        return self.U.dim

    @property
    def in_dim(self) -> int:
        return self.V.dim

    @property
    def rank_dim(self) -> int:
        return self.sigma.shape[0]

    @property
    def is_square(self) -> bool:
        return self.U.dim == self.V.dim

    @classmethod
    def random(cls, out_dim: int, in_dim: int | None = None, rng=None, n_u=None, n_v=None, sigma=None):
        """Unit Gaussian Householder vectors and, unless given, ``sigma = 1``."""
        in_dim = out_dim if in_dim is None else in_dim
        rng = np.random.default_rng(rng)
        U = HouseholderChain.random(out_dim, n_u, rng)
        V = HouseholderChain.random(in_dim, n_v, rng)
        if sigma is None:
            sigma = np.ones(min(out_dim, in_dim))
        return cls(U, V, sigma)

    @classmethod
    def identity(cls, out_dim: int, in_dim: int | None = None):
        in_dim = out_dim if in_dim is None else in_dim
        return cls(HouseholderChain.identity(out_dim), HouseholderChain.identity(in_dim),
                   np.ones(min(out_dim, in_dim)))

    @classmethod
    def symmetric(cls, U: HouseholderChain, sigma):
        """``W = U diag(sigma) U^T``; the ``V`` slot is left empty."""
        return cls(U, HouseholderChain.identity(U.dim), sigma)

    def replace(self, U=None, V=None, sigma=None) -> "SvdParam":
        return SvdParam(self.U if U is None else U, self.V if V is None else V,
                        self.sigma if sigma is None else sigma)


@dataclass(frozen=True, eq=False)
class SvdGradients:
    grad_U_vectors: np.ndarray
    grad_V_vectors: np.ndarray
    grad_sigma: np.ndarray
    grad_input: np.ndarray


@dataclass(frozen=True, eq=False)
class SvdTape:
    u_tape: object
    v_tape: object
    t1: np.ndarray  # V^T X
    algo: str


def sigma_matrix(p: SvdParam) -> np.ndarray:
    S = np.zeros((p.out_dim, p.in_dim))
    r = p.rank_dim
    S[np.arange(r), np.arange(r)] = p.sigma
    return S


def materialize(p: SvdParam) -> np.ndarray:
    """Dense ``U Sigma V^T``; O(d^3), meant for checks and small sizes."""
    return chain_to_dense(p.U) @ sigma_matrix(p) @ chain_to_dense(p.V).T


def chain_forward(chain: HouseholderChain, X, algo: str = "fasth", block_width=None):
    if algo == "fasth":
        return fasth_forward(chain, X, block_width)
    if algo == "sequential":
        return reference.sequential_forward(chain, X)
    if algo == "dense-parallel":
        return reference.dense_forward(chain, X)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")


def chain_backward(tape, grad_output) -> BackwardResult:
    if isinstance(tape, TapeForward):
        return fasth_backward(tape, grad_output)
    if isinstance(tape, reference.SequentialTape):
        return reference.sequential_backward(tape, grad_output)
    if isinstance(tape, reference.DenseTape):
        return reference.dense_backward(tape, grad_output)
    raise TypeError(f"not a chain tape: {type(tape).__name__}")


def _scale_rows(sigma: np.ndarray, T: np.ndarray, rows: int) -> np.ndarray:
    out = np.zeros((rows, T.shape[1]))
    r = sigma.shape[0]
    out[:r] = sigma[:, None] * T[:r]
    return out


def svd_forward(p: SvdParam, X, block_width=None, algo: str = "fasth"):
    """``Y = U (Sigma (V^T X))``. Returns ``(Y, tape)``."""
    X = as_matrix(X, rows=p.in_dim)
    tv = chain_forward(p.V.reversed(), X, algo, block_width)
    t1 = tv.output
    tu = chain_forward(p.U, _scale_rows(p.sigma, t1, p.out_dim), algo, block_width)
    return np.array(tu.output, copy=True), SvdTape(tu, tv, t1, algo)


def svd_backward(p: SvdParam, tape: SvdTape, grad_output) -> SvdGradients:
    bu = chain_backward(tape.u_tape, grad_output)
    g2 = bu.grad_input
    r = p.rank_dim
    # Sigma is constrained diagonal: keep the diagonal of G2 T1^T only
    grad_sigma = np.einsum("ij,ij->i", g2[:r], tape.t1[:r])
    g1 = _scale_rows(p.sigma, g2, p.in_dim)
    bv = chain_backward(tape.v_tape, g1)
    return SvdGradients(bu.grad_vectors, bv.grad_vectors[::-1].copy(), grad_sigma, bv.grad_input)


def _stepped_chain(chain: HouseholderChain, grad: np.ndarray, eta: float, name: str) -> HouseholderChain:
    if len(chain) == 0:
        return chain
    new = chain.vectors - eta * np.asarray(grad, dtype=np.float64)
    norms = np.einsum("ij,ij->i", new, new)
    bad = np.flatnonzero(~(norms > DEGENERATE_NORM_SQ))
    if bad.size:
        raise DegenerateVectorError(
            f"step makes {name} vector {bad[0]} degenerate (|v|^2={norms[bad[0]]:.3g})",
            chain=name, index=int(bad[0]),
        )
    return HouseholderChain(new, dim=chain.dim)


def svd_step(p: SvdParam, g: SvdGradients, eta: float) -> SvdParam:
    """Plain gradient step on every Householder vector and on sigma."""
    if not np.isfinite(eta):
        raise HouseholderError(f"step size must be finite, got {eta}")
    if eta == 0:
        return p
    return SvdParam(
        _stepped_chain(p.U, g.grad_U_vectors, eta, "U"),
        _stepped_chain(p.V, g.grad_V_vectors, eta, "V"),
        p.sigma - eta * np.asarray(g.grad_sigma),
    )


def clamp_sigma(p: SvdParam, epsilon: float) -> SvdParam:
    """Project every singular value onto ``[1 - epsilon, 1 + epsilon]``."""
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    return p.replace(sigma=np.clip(p.sigma, 1.0 - epsilon, 1.0 + epsilon))


# Binary layout, little-endian: magic, version, out_dim, in_dim, nU, nV,
# then U vectors, V vectors and sigma as float64.
MAGIC = b"OSVD"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4s5I")


def to_bytes(p: SvdParam) -> bytes:
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, p.out_dim, p.in_dim, len(p.U), len(p.V))
    body = [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in (p.U.vectors, p.V.vectors, p.sigma)]
    return header + b"".join(body)


def from_bytes(data: bytes) -> SvdParam:
    if len(data) < _HEADER.size:
        raise ValueError("truncated OSVD data")
    magic, version, out_dim, in_dim, n_u, n_v = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported OSVD version {version}")
    if out_dim < 1 or in_dim < 1:
        raise ValueError("dimensions must be positive")
    r = min(out_dim, in_dim)
    counts = (n_u * out_dim, n_v * in_dim, r)
    expected = _HEADER.size + 8 * sum(counts)
    if len(data) != expected:
        raise ValueError(f"OSVD payload is {len(data)} bytes, expected {expected}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    u, v = counts[0], counts[0] + counts[1]
    U = HouseholderChain(flat[:u].reshape(n_u, out_dim), dim=out_dim)
    V = HouseholderChain(flat[u:v].reshape(n_v, in_dim), dim=in_dim)
    return SvdParam(U, V, flat[v:])


def save_svd(p: SvdParam, path) -> None:
    Path(path).write_bytes(to_bytes(p))


def load_svd(path) -> SvdParam:
    return from_bytes(Path(path).read_bytes())
