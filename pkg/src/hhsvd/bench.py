"""Timing harness: forward plus backward over Gaussian dummy data.

For ``op="mul"`` one orthogonal chain is timed on ``X`` with dummy gradient
``G``. Matrix operations time the sigma-level operation, the forward pass
and all gradients (w.r.t. ``U``, ``sigma``, ``V`` and ``X``) together.
"""
from __future__ import annotations

import csv
import hashlib
import io
import time
from dataclasses import dataclass, field

import numpy as np

from . import matops
from .dense import HouseholderChain
from .errors import HouseholderError
from .fasth import tune_block_width
from .parallel import get_num_threads, num_threads
from .svd import ALGORITHMS, SvdParam, chain_backward, chain_forward, svd_backward, svd_forward

OPS = ("mul", "inverse", "det", "exp", "cayley", "layer")
CSV_HEADER = ["algo", "op", "d", "m", "k", "reps", "threads", "mean_s", "std_s", "checksum"]
# outputs of different algorithms must agree to this relative Frobenius error
AGREEMENT_TOL = 1e-8


class ConfigError(ValueError):
    pass


class ResultMismatchError(HouseholderError):
    pass


@dataclass
class BenchConfig:
    d: list = field(default_factory=lambda: [64])
    m: int = 32
    k: object = "auto"  # int or "auto"
    algos: list = field(default_factory=lambda: ["fasth"])
    ops: list = field(default_factory=lambda: ["mul"])
    reps: int = 100
    seed: int = 0
    threads: int = 1

    def validate(self) -> None:
        if not self.d or any(int(x) < 1 for x in self.d):
            raise ConfigError(f"dimensions must be positive, got {self.d}")
        if self.m < 1:
            raise ConfigError(f"batch size must be positive, got {self.m}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if self.threads < 0:
            raise ConfigError(f"threads must be >= 0, got {self.threads}")
        if self.k != "auto" and (not isinstance(self.k, int) or self.k < 1):
            raise ConfigError(f"k must be a positive int or 'auto', got {self.k!r}")
        for a in self.algos:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algo {a!r}; choose from {', '.join(ALGORITHMS)}")
        for o in self.ops:
            if o not in OPS:
                raise ConfigError(f"unknown op {o!r}; choose from {', '.join(OPS)}")
        if not self.algos or not self.ops:
            raise ConfigError("need at least one algo and one op")


@dataclass
class BenchRecord:
    algo: str
    op: str
    d: int
    m: int
    k: str
    reps: int
    threads: int
    mean_seconds: float
    std_seconds: float
    checksum: str

    def row(self) -> list:
        return [self.algo, self.op, self.d, self.m, self.k, self.reps, self.threads,
                f"{self.mean_seconds:.6e}", f"{self.std_seconds:.6e}", self.checksum]


def checksum(M: np.ndarray) -> str:
    """Hash of ``M`` rounded to 8 decimals (signed zeros folded)."""
    r = np.round(np.asarray(M, dtype=np.float64), 8) + 0.0
    return hashlib.sha256(np.ascontiguousarray(r).tobytes()).hexdigest()[:16]


def _problem(op: str, d: int, m: int, seed: int):
    rng = np.random.default_rng([seed, d, OPS.index(op)])
    X = rng.standard_normal((d, m))
    G = rng.standard_normal((d, m))
    if op == "mul":
        return HouseholderChain.random(d, d, rng), X, G
    sigma = rng.uniform(0.5, 2.0, d) * rng.choice([-1.0, 1.0], d)
    if op in ("exp", "cayley"):
        sigma = np.abs(sigma)  # keeps Cayley away from its pole at -1
        return SvdParam.symmetric(HouseholderChain.random(d, d, rng), sigma), X, G
    return SvdParam.random(d, d, rng, sigma=sigma), X, G


def _workload(op: str, problem, X, G, algo: str, k):
    """Operation + forward + backward.

    Returns the forward output and the gradients w.r.t. the original
    parameter (chain vectors, sigma) and ``X``.
    """
    if op == "mul":
        tape = chain_forward(problem, X, algo, k)
        res = chain_backward(tape, G)
        return tape.output, (res.grad_vectors, res.grad_input)
    p = problem
    if op == "layer":
        q, dsig = p, 1.0
    elif op == "det":
        matops.log_abs_det(p)
        q, dsig = p, 1.0
    elif op == "inverse":
        q = matops.inverse_param(p)
        dsig = -1.0 / p.sigma**2
    elif op == "exp":
        q = matops.exponential_param(p)
        dsig = q.sigma
    else:
        q = matops.cayley_param(p)
        dsig = -2.0 / (1.0 + p.sigma) ** 2
    Y, tape = svd_forward(q, X, k, algo)
    g = svd_backward(q, tape, G)
    grad_sigma = g.grad_sigma * dsig
    if op == "det":
        grad_sigma = grad_sigma + 1.0 / p.sigma  # d log|det| / d sigma
    if op == "inverse":
        grad_u, grad_v = g.grad_V_vectors, g.grad_U_vectors
    elif op in ("exp", "cayley"):
        grad_u, grad_v = g.grad_U_vectors + g.grad_V_vectors, None
    else:
        grad_u, grad_v = g.grad_U_vectors, g.grad_V_vectors
    return Y, (grad_u, grad_v, grad_sigma, g.grad_input)


def _rel_err(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def run_bench(config: BenchConfig, progress=None) -> list[BenchRecord]:
    """Time every (op, d, algo) combination; one record each.

    Raises :class:`ResultMismatchError` when algorithms disagree on the same
    inputs.
    """
    config.validate()
    records = []
    with num_threads(config.threads):
        threads = get_num_threads()
        for op in config.ops:
            for d in (int(x) for x in config.d):
                problem, X, G = _problem(op, d, config.m, config.seed)
                reference_out = None
                for algo in config.algos:
                    if algo == "fasth":
                        k = tune_block_width(d, config.m) if config.k == "auto" else min(config.k, d)
                        k_label = str(k)
                    else:
                        k, k_label = None, "-"
                    out, _ = _workload(op, problem, X, G, algo, k)  # warm-up, untimed
                    if reference_out is None:
                        reference_out = out
                    elif _rel_err(out, reference_out) > AGREEMENT_TOL:
                        raise ResultMismatchError(
                            f"{algo} disagrees with {config.algos[0]} on op={op} d={d}: "
                            f"relative error {_rel_err(out, reference_out):.3g}"
                        )
                    times = []
                    for _ in range(config.reps):
                        t0 = time.perf_counter()
                        _workload(op, problem, X, G, algo, k)
                        times.append(time.perf_counter() - t0)
                    rec = BenchRecord(algo, op, d, config.m, k_label, config.reps, threads,
                                      float(np.mean(times)), float(np.std(times)),
                                      checksum(out))
                    records.append(rec)
                    if progress is not None:
                        progress(rec)
    return records


def write_csv(records, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())


def to_csv(records) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def parse_dims(text: str) -> list[int]:
    """``"64,128"`` or ``"start:step:count"`` (e.g. ``64:64:48``)."""
    text = text.strip()
    try:
        if ":" in text:
            start, step, count = (int(x) for x in text.split(":"))
            if count < 1:
                raise ConfigError("count must be >= 1")
            dims = [start + i * step for i in range(count)]
        else:
            dims = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"cannot parse dimension list {text!r}: {e}") from None
    if not dims or any(x < 1 for x in dims):
        raise ConfigError(f"dimensions must be positive, got {text!r}")
    return dims


def speedup(records, base: str = "sequential", algo: str = "fasth") -> dict:
    """Mean-time ratio ``base / algo`` per ``(op, d)``."""
    t = {(r.algo, r.op, r.d): r.mean_seconds for r in records}
    return {(op, d): t[(base, op, d)] / t[(algo, op, d)]
            for (a, op, d) in t if a == algo and (base, op, d) in t and t[(algo, op, d)] > 0}

