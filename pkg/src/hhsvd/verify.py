"""Self-check suite: oracle agreement, gradients, invariants, I/O."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import matops
from .dense import HouseholderChain, chain_apply_sequential, chain_to_dense
from .fasth import count_sequential_stages, fasth_backward, fasth_forward
from .gradcheck import central_difference, gradient_mismatch
from .reference import dense_parallel_forward, sequential_forward_backward
from .svd import SvdParam, from_bytes, load_svd, materialize, svd_backward, svd_forward, svd_step, to_bytes


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        width = max((len(c.name) for c in self.checks), default=5)
        lines = [f"{'check':<{width}}  status  detail"]
        for c in self.checks:
            lines.append(f"{c.name:<{width}}  {'PASS' if c.passed else 'FAIL':<6}  {c.detail}")
        lines.append(f"{sum(c.passed for c in self.checks)}/{len(self.checks)} checks passed")
        return "\n".join(lines)

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check", "status", "detail"])
        for c in self.checks:
            w.writerow([c.name, "pass" if c.passed else "fail", c.detail])
        return buf.getvalue()


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _check_forward(dims, rng):
    worst = 0.0
    for d in dims:
        chain = HouseholderChain.random(d, d, rng)
        X = rng.standard_normal((d, 4))
        ref = chain_apply_sequential(chain, X)
        for b in sorted({1, 2, max(1, round(math.sqrt(d))), d}):
            worst = max(worst, _rel(fasth_forward(chain, X, b).output, ref))
        worst = max(worst, _rel(dense_parallel_forward(chain, X), ref))
    return worst < 1e-10, f"max rel err {worst:.2e} (tol 1e-10)"


def _check_backward(dims, rng):
    worst = 0.0
    for d in dims:
        chain = HouseholderChain.random(d, d, rng)
        X, G = rng.standard_normal((d, 3)), rng.standard_normal((d, 3))
        _, ref = sequential_forward_backward(chain, X, G)
        for b in sorted({1, 3, d}):
            res = fasth_backward(fasth_forward(chain, X, min(b, d)), G)
            worst = max(worst, _rel(res.grad_vectors, ref.grad_vectors), _rel(res.grad_input, ref.grad_input))
    return worst < 1e-10, f"max rel err vs sequential backward {worst:.2e} (tol 1e-10)"


def _check_gradients(rng, d=6, m=2):
    chain = HouseholderChain.random(d, d, rng, normalize=False)
    X, G = rng.standard_normal((d, m)), rng.standard_normal((d, m))
    res = fasth_backward(fasth_forward(chain, X, 2), G)
    num_v = central_difference(lambda V: np.sum(G * chain_apply_sequential(HouseholderChain(V), X)), chain.vectors)
    num_x = central_difference(lambda Z: np.sum(G * chain_apply_sequential(chain, Z)), X)
    p = SvdParam.random(d, d, rng, sigma=rng.uniform(0.5, 2.0, d))
    Y, tape = svd_forward(p, X, 2)
    g = svd_backward(p, tape, G)
    num_s = central_difference(lambda s: np.sum(G * (materialize(p.replace(sigma=s)) @ X)), p.sigma)
    worst = max(gradient_mismatch(res.grad_vectors, num_v), gradient_mismatch(res.grad_input, num_x),
                gradient_mismatch(g.grad_sigma, num_s))
    return worst <= 1.0, f"worst finite-difference mismatch {worst:.2f} (<= 1 passes)"


def _check_orthogonality(rng, d=16, steps=100):
    p = SvdParam.random(d, d, rng)
    worst = 0.0
    for _ in range(steps):
        X, G = rng.standard_normal((d, 4)), rng.standard_normal((d, 4))
        _, tape = svd_forward(p, X, 4)
        p = svd_step(p, svd_backward(p, tape, G), 0.01)
        for Q in (chain_to_dense(p.U), chain_to_dense(p.V)):
            worst = max(worst, float(np.linalg.norm(Q.T @ Q - np.eye(d))))
    return worst < 1e-9, f"max |Q^T Q - I|_F {worst:.2e} over {steps} steps"


def _check_stages(dims):
    bad = []
    for d in dims:
        for b in range(1, d + 1):
            fwd, _ = count_sequential_stages(d, d, 2, b)
            if fwd != -(-d // b) + b:
                bad.append((d, b, fwd))
    return not bad, "forward stages = ceil(n/b) + b" if not bad else f"mismatches {bad[:3]}"


def _check_matops(rng, d=16):
    p = SvdParam.random(d, d, rng, sigma=rng.uniform(0.5, 2.0, d) * rng.choice([-1, 1], d))
    W = materialize(p)
    X = rng.standard_normal((d, 3))
    ps = SvdParam.symmetric(HouseholderChain.random(d, d, rng), rng.uniform(-1.5, 1.5, d))
    S = materialize(SvdParam(ps.U, ps.U, ps.sigma))
    svals = np.linalg.svd(W, compute_uv=False)
    errs = {
        "log_abs_det": abs(matops.log_abs_det(p) - np.linalg.slogdet(W)[1]),
        "inverse": _rel(matops.apply_inverse(p, X), np.linalg.solve(W, X)),
        "largest_sv": abs(matops.largest_singular_value(p) - svals[0]) / svals[0],
        "frobenius": abs(matops.frobenius_sq(p) - np.sum(W * W)) / np.sum(W * W),
        "condition": abs(matops.condition_number(p) - np.linalg.cond(W)) / np.linalg.cond(W),
        "cayley": _rel(matops.apply_cayley(ps, X), (np.eye(d) - S) @ np.linalg.solve(np.eye(d) + S, X)),
        "pinv": _rel(matops.apply_pseudo_inverse(p, X), np.linalg.pinv(W) @ X),
    }
    worst = max(errs, key=errs.get)
    return errs[worst] < 1e-8, f"worst {worst} err {errs[worst]:.2e} (tol 1e-8)"


def _check_serialization(rng):
    for _ in range(10):
        p = SvdParam.random(int(rng.integers(1, 9)), int(rng.integers(1, 9)), rng)
        p = p.replace(sigma=rng.standard_normal(p.rank_dim))
        if to_bytes(from_bytes(to_bytes(p))) != to_bytes(p):
            return False, "round trip changed bytes"
    return True, "10 parameters round-trip bit-exactly"


def _check_large_sequential(rng, d=512):
    chain = HouseholderChain.random(d, d, rng)
    X, G = rng.standard_normal((d, 32)), rng.standard_normal((d, 32))
    out, res = sequential_forward_backward(chain, X, G)
    ok = bool(np.all(np.isfinite(out)) and np.all(np.isfinite(res.grad_vectors)))
    return ok, f"sequential baseline completed at d={d}"


def verify(dims=(8, 16, 32), seed: int = 0, param_path=None, large: bool = True) -> VerifyReport:
    """Run every check; failures are recorded in the report, never raised."""
    rng = np.random.default_rng(seed)
    report = VerifyReport()
    checks = [
        ("forward_oracles", lambda: _check_forward(dims, rng)),
        ("backward_oracle", lambda: _check_backward(dims, rng)),
        ("finite_differences", lambda: _check_gradients(rng)),
        ("orthogonality", lambda: _check_orthogonality(rng)),
        ("stage_counts", lambda: _check_stages([d for d in dims if d <= 64])),
        ("matops_oracles", lambda: _check_matops(rng)),
        ("serialization", lambda: _check_serialization(rng)),
    ]
    if large:
        checks.append(("sequential_d512", lambda: _check_large_sequential(rng)))
    if param_path is not None:
        checks.append(("parameter_file", lambda: _check_param_file(param_path)))
    for name, fn in checks:
        try:
            passed, detail = fn()
        except Exception as e:  # a crash is a failed check
            passed, detail = False, f"{type(e).__name__}: {e}"
        report.checks.append(Check(name, bool(passed), detail))
    return report


def _check_param_file(path):
    p = load_svd(path)
    return True, f"{p.out_dim}x{p.in_dim} parameter loaded and validated"
