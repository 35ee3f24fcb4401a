"""Invariant battery: derivatives, Lyapunov solutions and spectral factors against oracles."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lyapunov import dense_lyapunov_oracle, reconstruct_full, z_matrix, ORACLE_MAX_DIM
from .model import assemble_A
from .objective import DampingObjective
from .spectral import closed_form_base, eig_A

__all__ = [
    "CheckResult",
    "GRAD_RTOL",
    "HESS_RTOL",
    "ORACLE_RTOL",
    "fd_gradient",
    "fd_hessian",
    "grad_error",
    "hessian_error",
    "oracle_error",
    "trace_identity_error",
    "inverse_error",
    "closed_form_error",
    "sample_points",
    "run_checks",
]

GRAD_RTOL = 1e-4
HESS_RTOL = 1e-3
ORACLE_RTOL = 1e-8
TRACE_RTOL = 1e-8
INVERSE_TOL = 1e-8
CLOSED_FORM_TOL = 1e-8


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    error: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        tag = "SKIP" if np.isnan(self.error) else ("PASS" if self.passed else "FAIL")
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{tag}  {self.name:<22} error={self.error:.3e}  tol={self.tol:.1e}{extra}"


def fd_gradient(obj, nu, rel_step=1e-6):
    """Central differences with step ``rel_step * max(1, |nu_i|)``."""
    nu = np.asarray(nu, dtype=float)
    g = np.empty(nu.size)
    for i in range(nu.size):
        h = rel_step * max(1.0, abs(nu[i]))
        e = np.zeros(nu.size)
        e[i] = h
        g[i] = (obj.eval_f(nu + e) - obj.eval_f(nu - e)) / (2 * h)
    return g


def fd_hessian(obj, nu, rel_step=1e-4):
    """Central differences of the gradient, symmetrized."""
    nu = np.asarray(nu, dtype=float)
    k = nu.size
    H = np.empty((k, k))
    for j in range(k):
        h = rel_step * max(1.0, abs(nu[j]))
        e = np.zeros(k)
        e[j] = h
        H[:, j] = (obj.eval_grad(nu + e) - obj.eval_grad(nu - e)) / (2 * h)
    return (H + H.T) / 2


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def grad_error(obj, nu, rel_step=1e-6) -> float:
    g = obj.eval_grad(nu)
    return _rel(g, fd_gradient(obj, nu, rel_step))


def hessian_error(obj, nu) -> float:
    H = obj.eval_hessian(nu)
    return _rel(H, fd_hessian(obj, nu))


def _full(obj, nu):
    c = obj.evaluate(nu)
    if c.structured:
        return reconstruct_full(c.fact, obj.base, c.deltas)
    return c.dense[1:]


def oracle_error(obj: DampingObjective, nu) -> tuple[float, float]:
    """Relative errors of structured ``Y``, ``W`` against the Kronecker solve."""
    modal = obj.modal
    Y, W = _full(obj, nu)
    A = assemble_A(modal, nu)
    Yo = dense_lyapunov_oracle(A, z_matrix(modal))
    Wo = dense_lyapunov_oracle(A.T, np.eye(2 * modal.n))
    return _rel(Y, Yo), _rel(W, Wo)


def trace_identity_error(obj: DampingObjective, nu) -> float:
    """``|trace(Y) - trace(G^T W G)/(2s)| / |trace(Y)|`` from reconstructed ``Y``, ``W``."""
    Y, W = _full(obj, nu)
    ind = obj.modal.ind
    tY = np.trace(Y)
    tW = np.trace(W[np.ix_(ind, ind)]) / (2 * obj.modal.s)
    return float(abs(tY - tW) / abs(tY))


def inverse_error(obj: DampingObjective, nu) -> float:
    return obj.evaluate(nu).fact.inverse_residual()


def closed_form_error(modal) -> float:
    """Largest relative mismatch between ``eig_A(0)`` and the closed-form factors.

    Eigenvalues are matched by nearest neighbour; eigenvector columns differ by a
    scalar, which is divided out (rows of the inverse scale inversely).
    """
    lam0, T0, T0inv = closed_form_base(modal)
    fact = eig_A(modal, np.zeros(modal.k))
    idx = np.array([int(np.argmin(np.abs(lam0 - x))) for x in fact.lam])
    if np.unique(idx).size != idx.size:
        return float("inf")
    T = fact.T
    T0m = T0[:, idx]
    c = np.sum(T0m.conj() * T, axis=0) / np.sum(np.abs(T0m) ** 2, axis=0)
    e_lam = np.max(np.abs(lam0[idx] - fact.lam)) / np.max(np.abs(lam0))
    e_T = np.max(np.abs(T - T0m * c)) / np.max(np.abs(T))
    e_Ti = np.max(np.abs(fact.Tinv - T0inv[idx, :] / c[:, None])) / np.max(np.abs(fact.Tinv))
    return float(max(e_lam, e_T, e_Ti))


def sample_points(nu_ref, count, rng, d=None):
    """Random points ``nu_ref * U(0.5, 2)`` (componentwise), kept above ``d``."""
    nu_ref = np.asarray(nu_ref, dtype=float)
    pts = nu_ref * rng.uniform(0.5, 2.0, size=(count, nu_ref.size))
    if d is not None:
        pts = np.maximum(pts, np.asarray(d) + 1e-3)
    return pts


def run_checks(obj: DampingObjective, nu_ref, seed=0, points=3) -> list[CheckResult]:
    """Full battery at a few random points around ``nu_ref``."""
    rng = np.random.default_rng(seed)
    modal = obj.modal
    pts = sample_points(nu_ref, points, rng, obj.d)
    out = []

    def worst(fn):
        errs = [fn(p) for p in pts]
        return float(np.max(errs))

    e = worst(lambda p: grad_error(obj, p))
    out.append(CheckResult("gradient_fd", e <= GRAD_RTOL, e, GRAD_RTOL))
    e = worst(lambda p: hessian_error(obj, p))
    out.append(CheckResult("hessian_fd", e <= HESS_RTOL, e, HESS_RTOL))
    if 2 * modal.n <= ORACLE_MAX_DIM:
        e = worst(lambda p: max(oracle_error(obj, p)))
        out.append(CheckResult("lyapunov_oracle", e <= ORACLE_RTOL, e, ORACLE_RTOL))
    else:
        out.append(CheckResult("lyapunov_oracle", True, float("nan"), ORACLE_RTOL,
                               f"skipped: 2n = {2 * modal.n} > {ORACLE_MAX_DIM}"))
    e = worst(lambda p: trace_identity_error(obj, p))
    out.append(CheckResult("trace_identity", e <= TRACE_RTOL, e, TRACE_RTOL))
    e = worst(lambda p: inverse_error(obj, p))
    out.append(CheckResult("standard_pair_inverse", e <= INVERSE_TOL, e, INVERSE_TOL))
    if obj.base.is_diagonal:
        e = closed_form_error(modal)
        out.append(CheckResult("closed_form_base", e <= CLOSED_FORM_TOL, e, CLOSED_FORM_TOL))
    else:
        out.append(CheckResult("closed_form_base", True, float("nan"), CLOSED_FORM_TOL,
                               "skipped: A(0) not stable, shifted base in use"))
    return out
