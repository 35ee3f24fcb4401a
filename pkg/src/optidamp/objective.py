"""Objective ``f(nu) = trace(Y(nu))``, its gradient, Hessian and KKT residual."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import (BasePointError, InputError, NearDefectiveError, NumericalError,
                     StabilityError)
from .lyapunov import BasePair, DeltaFactors, base_solutions, delta_solutions, shifted_base
from .model import ModalModel, assemble_A
from .spectral import SpectralFactorization, cauchy_matrix, eig_A

__all__ = ["DampingObjective", "EvalCache", "KKTResidual", "kkt_residual", "IMAG_RTOL"]

IMAG_RTOL = 1e-8
F_IMAG_RTOL = 1e-10
ACTIVE_RTOL = 1e-8


@dataclass
class EvalCache:
    """Everything computed at one ``nu``; reused by gradient and Hessian."""

    nu: np.ndarray
    fact: SpectralFactorization | None
    deltas: DeltaFactors | None
    f: float
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None
    dense: tuple | None = None

    @property
    def structured(self) -> bool:
        return self.dense is None


@dataclass(frozen=True)
class KKTResidual:
    """Projected residual ``h = (nu - d) - max(nu - d - grad, 0)``."""

    h: np.ndarray
    norm: float
    multipliers: np.ndarray
    active: np.ndarray = field(default=None)


def kkt_residual(nu, grad, d) -> KKTResidual:
    nu = np.asarray(nu, dtype=float)
    grad = np.asarray(grad, dtype=float)
    d = np.broadcast_to(np.asarray(d, dtype=float), nu.shape)
    h = (nu - d) - np.maximum(nu - d - grad, 0.0)
    active = nu <= d + ACTIVE_RTOL * max(1.0, float(np.linalg.norm(nu)))
    return KKTResidual(h=h, norm=float(np.linalg.norm(h)), multipliers=grad.copy(), active=active)


def _real(z, what, rtol=IMAG_RTOL, scale=None):
    """Real part of a quantity that is real in exact arithmetic."""
    z = np.asarray(z)
    im = np.abs(np.imag(z)).max() if z.size else 0.0
    if scale is None:
        scale = max(1.0, float(np.abs(np.real(z)).max()) if z.size else 0.0)
    if im > rtol * scale:
        raise NumericalError(f"{what} has imaginary residue {im:.3e} (scale {scale:.3e})")
    return np.real(z)


BASE_CANDIDATES = (1.0, 1.5, 0.75, 2.5)


def _fallback_base(modal: ModalModel) -> BasePair:
    """Shifted base at the first of a few uniform ``nu`` that is stable and non-defective."""
    last = None
    for c in BASE_CANDIDATES:
        try:
            return shifted_base(modal, np.full(modal.k, c))
        except (NearDefectiveError, StabilityError) as exc:
            last = exc
    raise BasePointError(f"no usable shifted base point among {BASE_CANDIDATES}: {last}")


class DampingObjective:
    """``f``, ``grad f`` and ``hess f`` for a modal model and lower bound ``d``.

    Parameters
    ----------
    modal : ModalModel
    d : float or array_like
        Lower bound on the viscosities (broadcast to ``k``).
    nu_base : array_like, optional
        Expansion point.  Defaults to ``0`` when ``A(0)`` is stable and to
        the first usable uniform point (1, 1.5, 0.75, 2.5)
        otherwise.
    """

    def __init__(self, modal: ModalModel, d=0.0, nu_base=None):
        self.modal = modal
        d = np.asarray(d, dtype=float)
        if d.ndim > 1 or (d.ndim == 1 and d.shape[0] != modal.k):
            raise InputError(f"lower bound must be scalar or length {modal.k}")
        self.d = np.broadcast_to(d, (modal.k,)).copy()
        if nu_base is None:
            if np.all(modal.gamma > 0) and modal.gamma.min() > 1e-12 * modal.gamma.max():
                self.base = base_solutions(modal)
            else:
                self.base = _fallback_base(modal)
        elif not np.any(nu_base):
            self.base = base_solutions(modal)
        else:
            self.base = shifted_base(modal, nu_base)
        self._cache: EvalCache | None = None
        self.dense_fallbacks = 0

    @property
    def k(self) -> int:
        return self.modal.k

    @property
    def f0(self) -> float:
        return self.base.f0

    def _check_nu(self, nu):
        nu = np.asarray(nu, dtype=float)
        if nu.shape != (self.k,):
            raise InputError(f"nu must have shape ({self.k},), got {nu.shape}")
        if not np.all(np.isfinite(nu)):
            raise InputError("nu must be finite")
        return nu

    def evaluate(self, nu) -> EvalCache:
        """Factorize ``A(nu)`` (one counted eigendecomposition) and compute ``f``."""
        nu = self._check_nu(nu)
        if self._cache is not None and np.array_equal(self._cache.nu, nu):
            return self._cache
        try:
            fact = eig_A(self.modal, nu)
        except NearDefectiveError:
            self._cache = self._dense_evaluate(nu)
            return self._cache
        deltas = delta_solutions(fact, self.base, self.modal, nu)
        X = fact.Tinv[:, self.modal.ind]
        corr = np.sum(X.conj() * (deltas.dW_tilde @ X))
        corr = float(_real(corr, "trace correction", F_IMAG_RTOL, max(self.base.f0, abs(corr.real))))
        f = self.base.f0 + corr / (2 * self.modal.s)
        self._cache = EvalCache(nu=nu.copy(), fact=fact, deltas=deltas, f=f)
        return self._cache

    def _dense_evaluate(self, nu) -> EvalCache:
        """Schur-based Lyapunov solves for points where ``A(nu)`` is (nearly) defective.

        The failed eigendecomposition has already been counted; ``eig_A``
        only raises the near-defective error after confirming stability.
        """
        self.dense_fallbacks += 1
        A = assemble_A(self.modal, nu)
        n = self.modal.n
        Z = np.zeros((2 * n, 2 * n))
        Z[self.modal.ind, self.modal.ind] = 1.0 / (2 * self.modal.s)
        Y = la.solve_continuous_lyapunov(A, -Z)
        W = la.solve_continuous_lyapunov(A.T, -np.eye(2 * n))
        Y, W = (Y + Y.T) / 2, (W + W.T) / 2
        return EvalCache(nu=nu.copy(), fact=None, deltas=None, f=float(np.trace(Y)),
                         dense=(A, Y, W))

    def eval_f(self, nu) -> float:
        return self.evaluate(nu).f

    def eval_grad(self, nu) -> np.ndarray:
        c = self.evaluate(nu)
        if c.grad is None and not c.structured:
            c.grad = self._dense_grad(c)
        if c.grad is None:
            dl = c.deltas
            # the nu-independent base product lives in const_grad
            col = np.sum(dl.E_Y * dl.E_W + dl.T_Ups.conj() * dl.E_W + dl.E_Y * dl.T_Psi, axis=0)
            col = _real(col, "gradient")
            g = self.base.const_grad + np.array(
                [-2.0 * col[sl].sum() for sl in self.modal.block_slices])
            c.grad = g
        return c.grad.copy()

    def eval_hessian(self, nu) -> np.ndarray:
        c = self.evaluate(nu)
        if c.hess is None:
            c.hess = self._hessian(c) if c.structured else self._dense_hessian(c)
        return c.hess.copy()

    def _U(self, i):
        n = self.modal.n
        return np.vstack([np.zeros((n, self.modal.block_sizes[i])),
                          self.modal.R[:, self.modal.block_slices[i]]])

    def _dense_grad(self, c: EvalCache) -> np.ndarray:
        # d f / d nu_i = -2 trace(U_i^T Y W U_i)
        _, Y, W = c.dense
        YW = Y @ W
        return np.array([-2.0 * np.trace(self._U(i).T @ YW @ self._U(i)) for i in range(self.k)])

    def _dense_hessian(self, c: EvalCache) -> np.ndarray:
        A, Y, W = c.dense
        k = self.k
        dY, dW = [], []
        for j in range(k):
            UU = self._U(j) @ self._U(j).T
            dY.append(la.solve_continuous_lyapunov(A, UU @ Y + Y @ UU))
            dW.append(la.solve_continuous_lyapunov(A.T, UU @ W + W @ UU))
        H = np.empty((k, k))
        for i in range(k):
            U = self._U(i)
            for j in range(k):
                H[i, j] = -2.0 * np.trace(U.T @ (dY[j] @ W + Y @ dW[j]) @ U)
        return (H + H.T) / 2

    def _hessian(self, c: EvalCache) -> np.ndarray:
        dl = c.deltas
        Lbar = cauchy_matrix(c.fact.lam, conjugate_first=False)
        Ay = dl.T_Ups + dl.E_Y.conj()
        Bw = dl.T_Psi + dl.E_W
        k = self.k
        q = np.zeros((k, k))
        for j, slj in enumerate(self.modal.block_slices):
            P = dl.SinvE[:, slj] @ Ay[:, slj].conj().T
            Zt = Lbar * (P + P.conj().T)
            M = Zt.T @ dl.LE
            for i, sli in enumerate(self.modal.block_slices):
                q[i, j] = float(_real(np.sum(M[:, sli] * Bw[:, sli]), "Hessian entry"))
        H = -2.0 * (q + q.T)
        return (H + H.T) / 2

    def kkt(self, nu) -> KKTResidual:
        return kkt_residual(nu, self.eval_grad(nu), self.d)

    def strict_min_check(self, nu) -> tuple[bool, np.ndarray]:
        """Positive definiteness of ``hess f`` restricted to inactive coordinates.

        Returns ``(is_strict, eigenvalues of the restricted Hessian)``.
        """
        nu = self._check_nu(nu)
        H = self.eval_hessian(nu)
        free = nu > self.d + ACTIVE_RTOL * max(1.0, float(np.linalg.norm(nu)))
        Hr = H[np.ix_(free, free)]
        if Hr.size == 0:
            return True, np.array([])
        ev = np.linalg.eigvalsh(Hr)
        try:
            np.linalg.cholesky(Hr)
            return True, ev
        except np.linalg.LinAlgError:
            return False, ev
