"""Structured solutions of the two Lyapunov equations of the damping problem.

    A(nu) Y + Y A(nu)^T = -Z,        Z = G G^T / (2s)
    A(nu)^T W + W A(nu) = -I

Both are split as ``Y = Y_0 + dY`` and ``W = W_0 + dW`` around a base point
(``nu = 0`` when ``A(0)`` is stable).  Since ``A(nu) - A(base)`` has rank at
most ``k_d``, the corrections solve Lyapunov equations with low-rank right
hand sides, which are diagonalized by ``T`` and solved with Cauchy-Hadamard
products.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import BasePointError, DefectiveBaseError, InputError, StabilityError
from .model import GAMMA_RTOL, ModalModel
from .spectral import SpectralFactorization, cauchy_matrix, eig_A

__all__ = [
    "BasePair",
    "DeltaFactors",
    "base_solutions",
    "shifted_base",
    "delta_solutions",
    "dense_lyapunov_oracle",
    "reconstruct_full",
    "z_matrix",
]

ORACLE_MAX_DIM = 40


def z_matrix(modal: ModalModel) -> np.ndarray:
    """``Z = G G^T / (2s)``: identity on the damped-mode coordinates, scaled."""
    Z = np.zeros((2 * modal.n, 2 * modal.n))
    idx = modal.ind
    Z[idx, idx] = 1.0 / (2 * modal.s)
    return Z


@dataclass(frozen=True)
class BasePair:
    """Lyapunov solutions at the expansion point and the products derived from them.

    For ``nu_base = 0`` the solutions are 2x2 block matrices with diagonal
    blocks, held in ``Y_blocks = (Ups1, Ups2, Ups3)`` and
    ``W_blocks = (Psi1, Psi2, Psi3)``.  A shifted base stores dense ``Y``/``W``.
    """

    nu_base: np.ndarray
    f0: float
    Upsilon_R: np.ndarray
    Psi_R: np.ndarray
    const_grad: np.ndarray
    Y_blocks: tuple = None
    W_blocks: tuple = None
    Y_dense: np.ndarray = None
    W_dense: np.ndarray = None

    @property
    def is_diagonal(self) -> bool:
        return self.Y_blocks is not None

    def Y0(self) -> np.ndarray:
        if self.Y_dense is not None:
            return self.Y_dense
        return _blocks_to_dense(*self.Y_blocks)

    def W0(self) -> np.ndarray:
        if self.W_dense is not None:
            return self.W_dense
        return _blocks_to_dense(*self.W_blocks)


def _blocks_to_dense(b1, b2, b3):
    return np.block([[np.diag(b1), np.diag(b2)], [np.diag(b2), np.diag(b3)]])


def _const_grad(modal, Ups_R, Psi_R):
    # -2 e^T (Ups_Ri o Psi_Ri) e per damper block; independent of nu
    prod = np.sum(Ups_R * Psi_R, axis=0)
    return np.array([-2.0 * prod[sl].sum() for sl in modal.block_slices])


def base_solutions(modal: ModalModel) -> BasePair:
    """Closed-form ``Y_0``, ``W_0`` at ``nu = 0`` in ``O(n)``.

    Mode ``j`` decouples into the 2x2 system ``[[0, w], [-w, -g]]``; with
    ``c = 1/(2s)`` for damped modes (0 otherwise)::

        Y_0:  Ups1 = c (1/g + g/(2 w^2)),  Ups2 = -c/(2w),  Ups3 = c/g
        W_0:  Psi1 = 1/g + g/(2 w^2),      Psi2 = 1/(2w),   Psi3 = 1/g

    Raises
    ------
    BasePointError
        If some ``gamma_j`` vanishes (``A(0)`` is not stable).
    DefectiveBaseError
        If ``gamma_j == 2 omega_j`` for some mode.
    """
    g, w, n, s = modal.gamma, modal.omega, modal.n, modal.s
    tol = max(GAMMA_RTOL * (g.max() if n else 0.0), 1e-300)
    zero = np.flatnonzero(g <= tol)
    if zero.size:
        raise BasePointError(
            f"A(0) is not stable: gamma vanishes for modes {(zero + 1).tolist()}; "
            "use shifted_base with a positive nu_base")
    if np.any(np.abs(g - 2 * w) <= 1e-12 * w):
        j = int(np.flatnonzero(np.abs(g - 2 * w) <= 1e-12 * w)[0])
        raise DefectiveBaseError(f"A(0) is defective: gamma_{j + 1} = 2 omega_{j + 1}")
    c = np.zeros(n)
    c[:s] = 1.0 / (2 * s)
    psi1 = 1.0 / g + g / (2 * w**2)
    psi2 = 1.0 / (2 * w)
    psi3 = 1.0 / g
    ups1, ups2, ups3 = c * psi1, -c * psi2, c * psi3
    f0 = float((psi1[:s] + psi3[:s]).sum() / (2 * s))
    Ups_R = np.vstack([ups2[:, None] * modal.R, ups3[:, None] * modal.R])
    Psi_R = np.vstack([psi2[:, None] * modal.R, psi3[:, None] * modal.R])
    return BasePair(nu_base=np.zeros(modal.k), f0=f0, Upsilon_R=Ups_R, Psi_R=Psi_R,
                    const_grad=_const_grad(modal, Ups_R, Psi_R),
                    Y_blocks=(ups1, ups2, ups3), W_blocks=(psi1, psi2, psi3))


def shifted_base(modal: ModalModel, nu_base) -> BasePair:
    """Dense base solutions at ``nu_base`` through one eigendecomposition.

    ``Y = -T (L(conj Lambda) o (T^-1 G)(T^-1 G)^H) T^H / (2s)`` and
    ``W = -T^-H (L(Lambda) o T^H T) T^-1``.
    """
    nu_base = np.asarray(nu_base, dtype=float)
    fact = eig_A(modal, nu_base)
    T, Tinv = fact.T, fact.Tinv
    X = Tinv[:, modal.ind]
    Yt = -cauchy_matrix(fact.lam, conjugate_first=False) * (X @ X.conj().T) / (2 * modal.s)
    Y = _real_sym(T @ Yt @ T.conj().T)
    Wt = -cauchy_matrix(fact.lam) * (T.conj().T @ T)
    W = _real_sym(Tinv.conj().T @ Wt @ Tinv)
    n = modal.n
    Ups_R = Y[:, n:] @ modal.R
    Psi_R = W[:, n:] @ modal.R
    ind = modal.ind
    f0 = float(np.trace(W[np.ix_(ind, ind)]) / (2 * modal.s))
    return BasePair(nu_base=nu_base, f0=f0, Upsilon_R=Ups_R, Psi_R=Psi_R,
                    const_grad=_const_grad(modal, Ups_R, Psi_R), Y_dense=Y, W_dense=W)


def _real_sym(X):
    X = X.real
    return (X + X.T) / 2


def _herm(X):
    return (X + X.conj().T) / 2


@dataclass(frozen=True)
class DeltaFactors:
    """Diagonalized corrections and the ``2n x k_d`` products reused downstream.

    ``dY = T dY_tilde T^H`` and ``dW = T^-H dW_tilde T^-1``.  ``E_Y`` is
    ``dY_tilde^T Lambda E`` and ``E_W`` is ``dW_tilde S^-1 E``.
    """

    dY_tilde: np.ndarray
    dW_tilde: np.ndarray
    LE: np.ndarray
    SinvE: np.ndarray
    T_Psi: np.ndarray
    T_Ups: np.ndarray
    E_Y: np.ndarray
    E_W: np.ndarray
    sigma_delta: np.ndarray


def delta_solutions(fact: SpectralFactorization, base: BasePair, modal: ModalModel, nu) -> DeltaFactors:
    """Low-rank corrections ``dY``, ``dW`` relative to ``base`` at ``nu``.

    With ``Sigma_d = Sigma_nu - Sigma_base``::

        B = conj(Lambda E Sigma_d) T_Psi^H,   dW_tilde = L(Lambda) o (B + B^H)
        C = S^-1 E Sigma_d T_Ups^H,           dY_tilde = L(conj Lambda) o (C + C^H)
    """
    sig_d = modal.sigma(nu) - modal.sigma(base.nu_base)
    lam = fact.lam
    LE = lam[:, None] * fact.E
    SinvE = fact.solve_S(fact.E)
    T_Psi = fact.T.conj().T @ base.Psi_R
    T_Ups = fact.Tinv @ base.Upsilon_R
    B = (LE.conj() * sig_d) @ T_Psi.conj().T
    dW = _herm(cauchy_matrix(lam) * (B + B.conj().T))
    C = (SinvE * sig_d) @ T_Ups.conj().T
    dY = _herm(cauchy_matrix(lam, conjugate_first=False) * (C + C.conj().T))
    E_W = dW @ SinvE
    E_Y = dY.T @ LE
    return DeltaFactors(dY_tilde=dY, dW_tilde=dW, LE=LE, SinvE=SinvE, T_Psi=T_Psi,
                        T_Ups=T_Ups, E_Y=E_Y, E_W=E_W, sigma_delta=sig_d)


def reconstruct_full(fact: SpectralFactorization, base: BasePair, deltas: DeltaFactors):
    """Dense ``(Y, W)`` at the factorization's ``nu`` (test-scale use)."""
    T, Tinv = fact.T, fact.Tinv
    Y = base.Y0() + _real_sym(T @ deltas.dY_tilde @ T.conj().T)
    W = base.W0() + _real_sym(Tinv.conj().T @ deltas.dW_tilde @ Tinv)
    return Y, W


def dense_lyapunov_oracle(A, Q) -> np.ndarray:
    """Solve ``A X + X A^T = -Q`` through the Kronecker form.

    ``(I kron A + A kron I) vec(X) = -vec(Q)``, a dense solve of order
    ``m^2``; limited to ``m <= 40``.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    m = A.shape[0]
    if m > ORACLE_MAX_DIM:
        raise InputError(f"dense oracle limited to dimension {ORACLE_MAX_DIM}, got {m}")
    I = np.eye(m)
    P = np.kron(I, A) + np.kron(A, I)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu = la.lu_factor(P, check_finite=False)
    except la.LinAlgError as exc:
        raise StabilityError(f"Kronecker operator is singular: {exc}") from exc
    if np.abs(np.diag(lu[0])).min() <= 1e-14 * np.abs(np.diag(lu[0])).max():
        raise StabilityError("Kronecker operator is singular; A has eigenvalues summing to zero")
    x = la.lu_solve(lu, -Q.reshape(-1, order="F"))
    X = x.reshape(m, m, order="F")
    return (X + X.T) / 2
