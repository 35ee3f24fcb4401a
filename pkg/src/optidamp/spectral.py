"""Eigendecomposition of ``A(nu)`` through its standard pair.

The eigenvectors of ``A(nu)`` have the form ``[Omega v; lambda v]`` with
``v`` a right eigenvector of ``lambda^2 I + lambda (Gamma + R Sigma R^T) +
Omega^2``.  Collecting the ``v`` as ``V`` gives ``T = [Omega V; V Lambda]``
with ``A T = T Lambda``.  Because the quadratic is symmetric, ``V^T`` is a
left eigenvector matrix and ``T^{-1}`` follows from a block diagonal ``S``
without any dense inversion.

Every call to :func:`eig_A` bumps a process-wide counter; it is the cost
proxy reported by the optimizers.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import NearDefectiveError, NumericalError, StabilityError
from .model import ModalModel, assemble_A, stability_threshold

logger = logging.getLogger(__name__)

__all__ = [
    "SpectralFactorization",
    "eig_A",
    "standard_pair_inverse",
    "cauchy_matrix",
    "closed_form_base",
    "eig_count",
    "dump_eigenvalues",
]

TOL_T = 1e-8
CLUSTER_RTOL = 1e-8
S_RTOL = 1e-7
_UNDERFLOW_GUARD = 1e-300

_lock = threading.Lock()
_eig_total = 0
_local = threading.local()


def eig_count(thread: bool = False) -> int:
    """Number of eigendecompositions of ``A(nu)`` performed so far.

    Process-wide by default; ``thread=True`` counts only calls made from the
    current thread, which keeps per-run deltas exact when runs share a process.
    """
    if thread:
        return getattr(_local, "count", 0)
    return _eig_total


def _bump():
    global _eig_total
    with _lock:
        _eig_total += 1
    _local.count = getattr(_local, "count", 0) + 1


@dataclass(frozen=True)
class SpectralFactorization:
    """Eigenvalues ``lam`` and standard-pair eigenvectors ``V`` of ``A(nu)``.

    Attributes
    ----------
    lam : (2n,) complex
    V : (n, 2n) complex
        ``V[:, j]`` solves the quadratic eigenproblem for ``lam[j]``.
    E : (2n, k_d) complex
        ``V^T R``.
    Tinv : (2n, 2n) complex
        Inverse of ``T = [Omega V; V Lambda]``.
    clusters : tuple of index arrays
        Groups of (numerically) equal eigenvalues; ``S`` is block diagonal
        over these.
    S_blocks : tuple of arrays
        Inverses of the diagonal blocks of ``S``.
    """

    lam: np.ndarray
    V: np.ndarray
    omega: np.ndarray
    nu: np.ndarray
    E: np.ndarray = None
    Tinv: np.ndarray = None
    clusters: tuple = ()
    S_inv_blocks: tuple = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    @property
    def T(self) -> np.ndarray:
        return np.vstack([self.omega[:, None] * self.V, self.V * self.lam])

    @property
    def abscissa(self) -> float:
        return float(self.lam.real.max())

    def solve_S(self, X) -> np.ndarray:
        """``S^{-1} X`` for a block of rows matching ``lam``."""
        return _apply_blocks(self.clusters, self.S_inv_blocks, X)

    def inverse_residual(self, probes: int = 0, seed: int = 0) -> float:
        """``||T T^{-1} - I||``; Frobenius norm, or a randomized estimate if ``probes > 0``."""
        T = self.T
        if probes <= 0:
            return float(np.linalg.norm(T @ self.Tinv - np.eye(T.shape[0])))
        return _probe_residual(T, self.Tinv, probes, seed)

    def diagonalization_residual(self, modal: ModalModel) -> float:
        """``||A T - T Lambda||_F / (||A||_F ||T||_F)``."""
        A = assemble_A(modal, self.nu)
        T = self.T
        return float(np.linalg.norm(A @ T - T * self.lam)
                     / (np.linalg.norm(A) * np.linalg.norm(T)))


def _group_eigenvalues(lam, rtol):
    order = np.lexsort((lam.imag, lam.real))
    groups, used = [], np.zeros(lam.size, dtype=bool)
    for a in order:
        if used[a]:
            continue
        close = np.flatnonzero(~used & (np.abs(lam - lam[a]) <= rtol * max(1.0, abs(lam[a]))))
        used[close] = True
        groups.append(np.sort(close))
    return tuple(groups)


def eig_A(modal: ModalModel, nu, tol_T: float = TOL_T) -> SpectralFactorization:
    """Eigendecomposition of ``A(nu)`` with structured ``T`` and ``T^{-1}``.

    Raises
    ------
    StabilityError
        If the spectral abscissa is not safely negative.
    NearDefectiveError
        If ``A(nu)`` is numerically not diagonalizable.
    """
    nu = np.asarray(nu, dtype=float).copy()
    n = modal.n
    A = assemble_A(modal, nu)
    threshold = stability_threshold(A)
    try:
        lam, X = la.eig(A, check_finite=False, overwrite_a=True)
    except la.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    finally:
        _bump()
    abscissa = float(lam.real.max())
    if not abscissa < threshold:
        raise StabilityError(
            f"A(nu) is not stable at nu={nu.tolist()} (spectral abscissa {abscissa:.3e}); "
            "impose a positive lower bound d on the damping coefficients",
            abscissa=abscissa, nu=nu,
        )
    V = X[:n] / modal.omega[:, None]
    V /= np.linalg.norm(V, axis=0)
    pivot = V[np.argmax(np.abs(V), axis=0), np.arange(2 * n)]
    V *= (np.abs(pivot) / pivot)[None, :]
    fact = SpectralFactorization(lam=lam, V=V, omega=modal.omega, nu=nu)
    return standard_pair_inverse(fact, modal, nu, tol_T=tol_T)


def standard_pair_inverse(fact: SpectralFactorization, modal: ModalModel, nu,
                          tol_T: float = TOL_T) -> SpectralFactorization:
    """Attach ``E = V^T R``, the blocks of ``S`` and ``T^{-1}`` to ``fact``.

    ``T^{-1} = S^{-1} [(Lambda V^T + V^T D) Omega^{-1}, V^T]`` with
    ``D = Gamma + R Sigma R^T`` and ``S`` block diagonal over eigenvalue
    clusters.  If the result fails ``||T T^{-1} - I|| <= tol_T`` a dense
    solve with ``T`` is used instead.
    """
    lam, V, omega = fact.lam, fact.V, modal.omega
    sig = modal.sigma(nu)
    E = V.T @ modal.R
    # D V without forming D
    DV = modal.gamma[:, None] * V + modal.R @ (sig[:, None] * E.T)
    clusters = _group_eigenvalues(lam, CLUSTER_RTOL)
    dnorm = (modal.gamma.max() if modal.n else 0.0) + np.abs(sig).max() * np.linalg.norm(modal.R, 2) ** 2
    # singleton blocks S_j = v_j^T (2 lam_j I + D) v_j, all at once
    s_diag = 2 * lam * np.einsum("ij,ij->j", V, V) + np.einsum("ij,ij->j", V, DV)
    scale = (2 * np.abs(lam) + dnorm) * np.einsum("ij,ij->j", V.real, V.real) \
        + (2 * np.abs(lam) + dnorm) * np.einsum("ij,ij->j", V.imag, V.imag)
    single = np.array([idx[0] for idx in clusters if idx.size == 1], dtype=int)
    bad = single[np.abs(s_diag[single]) <= S_RTOL * scale[single]]
    if bad.size:
        j = bad[0]
        raise NearDefectiveError(
            f"A(nu) is nearly defective at eigenvalue {lam[j]:.6g} (|S_j| = {abs(s_diag[j]):.2e})")
    S_inv = []
    for idx in clusters:
        if idx.size == 1:
            S_inv.append(1.0 / s_diag[idx].reshape(1, 1))
            continue
        Vc = V[:, idx]
        Sc = (lam[idx][:, None] + lam[idx][None, :]) * (Vc.T @ Vc) + Vc.T @ DV[:, idx]
        sv = np.linalg.svd(Sc, compute_uv=False)
        if sv[-1] <= S_RTOL * scale[idx].sum():
            raise NearDefectiveError(
                f"A(nu) is nearly defective at eigenvalue cluster {lam[idx[0]]:.6g} "
                f"of size {idx.size}")
        S_inv.append(np.linalg.inv(Sc))
    raw = np.hstack([(lam[:, None] * V.T + DV.T) / omega[None, :], V.T])
    Tinv = _apply_blocks(clusters, S_inv, raw)
    T = np.vstack([omega[:, None] * V, V * lam])
    err = _probe_residual(T, Tinv)
    dense = False
    if not err <= tol_T:
        logger.info("structured T^-1 failed validation (%.2e); using dense solve", err)
        try:
            Tinv = la.solve(T, np.eye(2 * modal.n, dtype=complex), check_finite=False)
        except la.LinAlgError as exc:
            raise NearDefectiveError(f"T is singular: {exc}") from exc
        err = _probe_residual(T, Tinv)
        dense = True
        if not err <= tol_T:
            raise NearDefectiveError(f"||T T^-1 - I|| = {err:.2e} exceeds {tol_T:.1e}")
    return SpectralFactorization(
        lam=lam, V=V, omega=omega, nu=np.asarray(nu, float), E=E, Tinv=Tinv,
        clusters=clusters, S_inv_blocks=tuple(S_inv),
        diagnostics={"inverse_residual": err, "dense_inverse": dense},
    )


def _apply_blocks(clusters, blocks, X):
    X = np.asarray(X)
    diag = np.empty(X.shape[0], dtype=complex)
    multi = []
    for idx, B in zip(clusters, blocks):
        if idx.size == 1:
            diag[idx[0]] = B[0, 0]
        else:
            diag[idx] = 0.0
            multi.append((idx, B))
    out = diag.reshape((-1,) + (1,) * (X.ndim - 1)) * X
    for idx, B in multi:
        out[idx] = B @ X[idx]
    return out


def _probe_residual(T, Tinv, probes=4, seed=0):
    # randomized estimate of ||T T^-1 - I||_2 at O(n^2) cost
    X = np.random.default_rng(seed).standard_normal((T.shape[0], probes))
    R = T @ (Tinv @ X) - X
    return float(np.max(np.linalg.norm(R, axis=0) / np.linalg.norm(X, axis=0)))


def cauchy_matrix(lam, conjugate_first: bool = True) -> np.ndarray:
    """Cauchy matrix solving diagonalized Lyapunov equations by Hadamard product.

    ``conjugate_first=True`` gives ``L(Lambda)_ij = 1/(conj(lam_i) + lam_j)``;
    ``False`` gives ``L(conj Lambda)_ij = 1/(lam_i + conj(lam_j))``.
    """
    lam = np.asarray(lam, dtype=complex)
    if conjugate_first:
        den = lam.conj()[:, None] + lam[None, :]
    else:
        den = lam[:, None] + lam.conj()[None, :]
    if np.abs(den).min() < _UNDERFLOW_GUARD:
        raise StabilityError("Cauchy denominators vanish; spectrum is not stable",
                             abscissa=float(lam.real.max()))
    return 1.0 / den


def closed_form_base(modal: ModalModel):
    """Closed-form ``(Lambda_0, T_0, T_0^{-1})`` of ``A(0)``.

    With ``Upsilon = (Gamma^2 - 4 Omega^2)^{1/2}`` (principal complex root)::

        Lambda_0 = diag(-(Gamma + Upsilon)/2, -(Gamma - Upsilon)/2)
        T_0      = [[-(Gamma - Upsilon)/2 Omega^-1, -(Gamma + Upsilon)/2 Omega^-1], [I, I]]
        T_0^-1   = [[Omega Upsilon^-1, (Gamma + Upsilon)/2 Upsilon^-1],
                    [-Omega Upsilon^-1, -(Gamma - Upsilon)/2 Upsilon^-1]]
    """
    g = modal.gamma.astype(complex)
    w = modal.omega
    ups = np.sqrt(g**2 - 4 * w**2)
    if np.any(ups == 0):
        raise NearDefectiveError("A(0) is defective (gamma_j = 2 omega_j)")
    lam0 = np.concatenate([-(g + ups) / 2, -(g - ups) / 2])
    T0 = np.block([
        [np.diag(-(g - ups) / (2 * w)), np.diag(-(g + ups) / (2 * w))],
        [np.eye(modal.n), np.eye(modal.n)],
    ])
    T0inv = np.block([
        [np.diag(w / ups), np.diag((g + ups) / (2 * ups))],
        [np.diag(-w / ups), np.diag(-(g - ups) / (2 * ups))],
    ])
    return lam0, T0, T0inv


def dump_eigenvalues(lam, path) -> None:
    """Write eigenvalues as ``re im`` pairs, one per line."""
    lam = np.asarray(lam, dtype=complex)
    np.savetxt(path, np.column_stack([lam.real, lam.imag]), fmt="%.17e")
