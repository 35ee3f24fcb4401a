"""Physical and modal representations of viscously damped vibrational systems.

The second-order system is ``M q'' + (D_int + sum_i nu_i D_i D_i^T) q' + K q = 0``.
In the modal basis ``Phi`` (``Phi^T M Phi = I``, ``Phi^T K Phi = Omega^2``,
``Phi^T D_int Phi = Gamma``) its first-order form is

    A(nu) = [[0, Omega], [-Omega, -(Gamma + R Sigma_nu R^T)]]

with ``R = Phi^T [D_1 ... D_k]``.
"""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg as la

from .errors import InputError, NumericalError, StructuralError

logger = logging.getLogger(__name__)

__all__ = [
    "Rayleigh",
    "Critical",
    "SecondOrderModel",
    "ModalModel",
    "Stability",
    "StabilityReport",
    "Damp1Spec",
    "Damp2Spec",
    "BeamSpec",
    "CustomSpec",
    "PRESETS",
    "DAMP2_MASS_RULES",
    "PRESET_S",
    "internal_damping",
    "build_problem",
    "modal_transform",
    "analyze_stability",
    "assemble_A",
    "check_stability_at",
    "expand_nu",
    "TOL_STAB",
    "stability_threshold",
    "beam_matrices",
]

TOL_STAB = 1e-10
CLUSTER_RTOL = 1e-8
GAMMA_RTOL = 1e-12
D_FLOOR = 1e-3
COMMUTE_RTOL = 1e-8


@dataclass(frozen=True)
class Rayleigh:
    alpha: float = 0.0
    beta: float = 0.0


@dataclass(frozen=True)
class Critical:
    alpha: float


def _require_spd(name, A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.allclose(A, A.T, rtol=1e-12, atol=1e-14 * max(1.0, np.abs(A).max())):
        raise InputError(f"{name} is not symmetric")
    try:
        np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise InputError(f"{name} is not positive definite") from None
    return A


def _sym_sqrt(A, inverse=False):
    w, Q = la.eigh((A + A.T) / 2)
    w = np.clip(w, 0.0, None)
    if inverse:
        if np.any(w <= 0):
            raise InputError("matrix is singular, cannot form inverse square root")
        w = 1.0 / np.sqrt(w)
    else:
        w = np.sqrt(w)
    return (Q * w) @ Q.T


def internal_damping(M, K, kind: Union[Rayleigh, Critical]) -> np.ndarray:
    """Proportional internal damping matrix.

    ``Rayleigh(alpha, beta)`` gives ``alpha*M + beta*K``.  ``Critical(alpha)``
    gives ``alpha * M^(1/2) sqrt(M^(-1/2) K M^(-1/2)) M^(1/2)``; square roots
    are taken through symmetric eigendecompositions with eigenvalues clipped
    at zero.
    """
    M = _require_spd("M", M)
    K = _require_spd("K", K)
    if isinstance(kind, Rayleigh):
        if kind.alpha < 0 or kind.beta < 0:
            raise InputError("Rayleigh parameters must be nonnegative")
        return kind.alpha * M + kind.beta * K
    if isinstance(kind, Critical):
        if not kind.alpha > 0:
            raise InputError("critical damping requires alpha > 0")
        if np.count_nonzero(M - np.diag(np.diag(M))) == 0:
            m = np.sqrt(np.diag(M))
            C = K / np.outer(m, m)
            D = _sym_sqrt(C) * np.outer(m, m)
        else:
            Mh = _sym_sqrt(M)
            Mih = _sym_sqrt(M, inverse=True)
            D = Mh @ _sym_sqrt(Mih @ K @ Mih) @ Mh
        D = kind.alpha * D
        return (D + D.T) / 2
    raise InputError(f"unknown internal damping kind {kind!r}")


@dataclass(frozen=True)
class SecondOrderModel:
    """Physical matrices of ``M q'' + D(nu) q' + K q = 0``.

    ``dampers`` holds the geometry blocks ``D_i`` (each ``n x r_i``).
    """

    M: np.ndarray
    K: np.ndarray
    D_int: np.ndarray
    dampers: tuple
    name: str = "custom"

    def __post_init__(self):
        n = self.M.shape[0]
        _require_spd("M", self.M)
        _require_spd("K", self.K)
        D = np.asarray(self.D_int, dtype=float)
        if D.shape != (n, n):
            raise InputError(f"D_int must be {n}x{n}")
        if not np.allclose(D, D.T, atol=1e-12 * max(1.0, np.abs(D).max())):
            raise InputError("D_int is not symmetric")
        if n > 0 and np.abs(D).max() > 0:
            lmin = la.eigvalsh(D).min()
            if lmin < -1e-10 * np.abs(D).max() * n:
                raise InputError(f"D_int is not positive semidefinite (min eig {lmin:.3e})")
        if len(self.dampers) == 0:
            raise InputError("at least one damper is required")
        for i, Di in enumerate(self.dampers):
            if Di.ndim != 2 or Di.shape[0] != n:
                raise InputError(f"damper {i + 1} geometry must have {n} rows")
            if np.linalg.matrix_rank(Di) != Di.shape[1]:
                raise InputError(f"damper {i + 1} geometry is not full column rank")
        if self.k_d > n:
            warnings.warn(f"k_d={self.k_d} exceeds n={n}", RuntimeWarning, stacklevel=2)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def k(self) -> int:
        return len(self.dampers)

    @property
    def r(self) -> tuple:
        return tuple(Di.shape[1] for Di in self.dampers)

    @property
    def k_d(self) -> int:
        return sum(self.r)

    def damping_matrix(self, nu) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        D = self.D_int.copy()
        for v, Di in zip(nu, self.dampers):
            D += v * Di @ Di.T
        return D


def expand_nu(nu, block_sizes) -> np.ndarray:
    """Diagonal of ``Sigma_nu = diag(nu_1 I_{r_1}, ..., nu_k I_{r_k})``."""
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (len(block_sizes),):
        raise InputError(f"nu must have length {len(block_sizes)}, got shape {nu.shape}")
    return np.repeat(nu, block_sizes)


@dataclass(frozen=True)
class ModalModel:
    """Modal data: ``Phi``, ``omega`` (ascending), ``gamma``, ``R`` and ``s``."""

    phi: np.ndarray
    omega: np.ndarray
    gamma: np.ndarray
    R: np.ndarray
    block_sizes: tuple
    s: int

    @property
    def n(self) -> int:
        return self.omega.shape[0]

    @property
    def k(self) -> int:
        return len(self.block_sizes)

    @property
    def k_d(self) -> int:
        return self.R.shape[1]

    @property
    def block_slices(self) -> list:
        edges = np.concatenate([[0], np.cumsum(self.block_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]

    @property
    def ind(self) -> np.ndarray:
        """Rows/columns of the first-order state carrying the damped modes."""
        return np.concatenate([np.arange(self.s), self.n + np.arange(self.s)])

    def sigma(self, nu) -> np.ndarray:
        return expand_nu(nu, self.block_sizes)

    def with_s(self, s: int) -> "ModalModel":
        if not 1 <= s <= self.n:
            raise InputError(f"s must lie in [1, {self.n}]")
        return ModalModel(self.phi, self.omega, self.gamma, self.R, self.block_sizes, s)


# -- problem families -------------------------------------------------------


@dataclass(frozen=True)
class Damp1Spec:
    """One-row chain of ``n`` masses, ``n+1`` springs of stiffness ``kappa``."""

    n: int
    kappa: float
    positions: tuple
    alpha: float = 0.01
    masses: tuple = None
    name: str = "damp1"


def _damp2_literal(i, t):
    if i <= t // 2:
        return 0.0 - 4.0 * i
    if i <= t:
        return 3.0 * i - 800.0
    if i <= 2 * t:
        return 500.0 + i
    return 1800.0


def _damp2_offset(i, t):
    # first branch read as 2000 - 4i; positive only for t = 800
    if i <= t // 2:
        return 2000.0 - 4.0 * i
    return _damp2_literal(i, t)


DAMP2_MASS_RULES = {"literal": _damp2_literal, "offset-2000": _damp2_offset}


@dataclass(frozen=True)
class Damp2Spec:
    """Two-row chain, ``n = 2t+1`` masses with three spring stiffnesses."""

    n: int
    positions: tuple
    kappas: tuple = (100.0, 150.0, 200.0)
    alpha: float = 0.01
    mass_rule: Union[str, Callable[[int, int], float]] = "literal"
    name: str = "damp2"


@dataclass(frozen=True)
class BeamSpec:
    """Simply supported Euler-Bernoulli beam, Hermite cubic elements.

    Unit length, flexural rigidity and mass per unit length.  ``n = 2N`` for
    ``N`` elements; DOFs are ordered ``theta_0, w_1, theta_1, ..., w_{N-1},
    theta_{N-1}, theta_N`` so even (1-based) positions are translations.
    """

    n: int
    positions: tuple
    alpha: float = 0.2
    name: str = "beam"


@dataclass(frozen=True)
class CustomSpec:
    """Explicit matrices.  ``D_int`` may be a matrix or a damping kind."""

    M: np.ndarray
    K: np.ndarray
    dampers: tuple
    D_int: Union[np.ndarray, Rayleigh, Critical, None] = None
    name: str = "custom"


ProblemSpec = Union[Damp1Spec, Damp2Spec, BeamSpec, CustomSpec]

PRESETS = {
    "damp1-a": Damp1Spec(n=4, kappa=5.0, positions=(2,), name="damp1-a"),
    "damp1-b": Damp1Spec(n=20, kappa=25.0, positions=(2,), name="damp1-b"),
    "damp1-c": Damp1Spec(n=20, kappa=25.0, positions=(2, 19), name="damp1-c"),
    "damp2-a": Damp2Spec(n=801, positions=(50, 550, 220), name="damp2-a"),
    "damp2-b": Damp2Spec(n=1601, positions=(50, 950, 120), name="damp2-b"),
    "damp2-c": Damp2Spec(n=2001, positions=(850, 1950, 120), name="damp2-c"),
    "beam-a": BeamSpec(n=200, positions=(50, 100, 150), name="beam-a"),
    "beam-b": BeamSpec(n=1000, positions=(150, 300, 500, 700, 850), name="beam-b"),
    "toy": CustomSpec(
        M=np.eye(2),
        K=np.array([[1.0, -1.0], [-1.0, 201.0]]),
        D_int=np.zeros((2, 2)),
        dampers=(np.array([[1.0], [0.0]]), np.array([[-1.0], [1.0]])),
        name="toy",
    ),
}

# modes to damp for each preset (the smallest ones)
PRESET_S = {
    "damp1-a": 4, "damp1-b": 20, "damp1-c": 20,
    "damp2-a": 27, "damp2-b": 27, "damp2-c": 20,
    "beam-a": 40, "beam-b": 80, "toy": 2,
}


def _check_positions(positions, n, what="position"):
    pos = tuple(int(p) for p in positions)
    if len(pos) == 0:
        raise InputError("at least one damper position is required")
    for p in pos:
        if not 1 <= p <= n:
            raise InputError(f"{what} {p} outside [1, {n}]")
    if len(set(pos)) != len(pos):
        raise InputError(f"duplicate damper positions {pos}")
    return pos


def _unit(n, i):
    e = np.zeros((n, 1))
    e[i - 1, 0] = 1.0
    return e


def _tridiag(n):
    return 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)


def _build_damp1(spec: Damp1Spec):
    n = int(spec.n)
    if n < 1:
        raise InputError("n must be positive")
    if not spec.kappa > 0:
        raise InputError("kappa must be positive")
    pos = _check_positions(spec.positions, n)
    m = np.arange(1, n + 1, dtype=float) if spec.masses is None else np.asarray(spec.masses, float)
    if m.shape != (n,) or np.any(m <= 0):
        raise InputError("damp1 masses must be n positive numbers")
    M = np.diag(m)
    K = spec.kappa * _tridiag(n)
    D_int = internal_damping(M, K, Critical(spec.alpha))
    return SecondOrderModel(M, K, D_int, tuple(_unit(n, p) for p in pos), name=spec.name)


def _build_damp2(spec: Damp2Spec):
    n = int(spec.n)
    if n < 3 or n % 2 == 0:
        raise InputError(f"damp2 requires odd n >= 3, got {n}")
    t = (n - 1) // 2
    pos = _check_positions(spec.positions, n)
    if len(pos) != 3:
        raise InputError("damp2 has exactly three dampers")
    l1, l2, l3 = pos
    if l3 + t > n or l2 == l3 + t:
        raise InputError(f"invalid coupling damper between {l2} and {l3 + t}")
    rule = spec.mass_rule
    if isinstance(rule, str):
        try:
            rule = DAMP2_MASS_RULES[rule]
        except KeyError:
            raise InputError(f"unknown damp2 mass rule {spec.mass_rule!r}") from None
    m = np.array([rule(i, t) for i in range(1, n + 1)], dtype=float)
    bad = np.flatnonzero(m <= 0)
    if bad.size:
        raise InputError(
            f"damp2 mass rule {spec.mass_rule!r} gives {bad.size} nonpositive masses "
            f"(first at i={bad[0] + 1}: m={m[bad[0]]:g}); supply another mass_rule"
        )
    k1, k2, k3 = (float(x) for x in spec.kappas)
    K = np.zeros((n, n))
    Kt = _tridiag(t)
    K[:t, :t] = k1 * Kt
    K[t:2 * t, t:2 * t] = k2 * Kt
    K[t - 1, n - 1] = K[n - 1, t - 1] = -k1
    K[2 * t - 1, n - 1] = K[n - 1, 2 * t - 1] = -k2
    K[n - 1, n - 1] = k1 + k2 + k3
    M = np.diag(m)
    D_int = internal_damping(M, K, Critical(spec.alpha))
    dampers = (_unit(n, l1), _unit(n, l2) - _unit(n, l3 + t), _unit(n, l3))
    return SecondOrderModel(M, K, D_int, dampers, name=spec.name)


def beam_matrices(n: int):
    """Mass and stiffness of the simply supported FEM beam with ``n`` DOFs."""
    if n < 2 or n % 2:
        raise InputError(f"beam requires even n >= 2, got {n}")
    N = n // 2
    h = 1.0 / N
    ke = np.array([
        [12, 6 * h, -12, 6 * h],
        [6 * h, 4 * h**2, -6 * h, 2 * h**2],
        [-12, -6 * h, 12, -6 * h],
        [6 * h, 2 * h**2, -6 * h, 4 * h**2],
    ]) / h**3
    me = np.array([
        [156, 22 * h, 54, -13 * h],
        [22 * h, 4 * h**2, 13 * h, -3 * h**2],
        [54, 13 * h, 156, -22 * h],
        [-13 * h, -3 * h**2, -22 * h, 4 * h**2],
    ]) * h / 420
    nfull = 2 * (N + 1)
    Kf = np.zeros((nfull, nfull))
    Mf = np.zeros((nfull, nfull))
    for e in range(N):
        idx = slice(2 * e, 2 * e + 4)
        Kf[idx, idx] += ke
        Mf[idx, idx] += me
    # drop w_0 and w_N (pinned ends)
    keep = np.setdiff1d(np.arange(nfull), [0, 2 * N])
    return Mf[np.ix_(keep, keep)], Kf[np.ix_(keep, keep)]


def _build_beam(spec: BeamSpec):
    n = int(spec.n)
    M, K = beam_matrices(n)
    pos = _check_positions(spec.positions, n)
    D_int = internal_damping(M, K, Critical(spec.alpha))
    return SecondOrderModel(M, K, D_int, tuple(_unit(n, p) for p in pos), name=spec.name)


def _build_custom(spec: CustomSpec):
    M = np.asarray(spec.M, dtype=float)
    K = np.asarray(spec.K, dtype=float)
    if spec.D_int is None:
        D_int = np.zeros_like(M)
    elif isinstance(spec.D_int, (Rayleigh, Critical)):
        D_int = internal_damping(M, K, spec.D_int)
    else:
        D_int = np.asarray(spec.D_int, dtype=float)
    dampers = tuple(np.atleast_2d(np.asarray(Di, dtype=float).reshape(M.shape[0], -1))
                    for Di in spec.dampers)
    return SecondOrderModel(M, K, D_int, dampers, name=spec.name)


def build_problem(spec) -> SecondOrderModel:
    """Assemble a :class:`SecondOrderModel` from a problem spec or preset name."""
    if isinstance(spec, str):
        try:
            spec = PRESETS[spec]
        except KeyError:
            raise InputError(f"unknown preset {spec!r}; known: {sorted(PRESETS)}") from None
    if isinstance(spec, Damp1Spec):
        return _build_damp1(spec)
    if isinstance(spec, Damp2Spec):
        return _build_damp2(spec)
    if isinstance(spec, BeamSpec):
        return _build_beam(spec)
    if isinstance(spec, CustomSpec):
        return _build_custom(spec)
    raise InputError(f"unsupported problem spec {type(spec).__name__}")


# -- modal transform ---------------------------------------------------------


def _clusters(values, rtol):
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > rtol * max(abs(values[i]), abs(values[i - 1])):
            groups.append(np.arange(start, i))
            start = i
    return groups


def modal_transform(model: SecondOrderModel, s: int = None) -> ModalModel:
    """Simultaneous diagonalization of ``M``, ``K`` and ``D_int``.

    ``Phi = L^{-T} Q`` where ``M = L L^T`` and ``Q`` diagonalizes
    ``L^{-1} K L^{-T}``.  Repeated frequencies get an extra orthogonal
    rotation inside each cluster so that ``Phi^T D_int Phi`` is diagonal.

    Raises
    ------
    StructuralError
        If ``Phi^T D_int Phi`` keeps off-diagonal entries above tolerance.
    """
    n = model.n
    s = n if s is None else int(s)
    if not 1 <= s <= n:
        raise InputError(f"s must lie in [1, {n}], got {s}")
    L = la.cholesky(model.M, lower=True)
    Linv_K = la.solve_triangular(L, model.K, lower=True)
    C = la.solve_triangular(L, Linv_K.T, lower=True)
    C = (C + C.T) / 2
    w2, Q = la.eigh(C)
    if w2[0] <= 0:
        raise NumericalError("K is not positive definite in the modal basis")
    phi = la.solve_triangular(L.T, Q, lower=False)
    Gt = phi.T @ model.D_int @ phi
    Gt = (Gt + Gt.T) / 2
    for grp in _clusters(w2, CLUSTER_RTOL):
        if grp.size > 1:
            _, rot = la.eigh(Gt[np.ix_(grp, grp)])
            phi[:, grp] = phi[:, grp] @ rot
    if any(g.size > 1 for g in _clusters(w2, CLUSTER_RTOL)):
        Gt = phi.T @ model.D_int @ phi
        Gt = (Gt + Gt.T) / 2
    gamma = np.diag(Gt).copy()
    off = Gt - np.diag(gamma)
    scale = np.abs(Gt).max()
    if scale > 0:
        worst = np.unravel_index(np.argmax(np.abs(off)), off.shape)
        if abs(off[worst]) > COMMUTE_RTOL * scale:
            raise StructuralError(
                "internal damping is not simultaneously diagonalizable with M and K: "
                f"|Phi^T D_int Phi|[{worst[0] + 1},{worst[1] + 1}] = {abs(off[worst]):.3e} "
                f"(scale {scale:.3e})"
            )
    gamma = np.where(np.abs(gamma) <= 1e-14 * scale, 0.0, gamma)
    gamma = np.clip(gamma, 0.0, None)
    R = phi.T @ np.hstack(model.dampers)
    return ModalModel(phi=phi, omega=np.sqrt(w2), gamma=gamma, R=R,
                      block_sizes=model.r, s=s)


# -- stability ---------------------------------------------------------------


class Stability(str, enum.Enum):
    ALWAYS_STABLE = "AlwaysStable"
    NEVER_STABLE = "NeverStable"
    REQUIRES_LOWER_BOUND = "RequiresLowerBound"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class StabilityReport:
    classification: Stability
    zero_gamma_rows: tuple
    dead_rows: tuple
    at_risk_rows: tuple
    recommended_d: np.ndarray
    spectral_abscissa: float = None
    touching_blocks: dict = field(default_factory=dict)

    def describe(self) -> str:
        lines = [f"classification: {self.classification.value}"]
        if self.dead_rows:
            rows = ", ".join(str(j + 1) for j in self.dead_rows)
            lines.append(f"undamped modes with no damper coupling (never stable): {rows}")
        if self.at_risk_rows:
            rows = ", ".join(str(j + 1) for j in self.at_risk_rows)
            lines.append(f"modes stabilized by a strict subset of dampers: {rows}")
        if np.any(self.recommended_d > 0):
            lines.append(f"recommended lower bound d = {self.recommended_d.tolist()}")
        return "\n".join(lines)


def analyze_stability(modal: ModalModel, probe_nu=None, d_floor: float = D_FLOOR) -> StabilityReport:
    """Classify whether ``A(nu)`` can lose stability for ``nu >= 0``.

    Rows ``j`` with ``gamma_j == 0`` and no damper coupling make the system
    unstable for every ``nu``.  Rows coupled to only some damper blocks become
    unstable whenever those coefficients vanish; one touching damper per such
    row receives ``d_i = d_floor``.
    """
    gamma = modal.gamma
    tol = max(GAMMA_RTOL * (gamma.max() if gamma.size else 0.0), 1e-300)
    zero = tuple(int(j) for j in np.flatnonzero(gamma <= tol))
    k = modal.k
    d = np.zeros(k)
    dead, risky, touching = [], [], {}
    rscale = max(np.abs(modal.R).max(), 1e-300)
    for j in zero:
        norms = np.array([np.linalg.norm(modal.R[j, sl]) for sl in modal.block_slices])
        hit = np.flatnonzero(norms > 1e-12 * rscale)
        touching[j] = tuple(int(i) for i in hit)
        if hit.size == 0:
            dead.append(j)
        elif hit.size < k:
            risky.append(j)
            if not np.any(d[hit] > 0):
                d[hit[np.argmax(norms[hit])]] = d_floor
    if dead:
        cls = Stability.NEVER_STABLE
    elif risky:
        cls = Stability.REQUIRES_LOWER_BOUND
    elif zero:
        cls = Stability.INDETERMINATE
    else:
        cls = Stability.ALWAYS_STABLE
    if cls is Stability.ALWAYS_STABLE:
        d = np.zeros(k)
    abscissa = None
    if probe_nu is not None:
        abscissa = check_stability_at(modal, probe_nu)[1]
    return StabilityReport(cls, zero, tuple(dead), tuple(risky), d, abscissa, touching)


def assemble_A(modal: ModalModel, nu) -> np.ndarray:
    """Dense ``2n x 2n`` first-order matrix ``A(nu)``."""
    n = modal.n
    sig = modal.sigma(nu)
    A = np.zeros((2 * n, 2 * n))
    idx = np.arange(n)
    A[idx, n + idx] = modal.omega
    A[n + idx, idx] = -modal.omega
    A[n:, n:] = -(modal.R * sig) @ modal.R.T
    A[n + idx, n + idx] -= modal.gamma
    return A


def check_stability_at(modal: ModalModel, nu):
    """Return ``(stable, spectral_abscissa)`` from a dense eigensolve of ``A(nu)``."""
    A = assemble_A(modal, nu)
    try:
        lam = la.eigvals(A, check_finite=False)
    except la.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    abscissa = float(lam.real.max())
    return abscissa < stability_threshold(A), abscissa


def stability_threshold(A) -> float:
    """Largest spectral abscissa still counted as stable: ``-tol * max(1, ||A||_1)``."""
    return -TOL_STAB * max(1.0, float(np.abs(A).sum(axis=0).max()))
