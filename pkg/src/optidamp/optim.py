"""Bound-constrained minimizers of the damping objective.

Two methods over ``{nu >= d}``:

* ``bbrma``: Barzilai-Borwein iteration on the projected residual
  ``h(nu) = (nu - d) - max(nu - d - grad f, 0)``, without line search.
* ``spg``: spectral projected gradient with a nonmonotone Armijo search.

Any object exposing ``eval_f(nu)`` and ``eval_grad(nu)`` can be minimized.
For :class:`~optidamp.objective.DampingObjective` the reported eigendecomposition
count is the change of the counter in :mod:`optidamp.spectral` for the calling
thread.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError, LineSearchError, NearDefectiveError, StabilityError
from .objective import kkt_residual
from .spectral import eig_count

__all__ = [
    "SPGParams",
    "StoppingMode",
    "OptimizerConfig",
    "IterRecord",
    "OptimResult",
    "bb_steplength",
    "nonmonotone_linesearch",
    "check_stop",
    "bbrma",
    "spg",
    "minimize",
    "write_trace",
]

MAX_HALVINGS = 60


@dataclass(frozen=True)
class SPGParams:
    sigma: float = 1e-4
    rho: float = 0.5
    eta_min: float = 1e-10
    eta_max: float = 1e10
    M0: int = 10

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise InputError(f"spg.sigma must lie in (0, 1), got {self.sigma}")
        if not 0 < self.rho < 1:
            raise InputError(f"spg.rho must lie in (0, 1), got {self.rho}")
        if not 0 < self.eta_min < self.eta_max:
            raise InputError("spg requires 0 < eta_min < eta_max")
        if int(self.M0) != self.M0 or self.M0 < 1:
            raise InputError(f"spg.M0 must be a positive integer, got {self.M0}")


@dataclass(frozen=True)
class StoppingMode:
    """``paper``: small residual and small relative step, both required.

    ``foda``: any of small residual, relative f change ``<= tol_trace`` or
    absolute step ``<= tol_nu``.
    """

    kind: str = "paper"
    tol_trace: float = 1e-6
    tol_nu: float = 1e-2

    def __post_init__(self):
        if self.kind not in ("paper", "foda"):
            raise InputError(f"stopping mode must be 'paper' or 'foda', got {self.kind!r}")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "spg"
    nu0: tuple | None = None
    d: float | tuple = 0.0
    eta0: float = 1.0
    tol_res: float = 1e-8
    tol_nu: float = 1e-5
    iter_max: int = 1000
    spg: SPGParams = field(default_factory=SPGParams)
    stopping: StoppingMode = field(default_factory=StoppingMode)

    def __post_init__(self):
        if self.method not in ("spg", "bbrma"):
            raise InputError(f"optimizer.method must be 'spg' or 'bbrma', got {self.method!r}")
        if self.eta0 <= 0 or self.tol_res <= 0 or self.tol_nu < 0:
            raise InputError("eta0 and tol_res must be positive, tol_nu nonnegative")
        if int(self.iter_max) != self.iter_max or self.iter_max < 0:
            raise InputError("iter_max must be a nonnegative integer")

    def start(self, k: int):
        """Resolved ``(nu0, d)`` as float arrays of length ``k``."""
        d = np.broadcast_to(np.asarray(self.d, dtype=float), (k,)).copy()
        nu0 = np.ones(k) if self.nu0 is None else np.asarray(self.nu0, dtype=float)
        if nu0.ndim == 0:
            nu0 = np.full(k, float(nu0))
        if nu0.shape != (k,):
            raise InputError(f"nu0 must have length {k}, got {nu0.shape}")
        if np.any(nu0 < d):
            raise InputError("nu0 must satisfy nu0 >= d")
        return nu0, d


@dataclass(frozen=True)
class IterRecord:
    iteration: int
    f: float
    norm_h: float
    eta: float
    alpha: float
    eig_count: int


@dataclass
class OptimResult:
    method: str
    nu_star: np.ndarray
    f_star: float
    norm_h: float
    iterations: int
    ls_invocations: int
    eig_count: int
    converged: bool
    strict_min: bool | None
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""
    active_set: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "nu_star": [float(x) for x in self.nu_star],
            "f_star": float(self.f_star),
            "norm_h": float(self.norm_h),
            "iterations": int(self.iterations),
            "ls_invocations": int(self.ls_invocations),
            "eig_count": int(self.eig_count),
            "converged": bool(self.converged),
            "strict_min": None if self.strict_min is None else bool(self.strict_min),
            "wall_time": float(self.wall_time),
            "message": self.message,
            "active_set": [int(i) + 1 for i in self.active_set],
        }


def bb_steplength(d_nu, d_y, bounds=None, previous=None) -> float:
    """Two-point step ``||d_nu||^2 / (d_nu^T d_y)``.

    With ``bounds = (eta_min, eta_max)`` the step is clamped, and
    ``eta_max`` is returned when the curvature ``d_nu^T d_y <= 0``.  Without
    bounds a zero denominator returns ``previous``.
    """
    d_nu = np.asarray(d_nu, dtype=float)
    d_y = np.asarray(d_y, dtype=float)
    p = float(d_nu @ d_y)
    num = float(d_nu @ d_nu)
    if bounds is not None:
        lo, hi = bounds
        if p <= 0:
            return float(hi)
        return float(min(max(num / p, lo), hi))
    if p == 0:
        if previous is None:
            raise InputError("zero BB denominator and no previous step length")
        return float(previous)
    return num / p


def nonmonotone_linesearch(nu, d_dir, f_history, grad, f_eval: Callable, sigma=1e-4,
                           rho=0.5, M0=10, max_halvings=MAX_HALVINGS):
    """Smallest ``m >= 0`` with ``f(nu + rho^m d) <= f_max + sigma rho^m d^T grad``.

    ``f_max`` is the largest of the last ``M0`` entries of ``f_history``.
    ``f_eval`` may return ``inf`` for points it cannot evaluate.

    Returns
    -------
    alpha, evals_used, f_new
    """
    nu = np.asarray(nu, dtype=float)
    d_dir = np.asarray(d_dir, dtype=float)
    slope = float(d_dir @ np.asarray(grad, dtype=float))
    if not slope < 0:
        raise LineSearchError(f"not a descent direction: d^T grad = {slope:.3e}")
    f_max = max(list(f_history)[-int(M0):])
    alpha = 1.0
    for m in range(max_halvings + 1):
        f_new = f_eval(nu + alpha * d_dir)
        if f_new <= f_max + sigma * alpha * slope:
            return alpha, m + 1, f_new
        alpha *= rho
    raise LineSearchError(
        f"line search failed after {max_halvings} reductions (f_max={f_max:.6e}, "
        f"slope={slope:.3e}, last f={f_new:.6e})")


def check_stop(norm_h, step_norm, nu_prev_norm, f, f_prev, tol_res, tol_nu,
               mode: StoppingMode) -> bool:
    """Stopping test after a completed iteration."""
    if mode.kind == "paper":
        return norm_h < tol_res and step_norm <= tol_nu * nu_prev_norm
    rel_f = abs(f - f_prev) / abs(f_prev) if f_prev != 0 else math.inf
    return norm_h <= tol_res or rel_f <= mode.tol_trace or step_norm <= mode.tol_nu


class _Tracker:
    def __init__(self):
        self.start = eig_count(thread=True)
        self.t0 = time.perf_counter()

    @property
    def eigs(self) -> int:
        return eig_count(thread=True) - self.start


def _finish(obj, method, nu, f, h, it, nls, tracker, converged, history, message):
    strict = None
    if converged and hasattr(obj, "strict_min_check"):
        strict, _ = obj.strict_min_check(nu)
    res = OptimResult(method=method, nu_star=nu.copy(), f_star=float(f), norm_h=float(h.norm),
                      iterations=it, ls_invocations=nls, eig_count=tracker.eigs,
                      converged=bool(converged), strict_min=strict, history=history,
                      wall_time=time.perf_counter() - tracker.t0, message=message,
                      active_set=np.flatnonzero(h.active))
    return res


def bbrma(obj, config: OptimizerConfig, k: int | None = None) -> OptimResult:
    """Barzilai-Borwein residual minimization, ``nu <- max(nu - eta h, d)``.

    No globalization: an unstable iterate raises :class:`StabilityError`.
    """
    k = k if k is not None else obj.k
    nu, d = config.start(k)
    tr = _Tracker()
    g = obj.eval_grad(nu)
    f = obj.eval_f(nu)
    h = kkt_residual(nu, g, d)
    eta = config.eta0
    hist = [IterRecord(0, f, h.norm, eta, math.nan, tr.eigs)]
    if h.norm < config.tol_res:
        return _finish(obj, "bbrma", nu, f, h, 0, 0, tr, True, hist, "initial point stationary")
    for j in range(1, config.iter_max + 1):
        nu_new = np.maximum(nu - eta * h.h, d)
        g_new = obj.eval_grad(nu_new)
        f_new = obj.eval_f(nu_new)
        h_new = kkt_residual(nu_new, g_new, d)
        step = nu_new - nu
        eta = bb_steplength(step, h_new.h - h.h, previous=eta)
        stop = check_stop(h_new.norm, float(np.linalg.norm(step)), float(np.linalg.norm(nu)),
                          f_new, f, config.tol_res, config.tol_nu, config.stopping)
        nu, f, h = nu_new, f_new, h_new
        hist.append(IterRecord(j, f, h.norm, eta, math.nan, tr.eigs))
        if stop:
            return _finish(obj, "bbrma", nu, f, h, j, 0, tr, True, hist, "stopping rule satisfied")
    return _finish(obj, "bbrma", nu, f, h, config.iter_max, 0, tr, False, hist,
                   f"iteration limit {config.iter_max} reached")


def spg(obj, config: OptimizerConfig, k: int | None = None) -> OptimResult:
    """Spectral projected gradient with nonmonotone line search.

    ``ls_invocations`` counts iterations whose first trial step was rejected.
    Every trial evaluation costs one eigendecomposition; the gradient at the
    accepted point reuses it.
    """
    k = k if k is not None else obj.k
    nu, d = config.start(k)
    p = config.spg
    tr = _Tracker()

    def f_trial(x):
        try:
            return obj.eval_f(x)
        except (StabilityError, NearDefectiveError):
            return math.inf

    f = obj.eval_f(nu)
    g = obj.eval_grad(nu)
    h = kkt_residual(nu, g, d)
    eta = config.eta0
    fhist = [f]
    hist = [IterRecord(0, f, h.norm, eta, math.nan, tr.eigs)]
    nls = 0
    if h.norm < config.tol_res:
        return _finish(obj, "spg", nu, f, h, 0, 0, tr, True, hist, "initial point stationary")
    for j in range(1, config.iter_max + 1):
        direction = np.maximum(nu - eta * g, d) - nu
        if not np.any(direction):
            return _finish(obj, "spg", nu, f, h, j - 1, nls, tr, True, hist,
                           "projected direction vanished")
        alpha, used, f_new = nonmonotone_linesearch(nu, direction, fhist, g, f_trial,
                                                    p.sigma, p.rho, p.M0)
        nls += used > 1
        nu_new = nu + alpha * direction
        # the accepted trial is the cached point, so no new eigendecomposition
        g_new = obj.eval_grad(nu_new)
        h_new = kkt_residual(nu_new, g_new, d)
        step = nu_new - nu
        eta = bb_steplength(step, g_new - g, bounds=(p.eta_min, p.eta_max))
        stop = check_stop(h_new.norm, float(np.linalg.norm(step)), float(np.linalg.norm(nu)),
                          f_new, f, config.tol_res, config.tol_nu, config.stopping)
        nu, f, g, h = nu_new, f_new, g_new, h_new
        fhist.append(f)
        hist.append(IterRecord(j, f, h.norm, eta, alpha, tr.eigs))
        if stop:
            return _finish(obj, "spg", nu, f, h, j, nls, tr, True, hist, "stopping rule satisfied")
    return _finish(obj, "spg", nu, f, h, config.iter_max, nls, tr, False, hist,
                   f"iteration limit {config.iter_max} reached")


def minimize(obj, config: OptimizerConfig) -> OptimResult:
    return (spg if config.method == "spg" else bbrma)(obj, config)


TRACE_FIELDS = ("iteration", "f", "norm_h", "eta", "alpha", "eig_count")


def write_trace(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_FIELDS)
        for rec in history:
            w.writerow([getattr(rec, name) if not isinstance(getattr(rec, name), float)
                        else repr(getattr(rec, name)) for name in TRACE_FIELDS])
