"""YAML run configuration.

A complete annotated example::

    problem:
      preset: damp1-c          # any name in PRESETS; or give `kind` instead
      # kind: damp1            # damp1 | damp2 | beam | custom
      # n: 20
      # kappa: 25.0            # damp1 only
      # positions: [2, 19]     # 1-based damper positions
      # alpha: 0.01            # critical internal damping factor
      # masses: [1, 2, ...]    # damp1 only, default m_i = i
      # kappas: [100, 150, 200]   # damp2 only
      # mass_rule: literal     # damp2 only, a name in DAMP2_MASS_RULES
      # M: [[1, 0], [0, 1]]    # custom only: M, K, dampers, D_int
      # K: [[1, -1], [-1, 201]]
      # dampers: [[[1], [0]], [[-1], [1]]]   # list of n x r_i matrices
      # D_int: [[0, 0], [0, 0]]   # or {critical: 0.01} or {rayleigh: [a, b]}
    s: 20                      # modes to damp; default from preset or n
    optimizer:
      method: spg              # spg | bbrma
      nu0: 10.0                # scalar (times e) or list of length k
      d: null                  # lower bound; null = recommended by stability analysis
      nu_base: null            # expansion point; null = 0 if A(0) is stable
      eta0: 1.0
      tol_res: 1.0e-8
      tol_nu: 1.0e-5
      iter_max: 1000
      spg: {sigma: 1.0e-4, rho: 0.5, eta_min: 1.0e-10, eta_max: 1.0e10, M0: 10}
      stopping: {kind: paper, tol_trace: 1.0e-6, tol_nu: 1.0e-2}
    output:
      report: out/report.json
      trace: out/trace.csv
      export_dir: out/matrices
    seed: 0
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .errors import InputError
from .model import (PRESET_S, PRESETS, BeamSpec, Critical, CustomSpec, Damp1Spec, Damp2Spec,
                    Rayleigh)
from .optim import OptimizerConfig, SPGParams, StoppingMode

__all__ = ["ConfigError", "ProblemConfig", "OutputConfig", "RunConfig", "load_config",
           "parse_config", "dump_config"]


class ConfigError(InputError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path


_PROBLEM_KEYS = {
    "damp1": {"n", "kappa", "positions", "alpha", "masses"},
    "damp2": {"n", "positions", "kappas", "alpha", "mass_rule"},
    "beam": {"n", "positions", "alpha"},
    "custom": {"M", "K", "dampers", "D_int"},
}


@dataclass
class ProblemConfig:
    """Either a preset name or a problem kind with its parameters."""

    preset: str | None = None
    kind: str | None = None
    params: dict = field(default_factory=dict)

    def to_spec(self):
        if self.preset is not None:
            return PRESETS[self.preset]
        p = self.params
        if self.kind == "damp1":
            return Damp1Spec(n=p["n"], kappa=p["kappa"], positions=tuple(p["positions"]),
                             alpha=p.get("alpha", 0.01),
                             masses=None if p.get("masses") is None else tuple(p["masses"]))
        if self.kind == "damp2":
            return Damp2Spec(n=p["n"], positions=tuple(p["positions"]),
                             kappas=tuple(p.get("kappas", (100.0, 150.0, 200.0))),
                             alpha=p.get("alpha", 0.01), mass_rule=p.get("mass_rule", "literal"))
        if self.kind == "beam":
            return BeamSpec(n=p["n"], positions=tuple(p["positions"]), alpha=p.get("alpha", 0.2))
        D_int = p.get("D_int")
        if isinstance(D_int, dict):
            D_int = (Critical(D_int["critical"]) if "critical" in D_int
                     else Rayleigh(*D_int["rayleigh"]))
        elif D_int is not None:
            D_int = np.asarray(D_int, dtype=float)
        return CustomSpec(M=np.asarray(p["M"], dtype=float), K=np.asarray(p["K"], dtype=float),
                          dampers=tuple(np.asarray(Dm, dtype=float).reshape(len(p["M"]), -1)
                                        for Dm in p["dampers"]),
                          D_int=D_int)

    @property
    def name(self) -> str:
        return self.preset or self.kind

    def default_s(self):
        if self.preset is not None:
            return PRESET_S.get(self.preset)
        if self.kind == "custom":
            return len(self.params["M"])
        return self.params.get("n")


@dataclass
class OutputConfig:
    report: str | None = None
    trace: str | None = None
    export_dir: str | None = None


@dataclass
class RunConfig:
    problem: ProblemConfig
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    s: int | None = None
    nu_base: tuple | None = None
    d_auto: bool = True
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0

    @property
    def effective_s(self):
        return self.s if self.s is not None else self.problem.default_s()


def _expect(cond, path, msg):
    if not cond:
        raise ConfigError(path, msg)


def _number(v, path, integer=False, positive=False):
    if isinstance(v, str):
        # YAML 1.1 reads exponents without a dot, e.g. 1e-8, as strings
        try:
            v = float(v)
        except ValueError:
            pass
    ok = isinstance(v, (int, float)) and not isinstance(v, bool)
    _expect(ok, path, f"expected a number, got {v!r}")
    if integer:
        _expect(float(v).is_integer(), path, f"expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
    if positive:
        _expect(v > 0, path, f"must be positive, got {v!r}")
    return v


def _vector(v, path, allow_scalar=True):
    if v is None:
        return None
    if allow_scalar and not isinstance(v, (list, tuple, dict, bool)):
        return _number(v, path)
    _expect(isinstance(v, (list, tuple)) and len(v) > 0, path, "expected a number or a list")
    return tuple(_number(x, f"{path}[{i}]") for i, x in enumerate(v))


def _matrix(v, path):
    _expect(isinstance(v, list) and all(isinstance(r, list) for r in v), path,
            "expected a list of rows")
    return [[_number(x, f"{path}[{i}][{j}]") for j, x in enumerate(r)] for i, r in enumerate(v)]


def _unknown(d, allowed, path):
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else str(extra[0]), "unknown field")


def _parse_problem(d) -> ProblemConfig:
    _expect(isinstance(d, dict), "problem", "expected a mapping")
    if "preset" in d:
        _unknown(d, {"preset"}, "problem")
        _expect(d["preset"] in PRESETS, "problem.preset",
                f"unknown preset {d['preset']!r}; choose from {sorted(PRESETS)}")
        return ProblemConfig(preset=d["preset"])
    _expect("kind" in d, "problem", "needs 'preset' or 'kind'")
    kind = d["kind"]
    _expect(kind in _PROBLEM_KEYS, "problem.kind", f"must be one of {sorted(_PROBLEM_KEYS)}")
    _unknown(d, _PROBLEM_KEYS[kind] | {"kind"}, "problem")
    p = {}
    if kind == "custom":
        for key in ("M", "K", "dampers"):
            _expect(key in d, f"problem.{key}", "required")
        p["M"] = _matrix(d["M"], "problem.M")
        p["K"] = _matrix(d["K"], "problem.K")
        _expect(isinstance(d["dampers"], list) and d["dampers"], "problem.dampers",
                "expected a non-empty list of matrices")
        p["dampers"] = [_matrix(Dm, f"problem.dampers[{i}]") for i, Dm in enumerate(d["dampers"])]
        if d.get("D_int") is not None:
            D = d["D_int"]
            if isinstance(D, dict):
                _expect(len(D) == 1 and set(D) <= {"critical", "rayleigh"}, "problem.D_int",
                        "expected {critical: alpha} or {rayleigh: [alpha, beta]}")
                if "critical" in D:
                    p["D_int"] = {"critical": _number(D["critical"], "problem.D_int.critical")}
                else:
                    ab = _vector(D["rayleigh"], "problem.D_int.rayleigh", allow_scalar=False)
                    _expect(len(ab) == 2, "problem.D_int.rayleigh", "expected [alpha, beta]")
                    p["D_int"] = {"rayleigh": list(ab)}
            else:
                p["D_int"] = _matrix(D, "problem.D_int")
        return ProblemConfig(kind=kind, params=p)
    for key in ("n", "positions") + (("kappa",) if kind == "damp1" else ()):
        _expect(key in d, f"problem.{key}", "required")
    p["n"] = _number(d["n"], "problem.n", integer=True, positive=True)
    p["positions"] = [_number(x, f"problem.positions[{i}]", integer=True)
                      for i, x in enumerate(d["positions"])]
    if "alpha" in d:
        p["alpha"] = _number(d["alpha"], "problem.alpha")
    if kind == "damp1":
        p["kappa"] = _number(d["kappa"], "problem.kappa", positive=True)
        if d.get("masses") is not None:
            p["masses"] = list(_vector(d["masses"], "problem.masses", allow_scalar=False))
    if kind == "damp2":
        if "kappas" in d:
            ks = _vector(d["kappas"], "problem.kappas", allow_scalar=False)
            _expect(len(ks) == 3, "problem.kappas", "expected three stiffnesses")
            p["kappas"] = list(ks)
        if "mass_rule" in d:
            _expect(isinstance(d["mass_rule"], str), "problem.mass_rule", "expected a rule name")
            p["mass_rule"] = d["mass_rule"]
    return ProblemConfig(kind=kind, params=p)


_OPT_KEYS = {"method", "nu0", "d", "nu_base", "eta0", "tol_res", "tol_nu", "iter_max", "spg",
             "stopping"}


def _parse_optimizer(d):
    d = {} if d is None else d
    _expect(isinstance(d, dict), "optimizer", "expected a mapping")
    _unknown(d, _OPT_KEYS, "optimizer")
    kw = {}
    if "method" in d:
        _expect(d["method"] in ("spg", "bbrma"), "optimizer.method", "must be 'spg' or 'bbrma'")
        kw["method"] = d["method"]
    if d.get("nu0") is not None:
        kw["nu0"] = _vector(d["nu0"], "optimizer.nu0")
    d_auto = d.get("d") is None
    if not d_auto:
        kw["d"] = _vector(d["d"], "optimizer.d")
    for key in ("eta0", "tol_res", "tol_nu"):
        if key in d:
            kw[key] = _number(d[key], f"optimizer.{key}", positive=key != "tol_nu")
    if "iter_max" in d:
        kw["iter_max"] = _number(d["iter_max"], "optimizer.iter_max", integer=True)
    if d.get("spg") is not None:
        sp = d["spg"]
        _expect(isinstance(sp, dict), "optimizer.spg", "expected a mapping")
        names = {f.name for f in fields(SPGParams)}
        _unknown(sp, names, "optimizer.spg")
        vals = {k: _number(v, f"optimizer.spg.{k}", integer=k == "M0") for k, v in sp.items()}
        try:
            kw["spg"] = SPGParams(**vals)
        except InputError as exc:
            raise ConfigError("optimizer.spg", str(exc)) from None
    if d.get("stopping") is not None:
        st = d["stopping"]
        if isinstance(st, str):
            st = {"kind": st}
        _expect(isinstance(st, dict), "optimizer.stopping", "expected a mapping or a mode name")
        _unknown(st, {"kind", "tol_trace", "tol_nu"}, "optimizer.stopping")
        vals = {k: (v if k == "kind" else _number(v, f"optimizer.stopping.{k}"))
                for k, v in st.items()}
        try:
            kw["stopping"] = StoppingMode(**vals)
        except InputError as exc:
            raise ConfigError("optimizer.stopping.kind", str(exc)) from None
    nu_base = _vector(d.get("nu_base"), "optimizer.nu_base")
    try:
        return OptimizerConfig(**kw), nu_base, d_auto
    except InputError as exc:
        raise ConfigError("optimizer", str(exc)) from None


def parse_config(data) -> RunConfig:
    """Validate a mapping (as loaded from YAML) into a :class:`RunConfig`."""
    _expect(isinstance(data, dict), "", "configuration must be a mapping")
    _unknown(data, {"problem", "s", "optimizer", "output", "seed"}, "")
    _expect("problem" in data, "problem", "required")
    problem = _parse_problem(data["problem"])
    opt, nu_base, d_auto = _parse_optimizer(data.get("optimizer"))
    s = data.get("s")
    if s is not None:
        s = _number(s, "s", integer=True, positive=True)
    out = data.get("output") or {}
    _expect(isinstance(out, dict), "output", "expected a mapping")
    _unknown(out, {"report", "trace", "export_dir"}, "output")
    for key, v in out.items():
        _expect(v is None or isinstance(v, str), f"output.{key}", "expected a path string")
    seed = _number(data.get("seed", 0), "seed", integer=True)
    return RunConfig(problem=problem, optimizer=opt, s=s, nu_base=nu_base, d_auto=d_auto,
                     output=OutputConfig(**out), seed=seed)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("", f"malformed YAML in {path}: {exc}") from None
    return parse_config(data)


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, list):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def to_dict(cfg: RunConfig) -> dict:
    if cfg.problem.preset is not None:
        prob = {"preset": cfg.problem.preset}
    else:
        prob = {"kind": cfg.problem.kind, **copy.deepcopy(cfg.problem.params)}
    o = cfg.optimizer
    opt = {
        "method": o.method,
        "nu0": o.nu0,
        "d": None if cfg.d_auto else o.d,
        "nu_base": cfg.nu_base,
        "eta0": o.eta0,
        "tol_res": o.tol_res,
        "tol_nu": o.tol_nu,
        "iter_max": o.iter_max,
        "spg": {f.name: getattr(o.spg, f.name) for f in fields(SPGParams)},
        "stopping": {f.name: getattr(o.stopping, f.name) for f in fields(StoppingMode)},
    }
    return _plain({
        "problem": prob,
        "s": cfg.s,
        "optimizer": opt,
        "output": {f.name: getattr(cfg.output, f.name) for f in fields(OutputConfig)},
        "seed": cfg.seed,
    })


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)
