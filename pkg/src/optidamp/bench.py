"""Benchmark suites over the preset problems, with published reference values.

``table2`` runs BBRMA and SPG under the default stopping rule; ``table3`` runs
SPG under the FODA-compatible rule.  Each row records the optimizer's own
eigendecomposition count next to an independent per-thread counter delta and
the count implied by the iteration history; the three must agree.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import OptiDampError
from .model import PRESET_S, PRESETS, build_problem, modal_transform
from .objective import DampingObjective
from .optim import OptimizerConfig, StoppingMode, minimize
from .spectral import eig_count

__all__ = ["BenchCase", "REFERENCE", "SUITES", "BENCH_COLUMNS", "suite_cases", "run_case",
           "run_suite", "write_csv", "format_table", "expected_eigs"]


@dataclass(frozen=True)
class BenchCase:
    problem: str
    nu0: float
    method: str
    stopping: str
    suite: str


# Published values.  table2 rows: (#iter, #ls, #eig, f); None marks a reported failure.
# table3 rows: (#eig, nu*, ||h||, f) for SPG plus (#eig, nu*, f) for FODA.
REFERENCE = {
    ("table2", "damp1-a", 1.0, "bbrma"): dict(iter=1000, ls=None, eig=1001, f=4.3e0),
    ("table2", "damp1-a", 1.0, "spg"): dict(iter=11, ls=2, eig=14, f=3.6e0),
    ("table2", "damp1-b", 1.0, "bbrma"): dict(iter=29, ls=None, eig=30, f=2.1e1),
    ("table2", "damp1-b", 1.0, "spg"): dict(iter=10, ls=1, eig=12, f=2.1e1),
    ("table2", "damp1-c", 10.0, "bbrma"): dict(iter=29, ls=None, eig=30, f=1.0e1),
    ("table2", "damp1-c", 10.0, "spg"): dict(iter=29, ls=0, eig=30, f=1.0e1),
    ("table2", "damp1-c", 1.0, "bbrma"): dict(iter=None, ls=None, eig=None, f=None),
    ("table2", "damp1-c", 1.0, "spg"): dict(iter=170, ls=43, eig=259, f=1.0e1),
    ("table2", "damp2-a", 100.0, "bbrma"): dict(iter=24, ls=None, eig=25, f=1.1e3),
    ("table2", "damp2-a", 100.0, "spg"): dict(iter=24, ls=0, eig=25, f=1.1e3),
    ("table2", "damp2-b", 100.0, "bbrma"): dict(iter=28, ls=None, eig=29, f=3.5e3),
    ("table2", "damp2-b", 100.0, "spg"): dict(iter=28, ls=0, eig=29, f=3.5e3),
    ("table2", "damp2-c", 100.0, "bbrma"): dict(iter=20, ls=None, eig=21, f=3.8e3),
    ("table2", "damp2-c", 100.0, "spg"): dict(iter=20, ls=0, eig=21, f=3.8e3),
    ("table2", "beam-a", 1.0, "bbrma"): dict(iter=21, ls=None, eig=22, f=1e-3),
    ("table2", "beam-a", 1.0, "spg"): dict(iter=21, ls=0, eig=22, f=1e-3),
    ("table2", "beam-b", 1.0, "bbrma"): dict(iter=33, ls=None, eig=34, f=4e-4),
    ("table2", "beam-b", 1.0, "spg"): dict(iter=33, ls=0, eig=34, f=4e-4),
    ("table3", "damp1-a", 1.0, "spg"): dict(eig=12, nu=(4.4,), res_h=5e-5, f=3.6e0,
                                             foda_eig=23, foda_nu=(4.4,), foda_f=3.6e0),
    ("table3", "damp1-b", 1.0, "spg"): dict(eig=11, nu=(18.9,), res_h=2e-7, f=2.1e1,
                                             foda_eig=159, foda_nu=(-6.1,), foda_f=-3.8e6),
    ("table3", "damp1-c", 10.0, "spg"): dict(eig=24, nu=(9.6, 39.3), res_h=4e-5, f=1.0e1,
                                              foda_eig=59, foda_nu=(9.6, 39.3), foda_f=1.0e1),
    ("table3", "damp1-c", 1.0, "spg"): dict(eig=254, nu=(9.6, 39.3), res_h=4e-6, f=1.0e1,
                                             foda_eig=None, foda_nu=None, foda_f=None),
    ("table3", "damp2-a", 100.0, "spg"): dict(eig=14, nu=(565, 385, 284), res_h=6e-4, f=1.1e3,
                                               foda_eig=87, foda_nu=(568, 385, 284), foda_f=1.1e3),
    ("table3", "damp2-b", 100.0, "spg"): dict(eig=21, nu=(807, 1694, 422), res_h=4e-5, f=3.5e3,
                                               foda_eig=109, foda_nu=(807, 1696, 422),
                                               foda_f=3.5e3),
    ("table3", "damp2-c", 100.0, "spg"): dict(eig=14, nu=(637, 704, 663), res_h=5e-4, f=3.8e3,
                                               foda_eig=93, foda_nu=(637, 704, 634), foda_f=3.8e3),
}
PROVENANCE = "published"


def suite_cases(suite: str) -> list[BenchCase]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    names = ("table2", "table3") if suite == "all" else (suite,)
    cases = []
    for key in REFERENCE:
        tab, prob, nu0, method = key
        if tab in names:
            cases.append(BenchCase(prob, nu0, method, "paper" if tab == "table2" else "foda", tab))
    return cases


SUITES = ("table2", "table3", "all")

BENCH_COLUMNS = (
    "suite", "problem", "n", "k", "s", "nu0", "method", "stopping", "status", "converged",
    "iterations", "ls_invocations", "eig_count", "counter_delta", "history_eigs", "reconciled",
    "nu_star", "f_star", "norm_h", "strict_min", "wall_time",
    "ref_iterations", "ref_ls", "ref_eig", "ref_f", "ref_nu", "f_rel_diff", "ref_provenance",
)


def expected_eigs(result, rho=0.5) -> int:
    """Eigendecompositions implied by the history: one at ``nu0`` plus one per trial point."""
    if result.method == "bbrma":
        return result.iterations + 1
    total = 1
    for rec in result.history[1:]:
        total += int(round(math.log(rec.alpha) / math.log(rho))) + 1
    return total


def _fmt_vec(v):
    return "[" + " ".join(f"{x:.6g}" for x in v) + "]"


def run_case(case: BenchCase, modal_cache=None, max_n=None) -> dict:
    ref = REFERENCE[(case.suite, case.problem, case.nu0, case.method)]
    row = {c: "" for c in BENCH_COLUMNS}
    row.update(suite=case.suite, problem=case.problem, nu0=case.nu0, method=case.method,
               stopping=case.stopping, ref_provenance=PROVENANCE,
               ref_iterations=ref.get("iter", ""), ref_ls=ref.get("ls", ""),
               ref_eig=ref.get("eig", ""), ref_f=ref.get("f", ""),
               ref_nu=_fmt_vec(ref["nu"]) if ref.get("nu") else "")
    spec = PRESETS[case.problem]
    row["n"] = spec.n if hasattr(spec, "n") else ""
    if max_n is not None and isinstance(row["n"], int) and row["n"] > max_n:
        row["status"] = f"skipped: n > {max_n}"
        return row
    try:
        if modal_cache is not None and case.problem in modal_cache:
            modal = modal_cache[case.problem]
        else:
            modal = modal_transform(build_problem(case.problem), PRESET_S[case.problem])
            if modal_cache is not None:
                modal_cache[case.problem] = modal
        row.update(n=modal.n, k=modal.k, s=modal.s)
        obj = DampingObjective(modal)
        cfg = OptimizerConfig(method=case.method, nu0=(case.nu0,) * modal.k,
                              stopping=StoppingMode(case.stopping))
        before = eig_count(thread=True)
        res = minimize(obj, cfg)
        delta = eig_count(thread=True) - before
    except OptiDampError as exc:
        row["status"] = f"error: {type(exc).__name__}: {exc}"
        return row
    hist = expected_eigs(res, cfg.spg.rho)
    row.update(status="ok", converged=res.converged, iterations=res.iterations,
               ls_invocations=res.ls_invocations if case.method == "spg" else "",
               eig_count=res.eig_count, counter_delta=delta, history_eigs=hist,
               reconciled=res.eig_count == delta == hist,
               nu_star=_fmt_vec(res.nu_star), f_star=f"{res.f_star:.10g}",
               norm_h=f"{res.norm_h:.3e}", strict_min=res.strict_min,
               wall_time=f"{res.wall_time:.3f}")
    if ref.get("f"):
        row["f_rel_diff"] = f"{(res.f_star - ref['f']) / abs(ref['f']):+.3f}"
    return row


def run_suite(suite: str, max_n=None, threads=None) -> list[dict]:
    """Run every case of ``suite``; failures are recorded per row.

    ``threads`` defaults to ``$OPTIDAMP_THREADS`` (1 when unset).
    """
    cases = suite_cases(suite)
    if threads is None:
        threads = int(os.environ.get("OPTIDAMP_THREADS", "1") or 1)
    threads = max(1, threads)
    cache = {}
    # build each modal model once, serially, so worker threads only read the cache
    for name in dict.fromkeys(c.problem for c in cases):
        n = getattr(PRESETS[name], "n", 0)
        if max_n is not None and n > max_n:
            continue
        try:
            cache[name] = modal_transform(build_problem(name), PRESET_S[name])
        except OptiDampError:
            pass
    if threads == 1:
        return [run_case(c, cache, max_n) for c in cases]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: run_case(c, cache, max_n), cases))


def write_csv(rows, path_or_buf) -> None:
    own = isinstance(path_or_buf, (str, os.PathLike))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, quoting=csv.QUOTE_MINIMAL)
        w.writeheader()
        for r in rows:
            w.writerow(r)
    finally:
        if own:
            fh.close()


_TABLE_COLS = (("problem", 8), ("n", 5), ("k", 2), ("s", 3), ("nu0", 6), ("method", 6),
               ("stopping", 6), ("iterations", 5), ("ls_invocations", 4), ("eig_count", 5),
               ("f_star", 12), ("ref_iterations", 5), ("ref_ls", 4), ("ref_eig", 5),
               ("ref_f", 8), ("reconciled", 5), ("status", 0))
_HEAD = {"iterations": "#iter", "ls_invocations": "#ls", "eig_count": "#eig",
         "ref_iterations": "r#it", "ref_ls": "r#ls", "ref_eig": "r#eig", "ref_f": "ref f",
         "reconciled": "recon", "stopping": "stop"}


def format_table(rows) -> str:
    """Fixed-width table: our columns next to the published ones (``r#...``)."""
    buf = io.StringIO()
    buf.write(" ".join(f"{_HEAD.get(c, c):<{w}}" if w else _HEAD.get(c, c)
                       for c, w in _TABLE_COLS) + "\n")
    for r in rows:
        cells = []
        for c, w in _TABLE_COLS:
            v = r.get(c, "")
            v = "-" if v is None or v == "" else str(v)
            if c == "status" and v.startswith("error"):
                v = v[:100]
            cells.append(f"{v:<{w}}" if w else v)
        buf.write(" ".join(cells) + "\n")
    return buf.getvalue()
