"""Command-line front end: ``optidamp {solve,check,bench,export}``.

Exit codes: 0 converged / all good, 1 usage or input error, 2 not converged,
3 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import bench as bench_mod
from .checks import run_checks
from .config import RunConfig, load_config
from .errors import OptiDampError
from .export import export_model
from .model import Stability, analyze_stability, build_problem, modal_transform
from .objective import DampingObjective
from .optim import StoppingMode, minimize, write_trace

__all__ = ["main", "EXIT_OK", "EXIT_ERROR", "EXIT_NOT_CONVERGED", "EXIT_CHECK_FAILED"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_CHECK_FAILED = 3

log = logging.getLogger("optidamp")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _build_parser():
    p = _Parser(prog="optidamp", description="Optimal viscous damping by trace minimization.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("solve", help="optimize the damping coefficients of one problem")
    sp.add_argument("--config", required=True, metavar="PATH")
    sp.add_argument("--out", metavar="DIR", help="directory for report.json (overrides config)")
    sp.add_argument("--trace", metavar="PATH", help="per-iteration CSV (overrides config)")
    sp.add_argument("--stopping", choices=("paper", "foda"), help="override the stopping rule")
    sp.add_argument("--seed", type=int)

    sc = sub.add_parser("check", help="verify derivatives and solutions against oracles")
    sc.add_argument("--config", required=True, metavar="PATH")
    sc.add_argument("--seed", type=int)

    sb = sub.add_parser("bench", help="run the published comparison suites")
    sb.add_argument("--suite", required=True, metavar="NAME",
                    help=f"one of {', '.join(bench_mod.SUITES)}")
    sb.add_argument("--out", metavar="DIR", default=".", help="directory for bench.csv")
    sb.add_argument("--max-n", type=int, metavar="N", help="skip problems with n > N")

    se = sub.add_parser("export", help="write model matrices in Matrix Market format")
    se.add_argument("--config", required=True, metavar="PATH")
    se.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    return p


def _prepare(cfg: RunConfig):
    model = build_problem(cfg.problem.to_spec())
    modal = modal_transform(model, cfg.effective_s)
    return model, modal


def _lower_bound(cfg: RunConfig, modal):
    """Lower bound from the config, or from the stability analysis when unset."""
    report = analyze_stability(modal)
    if report.classification is Stability.NEVER_STABLE:
        raise OptiDampError("system is unstable for every nu >= 0\n" + report.describe())
    if not cfg.d_auto:
        return np.broadcast_to(np.asarray(cfg.optimizer.d, dtype=float), (modal.k,)).copy(), report
    return report.recommended_d.copy(), report


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if args.stopping:
        cfg.optimizer = replace(cfg.optimizer, stopping=StoppingMode(args.stopping))
    model, modal = _prepare(cfg)
    d, report = _lower_bound(cfg, modal)
    log.info("%s: n=%d k=%d s=%d, %s", cfg.problem.name, modal.n, modal.k, modal.s,
             report.classification.value)
    nu0 = cfg.optimizer.nu0
    if nu0 is None:
        nu0 = np.maximum(np.ones(modal.k), d)
    opt = replace(cfg.optimizer, d=tuple(d), nu0=tuple(np.broadcast_to(nu0, (modal.k,))))
    obj = DampingObjective(modal, d=d, nu_base=cfg.nu_base)
    res = minimize(obj, opt)
    out = res.to_dict()
    out.update(problem=cfg.problem.name, n=modal.n, k=modal.k, s=modal.s,
               d=[float(x) for x in d], stability=report.classification.value,
               stopping=opt.stopping.kind, dense_fallbacks=obj.dense_fallbacks,
               seed=args.seed if args.seed is not None else cfg.seed)
    text = json.dumps(out, indent=2)
    report_path = os.path.join(args.out, "report.json") if args.out else cfg.output.report
    trace_path = args.trace or cfg.output.trace
    try:
        if report_path:
            _mkparent(report_path)
            with open(report_path, "w") as fh:
                fh.write(text + "\n")
        if trace_path:
            _mkparent(trace_path)
            write_trace(res.history, trace_path)
    except OSError as exc:
        raise OptiDampError(f"cannot write output: {exc}") from None
    print(text)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    _, modal = _prepare(cfg)
    d, _ = _lower_bound(cfg, modal)
    obj = DampingObjective(modal, d=d, nu_base=cfg.nu_base)
    nu_ref = cfg.optimizer.nu0 if cfg.optimizer.nu0 is not None else 1.0
    nu_ref = np.maximum(np.broadcast_to(np.asarray(nu_ref, dtype=float), (modal.k,)), d)
    seed = args.seed if args.seed is not None else cfg.seed
    results = run_checks(obj, nu_ref, seed=seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print("all checks passed" if ok else "verification FAILED")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_bench(args) -> int:
    if args.suite not in bench_mod.SUITES:
        raise _UsageError(f"--suite must be one of {', '.join(bench_mod.SUITES)}")
    rows = bench_mod.run_suite(args.suite, max_n=args.max_n)
    try:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"bench_{args.suite}.csv")
        bench_mod.write_csv(rows, path)
    except OSError as exc:
        raise OptiDampError(f"cannot write output: {exc}") from None
    print(bench_mod.format_table(rows))
    print(f"wrote {path}")
    bad = [r for r in rows if r["status"] == "ok" and not r["reconciled"]]
    return EXIT_CHECK_FAILED if bad else EXIT_OK


def cmd_export(args) -> int:
    cfg = load_config(args.config)
    model, modal = _prepare(cfg)
    out = args.out or cfg.output.export_dir
    if not out:
        raise _UsageError("no output directory: pass --out or set output.export_dir")
    print(export_model(model, modal, out))
    return EXIT_OK


class _UsageError(Exception):
    pass


def _mkparent(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


_COMMANDS = {"solve": cmd_solve, "check": cmd_check, "bench": cmd_bench, "export": cmd_export}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                         format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"optidamp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OptiDampError as exc:
        print(f"optidamp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
