"""Command-line front end.

Four subcommands: solve one case with one method, compare the methods
side by side, bench repeated solves, and dump a case in canonical form.
Exit codes: 0 success, 1 solver failure or non-convergence, 2 bad input
(unknown case, parse failure, invalid flag values).

Tolerance and iteration flags default to the owning module's constants;
method profiles (stage toggles, stage-switch tolerances) come from the
pipeline module and individual flags override just the named quantity.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import statistics
import sys

from . import _kernels, bipr, caseio, contraction, dcg, pipeline, trace
from .errors import (CaseNotFoundError, CaseParseError, GridGraphError,
                     ModelError)

_INPUT_ERRORS = (CaseNotFoundError, CaseParseError, ModelError)


def _add_common(p: argparse.ArgumentParser, methods: bool = True) -> None:
    p.add_argument("--case", required=True,
                   help="bundled case name (%s) or a MATPOWER file path"
                   % ", ".join(caseio.BUNDLED_CASES))
    if methods:
        p.add_argument("--method", choices=pipeline.METHODS, default="hybrid",
                       help="solution method (default: hybrid)")
        p.add_argument("--damping", type=float, default=None, metavar="R",
                       help=f"damped-Jacobi factor (default {bipr.D_DEFAULT})")
        p.add_argument("--tol-vr", type=float, default=None, metavar="R",
                       help="voltage-change tolerance, real part "
                            f"(default {bipr.TOL_V_DEFAULT}; hybrid stage "
                            f"switch {pipeline.STAGE_SWITCH_TOL})")
        p.add_argument("--tol-va", type=float, default=None, metavar="R",
                       help="voltage-change tolerance, imaginary part "
                            "(defaults as --tol-vr)")
        p.add_argument("--tol-p", type=float, default=None, metavar="R",
                       help="active mismatch tolerance "
                            f"(default {dcg.FD_TOL_DEFAULT})")
        p.add_argument("--tol-q", type=float, default=None, metavar="R",
                       help="reactive mismatch tolerance "
                            f"(default {dcg.FD_TOL_DEFAULT})")
        p.add_argument("--z-threshold", type=float, default=None, metavar="R",
                       help="contraction impedance threshold (default "
                            f"{contraction.Z_THRESHOLD_DEFAULT})")
        p.add_argument("--max-iters", type=int, default=None, metavar="N",
                       help="iteration budget: warm-start sweeps (default "
                            f"{bipr.MAX_ITERS_DEFAULT}) and outer corrections "
                            f"(default {dcg.FD_MAX_OUTER_DEFAULT})")
    p.add_argument("--deterministic", action="store_true",
                   help="zero all wall-time fields in emitted files")
    p.add_argument("--threads", type=int, default=None, metavar="N",
                   help="cap compiled-kernel threads (results never depend "
                        "on this)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridgraph",
        description="Graph-based AC power-flow solver toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one case with one method")
    _add_common(p)
    p.add_argument("--trace", metavar="PATH", default=None,
                   help="write the iteration trace CSV here")
    p.add_argument("--report", metavar="PATH", default=None,
                   help="write the JSON report here")

    p = sub.add_parser("compare", help="run every method and tabulate")
    _add_common(p, methods=False)
    p.add_argument("--report", metavar="PATH", default=None,
                   help="write the comparison table CSV here")

    p = sub.add_parser("bench", help="repeat a solve and summarize timing")
    _add_common(p)
    p.add_argument("--repeat", type=int, default=5, metavar="N",
                   help="number of repetitions (default 5)")

    p = sub.add_parser("dump", help="parse a case and print it canonically")
    p.add_argument("--case", required=True,
                   help="bundled case name or MATPOWER file path")
    p.add_argument("--report", metavar="PATH", default=None,
                   help="write the canonical case text here instead")
    return parser


def _config_from(args) -> pipeline.HybridConfig:
    cfg = pipeline.method_config(args.method)
    b, f = cfg.bipr, cfg.fd
    if args.damping is not None or args.tol_vr is not None \
            or args.tol_va is not None or args.max_iters is not None:
        b = dataclasses.replace(
            b,
            d=args.damping if args.damping is not None else b.d,
            tol_vr=args.tol_vr if args.tol_vr is not None else b.tol_vr,
            tol_va=args.tol_va if args.tol_va is not None else b.tol_va,
            max_iters=args.max_iters if args.max_iters is not None
            else b.max_iters)
    if args.tol_p is not None or args.tol_q is not None \
            or args.max_iters is not None:
        f = dataclasses.replace(
            f,
            tol_p=args.tol_p if args.tol_p is not None else f.tol_p,
            tol_q=args.tol_q if args.tol_q is not None else f.tol_q,
            max_outer=args.max_iters if args.max_iters is not None
            else f.max_outer)
    return dataclasses.replace(
        cfg, bipr=b, fd=f,
        z_threshold=args.z_threshold if args.z_threshold is not None
        else cfg.z_threshold)


def _deterministic_report(report: pipeline.SolveReport) -> pipeline.SolveReport:
    return dataclasses.replace(
        report,
        trace=trace.zero_millis(report.trace),
        stage_millis={k: 0.0 for k in report.stage_millis},
        total_millis=0.0)


def _state_checksum(report: pipeline.SolveReport) -> str:
    h = hashlib.sha256()
    h.update(repr(report.state.ids).encode())
    h.update(report.state.v.tobytes())
    return h.hexdigest()[:16]


def _run_solve(args) -> int:
    case = caseio.load_case(args.case)
    if args.method == "nr":
        report = pipeline.solve_method(case, "nr")
    else:
        report = pipeline.hybrid_solve(case, _config_from(args))
    shown = _deterministic_report(report) if args.deterministic else report
    sys.stdout.write(shown.to_text())
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(shown.to_json())
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.trace_csv(shown.trace))
    return 0 if report.converged else 1


def _run_compare(args) -> int:
    case = caseio.load_case(args.case)
    comp = pipeline.compare_methods(case)
    if args.deterministic:
        comp = pipeline.MethodComparison(
            case_name=comp.case_name,
            rows=[dataclasses.replace(r, time_ms=0.0 if r.time_ms is not None
                                      else None) for r in comp.rows])
    sys.stdout.write(comp.to_text())
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(comp.to_csv())
    return 0


def _run_bench(args) -> int:
    if args.repeat < 1:
        raise ModelError(f"--repeat must be >= 1, got {args.repeat}")
    case = caseio.load_case(args.case)
    reports = []
    for _ in range(args.repeat):
        if args.method == "nr":
            reports.append(pipeline.solve_method(case, "nr"))
        else:
            reports.append(pipeline.hybrid_solve(case, _config_from(args)))
    stages = list(reports[0].stage_millis)
    sys.stdout.write(f"case: {case.name}  method: {args.method}  "
                     f"repeats: {args.repeat}\n")
    sys.stdout.write(f"{'stage':<10} {'median_ms':>10} {'min_ms':>10}\n")
    for stage in stages:
        walls = [r.stage_millis[stage] for r in reports]
        sys.stdout.write(f"{stage:<10} {statistics.median(walls):>10.2f} "
                         f"{min(walls):>10.2f}\n")
    totals = [r.total_millis for r in reports]
    sys.stdout.write(f"{'total':<10} {statistics.median(totals):>10.2f} "
                     f"{min(totals):>10.2f}\n")
    if args.deterministic:
        for k, r in enumerate(reports, start=1):
            sys.stdout.write(f"checksum {k}: {_state_checksum(r)}\n")
    return 0 if all(r.converged for r in reports) else 1


def _run_dump(args) -> int:
    case = caseio.load_case(args.case)
    text = caseio.serialize_case(case)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "threads", None) is not None:
            _kernels.set_threads(args.threads)
        if args.command == "solve":
            return _run_solve(args)
        if args.command == "compare":
            return _run_compare(args)
        if args.command == "bench":
            return _run_bench(args)
        return _run_dump(args)
    except _INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except GridGraphError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
