"""Command-line interface: ``homstrip <command> ...``.

Exit codes: 0 pass, 1 acceptance failure, 2 configuration or hypothesis error.
"""
from __future__ import annotations

import argparse
import math
import sys
from fractions import Fraction

import numpy as np

from . import bloch
from .effective import effective_profile
from .errors import ConfigurationError, HomstripError, HypothesisViolation
from .scenario import load_scenario
from .sweep import (
    FORMATS,
    InsufficientDataError,
    bloch_csv,
    emit_report,
    load_report,
    run_sweep,
)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _write(text: str, out):
    if out:
        try:
            with open(out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ConfigurationError(f"cannot write {out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _scenario(args):
    scn = load_scenario(args.scenario)
    if args.seed is not None:
        scn = scn.replace(seed=args.seed)
    return scn


def cmd_validate(args) -> int:
    scn = _scenario(args)
    c = scn.constants()
    print(f"scenario {scn.name}: fingerprint {scn.fingerprint()}")
    for name in ("c0", "c1", "c2", "c3", "c4", "c5", "delta", "t0", "d0"):
        print(f"  {name} = {getattr(c, name):.12g}")
    return EXIT_PASS


def cmd_effective(args) -> int:
    scn = _scenario(args)
    nodes = np.arange(scn.n2) * scn.period_x2 / scn.n2
    prof = effective_profile(scn.g1, scn.g2, scn.Q, nodes, args.tol or 1e-12)
    lines = ["x2,g1_eff,g2_eff,q_eff"]
    lines += [",".join(repr(float(v)) for v in row) for row in prof.as_rows()]
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_PASS


def cmd_sweep(args) -> int:
    scn = _scenario(args)
    report = run_sweep(scn, args.kind, args.jobs, args.drop_largest_eps, args.tol)
    if args.out:
        emit_report(report, args.out, args.format)
    else:
        sys.stdout.write(FORMATS[args.format](report))
    if report.kind == "germ":
        summary = f"max eps*gap {report.metadata['max_eps_gap']:.4g}, variation {report.metadata['variation']:.3f}"
    else:
        summary = f"slope {report.slope:.4f} (fit residual {report.fit_residual:.2g})"
    print(f"{report.kind}: {summary}: {'PASS' if report.passed else 'FAIL'}", file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_FAIL


def _bloch_rows(scn, check):
    b = scn.bloch
    x2 = float(b["x2"])
    rows = []
    if check == "germ":
        rep = bloch.germ_check(scn.g1, x2, b["germ_k"], int(b["germ_n1"]))
        for k, r in zip(rep.k_values, rep.ratios):
            rows.append(("germ-ratio", k, None, x2, r, rep.germ_value, r > 0))
        rows.append(("germ-order", None, None, x2, rep.residual_order, 2.0,
                     abs(rep.residual_order - 2.0) <= 0.3))
    elif check == "gap":
        c = scn.constants()
        for k in np.linspace(-c.t0, c.t0, int(b["gap_points"])):
            ok, ev = bloch.gap_check(scn.g1, x2, float(k), c, int(b["germ_n1"]))
            rows.append(("gap", float(k), None, x2, float(ev[0]), c.delta, ok))
    elif check == "projection":
        vals = [bloch.projection_residual(scn.g1, x2, float(k), int(b["germ_n1"])) for k in b["germ_k"]]
        phi = [v[0] for v in vals]
        psi = [v[1] for v in vals]
        ok = _spread(phi) <= 3 and _spread(psi) <= 3
        for k, (p, q) in zip(b["germ_k"], vals):
            rows.append(("projection-phi", float(k), None, x2, p, None, ok))
            rows.append(("projection-psi", float(k), None, x2, q, None, ok))
    elif check == "decomp":
        eps = float(Fraction(str(b["decomp_eps"])))
        rep = bloch.fiber_decomposition_check(scn, eps, int(b["M"]), int(b["decomp_n1"]),
                                              int(b["decomp_n2"]), int(b["count"]))
        rows.append(("decomp", None, eps, None, max(rep.max_mismatch, rep.max_containment),
                     rep.tol, rep.passed))
    else:
        raise ConfigurationError(f"unknown bloch check {check!r}")
    return rows


def _spread(values) -> float:
    lo = min(abs(v) for v in values)
    hi = max(abs(v) for v in values)
    if hi == 0:
        return 1.0
    return math.inf if lo == 0 else hi / lo


def cmd_bloch(args) -> int:
    scn = _scenario(args)
    rows = _bloch_rows(scn, args.check)
    _write(bloch_csv(rows), args.out)
    return EXIT_PASS if all(r[6] for r in rows) else EXIT_FAIL


def cmd_report(args) -> int:
    report = load_report(args.report)
    text = FORMATS[args.format](report)
    _write(text, args.out)
    return EXIT_PASS if report.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--tol", type=float, default=None, help="solver / quadrature tolerance")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweep rows")
    common.add_argument("--drop-largest-eps", action="store_true",
                        help="exclude the largest eps from the slope fit")
    common.add_argument("--out", default=None, help="write output here instead of stdout")

    p = argparse.ArgumentParser(prog="homstrip", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", parents=[common], help="check hypotheses and print constants")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("effective", parents=[common], help="effective coefficient profile as CSV")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_effective)

    s = sub.add_parser("sweep", parents=[common], help="resolvent-gap sweep over eps")
    s.add_argument("--kind", choices=["theorem1", "theorem18", "germ"], default="theorem1")
    s.add_argument("--format", choices=sorted(FORMATS), default="csv")
    s.add_argument("scenario")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("bloch", parents=[common], help="Floquet-Bloch diagnostics")
    s.add_argument("check", choices=["germ", "gap", "projection", "decomp"])
    s.add_argument("scenario")
    s.set_defaults(func=cmd_bloch)

    s = sub.add_parser("report", parents=[common], help="re-emit a JSON sweep report")
    s.add_argument("--format", choices=sorted(FORMATS), default="csv")
    s.add_argument("report")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientDataError as exc:
        print(f"acceptance failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HomstripError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
