"""Epsilon sweeps, log-log slope fits and report emission."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bloch import germ_resolvent_gap
from .errors import ConfigurationError, NumericalError
from .fields import CoefficientField
from .linsolve import resolvent_gap
from .schrodinger import SchrodingerScenario, default_lambda, make_factorization, schrodinger_resolvent_gap

KINDS = ("theorem1", "theorem18", "germ")
CSV_COLUMNS = ["eps", "gap", "iterations", "converged", "wall_ms"]
SLOPE_THRESHOLD = 0.9
GERM_VARIATION_LIMIT = 2.0


class InsufficientDataError(NumericalError):
    """Fewer than three converged rows are available for a slope fit."""


@dataclass
class SweepRow:
    eps: float
    gap: float
    iterations: int
    converged: bool
    wall_ms: float = 0.0
    detail: dict = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    kind: str
    rows: list
    slope: float
    intercept: float
    fit_residual: float
    fingerprint: str
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rows"] = [asdict(r) for r in self.rows]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConvergenceReport":
        rows = [SweepRow(**r) for r in d["rows"]]
        return cls(d["kind"], rows, d["slope"], d["intercept"], d["fit_residual"],
                   d["fingerprint"], d.get("metadata", {}))

    @property
    def passed(self) -> bool:
        if self.kind == "germ":
            return bool(self.metadata.get("variation", math.inf) < GERM_VARIATION_LIMIT)
        gaps = [r.gap for r in self.rows if r.converged]
        decreasing = all(a > b for a, b in zip(gaps, gaps[1:]))
        return bool(decreasing and self.slope >= SLOPE_THRESHOLD)


def fit_loglog(eps, gap):
    """Least-squares line through (log eps, log gap): (slope, intercept, rms residual)."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.log(np.asarray(gap, dtype=float))
    if x.size < 3:
        raise InsufficientDataError(f"need >= 3 converged rows for a slope fit, have {x.size}")
    (slope, intercept), res, *_ = np.linalg.lstsq(np.stack([x, np.ones_like(x)], axis=1), y, rcond=None)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(math.sqrt(np.mean(resid**2)))


def fit_rows(rows, drop_largest_eps: bool = False):
    use = [r for r in rows if r.converged and r.gap > 0]
    if drop_largest_eps and use:
        top = max(r.eps for r in use)
        use = [r for r in use if r.eps != top]
    return fit_loglog([r.eps for r in use], [r.gap for r in use])


def schrodinger_scenario(scn):
    """Schrodinger data built from a scenario's [schrodinger] section and its g1, g2 fields."""
    cfg = scn.schrodinger
    if cfg is None:
        raise ConfigurationError("scenario has no [schrodinger] section")
    omega = CoefficientField(cfg["omega_family"], tuple(cfg["omega_params"]), scn.period_x2)
    data = make_factorization(scn.g1, scn.g2, omega)
    lam = default_lambda(data) if cfg["lambda"] in ("auto", None) else float(cfg["lambda"])
    return SchrodingerScenario(data, lam, scn.n1, scn.n2, scn.period_x2, cfg["path"])


def _row(task):
    """One sweep row; a top-level function so worker processes can run it."""
    scn, kind, index, tol = task
    eps = float(scn.eps_list[index])
    opts = scn.solve_options(index, tol)
    power_tol = float(scn.solver["power_tol"])
    t = time.perf_counter()
    if kind == "theorem1":
        est = resolvent_gap(scn, eps, opts, power_tol)
        detail = dict(est.stats)
        gap, its, conv = est.value, est.iterations, est.converged
    elif kind == "theorem18":
        est = schrodinger_resolvent_gap(schrodinger_scenario(scn), eps, opts, power_tol)
        detail = dict(est.stats)
        gap, its, conv = est.value, est.iterations, est.converged
    else:
        b = scn.bloch
        gaps, its, conv = [], 0, True
        for k in b["k"]:
            est = germ_resolvent_gap(scn, eps, float(k), int(b["fiber_n1"]), int(b["fiber_n2"]),
                                     opts, power_tol)
            gaps.append(est.value)
            its += est.iterations
            conv &= est.converged
        gap = max(gaps)
        detail = {"k": list(b["k"]), "gaps": gaps, "eps_gap": [eps * g for g in gaps]}
    wall = (time.perf_counter() - t) * 1e3
    return SweepRow(eps, float(gap), int(its), bool(conv), wall, detail)


def run_sweep(scn, kind: str = "theorem1", jobs: int = 1, drop_largest_eps: bool = False,
              tol: float | None = None) -> ConvergenceReport:
    if kind not in KINDS:
        raise ConfigurationError(f"unknown sweep kind {kind!r}")
    tasks = [(scn, kind, i, tol) for i in range(len(scn.eps_list))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_row, tasks))
    else:
        rows = [_row(t) for t in tasks]
    meta = {
        "scenario": scn.name,
        "seed": scn.seed,
        "rel_tol": tol if tol is not None else scn.solver["rel_tol"],
        "preconditioner": scn.solver["preconditioner"],
        "grid": [scn.n1, scn.n2],
        "eps": [str(Fraction(e)) for e in scn.eps_list],
        "drop_largest_eps": drop_largest_eps,
    }
    if kind == "germ":
        per_eps = [r.eps * r.gap for r in rows]
        meta["max_eps_gap"] = max(per_eps)
        meta["variation"] = max(per_eps) / min(per_eps)
        slope = intercept = resid = math.nan
    else:
        slope, intercept, resid = fit_rows(rows, drop_largest_eps)
    return ConvergenceReport(kind, rows, slope, intercept, resid, scn.fingerprint(), meta)


# -- emission ---------------------------------------------------------------


def report_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([repr(float(r.eps)), repr(float(r.gap)), r.iterations,
                    "true" if r.converged else "false", f"{r.wall_ms:.1f}"])
    return buf.getvalue()


def report_json(report: ConvergenceReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=True)


def report_svg(report: ConvergenceReport, width: int = 480, height: int = 360) -> str:
    """Log-log scatter of converged rows with the fitted line."""
    pts = [(r.eps, r.gap) for r in report.rows if r.converged and r.gap > 0]
    pad = 48
    if pts:
        lx = np.log10([p[0] for p in pts])
        ly = np.log10([p[1] for p in pts])
    else:
        lx = ly = np.array([0.0])
    x0, x1 = lx.min() - 0.1, lx.max() + 0.1
    fit_ok = math.isfinite(report.slope)
    if fit_ok:
        fy = (report.slope * np.array([x0, x1]) * math.log(10) + report.intercept) / math.log(10)
        ylo, yhi = min(ly.min(), fy.min()) - 0.1, max(ly.max(), fy.max()) + 0.1
    else:
        ylo, yhi = ly.min() - 0.1, ly.max() + 0.1

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - ylo) / (yhi - ylo) * (height - 2 * pad)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect class="frame" x="{pad}" y="{pad}" width="{width - 2 * pad}" '
        f'height="{height - 2 * pad}" fill="none" stroke="#888"/>',
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="12">log10 eps</text>',
        f'<text x="14" y="{height / 2:.0f}" font-size="12" transform="rotate(-90 14 {height / 2:.0f})" '
        f'text-anchor="middle">log10 gap</text>',
    ]
    if fit_ok:
        out.append(
            f'<line class="fit-line" x1="{sx(x0):.2f}" y1="{sy(fy[0]):.2f}" '
            f'x2="{sx(x1):.2f}" y2="{sy(fy[1]):.2f}" stroke="#c33" stroke-width="1.5"/>'
        )
        out.append(f'<text x="{pad + 6}" y="{pad + 16}" font-size="12">slope {report.slope:.3f}</text>')
    for a, b in zip(lx if pts else [], ly if pts else []):
        out.append(f'<circle class="marker" cx="{sx(a):.2f}" cy="{sy(b):.2f}" r="4" fill="#236"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


FORMATS = {"csv": report_csv, "json": report_json, "svg": report_svg}


def emit_report(report: ConvergenceReport, path, fmt: str = "csv") -> None:
    if fmt not in FORMATS:
        raise ConfigurationError(f"unknown report format {fmt!r}")
    text = FORMATS[fmt](report)
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise ConfigurationError(f"cannot write report to {path}: {exc}") from exc


def load_report(path) -> ConvergenceReport:
    try:
        return ConvergenceReport.from_dict(json.loads(Path(path).read_text()))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"cannot read report {path}: {exc}") from exc


def bloch_csv(rows) -> str:
    """Rows of (check, k, eps, x2, value, bound, pass) as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "k", "eps", "x2", "value", "bound", "pass"])
    for r in rows:
        w.writerow([r[0]] + ["" if v is None else (repr(float(v)) if isinstance(v, float) else v)
                             for v in r[1:6]] + ["true" if r[6] else "false"])
    return buf.getvalue()


__all__ = [
    "ConvergenceReport", "SweepRow", "InsufficientDataError", "fit_loglog",
    "fit_rows", "run_sweep", "emit_report", "load_report", "report_csv", "report_json",
    "report_svg", "bloch_csv", "schrodinger_scenario",
]
