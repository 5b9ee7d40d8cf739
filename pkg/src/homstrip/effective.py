"""Effective (x1-averaged) coefficients of the homogenized operator.

``g1_eff`` is the harmonic x1-mean of g1, ``g2_eff`` and ``q_eff`` are the
arithmetic x1-means of g2 and Q. Means are computed by a breadth-first adaptive
Simpson rule that is vectorized over a batch of x2 lines at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError

DEFAULT_TOL = 1e-12
MAX_EVALS_PER_LINE = 200_000


@dataclass(frozen=True)
class EffectiveProfile:
    x2_nodes: np.ndarray
    g1_eff: np.ndarray
    g2_eff: np.ndarray
    q_eff: np.ndarray
    quadrature_tol: float = DEFAULT_TOL

    def __post_init__(self):
        for name in ("x2_nodes", "g1_eff", "g2_eff", "q_eff"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.x2_nodes.size
        if not (self.g1_eff.size == self.g2_eff.size == self.q_eff.size == n):
            raise ConfigurationError("profile arrays must align with x2_nodes")

    def as_rows(self):
        return list(zip(self.x2_nodes.tolist(), self.g1_eff.tolist(),
                        self.g2_eff.tolist(), self.q_eff.tolist()))


def _pieces(f):
    """Sub-intervals of [0, 1] between declared jumps, nudged one ulp inward."""
    cuts = sorted({0.0, 1.0, *(float(j) % 1.0 for j in getattr(f, "jumps", ()))})
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            out.append((np.nextafter(a, b), np.nextafter(b, a)) if getattr(f, "jumps", ()) else (a, b))
    return out


def _simpson_batch(fn, nlines, a, b, tol, max_evals):
    """Adaptive Simpson of fn(y, i) over [a, b] for every line i < nlines.

    fn returns one row per integrand component, all sharing the refinement:
    an interval is split until every component passes its own test. ``tol``
    (components x lines) holds absolute tolerances, spread over [a, b] in
    proportion to interval width. Refinement is breadth-first, so all active
    intervals share one width. Each accepted interval carries the
    Richardson-corrected value. ``max_evals`` is an average budget per line.
    """
    n0 = 8
    h = (b - a) / n0
    lo = np.tile(a + h * np.arange(n0), nlines)
    line = np.repeat(np.arange(nlines), n0)
    flo, fmid, fhi = fn(lo, line), fn(lo + 0.5 * h, line), fn(lo + h, line)
    allowed = 15.0 * np.asarray(tol, dtype=float) / (b - a)
    total = np.zeros((flo.shape[0], nlines))
    budget = max_evals * nlines - 3 * lo.size
    floor = 64.0 * np.finfo(float).eps * max(1.0, abs(b))
    while line.size:
        fl, fr = fn(lo + 0.25 * h, line), fn(lo + 0.75 * h, line)
        budget -= 2 * line.size
        whole = h / 6.0 * (flo + 4.0 * fmid + fhi)
        halves = h / 12.0 * (flo + 4.0 * (fl + fr) + 2.0 * fmid + fhi)
        diff = halves - whole
        if h <= floor:
            # intervals shrunk to rounding level cannot improve further
            ok = np.ones(line.size, dtype=bool)
        else:
            ok = np.all(np.abs(diff) <= allowed[:, line] * h, axis=0)
        bad = ~ok
        if ok.any():
            value = (halves + diff / 15.0)[:, ok]
            for c in range(total.shape[0]):
                total[c] += np.bincount(line[ok], value[c], minlength=nlines)
            if not bad.any():
                break
            lo, line, flo, fmid, fhi = lo[bad], line[bad], flo[:, bad], fmid[:, bad], fhi[:, bad]
            fl, fr = fl[:, bad], fr[:, bad]
        if budget < 0:
            raise NumericalError(
                f"adaptive quadrature exceeded {max_evals} evaluations per line",
                achieved=float(np.max(np.abs(diff[:, bad]))),
            )
        h *= 0.5
        line = np.tile(line, 2)
        lo = np.concatenate([lo, lo + h])
        flo, fhi = np.concatenate([flo, fmid], axis=1), np.concatenate([fmid, fhi], axis=1)
        fmid = np.concatenate([fl, fr], axis=1)
    return total


def _periodic_simpson(fn, nlines, tol, max_evals):
    """Globally adaptive composite Simpson over one full x1-period for every line.

    For a smooth periodic integrand composite Simpson converges geometrically
    in the panel count, so panels are doubled per line until two successive
    composite values agree to ``tol`` (components x lines). Only the new
    midpoints are evaluated at each doubling: the trapezoid sums satisfy
    T_2n = (T_n + M_n) / 2 and S_2n = (4 T_2n - T_n) / 3.
    """
    n = 32
    active = np.arange(nlines)
    grid = np.arange(n) / n
    trap = fn(np.tile(grid, nlines), np.repeat(active, n)).reshape(-1, nlines, n).mean(axis=2)
    simpson = np.full_like(trap, np.nan)
    total = np.zeros_like(trap)
    while active.size:
        mids = (np.arange(n) + 0.5) / n
        m = fn(np.tile(mids, active.size), np.repeat(active, n)).reshape(-1, active.size, n).mean(axis=2)
        finer = 0.5 * (trap + m)
        new = (4.0 * finer - trap) / 3.0
        n *= 2
        change = np.abs(new - simpson)
        done = np.all(change <= tol[:, active], axis=0) & (n >= 64)
        total[:, active[done]] = new[:, done]
        keep = ~done
        if keep.any() and 2 * n > max_evals:
            raise NumericalError(
                f"adaptive quadrature exceeded {max_evals} evaluations per line",
                achieved=float(np.max(change[:, keep])),
            )
        active, trap, simpson = active[keep], finer[:, keep], new[:, keep]
    return total


def _line_integrals(f, x2, tol, kinds, max_evals):
    """Rows of x1-integrals over [0, 1], one per kind, for each x2.

    Kind "harmonic" integrates 1/f, kind "arithmetic" integrates f.
    """
    if hasattr(f, "line_evaluator"):
        evaluate = f.line_evaluator(x2)
    else:
        def evaluate(y, idx):
            return f(y, x2[idx])

    def fn(y, idx):
        v = np.asarray(evaluate(y, idx), dtype=float)
        return np.stack([1.0 / v if k == "harmonic" else v for k in kinds])

    pieces = _pieces(f)
    if not getattr(f, "jumps", ()):
        tol_lines = np.broadcast_to(np.asarray(tol, dtype=float), (len(kinds), x2.size))
        return _periodic_simpson(fn, x2.size, tol_lines, max_evals)
    tol_lines = np.broadcast_to(np.asarray(tol, dtype=float), (len(kinds), x2.size)) / len(pieces)
    return sum(_simpson_batch(fn, x2.size, a, b, tol_lines, max_evals) for a, b in pieces)


def _as_nodes(x2):
    arr = np.atleast_1d(np.asarray(x2, dtype=float))
    if arr.ndim != 1:
        raise ConfigurationError("x2 must be a scalar or a 1D sequence")
    return arr


def _tabulated(f):
    return getattr(f, "family", None) == "tabulated-1d-profile"


def _means(f, x2, tol, kinds, max_evals=MAX_EVALS_PER_LINE):
    """Rows of x1-means of f, one row per kind ("harmonic" or "arithmetic")."""
    if not tol > 0:
        raise ConfigurationError(f"quadrature tolerance must be positive, got {tol}")
    nodes = _as_nodes(x2)
    if getattr(f, "x1_independent", False):
        vals = np.broadcast_to(np.asarray(f(np.zeros_like(nodes), nodes), dtype=float), nodes.shape)
        return np.stack([vals.astype(float) for _ in kinds])
    if _tabulated(f):
        samples = f.scale * np.asarray(f.params)
        means = {"harmonic": 1.0 / np.mean(1.0 / samples), "arithmetic": np.mean(samples)}
        return np.stack([np.full(nodes.shape, float(means[k])) for k in kinds])
    if getattr(f, "x2_independent", False) and nodes.size > 1:
        first = _means(f, nodes[:1], tol, kinds, max_evals)
        return np.repeat(first, nodes.size, axis=1)
    # the tolerance on the reciprocal integral scales with the inverse square
    # of the harmonic mean, estimated from a coarse probe
    probe = np.asarray(f(np.linspace(0, 1, 33)[:-1, None], nodes[None, :]), dtype=float)
    if "harmonic" in kinds and np.any(probe <= 0):
        raise ConfigurationError("harmonic mean requires a strictly positive field")
    tols = np.stack([tol * np.mean(1.0 / probe, axis=0) ** 2 if k == "harmonic"
                     else np.full(nodes.shape, tol) for k in kinds])
    rows = _line_integrals(f, nodes, tols, kinds, max_evals)
    return np.stack([1.0 / r if k == "harmonic" else r for k, r in zip(kinds, rows)])


def _scalar_or_array(out, x2):
    return float(out[0]) if np.ndim(x2) == 0 else out


def harmonic_mean_x1(g, x2, tol: float = DEFAULT_TOL):
    """(integral over [0,1] of 1/g(x1, x2) dx1)^-1; scalar in, scalar out."""
    return _scalar_or_array(_means(g, x2, tol, ("harmonic",))[0], x2)


def arithmetic_mean_x1(f, x2, tol: float = DEFAULT_TOL):
    """Integral over [0,1] of f(x1, x2) dx1; scalar in, scalar out."""
    return _scalar_or_array(_means(f, x2, tol, ("arithmetic",))[0], x2)


def x1_means(f, x2, tol: float = DEFAULT_TOL):
    """(harmonic, arithmetic) x1-means of one field from a single shared quadrature."""
    h, a = _means(f, x2, tol, ("harmonic", "arithmetic"))
    return _scalar_or_array(h, x2), _scalar_or_array(a, x2)


def effective_profile(g1, g2, Q, x2_nodes, tol: float = DEFAULT_TOL) -> EffectiveProfile:
    nodes = _as_nodes(x2_nodes)
    if nodes.size > 1 and np.any(np.diff(nodes) <= 0):
        raise ConfigurationError("x2 nodes must be strictly increasing")
    period = getattr(g1, "period_x2", 1.0)
    if nodes.size and (nodes[0] < 0 or nodes[-1] >= period):
        raise ConfigurationError(f"x2 nodes must lie in [0, {period})")
    return EffectiveProfile(
        x2_nodes=nodes,
        g1_eff=harmonic_mean_x1(g1, nodes, tol),
        g2_eff=arithmetic_mean_x1(g2, nodes, tol),
        q_eff=arithmetic_mean_x1(Q, nodes, tol),
        quadrature_tol=tol,
    )


def grid_profile(g1, g2, Q, n2: int, period_x2: float = 1.0, tol: float = DEFAULT_TOL) -> EffectiveProfile:
    """Profile on the 2*n2 half-step lines of an x2 grid.

    Even entries sit on grid lines (used for g1_eff and q_eff), odd entries on
    the midlines between them (used for g2_eff by the x2 flux).
    """
    nodes = np.arange(2 * n2) * period_x2 / (2 * n2)
    return effective_profile(g1, g2, Q, nodes, tol)
