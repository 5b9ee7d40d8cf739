"""Ground-state factorization of the Schroedinger operator with a singular potential.

With g_j = g~_j * omega^2 and Q_lambda = (lambda - V2) * omega^2,

    H_eps + lambda = (omega^eps)^-1 (A_eps + Q_lambda^eps) (omega^eps)^-1,

so the homogenization result for A_eps + Q_lambda^eps transfers to the
resolvent of H_eps sandwiched between multiplications by omega^eps.

Two constructions of the potentials are offered. The analytic path uses the
closed-form derivatives of omega. The discrete path defines V and V2 node by
node from the assembled link operators, V_i = -(L~ omega)_i / omega_i, which
makes the factorization above hold exactly on the grid: an x1 link of weight a
between nodes p and q becomes a link of weight a * omega_p * omega_q.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .discretize import (
    TorusGrid,
    assemble_links,
    cell_coordinates,
    reciprocal_integer,
)
from .effective import arithmetic_mean_x1, grid_profile
from .errors import ConfigurationError, HypothesisViolation, NumericalError
from .fields import CoefficientField, DerivedField, sampling_points
from .linsolve import NormEstimate, SolveOptions, operator_gap, smallest_eigenpair

PATHS = ("analytic", "discrete")


def _values(f, x1, x2):
    return np.asarray(f(x1, x2), dtype=float)


def _deriv(f, x1, x2, order):
    if isinstance(f, CoefficientField):
        return f.derivative(x1, x2, order)
    raise ConfigurationError(f"analytic derivatives need a closed-form field, got {f!r}")


def potentials_from_ground_state(g1_t, g2_t, omega, path: str = "analytic", grid: TorusGrid | None = None):
    """V = d1(g~1 d1 omega)/omega and V2 = d2(g~2 d2 omega)/omega.

    Analytic path: returns two vectorized fields. Discrete path: returns node
    arrays of shape ``grid.shape`` with (L~1 omega) + V omega = 0 exactly.
    """
    if path == "analytic":
        def V(x1, x2):
            w = _values(omega, x1, x2)
            num = (_deriv(g1_t, x1, x2, (1, 0)) * _deriv(omega, x1, x2, (1, 0))
                   + _values(g1_t, x1, x2) * _deriv(omega, x1, x2, (2, 0)))
            return num / w

        def V2(x1, x2):
            w = _values(omega, x1, x2)
            num = (_deriv(g2_t, x1, x2, (0, 1)) * _deriv(omega, x1, x2, (0, 1))
                   + _values(g2_t, x1, x2) * _deriv(omega, x1, x2, (0, 2)))
            return num / w

        indep2 = all(getattr(f, "x2_independent", False) for f in (g2_t, omega))
        return (DerivedField(V, "V"),
                DerivedField(V2, "V2", x2_independent=indep2,
                             x1_independent=False))
    if path != "discrete":
        raise ConfigurationError(f"unknown potential path {path!r}")
    if grid is None:
        raise ConfigurationError("the discrete path needs a grid")
    links = _cell_links(g1_t, g2_t, omega, grid, 1)
    return links.V1, links.V2


@dataclass
class _Links:
    """Node values and link weights of the oscillating factorization on a grid."""

    omega: np.ndarray
    wx: np.ndarray   # g~1 at x1 half-nodes / h1^2
    wy: np.ndarray   # g~2 at x2 half-nodes / h2^2
    V1: np.ndarray   # -(L~1 omega)/omega, already carrying the eps^-2 factor
    V2: np.ndarray   # -(L~2 omega)/omega


def _cell_links(g1_t, g2_t, omega, grid: TorusGrid, m: int) -> _Links:
    n1, n2 = grid.shape
    yh = cell_coordinates(n1, m, half=True)
    yn = cell_coordinates(n1, m, half=False)
    Yh, X2 = np.meshgrid(yh, grid.x2(), indexing="ij")
    Yn, X2n = np.meshgrid(yn, grid.x2(), indexing="ij")
    w = _values(omega, Yn, X2n).reshape(n1, n2)
    if np.any(~(w > 0)):
        i = np.unravel_index(np.argmin(w), w.shape)
        raise HypothesisViolation(f"omega = {w[i]:.6g} <= 0", field="omega",
                                  point=(float(Yn[i]), float(X2n[i])), value=float(w[i]))
    wx = _values(g1_t, Yh, X2).reshape(n1, n2) / grid.h1**2
    right = np.roll(w, -1, axis=0)
    left = np.roll(w, 1, axis=0)
    lap1 = wx * (w - right) + np.roll(wx, 1, axis=0) * (w - left)
    if grid.is_1d:
        wy = np.zeros_like(wx)
        lap2 = np.zeros_like(wx)
    else:
        Y, X2h = np.meshgrid(yn, grid.x2(half=True), indexing="ij")
        wy = _values(g2_t, Y, X2h).reshape(n1, n2) / grid.h2**2
        up = np.roll(w, -1, axis=1)
        down = np.roll(w, 1, axis=1)
        lap2 = wy * (w - up) + np.roll(wy, 1, axis=1) * (w - down)
    return _Links(w, wx, wy, -lap1 / w, -lap2 / w)


@dataclass(frozen=True)
class FactorizationData:
    g1_t: object
    g2_t: object
    omega: object
    V: object
    V2: object
    omega0: float
    omega1: float
    c4_t: float
    lambda_shift: np.ndarray | None = None


def make_factorization(g1_t, g2_t, omega, sampling: int = 64, norm_tol: float = 1e-10) -> FactorizationData:
    """Validate omega and derive the analytic potentials and their bounds."""
    period = getattr(omega, "period_x2", 1.0)
    X1, X2 = sampling_points(period, sampling)
    w = _values(omega, X1, X2)
    if np.any(~(w > 0)):
        i = np.unravel_index(np.argmin(w), w.shape)
        raise HypothesisViolation(f"omega = {w[i]:.6g} <= 0", field="omega",
                                  point=(float(X1[i]), float(X2[i])), value=float(w[i]))
    nodes = X2[0]
    sq = DerivedField(lambda a, b: _values(omega, a, b) ** 2, "omega^2",
                      x2_independent=getattr(omega, "x2_independent", False))
    norm = np.asarray(arithmetic_mean_x1(sq, nodes, tol=1e-13))
    worst = float(np.max(np.abs(norm - 1.0)))
    if worst > norm_tol:
        raise HypothesisViolation(f"omega is not normalized: |mean(omega^2) - 1| = {worst:.3g}",
                                  field="omega", value=worst)
    V, V2 = potentials_from_ground_state(g1_t, g2_t, omega, "analytic")
    c4 = float(np.max(np.abs(V2(X1, X2))))
    return FactorizationData(g1_t, g2_t, omega, V, V2, float(w.min()), float(w.max()), c4)


def default_lambda(data: FactorizationData) -> float:
    """Spectral parameter giving a positivity margin >= max(0.5, 0.5 omega1^2 c~4)."""
    return (1.5 * data.omega1**2 * data.c4_t + 0.5) / data.omega0**2


@dataclass(frozen=True)
class SchrodingerScenario:
    data: FactorizationData
    lam: float
    n1: int
    n2: int
    period_x2: float = 1.0
    path: str = "discrete"

    def __post_init__(self):
        if self.path not in PATHS:
            raise ConfigurationError(f"unknown potential path {self.path!r}")
        if self.margin <= 0:
            raise ConfigurationError(
                f"positivity margin lambda*omega0^2 - omega1^2*c4 = {self.margin:.6g} must be > 0"
            )

    @property
    def margin(self) -> float:
        d = self.data
        return self.lam * d.omega0**2 - d.omega1**2 * d.c4_t

    def g(self, j: int):
        gt = self.data.g1_t if j == 1 else self.data.g2_t
        om = self.data.omega
        return DerivedField(lambda a, b: _values(gt, a, b) * _values(om, a, b) ** 2, f"g{j}",
                            x2_independent=all(getattr(f, "x2_independent", False) for f in (gt, om)))

    def q_lambda(self):
        d, lam = self.data, self.lam
        return DerivedField(lambda a, b: (lam - d.V2(a, b)) * _values(d.omega, a, b) ** 2, "Q_lambda",
                            x2_independent=all(getattr(f, "x2_independent", False)
                                               for f in (d.g2_t, d.omega)))


@dataclass
class SchrodingerOperators:
    """H_eps + lambda, A_eps + Q_lambda^eps, the effective operator and omega^eps on one grid."""

    H: object
    A: object
    A0: object
    omega: np.ndarray
    grid: TorusGrid


def _discrete_effective(ax, ay, q, grid):
    """Discrete homogenized coefficients: harmonic x1-mean of x1 links, arithmetic of the rest."""
    n1, n2 = grid.shape
    g1 = 1.0 / np.mean(1.0 / ax, axis=0)
    g2 = np.mean(ay, axis=0)
    q0 = np.mean(q, axis=0)
    shape = (n1, n2)
    return assemble_links(grid, np.broadcast_to(g1, shape), np.broadcast_to(g2, shape),
                          np.broadcast_to(q0, shape))


def schrodinger_operators(scn: SchrodingerScenario, eps: float, grid: TorusGrid | None = None,
                          min_points_per_cell: int = 16) -> SchrodingerOperators:
    grid = grid or TorusGrid(scn.n1, scn.n2, scn.period_x2)
    m = reciprocal_integer(eps)
    if grid.n1 < min_points_per_cell * m:
        raise ConfigurationError(
            f"grid too coarse: n1 = {grid.n1} < {min_points_per_cell}/eps = {min_points_per_cell * m}"
        )
    d, lam = scn.data, scn.lam
    L = _cell_links(d.g1_t, d.g2_t, d.omega, grid, m)
    w = L.omega
    if scn.path == "discrete":
        H = assemble_links(grid, L.wx, L.wy, L.V1 + lam)
        ax = L.wx * w * np.roll(w, -1, axis=0)
        ay = L.wy * w * np.roll(w, -1, axis=1)
        q = (lam - L.V2) * w * w
        if np.any(q <= 0):
            raise ConfigurationError("discrete Q_lambda is not positive; increase lambda")
        A = assemble_links(grid, ax, ay, q)
        A0 = _discrete_effective(ax, ay, q, grid)
    else:
        n1, n2 = grid.shape
        Yn, X2n = np.meshgrid(cell_coordinates(n1, m, False), grid.x2(), indexing="ij")
        Yh, X2 = np.meshgrid(cell_coordinates(n1, m, True), grid.x2(), indexing="ij")
        Y, X2h = np.meshgrid(cell_coordinates(n1, m, False), grid.x2(half=True), indexing="ij")
        V = float(m) ** 2 * _values(d.V, Yn, X2n)
        H = assemble_links(grid, L.wx, L.wy, V + lam)
        g1, g2, ql = scn.g(1), scn.g(2), scn.q_lambda()
        A = assemble_links(grid, _values(g1, Yh, X2) / grid.h1**2, _values(g2, Y, X2h) / grid.h2**2,
                           _values(ql, Yn, X2n))
        prof = grid_profile(g1, g2, ql, n2, grid.period_x2)
        shape = (n1, n2)
        A0 = assemble_links(grid, np.broadcast_to(prof.g1_eff[0::2] / grid.h1**2, shape),
                            np.broadcast_to(prof.g2_eff[1::2] / grid.h2**2, shape),
                            np.broadcast_to(prof.q_eff[0::2], shape))
    return SchrodingerOperators(H, A, A0, w.reshape(-1), grid)


def schrodinger_resolvent_gap(scn: SchrodingerScenario, eps: float, opts: SolveOptions | None = None,
                              power_tol: float = 1e-4) -> NormEstimate:
    """||(H_eps + lambda)^-1 - omega^eps (A0 + Q0_lambda)^-1 omega^eps|| by power iteration."""
    opts = opts or SolveOptions()
    ops = schrodinger_operators(scn, eps)
    return operator_gap(ops.H, ops.A0, opts, power_tol, left=ops.omega, right=ops.omega)


def factorization_check(scn: SchrodingerScenario, eps: float, trials: int = 8, seed: int = 0,
                        grid: TorusGrid | None = None) -> float:
    """Max relative gap between <(H+lambda)u, u> and <(A+Q_lambda) u/omega, u/omega>."""
    ops = schrodinger_operators(scn, eps, grid)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = rng.standard_normal(ops.H.dimension)
        lhs = float(u @ (ops.H.matrix @ u))
        v = u / ops.omega
        rhs = float(v @ (ops.A.matrix @ v))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    return worst


def ground_state(g1_t, V, x2: float, n1: int = 256, opts: SolveOptions | None = None):
    """Bottom (lambda, omega) of the periodic slice operator D1 g~1 D1 + V.

    ``V`` may be a field or an array of node values. omega is returned
    positive and normalized to unit mean square (trapezoid rule).
    """
    if n1 < 64:
        raise ConfigurationError(f"ground state needs n1 >= 64, got {n1}")
    grid = TorusGrid(n1)
    x = grid.x1()
    xh = grid.x1(half=True)
    if callable(V):
        vals = _values(V, x, np.full_like(x, x2))
    else:
        vals = np.asarray(V, dtype=float).reshape(-1)
        if vals.size != n1:
            raise ConfigurationError(f"expected {n1} potential values, got {vals.size}")
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError("potential has non-finite node values")
    wx = _values(g1_t, xh, np.full_like(xh, x2)) / grid.h1**2
    op = assemble_links(grid, wx[:, None], None, vals[:, None])
    lam, v = smallest_eigenpair(op, opts)
    v = np.real(v)
    if v.sum() < 0:
        v = -v
    if np.min(v) <= 0:
        raise NumericalError("ground-state vector changes sign (eigen solver failure)",
                             achieved=float(np.min(v)))
    v = v / math.sqrt(np.mean(v * v))
    return float(lam), v


def discrete_potential_1d(g1_t, omega, x2: float, n1: int) -> np.ndarray:
    """Node values V_i = -(L~1 omega)_i / omega_i on the 1D slice grid at x2."""
    grid = TorusGrid(n1)
    x, xh = grid.x1(), grid.x1(half=True)
    w = _values(omega, x, np.full_like(x, x2))
    wx = _values(g1_t, xh, np.full_like(xh, x2)) / grid.h1**2
    lap = wx * (w - np.roll(w, -1)) + np.roll(wx, 1) * (w - np.roll(w, 1))
    return -lap / w
