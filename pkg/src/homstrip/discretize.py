"""Conservative five-point discretizations on periodic grids.

Every operator is stored twice: as explicit link weights (so that the
divergence part can be applied in flux form) and as a CSR matrix built from
those same weights. An x1 link from node p to its right neighbour q with
weight w contributes ``-w * phase`` at (p, q), ``-w * conj(phase)`` at (q, p)
and ``w`` to both diagonals, so the matrix is Hermitian bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, HypothesisViolation


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid; ``n2=None`` gives a 1D grid in x1 only."""

    n1: int
    n2: int | None = None
    period_x2: float = 1.0
    period_x1: float = 1.0

    def __post_init__(self):
        if int(self.n1) != self.n1 or self.n1 < 4:
            raise ConfigurationError(f"n1 must be an integer >= 4, got {self.n1}")
        if self.n2 is not None and (int(self.n2) != self.n2 or self.n2 < 4):
            raise ConfigurationError(f"n2 must be an integer >= 4, got {self.n2}")
        if not self.period_x2 > 0 or not self.period_x1 > 0:
            raise ConfigurationError("grid periods must be positive")

    @property
    def is_1d(self) -> bool:
        return self.n2 is None

    @property
    def shape(self) -> tuple:
        return (self.n1, 1 if self.n2 is None else self.n2)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def h1(self) -> float:
        return self.period_x1 / self.n1

    @property
    def h2(self) -> float:
        return 1.0 if self.n2 is None else self.period_x2 / self.n2

    @property
    def weight(self) -> float:
        return self.h1 * self.h2

    def x1(self, half: bool = False) -> np.ndarray:
        i = np.arange(self.n1) * 2 + (1 if half else 0)
        return i * self.period_x1 / (2 * self.n1)

    def x2(self, half: bool = False) -> np.ndarray:
        if self.n2 is None:
            return np.zeros(1)
        j = np.arange(self.n2) * 2 + (1 if half else 0)
        return j * self.period_x2 / (2 * self.n2)

    def inner(self, u, v) -> complex:
        """Weighted discrete L2 inner product, conjugate-linear in v."""
        return self.weight * np.vdot(v, u)

    def norm(self, u) -> float:
        return math.sqrt(self.weight) * float(np.linalg.norm(u))


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Assembled operator: CSR matrix plus the link data it was built from."""

    matrix: sp.csr_matrix
    grid: TorusGrid
    scalar_kind: str
    wx: np.ndarray | None = None
    wy: np.ndarray | None = None
    zero: np.ndarray | None = None
    phase: complex = 1.0

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def apply(self, u):
        return self.matrix @ u

    __matmul__ = apply

    def divgrad_apply(self, u):
        """Flux-form product of the first-order (link) part; constants map to 0 exactly."""
        if self.wx is None:
            raise ConfigurationError("operator carries no link data")
        U = np.asarray(u).reshape(self.grid.shape)
        ph = self.phase
        out = self.wx * (U - ph * np.roll(U, -1, axis=0))
        left = np.roll(self.wx, 1, axis=0)
        out = out + left * (U - np.conj(ph) * np.roll(U, 1, axis=0))
        if not self.grid.is_1d:
            out = out + self.wy * (U - np.roll(U, -1, axis=1))
            out = out + np.roll(self.wy, 1, axis=1) * (U - np.roll(U, 1, axis=1))
        return out.reshape(-1)

    def inner(self, u, v):
        return self.grid.inner(u, v)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermitian_residual(self) -> float:
        d = self.matrix - self.matrix.conj().T
        return float(abs(d).max()) if d.nnz else 0.0


def assemble_links(grid: TorusGrid, wx, wy=None, zero=None, phase: complex = 1.0) -> SparseOperator:
    """CSR matrix from x1-link weights ``wx``, x2-link weights ``wy`` and a diagonal term."""
    n1, n2 = grid.shape
    wx = np.asarray(wx, dtype=float).reshape(n1, n2)
    wy = np.zeros((n1, n2)) if wy is None or grid.is_1d else np.asarray(wy, dtype=float).reshape(n1, n2)
    zero = np.zeros((n1, n2)) if zero is None else np.broadcast_to(np.asarray(zero, dtype=float), (n1, n2))
    complex_kind = np.iscomplexobj(phase) and complex(phase).imag != 0.0
    dtype = complex if complex_kind else float
    ph = complex(phase) if complex_kind else float(np.real(phase))

    idx = np.arange(n1 * n2).reshape(n1, n2)
    right = np.roll(idx, -1, axis=0)
    diag = zero + wx + np.roll(wx, 1, axis=0)
    rows = [idx.ravel(), right.ravel()]
    cols = [right.ravel(), idx.ravel()]
    vals = [(-wx * ph).ravel().astype(dtype), (-wx * np.conj(ph)).ravel().astype(dtype)]
    if not grid.is_1d:
        up = np.roll(idx, -1, axis=1)
        diag = diag + wy + np.roll(wy, 1, axis=1)
        rows += [idx.ravel(), up.ravel()]
        cols += [up.ravel(), idx.ravel()]
        vals += [(-wy).ravel().astype(dtype)] * 2
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel().astype(dtype))
    N = n1 * n2
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    M.sum_duplicates()
    M.sort_indices()
    return SparseOperator(M, grid, "complex" if complex_kind else "real",
                          wx=wx, wy=wy, zero=np.array(zero), phase=ph)


def _check_samples(name, vals, X1, X2):
    vals = np.asarray(vals, dtype=float)
    bad = ~(vals > 0) | ~np.isfinite(vals)
    if np.any(bad):
        i = np.unravel_index(np.argmax(bad), vals.shape)
        raise HypothesisViolation(
            f"{name} sample {vals[i]:.6g} is not positive at ({X1[i]:.6g}, {X2[i]:.6g})",
            field=name, point=(float(X1[i]), float(X2[i])), value=float(vals[i]),
        )
    return vals


def assemble_divgrad(grid: TorusGrid, a, b=None, q=None, k: float = 0.0) -> SparseOperator:
    """Five-point scheme for D1 a D1 + D2 b D2 + q (with D1 replaced by D1 + k).

    ``a`` is sampled at (x1 half-nodes, x2 nodes), ``b`` at (x1 nodes, x2
    half-nodes) and ``q`` at nodes. Samplers are vectorized callables of
    (x1, x2).
    """
    X1h, X2 = np.meshgrid(grid.x1(half=True), grid.x2(), indexing="ij")
    wx = _check_samples("a", a(X1h, X2), X1h, X2) / grid.h1**2
    wy = None
    if not grid.is_1d:
        X1, X2h = np.meshgrid(grid.x1(), grid.x2(half=True), indexing="ij")
        wy = _check_samples("b", b(X1, X2h), X1, X2h) / grid.h2**2
    zero = None
    if q is not None:
        X1, X2 = np.meshgrid(grid.x1(), grid.x2(), indexing="ij")
        zero = np.asarray(q(X1, X2), dtype=float)
    phase = np.exp(1j * k * grid.h1) if k else 1.0
    return assemble_links(grid, wx, wy, zero, phase)


def reciprocal_integer(eps: float) -> int:
    """m with eps == 1/m, or a configuration error."""
    if not (isinstance(eps, (int, float, Fraction)) and 0 < eps <= 1):
        raise ConfigurationError(f"eps must lie in (0, 1], got {eps!r}")
    m = round(1.0 / float(eps))
    if m < 1 or abs(float(eps) * m - 1.0) > 1e-12:
        raise ConfigurationError(f"eps = {eps} is not the reciprocal of an integer")
    return m


def cell_coordinates(n1: int, m: int, half: bool):
    """Fast coordinate m*x1 reduced to the unit cell, exactly, for n1 nodes on [0, 1).

    With c = n1/m points per cell, node i maps to (i mod c)/c; half-nodes add 1/2.
    """
    if n1 % m:
        raise ConfigurationError(f"n1 = {n1} is not divisible by 1/eps = {m}")
    c = n1 // m
    i = np.arange(n1) % c
    return (2 * i + (1 if half else 0)) / (2 * c)


def _scenario_grid(scn, grid):
    if grid is not None:
        return grid
    return TorusGrid(scn.n1, scn.n2, scn.period_x2)


def assemble_eps_operator(scn, eps: float, grid: TorusGrid | None = None,
                          min_points_per_cell: int = 16, with_q: bool = True) -> SparseOperator:
    """A_eps + Q^eps with coefficients g(x1/eps, x2) on the scenario torus."""
    grid = _scenario_grid(scn, grid)
    m = reciprocal_integer(eps)
    if grid.n1 < min_points_per_cell * m:
        raise ConfigurationError(
            f"grid too coarse: n1 = {grid.n1} < {min_points_per_cell}/eps = {min_points_per_cell * m}"
        )
    y_half = cell_coordinates(grid.n1, m, half=True)
    y_node = cell_coordinates(grid.n1, m, half=False)
    Yh, X2 = np.meshgrid(y_half, grid.x2(), indexing="ij")
    Y, X2h = np.meshgrid(y_node, grid.x2(half=True), indexing="ij")
    Yn, X2n = np.meshgrid(y_node, grid.x2(), indexing="ij")
    wx = _check_samples("g1", scn.g1(Yh, X2), Yh, X2) / grid.h1**2
    wy = None
    if not grid.is_1d:
        wy = _check_samples("g2", scn.g2(Y, X2h), Y, X2h) / grid.h2**2
    zero = np.asarray(scn.Q(Yn, X2n), dtype=float) if with_q else None
    return assemble_links(grid, wx, wy, zero)


def _profile_lines(profile, grid: TorusGrid):
    nodes = np.asarray(profile.x2_nodes)
    n2 = grid.shape[1]
    expected = np.arange(2 * n2) * grid.period_x2 / (2 * n2)
    if grid.is_1d or nodes.size != 2 * n2 or np.max(np.abs(nodes - expected)) > 1e-12 * grid.period_x2:
        raise ConfigurationError(
            f"profile has {nodes.size} nodes; the grid needs its {2 * n2} half-step x2 lines"
        )
    return slice(0, None, 2), slice(1, None, 2)


def assemble_effective_operator(profile, grid: TorusGrid, with_q: bool = True) -> SparseOperator:
    """A0 + Q0 from a half-step effective profile (see ``effective.grid_profile``)."""
    on, mid = _profile_lines(profile, grid)
    n1, n2 = grid.shape
    g1 = np.asarray(profile.g1_eff)[on]
    g2 = np.asarray(profile.g2_eff)[mid]
    if np.any(g1 <= 0) or np.any(g2 <= 0):
        raise HypothesisViolation("effective coefficients must be positive", field="profile")
    wx = np.broadcast_to(g1 / grid.h1**2, (n1, n2))
    wy = np.broadcast_to(g2 / grid.h2**2, (n1, n2))
    zero = np.broadcast_to(np.asarray(profile.q_eff)[on], (n1, n2)) if with_q else None
    return assemble_links(grid, wx, wy, zero)


def multiplication_operator(values, grid: TorusGrid) -> SparseOperator:
    vals = np.asarray(values).reshape(-1)
    if vals.size != grid.size:
        raise ConfigurationError(f"expected {grid.size} values, got {vals.size}")
    if not np.all(np.isfinite(vals)):
        raise ConfigurationError("multiplication values must be finite")
    kind = "complex" if np.iscomplexobj(vals) else "real"
    return SparseOperator(sp.diags(vals, format="csr"), grid, kind, zero=vals.reshape(grid.shape))


def check_quasimomentum(k: float):
    if not -math.pi <= k < math.pi:
        raise ConfigurationError(f"quasimomentum k = {k} must lie in [-pi, pi)")


def assemble_fiber_operator(scn, eps: float, k: float, n1: int, n2: int | None = None,
                            x2: float | None = None, cells: int = 1) -> SparseOperator:
    """Bloch fiber g1|(D1+k)u|^2 + eps^2 g2|D2 u|^2 + eps^2 Q on the unit cell.

    ``n2=None`` gives the 1D slice operator at ``x2`` (no eps terms). ``cells``
    > 1 assembles the periodic operator on a super-torus of that many cells.
    """
    check_quasimomentum(k)
    if cells < 1:
        raise ConfigurationError("cells must be >= 1")
    grid = TorusGrid(n1 * cells, n2, getattr(scn, "period_x2", 1.0), period_x1=float(cells))
    y_half = cell_coordinates(n1 * cells, cells, half=True)
    y_node = cell_coordinates(n1 * cells, cells, half=False)
    e2 = float(eps) ** 2
    phase = np.exp(1j * k * grid.h1) if k else 1.0
    if n2 is None:
        xs = 0.0 if x2 is None else float(x2)
        X2 = np.full_like(y_half, xs)
        wx = _check_samples("g1", scn.g1(y_half, X2), y_half, X2) / grid.h1**2
        return assemble_links(grid, wx[:, None], None, None, phase)
    Yh, X2 = np.meshgrid(y_half, grid.x2(), indexing="ij")
    Y, X2h = np.meshgrid(y_node, grid.x2(half=True), indexing="ij")
    Yn, X2n = np.meshgrid(y_node, grid.x2(), indexing="ij")
    wx = _check_samples("g1", scn.g1(Yh, X2), Yh, X2) / grid.h1**2
    wy = e2 * _check_samples("g2", scn.g2(Y, X2h), Y, X2h) / grid.h2**2
    zero = e2 * np.asarray(scn.Q(Yn, X2n), dtype=float)
    return assemble_links(grid, wx, wy, zero, phase)


def slice_operator(g1, x2: float, k: float, n1: int) -> SparseOperator:
    """1D fiber of a single coefficient field along the line {x2}."""

    holder = SimpleNamespace(g1=g1, period_x2=getattr(g1, "period_x2", 1.0))
    return assemble_fiber_operator(holder, 1.0, k, n1, None, x2)


def discrete_symbol(k, h1: float):
    """Discrete counterpart (2 - 2 cos(k h1)) / h1^2 of k^2."""
    k = np.asarray(k, dtype=float)
    return (2.0 - 2.0 * np.cos(k * h1)) / (h1 * h1)
