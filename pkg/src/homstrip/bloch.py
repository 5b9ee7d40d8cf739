"""Floquet-Bloch diagnostics: band bottoms, germ, threshold gap, projections.

Throughout, the discrete symbol kappa_h(k) = (2 - 2 cos(k h1)) / h1^2 stands in
for k^2: it is the exact band function of the discretized constant-coefficient
fiber, so comparisons against it carry no O(k^2 h^2) discretization offset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .discretize import (
    TorusGrid,
    assemble_fiber_operator,
    check_quasimomentum,
    discrete_symbol,
    slice_operator,
)
from .effective import grid_profile, harmonic_mean_x1
from .errors import ConfigurationError
from .fields import HypothesisConstants
from .linsolve import NormEstimate, SolveOptions, power_iteration


@dataclass(frozen=True)
class FiberEigenpair:
    k: float
    x2: float | None
    eigenvalue: float
    eigenvector: np.ndarray


@dataclass
class GermReport:
    x2: float
    k_values: list
    ratios: list
    germ_value: float
    residual_order: float
    eigenvalues: list = field(default_factory=list)


def line_threshold(g1, x2: float | None, n1: int = 256) -> float:
    """t0 = (pi/2) sqrt(c0/c1) with c0, c1 sampled on the line {x2} (everywhere if None)."""
    y = np.arange(4 * n1) / (4 * n1)
    if x2 is None:
        z = np.arange(n1) * getattr(g1, "period_x2", 1.0) / n1
        vals = np.asarray(g1(y[:, None], z[None, :]))
    else:
        vals = np.asarray(g1(y, np.full_like(y, x2)))
    return 0.5 * math.pi * math.sqrt(vals.min() / vals.max())


def fiber_spectrum(g1, x2: float, k: float, n1: int) -> np.ndarray:
    """All eigenvalues of the 1D fiber at quasimomentum k, ascending."""
    return sla.eigvalsh(slice_operator(g1, x2, k, n1).dense())


def fiber_ground(g1, x2: float, k: float, n1: int) -> FiberEigenpair:
    op = slice_operator(g1, x2, k, n1)
    vals, vecs = sla.eigh(op.dense(), subset_by_index=[0, 0])
    v = vecs[:, 0] / math.sqrt(op.grid.weight)
    return FiberEigenpair(k, x2, float(vals[0]), v)


def fit_order(k, err) -> float:
    """Least-squares slope of log err against log |k|."""
    k, err = np.abs(np.asarray(k, float)), np.abs(np.asarray(err, float))
    ok = err > 0
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(k[ok]), np.log(err[ok]), 1)[0])


def germ_check(g1, x2: float, k_list, n1: int = 256, enforce_threshold: bool = True) -> GermReport:
    """Band-bottom ratios lambda_min(k)/kappa_h(k) and their approach to g1^0(x2)."""
    ks = [float(k) for k in k_list]
    if any(k == 0 for k in ks):
        raise ConfigurationError("k = 0 is excluded from germ ratios")
    if n1 < 64:
        raise ConfigurationError(f"germ check needs n1 >= 64, got {n1}")
    if enforce_threshold:
        t0 = line_threshold(g1, x2, n1)
        if any(abs(k) > t0 for k in ks):
            raise ConfigurationError(f"|k| must not exceed t0 = {t0:.6g}")
    germ = harmonic_mean_x1(g1, x2)
    h1 = 1.0 / n1
    lams = [float(fiber_spectrum(g1, x2, k, n1)[0]) for k in ks]
    ratios = [lam / float(discrete_symbol(k, h1)) for lam, k in zip(lams, ks)]
    order = fit_order(ks, np.asarray(ratios) - germ)
    return GermReport(float(x2), ks, ratios, germ, order, lams)


def gap_check(g1, x2: float, k: float, constants: HypothesisConstants, n1: int = 256):
    """Exactly one fiber eigenvalue in [0, delta] and none in (delta, 3 delta).

    Returns (passed, lowest three eigenvalues).
    """
    if abs(k) > constants.t0 * (1 + 1e-12):
        raise ConfigurationError(f"|k| = {abs(k):.6g} exceeds t0 = {constants.t0:.6g}")
    ev = fiber_spectrum(g1, x2, k, n1)[:3]
    d = constants.delta
    ok = int(np.sum(ev <= d)) == 1 and not np.any((ev > d) & (ev < 3 * d))
    return bool(ok), ev


def projection_residual(g1, x2: float, k: float, n1: int = 256):
    """(||F - P~|| / t, ||A1 F - kappa_h g1^0 P~|| / t^3) with t = |k|.

    F projects onto the lowest fiber eigenvector, P~ onto constants.
    """
    if k == 0:
        raise ConfigurationError("projection residual needs k != 0")
    t = abs(k)
    op = slice_operator(g1, x2, k, n1)
    A = op.dense()
    _, vecs = sla.eigh(A, subset_by_index=[0, 0])
    v = vecs[:, 0]
    F = np.outer(v, v.conj())
    P = np.full((n1, n1), 1.0 / n1)
    phi = np.linalg.norm(F - P, 2) / t
    germ = harmonic_mean_x1(g1, x2)
    psi = np.linalg.norm(A @ F - discrete_symbol(k, op.grid.h1) * germ * P, 2) / t**3
    return float(phi), float(psi)


def quasimomenta(M: int) -> np.ndarray:
    """k_j = 2 pi j / M folded into [-pi, pi)."""
    k = 2 * math.pi * np.arange(M) / M
    return np.where(k >= math.pi, k - 2 * math.pi, k)


@dataclass
class DecompositionReport:
    M: int
    count: int
    k_values: list
    super_eigenvalues: np.ndarray
    fiber_eigenvalues: np.ndarray
    max_mismatch: float
    max_containment: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_mismatch <= self.tol and self.max_containment <= self.tol


def fiber_decomposition_check(scn, eps: float, M: int, n1: int, n2: int, count: int,
                              tol: float = 1e-7) -> DecompositionReport:
    """Compare the M-cell super-torus spectrum with the spectra of its M fibers.

    The count*M lowest super-torus eigenvalues must equal the count*M lowest
    values of the union of the full fiber spectra, and every fiber's count
    lowest eigenvalues must occur in the super-torus spectrum.
    """
    if M < 2:
        raise ConfigurationError("super-period M must be >= 2")
    if not 1 <= count <= 8:
        raise ConfigurationError("count must lie in 1..8")
    big = assemble_fiber_operator(scn, eps, 0.0, n1, n2, cells=M)
    sup = sla.eigvalsh(big.dense())
    ks = quasimomenta(M)
    fibers = [sla.eigvalsh(assemble_fiber_operator(scn, eps, float(k), n1, n2).dense()) for k in ks]
    union = np.sort(np.concatenate(fibers))
    n = count * M
    mismatch = float(np.max(np.abs(sup[:n] - union[:n])))
    contain = 0.0
    for ev in fibers:
        d = np.min(np.abs(sup[None, :] - ev[:count, None]), axis=1)
        contain = max(contain, float(d.max()))
    return DecompositionReport(M, count, ks.tolist(), sup[:n], union[:n], mismatch, contain, tol)


def germ_operator(scn, eps: float, k: float, n1: int, n2: int):
    """S(k, eps) + eps^2 Q0 on the x2 grid, with kappa_h(k) in place of k^2."""
    grid = TorusGrid(n1, n2, scn.period_x2)
    prof = grid_profile(scn.g1, scn.g2, scn.Q, n2, scn.period_x2)
    g1 = prof.g1_eff[0::2]
    g2 = prof.g2_eff[1::2]
    q = prof.q_eff[0::2]
    e2 = float(eps) ** 2
    wy = e2 * g2 / grid.h2**2
    diag = discrete_symbol(k, grid.h1) * g1 + wy + np.roll(wy, 1) + e2 * q
    j = np.arange(n2)
    S = sp.csc_matrix(
        (np.concatenate([diag, -wy, -wy]),
         (np.concatenate([j, j, (j + 1) % n2]), np.concatenate([j, (j + 1) % n2, j]))),
        shape=(n2, n2),
    )
    return S


def germ_resolvent_gap(scn, eps: float, k: float, n1: int = 64, n2: int = 64,
                       opts: SolveOptions | None = None, power_tol: float = 1e-4,
                       restrict_to_constants: bool = False) -> NormEstimate:
    """||(A(k,eps) + eps^2 Q)^-1 - (S(k,eps) + eps^2 Q0)^-1 P|| by power iteration.

    P averages over x1. ``restrict_to_constants`` estimates P D P instead.
    """
    opts = opts or SolveOptions()
    check_quasimomentum(k)
    fib = assemble_fiber_operator(scn, eps, k, n1, n2)
    lu = spla.splu(fib.matrix.tocsc().astype(complex))
    slu = spla.splu(germ_operator(scn, eps, k, n1, n2))
    shape = (n1, n2)

    def project(v):
        return np.broadcast_to(v.reshape(shape).mean(axis=0), shape).reshape(-1)

    def apply(v):
        if restrict_to_constants:
            v = project(v)
        mean = v.reshape(shape).mean(axis=0)
        s = slu.solve(mean.real) + 1j * slu.solve(mean.imag)
        out = lu.solve(v) - np.broadcast_to(s, shape).reshape(-1)
        return project(out) if restrict_to_constants else out

    est = power_iteration(apply, n1 * n2, opts, power_tol, dtype=complex)
    t0 = line_threshold(scn.g1, None)
    est.stats["beyond_t0"] = abs(k) > t0
    return est
