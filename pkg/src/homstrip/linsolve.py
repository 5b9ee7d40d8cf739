"""Linear solvers, eigen solvers and operator-norm estimation.

All norms are the weighted grid norms of the discretization; since the grid
weight is uniform it cancels from relative residuals and Rayleigh quotients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NonConvergenceError, NumericalError

PRECONDITIONERS = ("none", "jacobi", "effective")


@dataclass(frozen=True)
class SolveOptions:
    rel_tol: float = 1e-10
    max_iter: int | None = None
    preconditioner: str = "jacobi"
    seed: int = 0

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ConfigurationError(f"rel_tol must be positive, got {self.rel_tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigurationError(f"unknown preconditioner {self.preconditioner!r}")

    def iteration_cap(self, dim: int) -> int:
        return self.max_iter if self.max_iter is not None else 10 * dim

    def replace(self, **kw) -> "SolveOptions":
        d = dict(rel_tol=self.rel_tol, max_iter=self.max_iter,
                 preconditioner=self.preconditioner, seed=self.seed)
        d.update(kw)
        return SolveOptions(**d)


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float  # true relative residual ||b - A x|| / ||b||


@dataclass
class NormEstimate:
    value: float
    iterations: int
    last_rel_change: float
    converged: bool
    stats: dict = field(default_factory=dict)


def _matrix(op):
    return op.matrix if hasattr(op, "matrix") else op


def cg(op, rhs, opts: SolveOptions | None = None, x0=None, precond=None) -> CGResult:
    """Preconditioned conjugate gradients for a Hermitian positive definite matrix.

    ``precond`` is a callable applying an approximate inverse; it is required
    when ``opts.preconditioner == "effective"``.
    The recursive residual is verified against the true residual on exit; if
    they have drifted apart the iteration restarts from the current iterate.
    """
    opts = opts or SolveOptions()
    A = _matrix(op)
    b = np.asarray(rhs)
    dtype = np.result_type(A.dtype, b.dtype, float)
    b = b.astype(dtype, copy=False)
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return CGResult(np.zeros(n, dtype=dtype), 0, 0.0)
    if opts.preconditioner == "jacobi":
        d = A.diagonal().real
        if np.any(d <= 0):
            raise NumericalError("Jacobi preconditioner needs a positive diagonal")
        minv = 1.0 / d
        precond = lambda r: r * minv  # noqa: E731
    elif opts.preconditioner == "effective":
        if precond is None:
            raise ConfigurationError("the effective preconditioner needs an effective-operator solver")
    else:
        precond = None
    cap = opts.iteration_cap(n)
    target = opts.rel_tol * bnorm
    x = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    total = 0
    while True:
        r = b - A @ x if total or x0 is not None else b.copy()
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return CGResult(x, total, float(rnorm / bnorm))
        if total >= cap:
            raise NonConvergenceError(
                f"CG did not reach rel_tol {opts.rel_tol:g} in {cap} iterations",
                achieved=float(rnorm / bnorm), iterations=total,
            )
        z = precond(r) if precond is not None else r
        p = z.copy()
        rz = np.vdot(r, z).real
        while total < cap:
            Ap = A @ p
            alpha = rz / np.vdot(p, Ap).real
            x += alpha * p
            r -= alpha * Ap
            total += 1
            if np.linalg.norm(r) <= target:
                break
            z = precond(r) if precond is not None else r
            rz_new = np.vdot(r, z).real
            p *= rz_new / rz
            p += z
            rz = rz_new
        # loop back: true residual check (and restart if it drifted)


def cg_solve(op, rhs, opts: SolveOptions | None = None, x0=None) -> np.ndarray:
    return cg(op, rhs, opts, x0).x


def _unit(v, inner=None):
    nrm = math.sqrt(abs(inner(v, v))) if inner else np.linalg.norm(v)
    return v / nrm


def power_iteration(apply, dim: int, opts: SolveOptions | None = None, tol: float = 1e-4,
                    max_iter: int = 200, dtype=float, start=None, block: int = 4,
                    atol: float = 0.0) -> NormEstimate:
    """Estimate max |lambda| of a self-adjoint map by simultaneous (block) power iteration.

    A block of ``block`` orthonormal vectors is multiplied by the map and
    rotated onto its Ritz vectors each step. The reported value is the largest
    ||A y|| over the unit Ritz vectors y; it never exceeds the spectral norm,
    and it converges at the rate |lambda_{block+1} / lambda_1| instead of
    |lambda_2 / lambda_1|, so sign-paired or clustered top eigenvalues do not
    stall it. Iteration stops once the relative change drops below ``tol`` or
    the absolute change drops to ``atol``.
    """
    opts = opts or SolveOptions()
    rng = np.random.default_rng(opts.seed)
    b = max(1, min(int(block), dim))
    V = rng.standard_normal((dim, b))
    if np.dtype(dtype).kind == "c":
        V = V + 1j * rng.standard_normal((dim, b))
    V = V.astype(dtype)
    if start is not None:
        V[:, 0] = np.asarray(start, dtype=dtype)
    V = np.linalg.qr(V)[0]
    est, change = 0.0, math.inf
    for it in range(1, max_iter + 1):
        W = np.stack([apply(V[:, j]) for j in range(b)], axis=1)
        H = V.conj().T @ W
        theta, S = np.linalg.eigh(0.5 * (H + H.conj().T))
        order = np.argsort(-np.abs(theta))
        WS = W @ S[:, order]
        new = float(np.max(np.linalg.norm(WS, axis=0)))
        step = abs(new - est)
        change = step / new if new > 0 else 0.0
        est = new
        if new == 0.0:
            return NormEstimate(0.0, it, 0.0, True, {"block": b})
        if change < tol or step <= atol:
            return NormEstimate(est, it, change, True, {"block": b})
        V = np.linalg.qr(WS)[0]
    return NormEstimate(est, max_iter, change, False, {"block": b})


def dense_spectral_norm(M) -> float:
    """Largest |eigenvalue| of a dense Hermitian matrix."""
    ev = sla.eigvalsh(np.asarray(M))
    return float(max(abs(ev[0]), abs(ev[-1])))


def _weighted_unit(v, grid):
    w = grid.weight if grid is not None else 1.0
    return v / (math.sqrt(w) * np.linalg.norm(v))


def smallest_eigenpair(op, opts: SolveOptions | None = None, tol: float = 1e-8):
    """(lambda_min, unit eigenvector) of a Hermitian operator.

    Shift-invert Lanczos (ARPACK) about a Gershgorin lower bound, followed by
    inverse-iteration polishing until ||A v - lambda v|| <= tol (weighted norm,
    unit v). Small operators use a dense solver.
    """
    opts = opts or SolveOptions()
    A = _matrix(op)
    grid = getattr(op, "grid", None)
    n = A.shape[0]
    if n <= 400:
        vals, vecs = sla.eigh(A.toarray() if sp.issparse(A) else np.asarray(A))
        lam, v = float(vals[0]), vecs[:, 0]
    else:
        diag = A.diagonal().real
        radius = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(diag)
        low = float(np.min(diag - radius))
        shift = low - 1e-3 * max(1.0, abs(low))
        v0 = np.random.default_rng(opts.seed).standard_normal(n).astype(A.dtype)
        vals, vecs = spla.eigsh(A.tocsc(), k=1, sigma=shift, which="LM", v0=v0, tol=0)
        lam, v = float(vals[0]), vecs[:, 0]
    v = _weighted_unit(v, grid)
    if np.isrealobj(v):
        v = v * (1.0 if v.sum() >= 0 else -1.0)
    else:
        k = np.argmax(np.abs(v))
        v = v * (abs(v[k]) / v[k])
    w = grid.weight if grid is not None else 1.0
    anorm = spla.norm(A, 1) if sp.issparse(A) else np.abs(A).sum(axis=0).max()
    floor = max(tol, 100 * np.finfo(float).eps * anorm)
    res = math.sqrt(w) * np.linalg.norm(A @ v - lam * v)
    if res > floor:
        lu = spla.splu((A - (lam - 1e-6 * max(1, abs(lam))) * sp.identity(n, format="csc")).tocsc())
        for _ in range(20):
            v = _weighted_unit(lu.solve(v), grid)
            lam = float(np.real(np.vdot(v, A @ v)) * w)
            res = math.sqrt(w) * np.linalg.norm(A @ v - lam * v)
            if res <= floor:
                break
        else:
            raise NumericalError(f"eigenpair residual {res:.3g} above {floor:.3g}", achieved=res)
    return lam, v


class FourierX1Solver:
    """Direct solver for operators whose link weights depend on x2 only.

    Such operators are diagonalized by the DFT along x1: each x1-frequency
    leaves a cyclic tridiagonal system in x2. All frequencies are stacked into
    one block-diagonal sparse matrix and factorized once.
    """

    def __init__(self, op):
        if op.scalar_kind != "real" or op.wx is None or op.grid.is_1d:
            raise ConfigurationError("Fourier solver needs a real 2D operator with link data")
        wx, wy, zero = op.wx, op.wy, op.zero
        if not (np.all(wx == wx[:1]) and np.all(wy == wy[:1]) and np.all(zero == zero[:1])):
            raise ConfigurationError("Fourier solver needs x1-independent link weights")
        self.grid = op.grid
        n1, n2 = op.grid.shape
        nf = n1 // 2 + 1
        sym = 2.0 - 2.0 * np.cos(2.0 * np.pi * np.arange(nf) / n1)
        ax, ay, q = wx[0], wy[0], zero[0]
        base = np.arange(n2)
        up = (base + 1) % n2
        rows, cols, vals = [], [], []
        for m in range(nf):
            off = m * n2
            rows += [off + base, off + base, off + up]
            cols += [off + base, off + up, off + base]
            vals += [sym[m] * ax + ay + np.roll(ay, 1) + q, -ay, -ay]
        N = nf * n2
        M = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(N, N))
        self._lu = spla.splu(M)
        self.shape = (n1, n2)
        self.nf = nf

    def solve(self, rhs):
        n1, n2 = self.shape
        R = np.fft.rfft(np.asarray(rhs, dtype=float).reshape(n1, n2), axis=0)
        cols = np.stack([R.real.ravel(), R.imag.ravel()], axis=1)
        X = self._lu.solve(cols)
        Xf = (X[:, 0] + 1j * X[:, 1]).reshape(self.nf, n2)
        return np.fft.irfft(Xf, n=n1, axis=0).reshape(-1)

    __call__ = solve


class WarmSolver:
    """CG solves of one operator inside power iteration.

    Each solve is warm-started from the least-squares combination of the last
    ``history`` solutions whose right-hand sides best match the new one.
    """

    def __init__(self, op, opts: SolveOptions, precond=None, history: int = 4):
        self.op, self.opts, self.precond = op, opts, precond
        self.history = history
        self.prev_rhs = []
        self.prev_x = []
        self.iterations = []
        self.residuals = []

    def __call__(self, rhs):
        x0 = None
        if self.prev_rhs:
            B = np.stack(self.prev_rhs, axis=1)
            c = np.linalg.lstsq(B, rhs, rcond=None)[0]
            x0 = np.stack(self.prev_x, axis=1) @ c
        res = cg(self.op, rhs, self.opts, x0, self.precond)
        self.prev_rhs = (self.prev_rhs + [rhs])[-self.history:]
        self.prev_x = (self.prev_x + [res.x])[-self.history:]
        self.iterations.append(res.iterations)
        self.residuals.append(res.residual)
        return res.x

    def stats(self) -> dict:
        return {
            "cg_solves": len(self.iterations),
            "cg_iterations": int(sum(self.iterations)),
            "max_cg_residual": float(max(self.residuals, default=0.0)),
        }


def difference_norm(solve_a, solve_b, dim: int, opts: SolveOptions, power_tol: float = 1e-4,
                    max_iter: int = 200, dtype=float) -> NormEstimate:
    """Power-iteration norm of solve_a - solve_b.

    Both maps carry errors of order ``opts.rel_tol``, so estimate changes
    below that level are solver noise and also end the iteration.
    """
    return power_iteration(lambda v: solve_a(v) - solve_b(v), dim, opts, power_tol, max_iter, dtype,
                           atol=opts.rel_tol)


def resolvent_gap(scn, eps: float, opts: SolveOptions | None = None, power_tol: float = 1e-4,
                  effective_solver: str = "fourier") -> NormEstimate:
    """||(A_eps + Q^eps)^-1 - (A0 + Q0)^-1|| on the scenario torus."""
    from .discretize import TorusGrid, assemble_eps_operator, assemble_effective_operator
    from .effective import grid_profile

    opts = opts or SolveOptions()
    grid = TorusGrid(scn.n1, scn.n2, scn.period_x2)
    A = assemble_eps_operator(scn, eps, grid)
    A0 = assemble_effective_operator(grid_profile(scn.g1, scn.g2, scn.Q, grid.n2, grid.period_x2), grid)
    return operator_gap(A, A0, opts, power_tol, effective_solver)


def operator_gap(A, A0, opts: SolveOptions, power_tol: float = 1e-4,
                 effective_solver: str = "fourier", left=None, right=None) -> NormEstimate:
    """Norm of A^-1 - W A0^-1 W, with W the optional diagonal ``left``/``right`` factors.

    With ``opts.preconditioner == "effective"`` the CG solves of A are
    preconditioned by W A0^-1 W itself.
    """
    if effective_solver == "fourier":
        sb = FourierX1Solver(A0)
    elif effective_solver == "cg":
        sb = WarmSolver(A0, opts.replace(preconditioner="jacobi")
                        if opts.preconditioner == "effective" else opts)
    else:
        raise ConfigurationError(f"unknown effective solver {effective_solver!r}")
    if left is not None:
        base_b = sb
        sb = lambda v: left * base_b(right * v)  # noqa: E731
    sa = WarmSolver(A, opts, precond=sb if opts.preconditioner == "effective" else None)
    est = difference_norm(sa, sb, A.dimension, opts, power_tol)
    est.stats.update(sa.stats())
    if isinstance(sb, WarmSolver):
        eff = sb.stats()
        est.stats["cg_solves"] += eff["cg_solves"]
        est.stats["cg_iterations"] += eff["cg_iterations"]
        est.stats["max_cg_residual"] = max(est.stats["max_cg_residual"], eff["max_cg_residual"])
    return est
