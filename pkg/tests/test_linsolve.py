import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from homstrip.discretize import (
    TorusGrid,
    assemble_effective_operator,
    assemble_eps_operator,
    assemble_links,
    slice_operator,
)
from homstrip.effective import grid_profile
from homstrip.errors import ConfigurationError, NonConvergenceError
from homstrip.fields import CoefficientField
from homstrip.linsolve import (
    FourierX1Solver,
    SolveOptions,
    cg,
    cg_solve,
    dense_spectral_norm,
    operator_gap,
    power_iteration,
    resolvent_gap,
    smallest_eigenpair,
)

COS = CoefficientField("x1-cosine", (2.0, 1.0))
ONE = CoefficientField("constant", (1.0,))

# Largest |eigenvalue| of inv(A_eps) - inv(A0) for the cosine family, eps = 1/4 on a
# 64 x 16 torus, from a loop-assembled dense matrix pair (A0 built from the closed-form
# effective coefficients sqrt(3), 2, 1) and a dense symmetric eigensolve.
DENSE_GAP_64x16 = 0.0015808002381672698


def scenario(g1, g2=None, Q=None, n1=64, n2=16, eps=(0.25,)):
    return SimpleNamespace(g1=g1, g2=g2 or g1, Q=Q or ONE, n1=n1, n2=n2, period_x2=1.0,
                           eps_list=eps)


def periodic_laplacian_plus_identity(n):
    grid = TorusGrid(n)
    return assemble_links(grid, np.full((n, 1), 1.0 / grid.h1**2), None, np.ones((n, 1)))


def loop_dense(n1, n2, a, b, q):
    h1, h2 = 1.0 / n1, 1.0 / n2
    M = np.zeros((n1 * n2, n1 * n2))
    idx = lambda i, j: (i % n1) * n2 + (j % n2)  # noqa: E731
    for i in range(n1):
        for j in range(n2):
            p, x1, x2 = idx(i, j), i * h1, j * h2
            for di, dj, w in ((1, 0, a(x1 + h1 / 2) / h1**2), (-1, 0, a(x1 - h1 / 2) / h1**2),
                              (0, 1, b(x1) / h2**2), (0, -1, b(x1) / h2**2)):
                M[p, p] += w
                M[p, idx(i + di, j + dj)] -= w
            M[p, p] += q
    return M


# -- cg ----------------------------------------------------------------------

def test_cg_identity_and_diagonal():
    r = np.arange(1.0, 6.0)
    np.testing.assert_allclose(cg_solve(sp.identity(5, format="csr"), r), r)
    x = cg_solve(sp.diags([1.0, 2.0, 4.0], format="csr"), np.array([1.0, 2.0, 4.0]))
    np.testing.assert_allclose(x, 1.0, rtol=1e-12)


def test_cg_impulse_matches_dense_solve():
    op = periodic_laplacian_plus_identity(8)
    rhs = np.eye(8)[0]
    np.testing.assert_allclose(cg_solve(op, rhs), np.linalg.solve(op.dense(), rhs), atol=1e-10)


@pytest.mark.parametrize("pre", ["none", "jacobi"])
def test_cg_residual_contract(pre):
    op = assemble_eps_operator(scenario(COS), 0.25)
    rhs = np.random.default_rng(3).standard_normal(op.dimension)
    opts = SolveOptions(rel_tol=1e-10, preconditioner=pre)
    res = cg(op, rhs, opts)
    true = np.linalg.norm(rhs - op.matrix @ res.x) / np.linalg.norm(rhs)
    assert true <= 1e-10 and res.residual == pytest.approx(true)


def test_cg_nonconvergence_is_reported():
    op = assemble_eps_operator(scenario(COS), 0.25)
    rhs = np.random.default_rng(0).standard_normal(op.dimension)
    with pytest.raises(NonConvergenceError) as info:
        cg(op, rhs, SolveOptions(max_iter=3))
    assert info.value.achieved > 1e-10


def test_effective_preconditioner_needs_solver():
    op = periodic_laplacian_plus_identity(8)
    with pytest.raises(ConfigurationError):
        cg(op, np.ones(8), SolveOptions(preconditioner="effective"))


def test_solve_options_validation():
    with pytest.raises(ConfigurationError):
        SolveOptions(rel_tol=0)
    with pytest.raises(ConfigurationError):
        SolveOptions(preconditioner="multigrid")
    assert SolveOptions().iteration_cap(50) == 500


# -- power iteration and eigenpairs --------------------------------------------

def test_power_iteration_examples():
    d = np.array([3.0, -1.0, 2.0])
    assert power_iteration(lambda v: d * v, 3, tol=1e-12, max_iter=2000).value == pytest.approx(3, abs=1e-6)
    assert power_iteration(lambda v: v, 17).value == pytest.approx(1.0, abs=1e-15)
    op = periodic_laplacian_plus_identity(8)
    inv = np.linalg.inv(op.dense())
    assert power_iteration(lambda v: inv @ v, 8, tol=1e-12).value == pytest.approx(1.0, abs=1e-6)


def test_smallest_eigenpair_examples():
    lam, v = smallest_eigenpair(sp.diags([5.0, 2.0, 9.0], format="csr"))
    assert lam == pytest.approx(2.0)
    np.testing.assert_allclose(np.abs(v), [0, 1, 0], atol=1e-14)
    grid = TorusGrid(16)
    lap = assemble_links(grid, np.full((16, 1), 1.0 / grid.h1**2))
    lam, v = smallest_eigenpair(lap)
    assert abs(lam) < 1e-9
    np.testing.assert_allclose(v, v[0], rtol=1e-9)
    assert grid.norm(v) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [64, 512])
def test_smallest_eigenpair_of_fiber_matches_dense(n):
    op = slice_operator(COS, 0.0, 0.1, n)
    ev, vecs = np.linalg.eigh(op.dense())
    lam, v = smallest_eigenpair(op)
    assert lam == pytest.approx(ev[0], abs=1e-8)
    ref = vecs[:, 0] / math.sqrt(op.grid.weight)
    overlap = abs(np.vdot(ref, v)) * op.grid.weight
    assert overlap == pytest.approx(1.0, abs=1e-10)


def test_fiber_eigenvalue_frozen():
    # dense Hermitian eigensolve of the 64-node fiber, g = 2 + cos, k = 0.1
    lam, _ = smallest_eigenpair(slice_operator(COS, 0.0, 0.1, 64))
    assert lam == pytest.approx(0.017319861732204345, abs=1e-8)


# -- resolvent gaps --------------------------------------------------------------

def test_constant_coefficients_give_zero_gap():
    opts = SolveOptions(rel_tol=1e-10)
    est = resolvent_gap(scenario(ONE, n1=64, n2=16), 0.25, opts)
    assert est.value <= 10 * opts.rel_tol


@pytest.mark.parametrize("eps", [0.5, 0.25])
def test_x1_independent_gap_vanishes(eps):
    g = CoefficientField("separable-product", (2.0, 0.5))
    opts = SolveOptions(rel_tol=1e-10)
    est = resolvent_gap(scenario(g, CoefficientField("separable-product", (3.0, 0.2))), eps, opts)
    assert est.value <= 10 * opts.rel_tol


def test_gap_matches_dense_oracle():
    a = lambda x: 2 + math.cos(2 * math.pi * 4 * x)  # noqa: E731
    A = loop_dense(64, 16, a, a, 1.0)
    A0 = loop_dense(64, 16, lambda x: math.sqrt(3), lambda x: 2.0, 1.0)
    D = np.linalg.inv(A) - np.linalg.inv(A0)
    oracle = dense_spectral_norm((D + D.T) / 2)
    assert oracle == pytest.approx(DENSE_GAP_64x16, rel=1e-10)
    opts = SolveOptions(rel_tol=1e-12)
    est = resolvent_gap(scenario(COS), 0.25, opts, power_tol=1e-10)
    assert est.converged
    assert est.value <= DENSE_GAP_64x16 * (1 + 1e-6)
    assert est.value == pytest.approx(DENSE_GAP_64x16, rel=1e-4)
    assert est.stats["max_cg_residual"] <= 1e-12


def test_effective_and_jacobi_preconditioning_agree():
    scn = scenario(COS, n1=128, n2=128, eps=(0.25,))
    a = resolvent_gap(scn, 0.25, SolveOptions(preconditioner="jacobi"))
    b = resolvent_gap(scn, 0.25, SolveOptions(preconditioner="effective"))
    assert a.iterations == b.iterations
    assert b.value == pytest.approx(a.value, rel=1e-8)
    assert b.stats["cg_iterations"] < a.stats["cg_iterations"] / 10


def test_fourier_solver_matches_sparse_direct():
    g = CoefficientField("separable-product", (2.0, 0.5))
    grid = TorusGrid(32, 16)
    A0 = assemble_effective_operator(grid_profile(g, COS, g, 16), grid)
    rhs = np.random.default_rng(5).standard_normal(grid.size)
    np.testing.assert_allclose(FourierX1Solver(A0)(rhs), np.linalg.solve(A0.dense(), rhs), atol=1e-12)


def test_fourier_solver_rejects_oscillating_operator():
    with pytest.raises(ConfigurationError):
        FourierX1Solver(assemble_eps_operator(scenario(COS), 0.25))


@pytest.mark.parametrize("sigma", [0.5, 2.0])
def test_scaling_covariance(sigma):
    opts = SolveOptions(rel_tol=1e-12)
    base = resolvent_gap(scenario(COS), 0.25, opts, power_tol=1e-10).value
    scn = scenario(COS.scaled(sigma), Q=ONE.scaled(sigma))
    scaled = resolvent_gap(scn, 0.25, opts, power_tol=1e-10).value
    assert scaled == pytest.approx(base / sigma, rel=1e-6)


# -- properties --------------------------------------------------------------

@st.composite
def small_problems(draw):
    fam = draw(st.sampled_from(["x1-cosine", "two-phase", "separable-product"]))
    if fam == "x1-cosine":
        g = CoefficientField(fam, (2.0, draw(st.floats(-1.0, 1.0))))
    elif fam == "two-phase":
        g = CoefficientField(fam, (draw(st.floats(0.5, 3)), draw(st.floats(0.5, 3))))
    else:
        g = CoefficientField(fam, (3.0, draw(st.floats(-1, 1)), draw(st.floats(-1, 1)),
                                   draw(st.floats(-1, 1)), 0.3))
    eps = draw(st.sampled_from([1.0, 0.5, 0.25]))
    n1, n2 = draw(st.sampled_from([(16, 16), (32, 8), (16, 8)]))
    return g, eps, n1, n2, draw(st.integers(0, 2**16))


def _small_gap_setup(g, eps, n1, n2):
    scn = scenario(g, CoefficientField("x1-cosine", (2.0, 0.5)), n1=n1, n2=n2)
    grid = TorusGrid(n1, n2)
    A = assemble_eps_operator(scn, eps, grid, min_points_per_cell=4)
    A0 = assemble_effective_operator(grid_profile(scn.g1, scn.g2, scn.Q, n2), grid)
    return A, A0


@settings(max_examples=25)
@given(small_problems())
def test_power_iteration_against_dense_norm(problem):
    g, eps, n1, n2, seed = problem
    A, A0 = _small_gap_setup(g, eps, n1, n2)
    assert A.dimension <= 256
    D = np.linalg.inv(A.dense()) - np.linalg.inv(A0.dense())
    exact = dense_spectral_norm((D + D.T) / 2)
    est = operator_gap(A, A0, SolveOptions(seed=seed))
    assert est.value <= exact + 1e-6
    if exact > 0:
        assert est.value >= 0.999 * exact


@settings(max_examples=15)
@given(small_problems())
def test_difference_map_is_symmetric(problem):
    g, eps, n1, n2, seed = problem
    A, A0 = _small_gap_setup(g, eps, n1, n2)
    sb = FourierX1Solver(A0)
    opts = SolveOptions(rel_tol=1e-12)

    def D(v):
        return cg_solve(A, v, opts) - sb(v)

    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, A.dimension))
    assert abs(np.dot(D(u), v) - np.dot(u, D(v))) <= 1e-8 * np.linalg.norm(u) * np.linalg.norm(v)
