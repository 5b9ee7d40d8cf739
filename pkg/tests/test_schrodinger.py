import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import homstrip.schrodinger as schr
from homstrip.discretize import TorusGrid
from homstrip.errors import ConfigurationError, HypothesisViolation, NumericalError
from homstrip.fields import CoefficientField, sampling_points
from homstrip.linsolve import SolveOptions, resolvent_gap
from homstrip.schrodinger import (
    SchrodingerScenario,
    default_lambda,
    discrete_potential_1d,
    factorization_check,
    ground_state,
    make_factorization,
    potentials_from_ground_state,
    schrodinger_operators,
    schrodinger_resolvent_gap,
)

COS = CoefficientField("x1-cosine", (2.0, 1.0))
ONE = CoefficientField("constant", (1.0,))
GIBBS = CoefficientField("exp-gibbs", (0.5,))

# Largest |eigenvalue| of inv(H + lambda) - W inv(A0 + Q0) W for g~ = 2 + cos, omega the
# normalized exp(0.5 cos), eps = 1/4 on 64 x 16, lambda = 0.5 / omega0^2. Computed from a
# loop-assembled dense matrix pair and a dense symmetric eigensolve.
DENSE_SCHRODINGER_GAP = 0.006382429137727693


def family(path="discrete", n1=64, n2=16, lam=None, g=COS, omega=GIBBS):
    data = make_factorization(g, g, omega)
    return SchrodingerScenario(data, default_lambda(data) if lam is None else lam, n1, n2, 1.0, path)


def gibbs_potential(s, x):
    return 4 * math.pi**2 * s * (s * np.sin(2 * math.pi * x) ** 2 - np.cos(2 * math.pi * x))


# -- potentials ----------------------------------------------------------------

def test_unit_ground_state_gives_zero_potentials():
    V, V2 = potentials_from_ground_state(COS, COS, ONE)
    X1, X2 = sampling_points(1.0, 64)
    assert np.max(np.abs(V(X1, X2))) == 0.0 and np.max(np.abs(V2(X1, X2))) == 0.0


def test_gibbs_potential_closed_form_and_differences():
    s = 0.5
    V, _ = potentials_from_ground_state(ONE, ONE, CoefficientField("exp-gibbs", (s,)))
    x = np.linspace(0.0, 1.0, 41)
    np.testing.assert_allclose(V(x, 0.0), gibbs_potential(s, x), atol=1e-10)
    # nested central differences at step 1e-6 on the unnormalized profile
    step = 1e-6
    w = lambda y: np.exp(s * np.cos(2 * math.pi * y))  # noqa: E731
    dw = lambda y: (w(y + step) - w(y - step)) / (2 * step)  # noqa: E731
    fd = (dw(x + step) - dw(x - step)) / (2 * step) / w(x)
    np.testing.assert_allclose(fd, gibbs_potential(s, x), atol=5e-3)


def test_discrete_path_identity_at_rounding_level():
    grid = TorusGrid(64, 16)
    V1, V2 = potentials_from_ground_state(COS, COS, GIBBS, "discrete", grid)
    w = GIBBS(*np.meshgrid(grid.x1(), grid.x2(), indexing="ij"))
    wx = COS(*np.meshgrid(grid.x1(True), grid.x2(), indexing="ij")) / grid.h1**2
    lap = wx * (w - np.roll(w, -1, 0)) + np.roll(wx, 1, 0) * (w - np.roll(w, 1, 0))
    assert np.max(np.abs(lap + V1 * w)) <= 2 * np.finfo(float).eps * np.max(np.abs(lap))
    assert np.max(np.abs(V2)) == 0.0


def test_nonpositive_omega_rejected():
    bad = CoefficientField("tabulated-1d-profile", (1.0, 1.2, -0.1, 1.0))
    with pytest.raises(HypothesisViolation):
        make_factorization(ONE, ONE, bad)
    with pytest.raises(HypothesisViolation):
        potentials_from_ground_state(ONE, ONE, bad, "discrete", TorusGrid(8, 4))


def test_unnormalized_omega_rejected():
    with pytest.raises(HypothesisViolation):
        make_factorization(ONE, ONE, CoefficientField("constant", (2.0,)))


def test_margin_must_be_positive():
    omega = CoefficientField("exp-gibbs", (0.5, 0.4))
    data = make_factorization(COS, COS, omega)
    assert data.c4_t > 0
    with pytest.raises(ConfigurationError):
        SchrodingerScenario(data, 0.0, 64, 16)
    scn = SchrodingerScenario(data, default_lambda(data), 64, 16)
    assert scn.margin >= 0.5 * data.omega1**2 * data.c4_t


# -- ground states ---------------------------------------------------------------

def test_trivial_ground_state():
    lam, w = ground_state(ONE, np.zeros(64), 0.0, 64)
    assert abs(lam) < 1e-10
    np.testing.assert_allclose(w, 1.0, atol=1e-10)


@pytest.mark.parametrize("g", [ONE, COS])
def test_ground_state_recovers_gibbs_profile(g):
    n = 256
    V = discrete_potential_1d(g, GIBBS, 0.0, n)
    lam, w = ground_state(g, V, 0.0, n)
    x = np.arange(n) / n
    assert abs(lam) <= 1e-8
    assert np.max(np.abs(w - GIBBS(x, 0.0))) <= 1e-6
    lam1, w1 = ground_state(g, V + 1.0, 0.0, n)
    assert lam1 == pytest.approx(lam + 1.0, abs=1e-8)
    assert np.max(np.abs(w1 - w)) <= 1e-8


def test_ground_state_input_checks(monkeypatch):
    with pytest.raises(ConfigurationError):
        ground_state(ONE, np.zeros(32), 0.0, 32)
    with pytest.raises(ConfigurationError):
        ground_state(ONE, np.zeros(10), 0.0, 64)
    flip = np.ones(64)
    flip[:5] = -1.0
    monkeypatch.setattr(schr, "smallest_eigenpair", lambda op, opts=None: (0.0, flip))
    with pytest.raises(NumericalError):
        ground_state(ONE, np.zeros(64), 0.0, 64)


# -- factorization and gaps --------------------------------------------------------

def test_factorization_exact_for_unit_omega():
    assert factorization_check(family(omega=ONE), 0.25) <= 1e-13
    assert factorization_check(family("analytic", omega=ONE), 0.25) <= 1e-13


def test_factorization_exact_on_discrete_path():
    assert factorization_check(family(), 0.25) <= 1e-12
    assert factorization_check(family(omega=CoefficientField("exp-gibbs", (0.5, 0.3))), 0.5) <= 1e-12


def test_analytic_factorization_second_order():
    disc = [factorization_check(family("analytic", n1=n, n2=16), 0.25) for n in (128, 256)]
    slope = math.log2(disc[0] / disc[1])
    assert slope == pytest.approx(2.0, abs=0.3)


def test_unit_omega_constant_coefficients_gap():
    opts = SolveOptions(rel_tol=1e-10)
    est = schrodinger_resolvent_gap(family(g=ONE, omega=ONE), 0.25, opts)
    assert est.value <= 10 * opts.rel_tol


def test_unit_omega_reduces_to_plain_gap():
    from types import SimpleNamespace
    scn = family(omega=ONE)
    opts = SolveOptions(rel_tol=1e-12)
    a = schrodinger_resolvent_gap(scn, 0.25, opts, power_tol=1e-10).value
    plain = SimpleNamespace(g1=COS, g2=COS, Q=CoefficientField("constant", (scn.lam,)),
                            n1=64, n2=16, period_x2=1.0)
    b = resolvent_gap(plain, 0.25, opts, power_tol=1e-10).value
    assert a == pytest.approx(b, abs=1e-8)


def test_smallest_gap_matches_dense_oracle():
    scn = family(lam=0.5 / GIBBS(0.5, 0.0) ** 2)
    est = schrodinger_resolvent_gap(scn, 0.25, SolveOptions(rel_tol=1e-12), power_tol=1e-10)
    assert est.value <= DENSE_SCHRODINGER_GAP * (1 + 1e-6)
    assert est.value == pytest.approx(DENSE_SCHRODINGER_GAP, rel=1e-4)


def test_discrete_effective_uses_discrete_means():
    ops = schrodinger_operators(family(), 0.25)
    wx = ops.A.wx
    np.testing.assert_allclose(ops.A0.wx[0], 1 / np.mean(1 / wx, axis=0), rtol=1e-14)


# -- properties --------------------------------------------------------------

omegas = st.builds(lambda s0, s1: CoefficientField("exp-gibbs", (s0, s1)),
                   st.floats(-1.0, 1.0), st.floats(-0.5, 0.5))
gts = st.builds(lambda a, b: CoefficientField("separable-product", (3.0, a, b)),
                st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))


@settings(max_examples=25)
@given(gts, omegas, st.floats(0.0, 0.99))
def test_ground_state_positive_with_null_residual(g, omega, x2):
    n = 128
    V, _ = potentials_from_ground_state(g, g, omega)
    lam, w = ground_state(g, V, x2, n)
    assert np.min(w) > 0
    grid = TorusGrid(n)
    x, xh = grid.x1(), grid.x1(half=True)
    wx = g(xh, x2) / grid.h1**2
    Hw = wx * (w - np.roll(w, -1)) + np.roll(wx, 1) * (w - np.roll(w, 1)) + (V(x, x2) - lam) * w
    assert grid.norm(Hw) <= 1e-8


@settings(max_examples=25)
@given(gts, omegas)
def test_bound_transfer(g, omega):
    data = make_factorization(g, g, omega)
    scn = SchrodingerScenario(data, default_lambda(data), 64, 16)
    X1, X2 = sampling_points(1.0, 64)
    q = scn.q_lambda()(X1, X2)
    assert np.min(q) >= scn.margin - 1e-12 and scn.margin > 0


@settings(max_examples=10)
@given(omegas)
def test_potential_paths_agree_to_second_order(omega):
    V, _ = potentials_from_ground_state(COS, COS, omega)
    errs = []
    for n in (64, 128, 256):
        x = np.arange(n) / n
        errs.append(np.max(np.abs(discrete_potential_1d(COS, omega, 0.3, n) - V(x, 0.3))))
    if errs[0] > 1e-10:
        slopes = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
        assert np.all(slopes > 1.8)
