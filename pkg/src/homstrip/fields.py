"""Closed-form coefficient fields, 1-periodic in x1, and their hypothesis constants.

Every field is evaluated as ``scale * base(x1 mod 1, x2 mod period_x2)``.
Families and their parameter lists:

``constant``            ``[c]``
``x1-cosine``           ``[a, b]``            a + b cos(2 pi x1)
``two-phase``           ``[v0, v1, theta]``   v0 on [0, theta), v1 on [theta, 1); theta defaults to 1/2
``separable-product``   ``[a, b, c, d, phi]`` a + b sin(2 pi z) + (c + d cos(2 pi (z - phi))) cos(2 pi x1)
``exp-gibbs``           ``[s0, s1]``          exp(s cos 2 pi x1) / sqrt(I0(2 s)),  s = s0 + s1 sin(2 pi z)
``tabulated-1d-profile`` ``[v_0, ..., v_{n-1}]`` periodic linear interpolation of values at x1 = i/n

Here ``z = x2 / period_x2``; missing trailing parameters default to 0 (except theta).
The ``exp-gibbs`` profile is normalized so that its square has unit x1-mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .errors import ConfigurationError, HypothesisViolation

TWO_PI = 2.0 * math.pi

FAMILIES = (
    "constant",
    "x1-cosine",
    "two-phase",
    "separable-product",
    "exp-gibbs",
    "tabulated-1d-profile",
)

_NPARAMS = {
    "constant": (1, 1),
    "x1-cosine": (2, 2),
    "two-phase": (2, 3),
    "separable-product": (1, 5),
    "exp-gibbs": (1, 2),
    "tabulated-1d-profile": (4, None),
}


def _bessel_ratio(u):
    """I1(u)/I0(u), stable for large |u|."""
    return special.i1e(u) / special.i0e(u)


def _bessel_ratio_prime(u):
    # d/du (I1/I0) = 1 - r/u - r^2, with limit 1/2 at u = 0
    u = np.asarray(u, dtype=float)
    r = _bessel_ratio(u)
    small = np.abs(u) < 1e-6
    safe = np.where(small, 1.0, u)
    out = 1.0 - r / safe - r * r
    return np.where(small, 0.5 - 3.0 * u * u / 16.0, out)


@dataclass(frozen=True)
class CoefficientField:
    """Immutable closed-form scalar field on the plane."""

    family: str
    params: tuple = ()
    period_x2: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown field family {self.family!r}")
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        lo, hi = _NPARAMS[self.family]
        if len(params) < lo or (hi is not None and len(params) > hi):
            raise ConfigurationError(
                f"family {self.family!r} takes {lo}..{hi or 'n'} params, got {len(params)}"
            )
        if not all(math.isfinite(p) for p in params):
            raise ConfigurationError(f"non-finite parameter in {self.family!r}: {params}")
        if not (self.period_x2 > 0 and math.isfinite(self.period_x2)):
            raise ConfigurationError(f"period_x2 must be positive, got {self.period_x2}")
        if not math.isfinite(self.scale):
            raise ConfigurationError("scale must be finite")
        if self.family == "two-phase" and len(params) == 3 and not 0.0 < params[2] < 1.0:
            raise ConfigurationError("two-phase interface theta must lie in (0, 1)")

    # -- structure -----------------------------------------------------------

    def _p(self, i, default=0.0):
        return self.params[i] if i < len(self.params) else default

    @property
    def x1_independent(self) -> bool:
        f = self.family
        if f == "constant":
            return True
        if f == "x1-cosine":
            return self.params[1] == 0.0
        if f == "two-phase":
            return self.params[0] == self.params[1]
        if f == "separable-product":
            return self._p(2) == 0.0 and self._p(3) == 0.0
        if f == "exp-gibbs":
            return self._p(0) == 0.0 and self._p(1) == 0.0
        return bool(np.all(np.asarray(self.params) == self.params[0]))

    @property
    def x2_independent(self) -> bool:
        if self.family == "separable-product":
            return self._p(1) == 0.0 and self._p(3) == 0.0
        if self.family == "exp-gibbs":
            return self._p(1) == 0.0
        return True

    @property
    def jumps(self) -> tuple:
        """Jump abscissae in [0, 1) of a piecewise field (empty for smooth ones)."""
        if self.family == "two-phase" and not self.x1_independent:
            return (0.0, self._p(2, 0.5))
        return ()

    def scaled(self, sigma: float) -> "CoefficientField":
        return CoefficientField(self.family, self.params, self.period_x2, self.scale * sigma)

    # -- evaluation ----------------------------------------------------------

    def _reduce(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return np.mod(x1, 1.0), np.mod(x2, self.period_x2) / self.period_x2

    def __call__(self, x1, x2):
        return eval_field(self, x1, x2)

    def _base(self, y, z):
        f = self.family
        if f == "constant":
            return np.full(np.broadcast(y, z).shape, self.params[0])
        if f == "x1-cosine":
            a, b = self.params
            return a + b * np.cos(TWO_PI * y) + 0.0 * z
        if f == "two-phase":
            v0, v1 = self.params[:2]
            theta = self._p(2, 0.5)
            out = np.where(y < theta, v0, v1)
            on_jump = (y == theta) | (y == 0.0)
            out = np.where(on_jump, 0.5 * (v0 + v1), out)
            return out + 0.0 * z
        if f == "separable-product":
            a, b, c, d, phi = (self._p(i) for i in range(5))
            amp = c + d * np.cos(TWO_PI * (z - phi))
            return a + b * np.sin(TWO_PI * z) + amp * np.cos(TWO_PI * y)
        if f == "exp-gibbs":
            s = self._p(0) + self._p(1) * np.sin(TWO_PI * z)
            return np.exp(s * np.cos(TWO_PI * y) - 0.5 * _log_i0(2.0 * s))
        # tabulated-1d-profile
        vals = np.asarray(self.params)
        n = vals.size
        t = y * n
        i0 = np.floor(t).astype(int) % n
        frac = t - np.floor(t)
        return (1.0 - frac) * vals[i0] + frac * vals[(i0 + 1) % n] + 0.0 * z

    def line_evaluator(self, x2):
        """Return fn(x1, idx) evaluating the field on the lines x2[idx].

        The x2-dependent factors are computed once per line, which is what
        makes batched x1-quadrature cheap. ``x1`` must already lie in [0, 1].
        """
        z = np.mod(np.asarray(x2, dtype=float), self.period_x2) / self.period_x2
        f, sc = self.family, self.scale
        if f == "separable-product":
            a, b, c, d, phi = (self._p(i) for i in range(5))
            base = sc * (a + b * np.sin(TWO_PI * z))
            amp = sc * (c + d * np.cos(TWO_PI * (z - phi)))
            return lambda y, idx: base[idx] + amp[idx] * np.cos(TWO_PI * y)
        if f == "exp-gibbs":
            s = self._p(0) + self._p(1) * np.sin(TWO_PI * z)
            shift = 0.5 * _log_i0(2.0 * s) - math.log(abs(sc)) if sc else None
            if shift is None:
                return lambda y, idx: np.zeros(np.shape(y))
            sign = math.copysign(1.0, sc)
            return lambda y, idx: sign * np.exp(s[idx] * np.cos(TWO_PI * y) - shift[idx])
        return lambda y, idx: sc * self._base(y, z[idx])

    def derivative(self, x1, x2, order=(0, 1)):
        """Analytic partial derivative of order (d/dx1)^p (d/dx2)^q, p or q zero."""
        p, q = order
        if p and q:
            raise ConfigurationError("mixed derivatives are not provided")
        y, z = self._reduce(x1, x2)
        L = self.period_x2
        f = self.family
        zero = np.zeros(np.broadcast(y, z).shape)
        if (p, q) == (0, 0):
            out = self._base(y, z)
        elif f in ("constant", "two-phase") or (q and f in ("x1-cosine", "tabulated-1d-profile")):
            out = zero
        elif f == "x1-cosine":
            b = self.params[1]
            if p == 1:
                out = -TWO_PI * b * np.sin(TWO_PI * y) + zero
            elif p == 2:
                out = -TWO_PI**2 * b * np.cos(TWO_PI * y) + zero
            else:
                raise ConfigurationError(f"derivative order {order} unsupported")
        elif f == "separable-product":
            a, b, c, d, phi = (self._p(i) for i in range(5))
            cy, sy = np.cos(TWO_PI * y), np.sin(TWO_PI * y)
            w = TWO_PI / L
            if p == 1:
                out = -TWO_PI * (c + d * np.cos(TWO_PI * (z - phi))) * sy
            elif p == 2:
                out = -TWO_PI**2 * (c + d * np.cos(TWO_PI * (z - phi))) * cy
            elif q == 1:
                out = w * (b * np.cos(TWO_PI * z) - d * np.sin(TWO_PI * (z - phi)) * cy)
            elif q == 2:
                out = -w * w * (b * np.sin(TWO_PI * z) + d * np.cos(TWO_PI * (z - phi)) * cy)
            else:
                raise ConfigurationError(f"derivative order {order} unsupported")
        elif f == "exp-gibbs":
            out = self._gibbs_derivative(y, z, p, q)
        else:  # tabulated, x1 derivatives
            if p != 1:
                raise ConfigurationError("tabulated profile only provides a first x1-derivative")
            vals = np.asarray(self.params)
            n = vals.size
            i0 = np.floor(y * n).astype(int) % n
            out = (vals[(i0 + 1) % n] - vals[i0]) * n + zero
        return self.scale * out

    def _gibbs_derivative(self, y, z, p, q):
        s0, s1 = self._p(0), self._p(1)
        L = self.period_x2
        s = s0 + s1 * np.sin(TWO_PI * z)
        C, S = np.cos(TWO_PI * y), np.sin(TWO_PI * y)
        om = np.exp(s * C - 0.5 * _log_i0(2.0 * s))
        if p == 1:
            return -TWO_PI * s * S * om
        if p == 2:
            return ((TWO_PI * s * S) ** 2 - TWO_PI**2 * s * C) * om
        w = TWO_PI / L
        ds = s1 * w * np.cos(TWO_PI * z)
        dds = -s1 * w * w * np.sin(TWO_PI * z)
        lp = _bessel_ratio(2.0 * s)
        lpp = 2.0 * _bessel_ratio_prime(2.0 * s)
        dlog = ds * (C - lp)
        if q == 1:
            return dlog * om
        if q == 2:
            return (dlog**2 + dds * (C - lp) - ds * ds * lpp) * om
        raise ConfigurationError(f"derivative order {(p, q)} unsupported")


def _log_i0(u):
    u = np.asarray(u, dtype=float)
    return np.log(special.i0e(u)) + np.abs(u)


def eval_field(field: CoefficientField, x1, x2):
    """Evaluate a field; returns a float for scalar input, an array otherwise."""
    if not isinstance(field, CoefficientField):
        raise ConfigurationError(f"not a coefficient field: {field!r}")
    y, z = field._reduce(x1, x2)
    out = field.scale * field._base(y, z)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class DerivedField:
    """A field defined by an arbitrary vectorized callable (products, potentials)."""

    fn: Callable
    name: str = "derived"
    jumps: tuple = ()
    x1_independent: bool = False
    x2_independent: bool = False

    def __call__(self, x1, x2):
        out = np.asarray(self.fn(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)))
        return float(out) if out.ndim == 0 else out


def partial_x2(f, x1, x2, step=1e-5):
    """Analytic x2-derivative when the field provides one, central difference otherwise."""
    if isinstance(f, CoefficientField):
        return f.derivative(x1, x2, (0, 1))
    x2 = np.asarray(x2, dtype=float)
    return (np.asarray(f(x1, x2 + step)) - np.asarray(f(x1, x2 - step))) / (2.0 * step)


@dataclass(frozen=True)
class HypothesisConstants:
    c0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    delta: float = field(init=False)
    t0: float = field(init=False)
    d0: float = field(init=False)

    def __post_init__(self):
        if not (0 < self.c0 <= self.c1):
            raise HypothesisViolation(f"need 0 < c0 <= c1, got c0={self.c0}, c1={self.c1}")
        if not (0 < self.c3 <= self.c4):
            raise HypothesisViolation(f"need 0 < c3 <= c4, got c3={self.c3}, c4={self.c4}")
        object.__setattr__(self, "delta", math.pi**2 * self.c0 / 4.0)
        object.__setattr__(self, "d0", 4.0 * math.pi**2 * self.c0)
        object.__setattr__(self, "t0", 0.5 * math.pi * math.sqrt(self.c0 / self.c1))


def _dyadic(n: float) -> int:
    return 1 << max(0, math.ceil(math.log2(max(n, 1.0))))


def sampling_points(period_x2: float, density: int):
    """Nested dyadic sample lattice: refining the density only adds points."""
    n1 = _dyadic(density)
    n2 = _dyadic(density * period_x2)
    x1 = np.arange(n1) / n1
    x2 = (np.arange(n2) * period_x2) / n2
    return np.meshgrid(x1, x2, indexing="ij")


def _check_positive(name, f, X1, X2):
    vals = np.asarray(f(X1, X2), dtype=float)
    if not np.all(np.isfinite(vals)):
        i = np.unravel_index(np.argmin(np.isfinite(vals)), vals.shape)
        raise HypothesisViolation(
            f"{name} is not finite at (x1={X1[i]:.6g}, x2={X2[i]:.6g})",
            field=name, point=(float(X1[i]), float(X2[i])), value=float(vals[i]),
        )
    if np.any(vals <= 0):
        i = np.unravel_index(np.argmin(vals), vals.shape)
        raise HypothesisViolation(
            f"{name} = {vals[i]:.6g} <= 0 at (x1={X1[i]:.6g}, x2={X2[i]:.6g})",
            field=name, point=(float(X1[i]), float(X2[i])), value=float(vals[i]),
        )
    return vals


def validate_hypotheses(g1, g2, Q, sampling: int = 64) -> HypothesisConstants:
    """Sampled bounds c0..c5 for the coefficient triple.

    Lipschitz constants use analytic x2-derivatives where available. Sampled
    extrema are lower bounds for the true sup-type constants.
    """
    if sampling < 64:
        raise ConfigurationError(f"sampling density must be >= 64 per unit, got {sampling}")
    period = getattr(g1, "period_x2", 1.0)
    X1, X2 = sampling_points(period, sampling)
    v1 = _check_positive("g1", g1, X1, X2)
    v2 = _check_positive("g2", g2, X1, X2)
    vq = _check_positive("Q", Q, X1, X2)
    c2 = max(
        float(np.max(np.abs(partial_x2(g1, X1, X2)))),
        float(np.max(np.abs(partial_x2(g2, X1, X2)))),
    )
    c5 = float(np.max(np.abs(partial_x2(Q, X1, X2))))
    return HypothesisConstants(
        c0=float(min(v1.min(), v2.min())),
        c1=float(max(v1.max(), v2.max())),
        c2=c2,
        c3=float(vq.min()),
        c4=float(vq.max()),
        c5=c5,
    )
