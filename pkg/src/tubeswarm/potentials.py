"""Scalar building blocks of the vector field.

Saturation, the two smooth transition functions, the nominal barrier with
its analytic derivative, and the single-panel repulsive potential with a
fixed-order Gauss-Legendre quadrature.  Everything here accepts scalars
or numpy arrays and broadcasts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInterval, LogDomainViolation, NonpositiveInput
from .geometry import Vec2

# Joint abscissae of the circular-arc blend in s().
_X2_COEF = 1.0 / np.tan(np.deg2rad(67.5))   # = sqrt(2) - 1
_X1_COEF = np.sin(np.deg2rad(45.0))

# Guard below which the log kernel is considered singular.
DELTA_LOG = 1e-6

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def sat(x, a: float):
    """Clip a vector (or an (N, 2) batch) to norm a, preserving direction."""
    if not a > 0.0:
        raise ValueError("saturation bound must be positive")
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    scale = np.where(n > a, a / np.where(n > 0.0, n, 1.0), 1.0)
    return x * scale


def kappa(x, a: float) -> float:
    """Scaling factor applied by sat; 1 for short vectors, a/||x|| beyond."""
    if not a > 0.0:
        raise ValueError("saturation bound must be positive")
    n = float(np.linalg.norm(x))
    return 1.0 if n <= a else a / n


def sigma(x, d1: float, d2: float):
    """Cubic smoothstep from 1 (x <= d1) down to 0 (x >= d2), C1 at both joints."""
    if not d1 < d2:
        raise InvalidInterval(f"need d1 < d2, got d1={d1}, d2={d2}")
    x = np.asarray(x, dtype=float)
    den = (d1 - d2) ** 3
    a, b = -2.0 / den, 3.0 * (d1 + d2) / den
    c, d = -6.0 * d1 * d2 / den, d2 ** 2 * (3.0 * d1 - d2) / den
    mid = ((a * x + b) * x + c) * x + d
    out = np.where(x <= d1, 1.0, np.where(x >= d2, 0.0, mid))
    return out if out.ndim else float(out)


def sigma_deriv(x, d1: float, d2: float):
    """Analytic derivative of sigma; zero on both plateaus."""
    if not d1 < d2:
        raise InvalidInterval(f"need d1 < d2, got d1={d1}, d2={d2}")
    x = np.asarray(x, dtype=float)
    den = (d1 - d2) ** 3
    a, b, c = -2.0 / den, 3.0 * (d1 + d2) / den, -6.0 * d1 * d2 / den
    mid = (3.0 * a * x + 2.0 * b) * x + c
    out = np.where((x <= d1) | (x >= d2), 0.0, mid)
    return out if out.ndim else float(out)


def s_fun(x, eps_s: float):
    """Identity for small x, 1 for large x, circular-arc blend between."""
    if not eps_s > 0.0:
        raise ValueError("eps_s must be positive")
    x = np.asarray(x, dtype=float)
    x2 = 1.0 + _X2_COEF * eps_s
    x1 = x2 - _X1_COEF * eps_s
    gap = np.clip(eps_s ** 2 - (x - x2) ** 2, 0.0, None)
    arc = (1.0 - eps_s) + np.sqrt(gap)
    out = np.where(x <= x1, x, np.where(x >= x2, 1.0, arc))
    return out if out.ndim else float(out)


def s_fun_deriv(x, eps_s: float):
    """Derivative of s; taken as 0 at the arc/plateau joint x2."""
    if not eps_s > 0.0:
        raise ValueError("eps_s must be positive")
    x = np.asarray(x, dtype=float)
    x2 = 1.0 + _X2_COEF * eps_s
    x1 = x2 - _X1_COEF * eps_s
    gap = eps_s ** 2 - (x - x2) ** 2
    safe = np.sqrt(np.where(gap > 0.0, gap, 1.0))
    arc = np.where(gap > 0.0, -(x - x2) / safe, 0.0)
    out = np.where(x <= x1, 1.0, np.where(x >= x2, 0.0, arc))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BarrierParams:
    """Arguments of the nominal barrier: gain, thresholds and epsilons."""

    k: float
    d1: float
    d2: float
    eps: float
    eps_s: float

    def __post_init__(self):
        if not (self.k > 0.0 and self.eps > 0.0 and self.eps_s > 0.0):
            raise ValueError("k, eps and eps_s must be positive")
        if not 0.0 < self.d1 < self.d2:
            raise InvalidInterval(f"need 0 < d1 < d2, got d1={self.d1}, d2={self.d2}")
        x2 = 1.0 + _X2_COEF * self.eps_s
        if not x2 - _X1_COEF * self.eps_s > 0.0:
            raise ValueError("eps_s too large: the blend interval leaves (0, inf)")


def _denominator(x, p: BarrierParams):
    return (1.0 + p.eps) * x - p.d1 * s_fun(x / p.d1, p.eps_s)


def v_n(x, p: BarrierParams):
    """Nominal barrier: large near x = 0, identically 0 beyond d2."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise NonpositiveInput("barrier defined for x > 0 only")
    out = np.where(x >= p.d2, 0.0, p.k * sigma(x, p.d1, p.d2) / _denominator(x, p))
    return out if out.ndim else float(out)


def dv_n_dx(x, p: BarrierParams):
    """Analytic derivative of v_n; non-positive everywhere, 0 beyond d2."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise NonpositiveInput("barrier defined for x > 0 only")
    g = _denominator(x, p)
    dg = (1.0 + p.eps) - s_fun_deriv(x / p.d1, p.eps_s)
    num = sigma_deriv(x, p.d1, p.d2) * g - sigma(x, p.d1, p.d2) * dg
    out = np.where(x >= p.d2, 0.0, p.k * num / g ** 2)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Panel:
    """Line segment emitting a logarithmic repulsive potential."""

    a: Vec2
    b: Vec2
    r: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if np.array_equal(self.a, self.b):
            raise ValueError("panel endpoints must differ")
        if self.r < 0.0:
            raise ValueError("threshold distance must be non-negative")

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.b - self.a))


def segment_distance(panel: Panel, p) -> float | np.ndarray:
    """Distance from p (or an (N, 2) batch) to the closest segment point."""
    p = np.asarray(p, dtype=float)
    ab = panel.b - panel.a
    t = np.clip((p - panel.a) @ ab / (ab @ ab), 0.0, 1.0)
    closest = panel.a + np.multiply.outer(t, ab)
    d = np.linalg.norm(p - closest, axis=-1)
    return float(d) if p.ndim == 1 else d


def _quad_points(panel: Panel):
    half = 0.5 * panel.length
    xs = half * (_GL_NODES + 1.0)                     # arc length in [0, L]
    q = panel.a + np.multiply.outer(xs / panel.length, panel.b - panel.a)
    return q, _GL_WEIGHTS * half


def _check_domain(panel: Panel, p):
    d = segment_distance(panel, p)
    if np.any(np.asarray(d) - panel.r <= DELTA_LOG):
        raise LogDomainViolation(
            f"point within {panel.r} + {DELTA_LOG} of panel "
            f"[{panel.a}, {panel.b}]")


def panel_phi(panel: Panel, p) -> float | np.ndarray:
    """Repulsive potential of the panel at p, by 32-node Gauss-Legendre."""
    p = np.asarray(p, dtype=float)
    _check_domain(panel, p)
    q, w = _quad_points(panel)
    diff = p[..., None, :] - q                         # (..., 32, 2)
    d = np.linalg.norm(diff, axis=-1)
    out = np.log(d - panel.r) @ w
    return float(out) if p.ndim == 1 else out


def panel_grad(panel: Panel, p) -> np.ndarray:
    """Gradient of panel_phi at p, same quadrature nodes as the potential."""
    p = np.asarray(p, dtype=float)
    _check_domain(panel, p)
    q, w = _quad_points(panel)
    diff = p[..., None, :] - q
    d = np.linalg.norm(diff, axis=-1)
    kern = w / (d * (d - panel.r))
    return np.einsum("...n,...nd->...d", kern, diff)
