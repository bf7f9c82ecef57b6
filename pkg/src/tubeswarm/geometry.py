"""Planar geometry of the trapezoid virtual tube.

The tube is a convex quadrilateral with two parallel bases: the entrance
[p_l0, p_r0] and the finishing line [p_l1, p_r1].  The legs [p_l0, p_l1]
and [p_r0, p_r1] are the left and right boundaries.  All operations here
are pure and the tube object is immutable after construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousRegion, DegenerateTube

Vec2 = np.ndarray  # shape (2,), float64

_PARALLEL_TOL = 1e-9


def vec2(x, y) -> Vec2:
    v = np.array([float(x), float(y)])
    if not np.all(np.isfinite(v)):
        raise ValueError("vec2 components must be finite")
    return v


def unit(v: Vec2) -> Vec2:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize zero vector")
    return v / n


def perp(v: Vec2) -> Vec2:
    """Rotate v by +90 degrees."""
    return np.array([-v[1], v[0]])


def cross2(a: Vec2, b: Vec2) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


class TubeRegion(enum.Enum):
    MIDDLE = "middle"
    LEFT = "left"
    RIGHT = "right"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class Obstacle:
    """Static disc obstacle."""

    center: Vec2
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if not np.all(np.isfinite(self.center)):
            raise ValueError("obstacle center must be finite")
        if not self.radius > 0.0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class TrapezoidTube:
    """Trapezoid corridor with derived unit vectors.

    t_c points downstream (toward the finishing line), t_l and t_r run
    along the legs from entrance to finish, n_l and n_r are the inward
    leg normals and n_c runs along the finishing line from left to right.
    """

    p_l0: Vec2
    p_l1: Vec2
    p_r0: Vec2
    p_r1: Vec2
    k_t: float
    t_c: Vec2 = field(init=False)
    t_l: Vec2 = field(init=False)
    t_r: Vec2 = field(init=False)
    n_c: Vec2 = field(init=False)
    n_l: Vec2 = field(init=False)
    n_r: Vec2 = field(init=False)

    def __post_init__(self):
        for name in ("p_l0", "p_l1", "p_r0", "p_r1"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
            if getattr(self, name).shape != (2,) or not np.all(np.isfinite(getattr(self, name))):
                raise DegenerateTube(f"vertex {name} must be a finite 2-vector")
        if not self.k_t >= 1.0:
            raise DegenerateTube(f"k_t must be >= 1, got {self.k_t}")

        leg_l = self.p_l1 - self.p_l0
        leg_r = self.p_r1 - self.p_r0
        base0 = self.p_r0 - self.p_l0
        base1 = self.p_r1 - self.p_l1
        for v, what in ((leg_l, "left leg"), (leg_r, "right leg"),
                        (base0, "entrance base"), (base1, "finishing line")):
            if np.linalg.norm(v) == 0.0:
                raise DegenerateTube(f"zero-length {what}")
        scale = np.linalg.norm(base0) * np.linalg.norm(base1)
        if abs(cross2(base0, base1)) > _PARALLEL_TOL * scale:
            raise DegenerateTube("bases are not parallel")

        # Shoelace area of the polygon p_l0 -> p_r0 -> p_r1 -> p_l1.
        d1 = self.p_r1 - self.p_l0
        area = 0.5 * abs(cross2(base0, d1) + cross2(d1, leg_l))
        diam = max(np.linalg.norm(self.p_l1 - self.p_r0), np.linalg.norm(self.p_r1 - self.p_l0))
        if area < 1e-12 * diam * diam:
            raise DegenerateTube("tube has zero area")

        n_c = unit(self.p_r1 - self.p_l1)
        t_c = perp(n_c)
        if float(t_c @ (self.p_r1 - self.p_r0)) < 0.0:
            t_c = -t_c
        t_l = unit(leg_l)
        t_r = unit(leg_r)
        if float(t_l @ t_c) <= 0.0 or float(t_r @ t_c) <= 0.0:
            raise DegenerateTube("legs must advance toward the finishing line")

        g = 0.25 * (self.p_l0 + self.p_l1 + self.p_r0 + self.p_r1)
        n_l = perp(t_l)
        if float(n_l @ (g - self.p_l1)) < 0.0:
            n_l = -n_l
        n_r = perp(t_r)
        if float(n_r @ (g - self.p_r1)) < 0.0:
            n_r = -n_r

        for name, v in (("t_c", t_c), ("t_l", t_l), ("t_r", t_r),
                        ("n_c", n_c), ("n_l", n_l), ("n_r", n_r)):
            object.__setattr__(self, name, v)

    @property
    def length(self) -> float:
        """Extent along t_c between the two bases."""
        return float(self.t_c @ (self.p_r1 - self.p_r0))

    @property
    def vertices(self) -> np.ndarray:
        """Corners in boundary order p_l0, p_r0, p_r1, p_l1, shape (4, 2)."""
        return np.stack([self.p_l0, self.p_r0, self.p_r1, self.p_l1])

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None] - v[None, :], axis=-1)))


def build_tube(p_l0, p_l1, p_r0, p_r1, k_t: float = 1.0) -> TrapezoidTube:
    """Construct a tube from its four vertices, validating all invariants."""
    return TrapezoidTube(p_l0=np.asarray(p_l0, dtype=float),
                         p_l1=np.asarray(p_l1, dtype=float),
                         p_r0=np.asarray(p_r0, dtype=float),
                         p_r1=np.asarray(p_r1, dtype=float),
                         k_t=float(k_t))


def dist_left(tube: TrapezoidTube, x) -> float | np.ndarray:
    """Signed distance to the left boundary, >= 0 inside the tube.

    Outside points get the signed value so diagnostics can report
    penetration depth.
    """
    x = np.asarray(x, dtype=float)
    d = (x - tube.p_l1) @ tube.n_l
    return float(d) if x.ndim == 1 else d


def dist_right(tube: TrapezoidTube, x) -> float | np.ndarray:
    """Signed distance to the right boundary, >= 0 inside the tube."""
    x = np.asarray(x, dtype=float)
    d = (x - tube.p_r1) @ tube.n_r
    return float(d) if x.ndim == 1 else d


def along_coord(tube: TrapezoidTube, x) -> float | np.ndarray:
    """Coordinate along t_c measured from the entrance base."""
    x = np.asarray(x, dtype=float)
    s = (x - tube.p_r0) @ tube.t_c
    return float(s) if x.ndim == 1 else s


def contains_many(tube: TrapezoidTube, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """Vectorized membership test for an (N, 2) array of points."""
    pts = np.asarray(pts, dtype=float)
    dl = (pts - tube.p_l1) @ tube.n_l
    dr = (pts - tube.p_r1) @ tube.n_r
    s1 = -((pts - tube.p_r1) @ tube.t_c)
    s0 = (pts - tube.p_r0) @ tube.t_c
    return (dl >= -tol) & (dr >= -tol) & (s1 >= -tol) & (s0 >= -tol)


def contains(tube: TrapezoidTube, x) -> bool:
    """True iff all four half-plane inequalities hold (boundary included)."""
    return bool(contains_many(tube, np.asarray(x, dtype=float)[None, :])[0])


def left_active(tube: TrapezoidTube) -> bool:
    """Left area is nonempty only when the left leg converges downstream."""
    return float(tube.t_c @ tube.n_l) < 0.0


def right_active(tube: TrapezoidTube) -> bool:
    return float(tube.t_c @ tube.n_r) < 0.0


def classify(tube: TrapezoidTube, x, r_a: float) -> TubeRegion:
    """Assign a point to the middle, left or right area of the tube."""
    if not contains(tube, x):
        return TubeRegion.OUTSIDE
    band = tube.k_t * r_a
    in_left = left_active(tube) and dist_left(tube, x) < band
    in_right = right_active(tube) and dist_right(tube, x) < band
    if in_left and in_right:
        raise AmbiguousRegion(
            f"point {np.asarray(x)} is in both the left and right areas; "
            "tube too narrow for the chosen k_t * r_a")
    if in_left:
        return TubeRegion.LEFT
    if in_right:
        return TubeRegion.RIGHT
    return TubeRegion.MIDDLE


def finishing_reached(tube: TrapezoidTube, p, eps_0: float) -> bool:
    """True once the point is within eps_0 of the finishing line."""
    if not eps_0 > 0.0:
        raise ValueError("eps_0 must be positive")
    p = np.asarray(p, dtype=float)
    return float(-tube.t_c @ (p - tube.p_r1)) <= eps_0


def _region_candidates(tube: TrapezoidTube) -> np.ndarray:
    """Vertices plus crossings of the d_l == d_r line with the edges.

    min/max of the affine distances over the tube are attained on this
    finite set, so the area emptiness tests below are exact.
    """
    verts = tube.vertices
    pts = [verts[i] for i in range(4)]
    f = dist_left(tube, verts) - dist_right(tube, verts)
    for i in range(4):
        j = (i + 1) % 4
        if f[i] * f[j] < 0.0:
            t = f[i] / (f[i] - f[j])
            pts.append(verts[i] + t * (verts[j] - verts[i]))
    return np.stack(pts)


def assumption3_check(tube: TrapezoidTube, r_a: float) -> bool:
    """Tube long and wide enough for one agent.

    Requires disjoint left/right areas, a nonempty middle area, and a
    length along t_c greater than 2 * r_a.  Decided analytically from the
    affine boundary distances.
    """
    if not tube.length > 2.0 * r_a:
        return False
    band = tube.k_t * r_a
    cands = _region_candidates(tube)
    dl = dist_left(tube, cands)
    dr = dist_right(tube, cands)
    la, ra = left_active(tube), right_active(tube)
    if la and ra:
        middle_ok = float(np.max(np.minimum(dl, dr))) >= band
        disjoint = float(np.min(np.maximum(dl, dr))) >= band
        return middle_ok and disjoint
    if la:
        return float(np.max(dl)) >= band
    if ra:
        return float(np.max(dr)) >= band
    return True
