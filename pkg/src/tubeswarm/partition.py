"""Obstacle-free decomposition of a tube containing disc obstacles.

Each obstacle disc, inflated by the safety radius, is boxed into a
circumscribed isosceles triangle whose apex points upstream.  Cut lines
parallel to the finishing line through each apex and each triangle base
slice the tube into 3P+1 sub-tubes: a pass-through band before, between
and after the obstacles, plus a left and a right corridor alongside each
triangle.  Agents are routed to the controller of whichever sub-tube
currently holds them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .controller import (ControlParams, Snapshot, commands_many,
                         validate_feasibility)
from .errors import (Assumption3PrimeViolation, NoFeasibleCorridor,
                     ObstacleOnBoundary, ObstacleOutsideTube,
                     OutsideParentTube, OverlappingTriangles,
                     TriangleExceedsTube, TubeSwarmError)
from .geometry import Obstacle, TrapezoidTube, Vec2, build_tube

_BOUNDARY_TOL = 1e-9


@dataclass(frozen=True)
class ObstacleTriangle:
    """Isosceles triangle around an inflated obstacle disc.

    ``p_otl`` is the apex (upstream of the obstacle center along -t_c),
    ``p_otu`` and ``p_otd`` are the base corners on the left and right
    side of the tube axis.  After a Remark-style re-tilt one leg runs
    parallel to the adjacent tube boundary instead.
    """

    p_otl: Vec2
    p_otu: Vec2
    p_otd: Vec2
    obstacle_index: int
    retilted: str = ""        # "", "left" or "right"

    @property
    def vertices(self) -> np.ndarray:
        return np.stack([self.p_otl, self.p_otu, self.p_otd])

    def contains_many(self, pts: np.ndarray, tol: float = 0.0) -> np.ndarray:
        """Closed membership (tol > 0 shrinks, tol < 0 grows)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = self.vertices
        out = np.ones(len(pts), dtype=bool)
        for i in range(3):
            a, b = v[i], v[(i + 1) % 3]
            edge = b - a
            third = v[(i + 2) % 3]
            n = np.array([-edge[1], edge[0]]) / np.linalg.norm(edge)
            if float(n @ (third - a)) < 0.0:
                n = -n
            out &= (pts - a) @ n >= tol
        return out

    def contains(self, p, tol: float = 0.0) -> bool:
        return bool(self.contains_many(np.asarray(p, dtype=float)[None, :], tol)[0])


def sort_obstacles(tube: TrapezoidTube, obstacles, r_s: float) -> list[Obstacle]:
    """Order obstacles upstream to downstream, validating containment."""
    obstacles = list(obstacles)
    for ob in obstacles:
        r_infl = ob.radius + r_s
        margin = min(geo.dist_left(tube, ob.center) - r_infl,
                     geo.dist_right(tube, ob.center) - r_infl,
                     geo.along_coord(tube, ob.center) - r_infl,
                     tube.length - geo.along_coord(tube, ob.center) - r_infl)
        if margin < -_BOUNDARY_TOL:
            raise ObstacleOutsideTube(
                f"inflated obstacle at {ob.center} (radius {r_infl}) "
                "not inside the tube")
        if margin <= _BOUNDARY_TOL:
            raise ObstacleOnBoundary(
                f"inflated obstacle at {ob.center} touches the tube boundary")
    return sorted(obstacles,
                  key=lambda ob: (geo.along_coord(tube, ob.center),
                                  float(tube.n_c @ ob.center)))


def build_triangle(tube: TrapezoidTube, obstacle: Obstacle, r_s: float,
                   beta: float, obstacle_index: int = 0) -> ObstacleTriangle:
    """Circumscribed triangle with apex half-angle beta (radians).

    The inflated disc is the incircle: both legs and the base line are
    tangent to it.
    """
    if not 0.0 < beta < 0.5 * math.pi:
        raise ValueError(f"beta must be in (0, pi/2), got {beta}")
    r_infl = obstacle.radius + r_s
    apex = obstacle.center - (r_infl / math.sin(beta)) * tube.t_c
    base_center = obstacle.center + r_infl * tube.t_c
    half_width = (r_infl / math.sin(beta) + r_infl) * math.tan(beta)
    p_otu = base_center - half_width * tube.n_c
    p_otd = base_center + half_width * tube.n_c
    tri = ObstacleTriangle(p_otl=apex, p_otu=p_otu, p_otd=p_otd,
                           obstacle_index=obstacle_index)
    for v, name in ((apex, "apex"), (p_otu, "left base point"),
                    (p_otd, "right base point")):
        if not geo.contains(tube, v):
            raise TriangleExceedsTube(
                f"{name} of obstacle {obstacle_index} at {v} is outside the tube")
    return tri


@dataclass
class TubePartition:
    """Sub-tube decomposition plus the lookup data for the switch."""

    parent: TrapezoidTube
    obstacles: list[Obstacle]
    triangles: list[ObstacleTriangle]
    sub_tubes: list            # TrapezoidTube or None (empty), length 3P+1
    topology: list             # successor indices per sub-tube
    cut_coords: list           # s at the upstream edge of every band
    band_kinds: list           # ("pass", sub-index) or ("obstacle", k)
    beta: float
    params: ControlParams = None

    @property
    def n_obstacles(self) -> int:
        return len(self.obstacles)

    def band_of(self, s: float) -> int:
        idx = int(np.searchsorted(self.cut_coords, s, side="right")) - 1
        return min(max(idx, 0), len(self.band_kinds) - 1)


def _cut_point_left(tube: TrapezoidTube, s: float) -> Vec2:
    return tube.p_l0 + (s / tube.length) * (tube.p_l1 - tube.p_l0)


def _cut_point_right(tube: TrapezoidTube, s: float) -> Vec2:
    return tube.p_r0 + (s / tube.length) * (tube.p_r1 - tube.p_r0)


def _retilt_triangle(tube: TrapezoidTube, tri: ObstacleTriangle,
                     obstacle: Obstacle, r_s: float, side: str,
                     band_len: float) -> ObstacleTriangle:
    """Make the leg next to a collapsed corridor parallel to that leg of
    the parent, so the surviving corridor keeps its shape."""
    leg_dir = tube.t_l if side == "left" else tube.t_r
    advance = float(tube.t_c @ leg_dir)
    new_pt = tri.p_otl + (band_len / advance) * leg_dir
    if side == "left":
        new_tri = ObstacleTriangle(tri.p_otl, new_pt, tri.p_otd,
                                   tri.obstacle_index, retilted="left")
    else:
        new_tri = ObstacleTriangle(tri.p_otl, tri.p_otu, new_pt,
                                   tri.obstacle_index, retilted="right")
    # the inflated disc must still be inside the modified triangle
    r_infl = obstacle.radius + r_s
    edge = new_pt - tri.p_otl
    n = np.array([-edge[1], edge[0]]) / np.linalg.norm(edge)
    dist = abs(float(n @ (obstacle.center - tri.p_otl)))
    if dist < r_infl:
        raise NoFeasibleCorridor(
            f"re-tilted triangle for obstacle {tri.obstacle_index} no longer "
            f"contains the inflated disc (clearance {dist:.6g} < {r_infl:.6g})")
    return new_tri


def build_partition(tube: TrapezoidTube, obstacles, params: ControlParams,
                    beta: float) -> TubePartition:
    """Slice the tube into 3P+1 obstacle-free sub-tubes.

    Corridors that fail the one-agent test become empty and their
    triangle leg is re-tilted; a failing pass-through band is fatal
    because every agent must traverse it.
    """
    ordered = sort_obstacles(tube, obstacles, params.r_s)
    p_count = len(ordered)
    if p_count == 0:
        return TubePartition(parent=tube, obstacles=[], triangles=[],
                             sub_tubes=[tube], topology=[[]],
                             cut_coords=[0.0], band_kinds=[("pass", 0)],
                             beta=beta, params=params)

    triangles = [build_triangle(tube, ob, params.r_s, beta, k)
                 for k, ob in enumerate(ordered)]
    s_apex = [geo.along_coord(tube, t.p_otl) for t in triangles]
    s_base = [geo.along_coord(tube, t.p_otu) for t in triangles]
    for k in range(p_count - 1):
        if s_base[k] >= s_apex[k + 1]:
            raise OverlappingTriangles(
                f"cut bands of obstacles {k} and {k + 1} overlap along the "
                f"tube axis ({s_base[k]:.6g} >= {s_apex[k + 1]:.6g})")

    sub_tubes: list = [None] * (3 * p_count + 1)
    topology: list = [[] for _ in range(3 * p_count + 1)]
    cut_coords: list = []
    band_kinds: list = []

    def make_pass(lo: float, hi: float, idx: int):
        t = build_tube(_cut_point_left(tube, lo), _cut_point_left(tube, hi),
                       _cut_point_right(tube, lo), _cut_point_right(tube, hi),
                       tube.k_t)
        if not geo.assumption3_check(t, params.r_a):
            raise Assumption3PrimeViolation(
                f"pass-through band [{lo:.6g}, {hi:.6g}] too small to hold "
                "one agent")
        sub_tubes[idx] = t

    edges = [0.0] + [v for k in range(p_count) for v in (s_apex[k], s_base[k])] \
        + [tube.length]
    # pass-through bands
    for k in range(p_count + 1):
        lo, hi = edges[2 * k], edges[2 * k + 1]
        make_pass(lo, hi, 3 * k)
        cut_coords.append(lo)
        band_kinds.append(("pass", 3 * k))
        if k < p_count:
            cut_coords.append(s_apex[k])
            band_kinds.append(("obstacle", k))

    # corridors
    for k in range(p_count):
        lo, hi = s_apex[k], s_base[k]
        tri = triangles[k]

        def corridor(side: str, t: ObstacleTriangle):
            if side == "left":
                return build_tube(_cut_point_left(tube, lo),
                                  _cut_point_left(tube, hi),
                                  t.p_otl, t.p_otu, tube.k_t)
            return build_tube(t.p_otl, t.p_otd,
                              _cut_point_right(tube, lo),
                              _cut_point_right(tube, hi), tube.k_t)

        left_t = corridor("left", tri)
        right_t = corridor("right", tri)
        left_ok = geo.assumption3_check(left_t, params.r_a)
        right_ok = geo.assumption3_check(right_t, params.r_a)
        if not left_ok and not right_ok:
            raise NoFeasibleCorridor(
                f"both corridors of obstacle {k} are too small to pass")
        if not left_ok:
            tri = _retilt_triangle(tube, tri, ordered[k], params.r_s,
                                   "left", hi - lo)
            right_t = corridor("right", tri)
            if not geo.assumption3_check(right_t, params.r_a):
                raise NoFeasibleCorridor(
                    f"surviving right corridor of obstacle {k} fails the "
                    "one-agent test after re-tilt")
            left_t = None
        elif not right_ok:
            tri = _retilt_triangle(tube, tri, ordered[k], params.r_s,
                                   "right", hi - lo)
            left_t = corridor("left", tri)
            if not geo.assumption3_check(left_t, params.r_a):
                raise NoFeasibleCorridor(
                    f"surviving left corridor of obstacle {k} fails the "
                    "one-agent test after re-tilt")
            right_t = None
        triangles[k] = tri
        sub_tubes[3 * k + 1] = left_t
        sub_tubes[3 * k + 2] = right_t

        succ = 3 * (k + 1)
        topology[3 * k] = [i for i, t in ((3 * k + 1, left_t), (3 * k + 2, right_t))
                           if t is not None]
        if left_t is not None:
            topology[3 * k + 1] = [succ]
        if right_t is not None:
            topology[3 * k + 2] = [succ]
    topology[3 * p_count] = []

    return TubePartition(parent=tube, obstacles=ordered, triangles=triangles,
                         sub_tubes=sub_tubes, topology=topology,
                         cut_coords=cut_coords, band_kinds=band_kinds,
                         beta=beta, params=params)


def locate(partition: TubePartition, p, previous: int | None = None):
    """Sub-tube index holding p.

    Points on a cut line resolve downstream; triangle interiors (drift)
    and the three triangle vertices resolve to ``previous``.
    """
    p = np.asarray(p, dtype=float)
    if not geo.contains(partition.parent, p):
        raise OutsideParentTube(f"point {p} outside the parent tube")
    kind, which = partition.band_kinds[
        partition.band_of(geo.along_coord(partition.parent, p))]
    if kind == "pass":
        return which
    tri = partition.triangles[which]
    if any(np.array_equal(p, v) for v in tri.vertices):
        return previous
    for idx in (3 * which + 1, 3 * which + 2):
        sub = partition.sub_tubes[idx]
        if sub is not None and geo.contains(sub, p):
            return idx
    return previous


def locate_many(partition: TubePartition, pts: np.ndarray,
                previous: np.ndarray) -> np.ndarray:
    """Vectorized locate for the simulator's per-step relabeling."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.array(previous, dtype=int, copy=True)
    s = geo.along_coord(partition.parent, pts)
    band = np.clip(np.searchsorted(partition.cut_coords, s, side="right") - 1,
                   0, len(partition.band_kinds) - 1)
    for b, (kind, which) in enumerate(partition.band_kinds):
        mask = band == b
        if not np.any(mask):
            continue
        if kind == "pass":
            out[mask] = which
            continue
        # left assigned last so shared points resolve like the scalar path
        for idx in (3 * which + 2, 3 * which + 1):
            sub = partition.sub_tubes[idx]
            if sub is None:
                continue
            inside = np.zeros(len(pts), dtype=bool)
            inside[mask] = geo.contains_many(sub, pts[mask])
            out[inside] = idx
    return out


def switched_command(partition: TubePartition, snapshot: Snapshot, i: int,
                     params: ControlParams, variant: str = "modified",
                     previous: int | None = None) -> Vec2:
    """Velocity command of agent i under its current sub-tube's controller."""
    idx = locate(partition, snapshot.positions[i], previous)
    if idx is None:
        raise TubeSwarmError(
            f"agent {i} is inside an excised region and has no previous "
            "sub-tube to fall back on")
    sub = partition.sub_tubes[idx]
    from .controller import velocity_command
    return velocity_command(sub, snapshot, i, params, variant)


def validate_partition(partition: TubePartition, params: ControlParams,
                       variant: str = "modified"):
    """Feasibility report for the parent and every non-empty sub-tube."""
    reports = [("parent", validate_feasibility(partition.parent, params, variant))]
    for i, sub in enumerate(partition.sub_tubes):
        if sub is None:
            continue
        name = "parent" if len(partition.sub_tubes) == 1 else f"sub-tube {i}"
        if len(partition.sub_tubes) > 1:
            reports.append((name, validate_feasibility(sub, params, variant)))
    return reports


def partition_dump(partition: TubePartition) -> str:
    """Delimited-text export of sub-tubes, triangles and topology."""
    lines = [f"# partition P={partition.n_obstacles} "
             f"sub_tubes={len(partition.sub_tubes)} beta={partition.beta!r}"]
    lines.append("# subtube index kind p_l0x p_l0y p_l1x p_l1y "
                 "p_r0x p_r0y p_r1x p_r1y")
    kinds = {0: "pass", 1: "left_corridor", 2: "right_corridor"}
    for i, sub in enumerate(partition.sub_tubes):
        kind = "pass" if len(partition.sub_tubes) == 1 else kinds[i % 3]
        if sub is None:
            lines.append(f"subtube {i} {kind} EMPTY")
            continue
        coords = " ".join(f"{c:.9g}" for v in (sub.p_l0, sub.p_l1, sub.p_r0, sub.p_r1)
                          for c in v)
        lines.append(f"subtube {i} {kind} {coords}")
    for k, tri in enumerate(partition.triangles):
        coords = " ".join(f"{c:.9g}" for v in tri.vertices for c in v)
        tag = f" retilted={tri.retilted}" if tri.retilted else ""
        lines.append(f"triangle {k} {coords}{tag}")
    for i, succ in enumerate(partition.topology):
        lines.append(f"topology {i} -> {' '.join(map(str, succ)) if succ else '-'}")
    return "\n".join(lines) + "\n"
