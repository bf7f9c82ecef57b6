"""Distributed vector-field velocity command.

Two controller variants share the inter-agent avoidance term but differ
in the line-approach and tube-keeping terms:

* ``basic``    - region-switched line approach plus panel-integral
  boundary gradients on extended boundaries.
* ``modified`` - smoothly blended line approach plus nominal-barrier
  boundary terms projected onto the tube axis.

All functions are pure in (tube, snapshot, params); batch versions take
an (N, 2) position array and are what the simulator uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry as geo
from .errors import (AmbiguousRegion, CoincidentAgents, DegenerateBlend,
                     DirL2Violation, OutsideTube)
from .geometry import TrapezoidTube, TubeRegion, Vec2
from .potentials import BarrierParams, Panel, dv_n_dx, panel_grad, sat, sigma

VARIANT_BASIC = "basic"
VARIANT_MODIFIED = "modified"

_DIRL2_GRID = 20
_EXT_DOUBLINGS = 3


@dataclass(frozen=True)
class ControlParams:
    """Gains, radii, speeds and epsilons of the controller."""

    v: float
    v_max_prime: float
    v_min: float
    v_max: float
    r_s: float
    r_a: float
    k_t: float = 1.0
    k_2: float = 1.0
    k_3: float = 1.0
    eps_m: float = 1e-6
    eps_t: float = 1e-6
    eps_s: float = 1e-6
    eps_0: float = 0.01
    ext_factor: float = 10.0

    def __post_init__(self):
        vals = [self.v, self.v_max_prime, self.v_min, self.v_max, self.r_s,
                self.r_a, self.k_t, self.k_2, self.k_3, self.eps_m,
                self.eps_t, self.eps_s, self.eps_0, self.ext_factor]
        if not all(math.isfinite(x) for x in vals):
            raise ValueError("control parameters must be finite")

    def basic_violations(self) -> list[str]:
        """Structural parameter problems, reported rather than raised so a
        feasibility report can be produced for a bad file."""
        out = []
        if not self.r_s > 0.0:
            out.append(f"safety radius must be positive (r_s={self.r_s})")
        if not self.r_a > self.r_s:
            out.append(f"avoidance radius must exceed safety radius "
                       f"(r_a={self.r_a}, r_s={self.r_s})")
        if not self.k_t >= 1.0:
            out.append(f"k_t must be >= 1 (k_t={self.k_t})")
        if not self.v > 0.0:
            out.append(f"forward speed must be positive (v={self.v})")
        if not self.v + self.v_max_prime <= self.v_max:
            out.append(f"speed constraint v + v'_max <= v_max violated "
                       f"({self.v} + {self.v_max_prime} > {self.v_max})")
        if not self.v - self.v_max_prime >= self.v_min:
            out.append(f"speed constraint v - v'_max >= v_min violated "
                       f"({self.v} - {self.v_max_prime} < {self.v_min})")
        return out

    def agent_barrier(self) -> BarrierParams:
        return BarrierParams(k=self.k_2, d1=2.0 * self.r_s,
                             d2=self.r_s + self.r_a,
                             eps=self.eps_m, eps_s=self.eps_s)

    def wall_barrier(self) -> BarrierParams:
        return BarrierParams(k=self.k_3, d1=self.r_s, d2=self.r_a,
                             eps=self.eps_t, eps_s=self.eps_s)


@dataclass(frozen=True)
class Snapshot:
    """Frozen positions of all active agents for one control step."""

    positions: np.ndarray          # (M, 2)
    ids: tuple = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        object.__setattr__(self, "positions", pos)
        if not np.all(np.isfinite(pos)):
            raise ValueError("snapshot positions must be finite")
        ids = tuple(range(len(pos))) if self.ids is None else tuple(self.ids)
        if len(set(ids)) != len(ids) or len(ids) != len(pos):
            raise ValueError("snapshot ids must be unique and aligned")
        object.__setattr__(self, "ids", ids)


def neighbors(snapshot: Snapshot, i: int, r_a: float, r_s: float) -> list[int]:
    """Indices of agents whose safety disc meets agent i's avoidance disc."""
    d = np.linalg.norm(snapshot.positions - snapshot.positions[i], axis=1)
    return [j for j in range(len(d)) if j != i and d[j] <= r_a + r_s]


# -- line approaching ------------------------------------------------------

def u1_basic(tube: TrapezoidTube, p_i, v: float, r_a: float) -> Vec2:
    """Constant-norm forward command switched by tube region."""
    region = geo.classify(tube, p_i, r_a)
    if region is TubeRegion.OUTSIDE:
        raise OutsideTube(f"point {np.asarray(p_i)} not in tube")
    tangent = {TubeRegion.MIDDLE: tube.t_c,
               TubeRegion.LEFT: tube.t_l,
               TubeRegion.RIGHT: tube.t_r}[region]
    return v * tangent


def _region_masks(tube: TrapezoidTube, pts: np.ndarray, r_a: float,
                  k_t: float = None):
    band = (tube.k_t if k_t is None else k_t) * r_a
    dl = geo.dist_left(tube, pts)
    dr = geo.dist_right(tube, pts)
    left = geo.left_active(tube) & (dl < band)
    right = geo.right_active(tube) & (dr < band)
    both = left & right
    if np.any(both):
        raise AmbiguousRegion(
            f"{int(np.count_nonzero(both))} point(s) satisfy both the left "
            "and right area criteria")
    return dl, dr, left, right


def u1_modified_many(tube: TrapezoidTube, pts: np.ndarray, v: float,
                     r_a: float, k_t: float = None) -> np.ndarray:
    """Blended line approach for an (N, 2) batch of in-tube points."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    k_t = tube.k_t if k_t is None else k_t
    band_lo, band_hi = r_a, k_t * r_a
    dl, dr, left, right = _region_masks(tube, pts, r_a, k_t)

    out = np.tile(tube.t_c, (len(pts), 1))
    for mask, d, t_side in ((left, dl, tube.t_l), (right, dr, tube.t_r)):
        if not np.any(mask):
            continue
        w = np.asarray(sigma(d[mask], band_lo, band_hi))[:, None]
        blend = w * (t_side - tube.t_c) + tube.t_c
        norms = np.linalg.norm(blend, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise DegenerateBlend("blend vector has zero norm; leg angle >= 90 deg")
        out[mask] = blend / norms
    return v * out


def u1_modified(tube: TrapezoidTube, p_i, v: float, r_a: float,
                k_t: float = None) -> Vec2:
    """Single-point version of the blended line approach."""
    if not geo.contains(tube, p_i):
        raise OutsideTube(f"point {np.asarray(p_i)} not in tube")
    return u1_modified_many(tube, np.asarray(p_i, dtype=float)[None, :],
                            v, r_a, k_t)[0]


# -- inter-agent avoidance -------------------------------------------------

def u2_all(positions: np.ndarray, params: ControlParams,
           diff: np.ndarray = None, dist: np.ndarray = None) -> np.ndarray:
    """Repulsion from all neighboring agents, for every agent at once.

    ``diff``/``dist`` may be passed in when the caller already computed
    the pairwise geometry (the simulator shares them with its metrics).
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n = len(pos)
    out = np.zeros_like(pos)
    if n < 2:
        return out
    if diff is None:
        diff = pos[:, None, :] - pos[None, :, :]
    if dist is None:
        dist = np.sqrt(np.einsum("ijd,ijd->ij", diff, diff))
    mask = dist <= params.r_a + params.r_s
    np.fill_diagonal(mask, False)
    if not np.any(mask):
        return out
    d = dist[mask]
    if np.any(d < 1e-12):
        raise CoincidentAgents("two agents share a position")
    b = np.zeros_like(dist)
    b[mask] = -dv_n_dx(d, params.agent_barrier()) / d
    return np.einsum("ij,ijd->id", b, diff)


def u2_avoidance(snapshot: Snapshot, i: int, params: ControlParams) -> Vec2:
    """Repulsion on agent i from its neighbor set."""
    nbrs = neighbors(snapshot, i, params.r_a, params.r_s)
    p_i = snapshot.positions[i]
    out = np.zeros(2)
    bp = params.agent_barrier()
    for j in nbrs:
        diff = p_i - snapshot.positions[j]
        dist = float(np.linalg.norm(diff))
        if dist < 1e-12:
            raise CoincidentAgents(f"agents {i} and {j} share a position")
        out += (-dv_n_dx(dist, bp) / dist) * diff
    return out


# -- tube keeping: panel variant -------------------------------------------

class PanelKeeper:
    """Boundary repulsion from extended panels, validated at construction.

    The left panel runs from p_l1 upstream past p_l0 by ``ext_factor``
    leg lengths (right side symmetric).  The negative gradients must not
    oppose the tube axis anywhere inside; the check runs on an interior
    grid, doubling the extension up to three times before giving up.
    """

    def __init__(self, tube: TrapezoidTube, params: ControlParams):
        self.tube = tube
        self.params = params
        ext = params.ext_factor
        last_worst = None
        for _ in range(_EXT_DOUBLINGS + 1):
            self._build_panels(ext)
            worst = self._dirl2_worst()
            if worst >= 0.0:
                self.ext_factor = ext
                return
            last_worst = worst
            ext *= 2.0
        raise DirL2Violation(
            f"negative gradient opposes t_c (worst dot {last_worst:.3e}) "
            f"even at ext_factor {ext / 2.0}")

    def _build_panels(self, ext: float):
        t = self.tube
        len_l = np.linalg.norm(t.p_l1 - t.p_l0)
        len_r = np.linalg.norm(t.p_r1 - t.p_r0)
        p_el0 = t.p_l1 - (1.0 + ext) * len_l * t.t_l
        p_er0 = t.p_r1 - (1.0 + ext) * len_r * t.t_r
        self.left = Panel(a=p_el0, b=t.p_l1, r=self.params.r_s)
        self.right = Panel(a=p_er0, b=t.p_r1, r=self.params.r_s)

    def _interior_grid(self) -> np.ndarray:
        t = self.tube
        u = np.linspace(0.0, 1.0, _DIRL2_GRID)
        w = np.linspace(0.0, 1.0, _DIRL2_GRID)
        uu, ww = np.meshgrid(u, w)
        pts = ((1 - uu)[..., None] * ((1 - ww)[..., None] * t.p_l0 + ww[..., None] * t.p_r0)
               + uu[..., None] * ((1 - ww)[..., None] * t.p_l1 + ww[..., None] * t.p_r1))
        pts = pts.reshape(-1, 2)
        # keep clear of the log-kernel guard next to the boundary
        margin = self.params.r_s + 1e-3
        keep = ((geo.dist_left(t, pts) > margin)
                & (geo.dist_right(t, pts) > margin))
        return pts[keep]

    def _dirl2_worst(self) -> float:
        # barrier is -k3 * phi, so the command is +k3 * grad(phi)
        pts = self._interior_grid()
        gl = self.params.k_3 * panel_grad(self.left, pts)
        gr = self.params.k_3 * panel_grad(self.right, pts)
        return float(min(np.min(gl @ self.tube.t_c), np.min(gr @ self.tube.t_c)))

    def term_many(self, pts: np.ndarray) -> np.ndarray:
        """Sum of both boundary terms for an (N, 2) batch."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        k3 = self.params.k_3
        return k3 * (panel_grad(self.left, pts) + panel_grad(self.right, pts))

    def term(self, p_i) -> Vec2:
        if not geo.contains(self.tube, p_i):
            raise OutsideTube(f"point {np.asarray(p_i)} not in tube")
        return self.term_many(np.asarray(p_i, dtype=float)[None, :])[0]


def u34_panel(tube: TrapezoidTube, p_i, params: ControlParams) -> Vec2:
    """Panel-based tube-keeping term (builds and validates the panels)."""
    return PanelKeeper(tube, params).term(p_i)


# -- tube keeping: projected variant ---------------------------------------

def u34_projected_many(tube: TrapezoidTube, pts: np.ndarray,
                       params: ControlParams) -> np.ndarray:
    """Axis-projected boundary terms for an (N, 2) batch.

    Each term is the barrier slope times (t_c^T n) t_c; the sign works
    out so the boundary distance never decreases under it, because
    forward motion is what drives a converging wall closer.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    bp = params.wall_barrier()
    dl = geo.dist_left(tube, pts)
    dr = geo.dist_right(tube, pts)
    lam_l = -dv_n_dx(dl, bp)
    lam_r = -dv_n_dx(dr, bp)
    coef = (lam_l * float(tube.t_c @ tube.n_l)
            + lam_r * float(tube.t_c @ tube.n_r))
    return coef[:, None] * tube.t_c


def u34_projected(tube: TrapezoidTube, p_i, params: ControlParams) -> Vec2:
    if not geo.contains(tube, p_i):
        raise OutsideTube(f"point {np.asarray(p_i)} not in tube")
    return u34_projected_many(tube, np.asarray(p_i, dtype=float)[None, :], params)[0]


# -- composition -----------------------------------------------------------

def commands_many(tube: TrapezoidTube, positions: np.ndarray,
                  params: ControlParams, variant: str = VARIANT_MODIFIED,
                  keeper: PanelKeeper = None,
                  u2: np.ndarray = None) -> np.ndarray:
    """Velocity commands for every agent of a snapshot inside one tube.

    ``u2`` may be precomputed (the simulator shares it across sub-tubes);
    ``keeper`` is required for the basic variant to amortize the panel
    validation.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    if u2 is None:
        u2 = u2_all(pos, params)
    if variant == VARIANT_MODIFIED:
        u1 = u1_modified_many(tube, pos, params.v, params.r_a, params.k_t)
        u34 = u34_projected_many(tube, pos, params)
    elif variant == VARIANT_BASIC:
        u1 = np.stack([u1_basic(tube, p, params.v, params.r_a) for p in pos])
        if keeper is None:
            keeper = PanelKeeper(tube, params)
        u34 = keeper.term_many(pos)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return u1 + sat(u2 + u34, params.v_max_prime)


def velocity_command(tube: TrapezoidTube, snapshot: Snapshot, i: int,
                     params: ControlParams,
                     variant: str = VARIANT_MODIFIED) -> Vec2:
    """Full command for agent i: line approach plus saturated repulsion."""
    p_i = snapshot.positions[i]
    if not geo.contains(tube, p_i):
        raise OutsideTube(f"agent {i} at {p_i} not in tube")
    u2 = u2_avoidance(snapshot, i, params)
    return commands_many(tube, p_i[None, :], params, variant,
                         u2=u2[None, :])[0]


# -- feasibility -----------------------------------------------------------

@dataclass
class FeasibilityCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class FeasibilityReport:
    checks: list[FeasibilityCheck] = field(default_factory=list)
    theta_l: float = 0.0
    theta_r: float = 0.0
    theta_bound: float = 0.0

    def add(self, name: str, passed: bool, detail: str):
        self.checks.append(FeasibilityCheck(name, bool(passed), detail))

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[FeasibilityCheck]:
        return [c for c in self.checks if not c.passed]

    def format(self) -> str:
        lines = []
        for c in self.checks:
            lines.append(f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines)


def speed_angle_bound(v: float, v_max_prime: float) -> float:
    """Largest leg angle compatible with the repulsion budget, radians."""
    arg = 1.0 - v_max_prime ** 2 / (2.0 * v ** 2)
    if arg <= -1.0:
        return math.pi
    return math.acos(arg)


def validate_feasibility(tube: TrapezoidTube, params: ControlParams,
                         variant: str = VARIANT_MODIFIED) -> FeasibilityReport:
    """Check every structural inequality linking tube and speeds."""
    rep = FeasibilityReport()
    for msg in params.basic_violations():
        rep.add("parameter constraint", False, msg)
    if not rep.checks:
        rep.add("parameter constraints",
                True,
                f"v + v'_max = {params.v + params.v_max_prime} <= {params.v_max}, "
                f"v - v'_max = {params.v - params.v_max_prime} >= {params.v_min}")

    rep.theta_l = math.acos(np.clip(float(tube.t_l @ tube.t_c), -1.0, 1.0))
    rep.theta_r = math.acos(np.clip(float(tube.t_r @ tube.t_c), -1.0, 1.0))
    rep.theta_bound = speed_angle_bound(params.v, params.v_max_prime)

    if geo.left_active(tube):
        chord = params.v * float(np.linalg.norm(tube.t_c - tube.t_l))
        rep.add("left leg angle", chord < params.v_max_prime,
                f"v*||t_c - t_l|| = {chord:.6g} vs v'_max = {params.v_max_prime} "
                f"(theta_l = {math.degrees(rep.theta_l):.3f} deg, "
                f"bound {math.degrees(rep.theta_bound):.3f} deg)")
    if geo.right_active(tube):
        chord = params.v * float(np.linalg.norm(tube.t_c - tube.t_r))
        rep.add("right leg angle", chord < params.v_max_prime,
                f"v*||t_c - t_r|| = {chord:.6g} vs v'_max = {params.v_max_prime} "
                f"(theta_r = {math.degrees(rep.theta_r):.3f} deg, "
                f"bound {math.degrees(rep.theta_bound):.3f} deg)")

    a3 = geo.assumption3_check(tube, params.r_a)
    rep.add("tube holds one agent", a3,
            f"length {tube.length:.6g} vs 2*r_a = {2 * params.r_a}; "
            f"middle area nonempty and side areas disjoint: {a3}")

    if variant == VARIANT_MODIFIED:
        rep.add("blend band", params.k_t > 1.0,
                f"blended approach needs k_t > 1, got k_t = {params.k_t}")
    if variant == VARIANT_BASIC:
        try:
            keeper = PanelKeeper(tube, params)
            rep.add("boundary gradient direction", True,
                    f"grid check passed at ext_factor {keeper.ext_factor}")
        except DirL2Violation as exc:
            rep.add("boundary gradient direction", False, str(exc))
    return rep


def with_tube_gain(params: ControlParams, k_t: float) -> ControlParams:
    """Copy of params with a different band gain (sub-tubes reuse this)."""
    return replace(params, k_t=k_t)
