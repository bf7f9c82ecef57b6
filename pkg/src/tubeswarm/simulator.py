"""Fixed-step scenario simulator with runtime invariant checks.

Single-integrator agents advance by explicit Euler on a shared snapshot:
every command of a step is computed from the same frozen positions, then
all agents move at once.  Agents within eps_0 of the parent finishing
line are removed and stop appearing in anyone's neighbor set.  The run
is pure numpy with no randomness, so repeated runs are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist

from . import geometry as geo
from .controller import (VARIANT_BASIC, VARIANT_MODIFIED, ControlParams,
                         PanelKeeper, commands_many, u1_basic, u2_all)
from .errors import SafetyAbort, TubeSwarmError, UnsupportedVariant
from .geometry import Obstacle, TrapezoidTube
from .partition import TubePartition, build_partition, locate_many
from .potentials import panel_phi, v_n

_SPEED_TOL = 1e-9


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce a run, minus the initial positions."""

    tube: TrapezoidTube
    obstacles: tuple
    params: ControlParams
    beta: float = math.radians(35.0)
    variant: str = VARIANT_MODIFIED
    dt: float = 1e-3
    t_end: float = 10.0
    traj_stride: int = 10
    seed: int = 0                  # only for sampling-based validation
    check_safety: bool = True
    track_lyapunov: bool = False

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.t_end > 0.0:
            raise ValueError("t_end must be positive")
        if not self.traj_stride >= 1:
            raise ValueError("traj_stride must be >= 1")
        if self.variant not in (VARIANT_BASIC, VARIANT_MODIFIED):
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass(frozen=True)
class StepMetrics:
    """Invariant witnesses for one step, taken before the Euler update."""

    t: float
    n_active: int
    min_pair_dist: float
    min_obstacle_dist: float       # center-to-center, threshold r_s + r_o
    min_d_tl: float                # vs the parent tube boundary
    min_d_tr: float
    min_speed: float
    max_speed: float
    v_total: float                 # nan unless the energy monitor is on
    dv: float


@dataclass
class MetricsLog:
    """Column-wise per-step metrics; one entry of every array per step."""

    t: np.ndarray
    n_active: np.ndarray
    min_pair_dist: np.ndarray
    min_obstacle_dist: np.ndarray
    min_d_tl: np.ndarray
    min_d_tr: np.ndarray
    min_speed: np.ndarray
    max_speed: np.ndarray
    v_total: np.ndarray
    dv: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def row(self, i: int) -> StepMetrics:
        return StepMetrics(*(float(getattr(self, f)[i]) if f not in ("n_active",)
                             else int(self.n_active[i])
                             for f in ("t", "n_active", "min_pair_dist",
                                       "min_obstacle_dist", "min_d_tl",
                                       "min_d_tr", "min_speed", "max_speed",
                                       "v_total", "dv")))


@dataclass
class SimResult:
    config: SimConfig
    partition: TubePartition
    metrics: MetricsLog
    trajectory: np.ndarray        # (n_frames, M, 2), nan once removed
    commands: np.ndarray          # (n_frames, M, 2), nan once removed
    sub_indices: np.ndarray       # (n_frames, M), -1 once removed
    active_flags: np.ndarray      # (n_frames, M) bool
    frame_times: np.ndarray
    removal_times: np.ndarray     # (M,), nan if still active at the end
    final_positions: np.ndarray   # last in-tube position of every agent
    n_steps: int

    @property
    def all_removed(self) -> bool:
        return bool(np.all(np.isfinite(self.removal_times)))


def validate_initial(tube: TrapezoidTube, obstacles, positions: np.ndarray,
                     params: ControlParams) -> list[str]:
    """Violation messages for an initial configuration; empty means valid."""
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    out = []
    # the whole safety disc must be inside, not just the center
    s = geo.along_coord(tube, pts)
    depth = np.minimum.reduce([geo.dist_left(tube, pts),
                               geo.dist_right(tube, pts),
                               s, tube.length - s])
    for i in np.flatnonzero(depth <= params.r_s):
        out.append(f"agent {i} at {pts[i]} starts within r_s of the tube "
                   f"boundary (clearance {depth[i]:.6g})")
    if len(pts) > 1:
        d = pdist(pts)
        bound = 2.0 * params.r_s
        idx = np.triu_indices(len(pts), k=1)
        for k in np.flatnonzero(d <= bound):
            out.append(f"agents {idx[0][k]} and {idx[1][k]} start at distance "
                       f"{d[k]:.6g} <= 2*r_s = {bound:.6g}")
    for j, ob in enumerate(obstacles):
        d = np.linalg.norm(pts - ob.center, axis=1)
        bound = ob.radius + params.r_s
        for i in np.flatnonzero(d <= bound):
            out.append(f"agent {i} starts at distance {d[i]:.6g} <= "
                       f"r_o + r_s = {bound:.6g} from obstacle {j}")
    return out


class LyapunovMonitor:
    """Total-energy bookkeeping for the region-switched controller.

    Defined only for the basic variant in an obstacle-free tube, where
    the line-approach command per region is constant and the energy
    decreases along trajectories up to the removal jumps.  The moving
    target starts at the swarm centroid and advances at the nominal
    speed; each agent's offset constant is its command mismatch times
    the tube diameter plus one, which keeps the agent term positive.
    """

    def __init__(self, config: SimConfig, keeper: PanelKeeper,
                 initial_positions: np.ndarray):
        if config.variant != VARIANT_BASIC or config.obstacles:
            raise UnsupportedVariant(
                "energy monitor is defined for the basic variant in an "
                "obstacle-free tube only")
        self.tube = config.tube
        self.params = config.params
        self.keeper = keeper
        self.center0 = np.mean(np.atleast_2d(initial_positions), axis=0)
        self.v_star = config.params.v * config.tube.t_c
        # Offset the boundary term by the largest potential seen inside the
        # tube so each agent's wall energy is non-negative, mirroring the
        # c_i offset of the flow-field term.  A constant shift leaves the
        # descent property untouched.
        grid = keeper._interior_grid()
        self.wall_offset = float(np.max(panel_phi(keeper.left, grid)
                                        + panel_phi(keeper.right, grid)))

    def value(self, positions: np.ndarray, t: float) -> float:
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        p_star = self.center0 + t * self.v_star
        u1 = np.stack([u1_basic(self.tube, p, self.params.v, self.params.r_a)
                       for p in pts])
        mismatch = u1 - self.v_star
        u_norm = np.linalg.norm(mismatch, axis=1)
        c = u_norm * self.tube.diameter + 1.0
        v_f = -np.einsum("id,id->i", pts - p_star, mismatch) + c

        v_pair = 0.0
        if len(pts) > 1:
            d = pdist(pts)
            bp = self.params.agent_barrier()
            close = d < bp.d2
            if np.any(close):
                v_pair = float(np.sum(v_n(d[close], bp)))

        k3 = self.params.k_3
        v_wall = k3 * (self.wall_offset - panel_phi(self.keeper.left, pts)
                       - panel_phi(self.keeper.right, pts))
        return float(np.sum(v_f) + v_pair + np.sum(v_wall))


class _BatchEngine:
    """Gathered per-sub-tube coefficient tables for the blended variant.

    Locating and commanding agent batches through per-sub-tube function
    calls costs too much Python overhead at 10^3 steps per simulated
    second; this flattens every sub-tube's unit vectors and region data
    into arrays indexed by the agents' sub-tube labels so each step is a
    fixed, small number of vectorized operations.
    """

    def __init__(self, partition: TubePartition, params: ControlParams):
        from .errors import InvalidInterval
        if not params.k_t > 1.0:
            raise InvalidInterval(
                f"blended approach needs k_t > 1, got {params.k_t}")
        self.params = params
        parent = partition.parent
        self.origin = parent.p_r0
        self.axis = parent.t_c
        n = len(partition.sub_tubes)
        self.valid = np.zeros(n, dtype=bool)
        self.t_c = np.zeros((n, 2))
        self.t_l = np.zeros((n, 2))
        self.t_r = np.zeros((n, 2))
        self.n_l = np.zeros((n, 2))
        self.n_r = np.zeros((n, 2))
        self.p_l1 = np.zeros((n, 2))
        self.p_r1 = np.zeros((n, 2))
        self.la = np.zeros(n, dtype=bool)
        self.ra = np.zeros(n, dtype=bool)
        self.tcnl = np.zeros(n)
        self.tcnr = np.zeros(n)
        for i, sub in enumerate(partition.sub_tubes):
            if sub is None:
                continue
            self.valid[i] = True
            self.t_c[i], self.t_l[i], self.t_r[i] = sub.t_c, sub.t_l, sub.t_r
            self.n_l[i], self.n_r[i] = sub.n_l, sub.n_r
            self.p_l1[i], self.p_r1[i] = sub.p_l1, sub.p_r1
            self.la[i] = geo.left_active(sub)
            self.ra[i] = geo.right_active(sub)
            self.tcnl[i] = float(sub.t_c @ sub.n_l)
            self.tcnr[i] = float(sub.t_c @ sub.n_r)

        self.cut = np.asarray(partition.cut_coords)
        self.band_pass = np.array(
            [w if k == "pass" else -1 for k, w in partition.band_kinds])
        self.band_obs = np.array(
            [w if k == "obstacle" else -1 for k, w in partition.band_kinds])
        p_count = partition.n_obstacles
        self.apex = np.zeros((max(p_count, 1), 2))
        self.n_top = np.zeros((max(p_count, 1), 2))
        self.n_bot = np.zeros((max(p_count, 1), 2))
        self.left_idx = np.full(max(p_count, 1), -1)
        self.right_idx = np.full(max(p_count, 1), -1)
        for k, tri in enumerate(partition.triangles):
            self.apex[k] = tri.p_otl
            for attr, far, other in (("n_top", tri.p_otu, tri.p_otd),
                                     ("n_bot", tri.p_otd, tri.p_otu)):
                edge = far - tri.p_otl
                nrm = np.array([-edge[1], edge[0]]) / np.linalg.norm(edge)
                if float(nrm @ (other - tri.p_otl)) > 0.0:
                    nrm = -nrm         # away from the triangle interior
                getattr(self, attr)[k] = nrm
            if partition.sub_tubes[3 * k + 1] is not None:
                self.left_idx[k] = 3 * k + 1
            if partition.sub_tubes[3 * k + 2] is not None:
                self.right_idx[k] = 3 * k + 2

    def locate(self, pts: np.ndarray, prev: np.ndarray) -> np.ndarray:
        s = (pts - self.origin) @ self.axis
        b = np.clip(np.searchsorted(self.cut, s, side="right") - 1,
                    0, len(self.cut) - 1)
        out = np.where(self.band_pass[b] >= 0, self.band_pass[b], prev)
        obs = self.band_obs[b]
        om = obs >= 0
        if np.any(om):
            k = obs[om]
            rel = pts[om] - self.apex[k]
            cand = out[om]
            right_ok = (np.einsum("nd,nd->n", rel, self.n_bot[k]) >= 0.0) \
                & (self.right_idx[k] >= 0)
            cand = np.where(right_ok, self.right_idx[k], cand)
            left_ok = (np.einsum("nd,nd->n", rel, self.n_top[k]) >= 0.0) \
                & (self.left_idx[k] >= 0)
            cand = np.where(left_ok, self.left_idx[k], cand)
            out[om] = cand
        return out

    def commands(self, pts: np.ndarray, sub: np.ndarray,
                 u2: np.ndarray) -> np.ndarray:
        from .errors import AmbiguousRegion, DegenerateBlend, OutsideTube
        from .potentials import dv_n_dx, sat, sigma
        p = self.params
        tc = self.t_c[sub]
        dl = np.einsum("nd,nd->n", pts - self.p_l1[sub], self.n_l[sub])
        dr = np.einsum("nd,nd->n", pts - self.p_r1[sub], self.n_r[sub])
        if np.any(dl <= 0.0) or np.any(dr <= 0.0):
            raise OutsideTube("agent on or past a sub-tube boundary")
        hi = p.k_t * p.r_a
        in_l = self.la[sub] & (dl < hi)
        in_r = self.ra[sub] & (dr < hi)
        if np.any(in_l & in_r):
            raise AmbiguousRegion("agent inside both boundary bands")
        u1 = p.v * tc
        band = in_l | in_r
        if np.any(band):
            d_b = np.where(in_l, dl, dr)[band]
            side = np.where(in_l[band, None], self.t_l[sub][band],
                            self.t_r[sub][band])
            w = np.asarray(sigma(d_b, p.r_a, hi))[:, None]
            blend = tc[band] + w * (side - tc[band])
            norms = np.linalg.norm(blend, axis=1, keepdims=True)
            if np.any(norms < 1e-12):
                raise DegenerateBlend("blend vector has zero norm")
            u1[band] = p.v * blend / norms

        bp = p.wall_barrier()
        repel = u2
        near = (dl < bp.d2) | (dr < bp.d2)
        if np.any(near):
            coef = (-dv_n_dx(dl[near], bp) * self.tcnl[sub][near]
                    - dv_n_dx(dr[near], bp) * self.tcnr[sub][near])
            repel = u2.copy()
            repel[near] += coef[:, None] * tc[near]
        return u1 + sat(repel, p.v_max_prime)


_TRIU_CACHE: dict = {}


def _triu(n: int):
    if n not in _TRIU_CACHE:
        _TRIU_CACHE[n] = np.triu_indices(n, 1)
    return _TRIU_CACHE[n]


def _u2_sparse(pts: np.ndarray, cond: np.ndarray, params: ControlParams):
    """Pairwise repulsion from a condensed distance vector.

    Only the few pairs inside the interaction radius touch the barrier;
    everything else stays out of the arithmetic entirely.
    """
    from .controller import CoincidentAgents
    from .potentials import dv_n_dx
    out = np.zeros_like(pts)
    n = len(pts)
    if n < 2:
        return out
    close = np.flatnonzero(cond <= params.r_a + params.r_s)
    if len(close) == 0:
        return out
    d = cond[close]
    if np.any(d < 1e-12):
        raise CoincidentAgents("two agents share a position")
    iu, ju = _triu(n)
    i, j = iu[close], ju[close]
    push = (-dv_n_dx(d, params.agent_barrier()) / d)[:, None] * (pts[i] - pts[j])
    np.add.at(out, i, push)
    np.add.at(out, j, -push)
    return out


def _metrics_row(t, pts, cmds, obstacles, tube, v_total, v_prev,
                 min_pair=None):
    n = len(pts)
    if n > 1:
        if min_pair is None:
            min_pair = float(np.min(pdist(pts)))
    else:
        min_pair = math.inf
    if obstacles and n:
        centers = np.stack([ob.center for ob in obstacles])
        min_obs = float(np.min(cdist(pts, centers)))
    else:
        min_obs = math.inf
    speeds = np.linalg.norm(cmds, axis=1) if n else np.zeros(0)
    return StepMetrics(
        t=t, n_active=n,
        min_pair_dist=min_pair, min_obstacle_dist=min_obs,
        min_d_tl=float(np.min(geo.dist_left(tube, pts))) if n else math.inf,
        min_d_tr=float(np.min(geo.dist_right(tube, pts))) if n else math.inf,
        min_speed=float(np.min(speeds)) if n else math.nan,
        max_speed=float(np.max(speeds)) if n else math.nan,
        v_total=v_total,
        dv=v_total - v_prev if math.isfinite(v_prev) else math.nan)


def _check_invariants(m: StepMetrics, config: SimConfig, t: float):
    p = config.params
    if m.n_active == 0:
        return
    if m.min_pair_dist <= 2.0 * p.r_s:
        raise SafetyAbort(f"inter-agent distance {m.min_pair_dist:.6g} <= "
                          f"2*r_s at t = {t:.4f}", t=t)
    if config.obstacles:
        bound = max(ob.radius for ob in config.obstacles) + p.r_s
        if m.min_obstacle_dist <= bound:
            raise SafetyAbort(f"obstacle clearance {m.min_obstacle_dist:.6g} "
                              f"<= r_o + r_s at t = {t:.4f}", t=t)
    if m.min_d_tl < -_SPEED_TOL or m.min_d_tr < -_SPEED_TOL:
        raise SafetyAbort(f"agent left the tube at t = {t:.4f}", t=t)
    if m.min_speed < p.v_min - _SPEED_TOL or m.max_speed > p.v_max + _SPEED_TOL:
        raise SafetyAbort(f"speed [{m.min_speed:.6g}, {m.max_speed:.6g}] "
                          f"outside [{p.v_min}, {p.v_max}] at t = {t:.4f}", t=t)


def run(config: SimConfig, initial_positions: np.ndarray) -> SimResult:
    """Integrate until t_end or until every agent has been removed."""
    positions = np.array(np.atleast_2d(initial_positions), dtype=float)
    m_agents = len(positions)
    problems = validate_initial(config.tube, config.obstacles, positions,
                                config.params)
    if problems:
        raise SafetyAbort("invalid initial configuration: "
                          + "; ".join(problems), t=0.0)

    partition = build_partition(config.tube, config.obstacles, config.params,
                                config.beta)
    keepers: dict = {}
    engine = None
    if config.variant == VARIANT_BASIC:
        for i, sub in enumerate(partition.sub_tubes):
            if sub is not None:
                keepers[i] = PanelKeeper(sub, config.params)
    else:
        engine = _BatchEngine(partition, config.params)

    monitor = None
    if config.track_lyapunov:
        keeper = keepers.get(0) or PanelKeeper(config.tube, config.params)
        monitor = LyapunovMonitor(config, keeper, positions)

    active = np.ones(m_agents, dtype=bool)
    # no history yet: an initial position inside an excised triangle has no
    # sub-tube to fall back on and must abort instead of being mislabeled
    prev_sub = np.full(m_agents, -1, dtype=int)
    removal_times = np.full(m_agents, math.nan)
    final_positions = positions.copy()
    n_steps = int(round(config.t_end / config.dt))

    rows: list[StepMetrics] = []
    frames, frame_cmds, frame_subs, frame_active = [], [], [], []
    frame_times = []
    v_prev = math.nan

    def record_frame(t, idx, pts, cmds, sub_of):
        pos_f = np.full((m_agents, 2), math.nan)
        cmd_f = np.full((m_agents, 2), math.nan)
        sub_f = np.full(m_agents, -1, dtype=int)
        pos_f[idx], cmd_f[idx], sub_f[idx] = pts, cmds, sub_of
        frames.append(pos_f)
        frame_cmds.append(cmd_f)
        frame_subs.append(sub_f)
        frame_active.append(active.copy())
        frame_times.append(t)

    for step in range(n_steps):
        t = step * config.dt
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        pts = positions[idx]

        try:
            cond = pdist(pts) if len(pts) > 1 else np.zeros(0)
            min_pair = float(cond.min()) if len(cond) else math.inf
            u2 = _u2_sparse(pts, cond, config.params)
            if engine is not None:
                sub_of = engine.locate(pts, prev_sub[idx])
                if np.any(sub_of < 0) or not np.all(engine.valid[sub_of]):
                    raise SafetyAbort(
                        f"agent drifted into an excised region at t = {t:.4f}",
                        t=t)
                cmds = engine.commands(pts, sub_of, u2)
            else:
                sub_of = locate_many(partition, pts, prev_sub[idx])
                cmds = np.empty_like(pts)
                for s in np.unique(sub_of):
                    if s < 0 or partition.sub_tubes[s] is None:
                        raise SafetyAbort(
                            f"agent drifted into an excised region at "
                            f"t = {t:.4f}", t=t)
                    sel = sub_of == s
                    cmds[sel] = commands_many(partition.sub_tubes[s], pts[sel],
                                              config.params, config.variant,
                                              keeper=keepers.get(int(s)),
                                              u2=u2[sel])
        except SafetyAbort:
            raise
        except TubeSwarmError as exc:
            raise SafetyAbort(f"controller failure at t = {t:.4f}: {exc}",
                              t=t) from exc

        v_total = monitor.value(pts, t) if monitor is not None else math.nan
        row = _metrics_row(t, pts, cmds, config.obstacles, config.tube,
                           v_total, v_prev, min_pair)
        rows.append(row)
        v_prev = v_total
        if config.check_safety:
            _check_invariants(row, config, t)
        if step % config.traj_stride == 0:
            record_frame(t, idx, pts, cmds, sub_of)

        positions[idx] = pts + config.dt * cmds
        prev_sub[idx] = sub_of
        final_positions[idx] = positions[idx]

        done = (-(positions[idx] - config.tube.p_r1) @ config.tube.t_c
                <= config.params.eps_0)
        if np.any(done):
            removed = idx[done]
            active[removed] = False
            removal_times[removed] = (step + 1) * config.dt

    log = MetricsLog(**{f: np.array([getattr(r, f) for r in rows])
                        for f in ("t", "n_active", "min_pair_dist",
                                  "min_obstacle_dist", "min_d_tl", "min_d_tr",
                                  "min_speed", "max_speed", "v_total", "dv")})
    log.n_active = log.n_active.astype(int)
    if not frames:
        record_frame(0.0, np.arange(m_agents), positions,
                     np.zeros_like(positions), prev_sub)
    return SimResult(config=config, partition=partition, metrics=log,
                     trajectory=np.stack(frames),
                     commands=np.stack(frame_cmds),
                     sub_indices=np.stack(frame_subs),
                     active_flags=np.stack(frame_active),
                     frame_times=np.array(frame_times),
                     removal_times=removal_times,
                     final_positions=final_positions,
                     n_steps=len(rows))
