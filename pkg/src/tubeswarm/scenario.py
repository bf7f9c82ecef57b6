"""YAML scenario files: schema, validation and round-trip serialization.

A scenario bundles the tube, obstacles, controller parameters, initial
agent layout and integration settings.  Parsing is strict: every schema
problem is collected with its key path and reported at once, and semantic
validation likewise returns the full list of violations instead of
stopping at the first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .controller import (VARIANT_BASIC, VARIANT_MODIFIED, ControlParams,
                         validate_feasibility)
from .errors import (ScenarioSyntaxError, SchemaError, TubeSwarmError,
                     ValidationError)
from .geometry import Obstacle, TrapezoidTube, build_tube
from .partition import build_partition
from .simulator import SimConfig, validate_initial

_TUBE_KEYS = ("p_l0", "p_l1", "p_r0", "p_r1")
_PARAM_REQUIRED = ("v", "v_max_prime", "v_min", "v_max", "r_s", "r_a")
_PARAM_OPTIONAL = ("k_t", "k_2", "k_3", "eps_m", "eps_t", "eps_s", "eps_0",
                   "ext_factor")
_PARAM_IGNORED = ("k_5", "eps_o")    # accepted for compatibility, unused
_SIM_KEYS = ("dt", "t_end", "variant", "traj_stride", "seed")
_VARIANTS = (VARIANT_BASIC, VARIANT_MODIFIED)


@dataclass
class Scenario:
    """Parsed scenario; ``agents`` keeps the layout exactly as written so
    a dump reproduces the input file."""

    name: str
    tube: dict                     # raw vertex lists + k_t
    obstacles: list                # raw [{center, radius}, ...]
    beta_deg: float
    params: dict                   # raw parameter mapping (incl. ignored keys)
    agents: dict                   # {"grid": {...}} or {"positions": [...]}
    sim: dict                      # dt, t_end, variant, traj_stride

    def __eq__(self, other):
        return isinstance(other, Scenario) and to_dict(self) == to_dict(other)

    def build_tube(self) -> TrapezoidTube:
        return build_tube(self.tube["p_l0"], self.tube["p_l1"],
                          self.tube["p_r0"], self.tube["p_r1"],
                          self.tube.get("k_t", 1.0))

    def build_obstacles(self) -> list[Obstacle]:
        return [Obstacle(center=np.asarray(ob["center"], dtype=float),
                         radius=float(ob["radius"]))
                for ob in self.obstacles]

    def build_params(self) -> ControlParams:
        kw = {k: float(v) for k, v in self.params.items()
              if k not in _PARAM_IGNORED}
        # keep the command-side band gain aligned with the tube's
        kw.setdefault("k_t", float(self.tube.get("k_t", 1.0)))
        return ControlParams(**kw)

    def initial_positions(self) -> np.ndarray:
        if "positions" in self.agents:
            return np.asarray(self.agents["positions"], dtype=float)
        g = self.agents["grid"]
        ox, oy = (float(c) for c in g["origin"])
        xs = ox + float(g["dx"]) * np.arange(int(g["nx"]))
        ys = oy + float(g["dy"]) * np.arange(int(g["ny"]))
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def sim_config(self) -> SimConfig:
        return SimConfig(tube=self.build_tube(),
                         obstacles=tuple(self.build_obstacles()),
                         params=self.build_params(),
                         beta=math.radians(self.beta_deg),
                         variant=self.sim.get("variant", VARIANT_MODIFIED),
                         dt=float(self.sim.get("dt", 1e-3)),
                         t_end=float(self.sim.get("t_end", 10.0)),
                         traj_stride=int(self.sim.get("traj_stride", 10)),
                         seed=int(self.sim.get("seed", 0)))


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) \
        and math.isfinite(float(x))


def _check_vec2(value, path: str, errors: list[str]) -> bool:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(_is_num(c) for c in value)):
        errors.append(f"{path}: expected a pair of finite numbers")
        return False
    return True


def from_dict(data) -> Scenario:
    """Build a Scenario from a mapping, collecting every schema error."""
    if not isinstance(data, dict):
        raise SchemaError("top level: expected a mapping")
    errors: list[str] = []

    known_top = {"name", "tube", "obstacles", "beta_deg", "params",
                 "agents", "sim"}
    for key in sorted(set(data) - known_top):
        errors.append(f"{key}: unknown top-level key")

    name = data.get("name", "")
    if not isinstance(name, str):
        errors.append("name: expected a string")
        name = ""

    tube = data.get("tube")
    if not isinstance(tube, dict):
        errors.append("tube: required mapping is missing")
        tube = {}
    else:
        for key in _TUBE_KEYS:
            if key not in tube:
                errors.append(f"tube.{key}: required vertex is missing")
            else:
                _check_vec2(tube[key], f"tube.{key}", errors)
        if "k_t" in tube and not _is_num(tube["k_t"]):
            errors.append("tube.k_t: expected a finite number")
        for key in sorted(set(tube) - set(_TUBE_KEYS) - {"k_t"}):
            errors.append(f"tube.{key}: unknown key")

    obstacles = data.get("obstacles", [])
    if not isinstance(obstacles, list):
        errors.append("obstacles: expected a list")
        obstacles = []
    else:
        for i, ob in enumerate(obstacles):
            if not isinstance(ob, dict):
                errors.append(f"obstacles[{i}]: expected a mapping")
                continue
            if "center" not in ob:
                errors.append(f"obstacles[{i}].center: required key is missing")
            else:
                _check_vec2(ob["center"], f"obstacles[{i}].center", errors)
            if "radius" not in ob:
                errors.append(f"obstacles[{i}].radius: required key is missing")
            elif not (_is_num(ob["radius"]) and ob["radius"] > 0):
                errors.append(f"obstacles[{i}].radius: expected a positive number")
            for key in sorted(set(ob) - {"center", "radius"}):
                errors.append(f"obstacles[{i}].{key}: unknown key")

    beta_deg = data.get("beta_deg", 35.0)
    if not (_is_num(beta_deg) and 0.0 < beta_deg < 90.0):
        errors.append("beta_deg: expected a number in (0, 90)")
        beta_deg = 35.0

    params = data.get("params")
    if not isinstance(params, dict):
        errors.append("params: required mapping is missing")
        params = {}
    else:
        for key in _PARAM_REQUIRED:
            if key not in params:
                errors.append(f"params.{key}: required key is missing")
        known = set(_PARAM_REQUIRED) | set(_PARAM_OPTIONAL) | set(_PARAM_IGNORED)
        for key, val in params.items():
            if key not in known:
                errors.append(f"params.{key}: unknown key")
            elif not _is_num(val):
                errors.append(f"params.{key}: expected a finite number")

    agents = data.get("agents")
    if not isinstance(agents, dict):
        errors.append("agents: required mapping is missing")
        agents = {"positions": []}
    elif ("grid" in agents) == ("positions" in agents):
        errors.append("agents: exactly one of 'grid' or 'positions' is required")
        agents = {"positions": []}
    elif "positions" in agents:
        pos = agents["positions"]
        if not isinstance(pos, list) or not pos:
            errors.append("agents.positions: expected a non-empty list")
        else:
            for i, p in enumerate(pos):
                _check_vec2(p, f"agents.positions[{i}]", errors)
    else:
        grid = agents["grid"]
        if not isinstance(grid, dict):
            errors.append("agents.grid: expected a mapping")
        else:
            for key in ("nx", "ny"):
                if not (isinstance(grid.get(key), int) and grid[key] >= 1):
                    errors.append(f"agents.grid.{key}: expected an integer >= 1")
            for key in ("dx", "dy"):
                if not (_is_num(grid.get(key)) and grid[key] > 0):
                    errors.append(f"agents.grid.{key}: expected a positive number")
            if "origin" not in grid:
                errors.append("agents.grid.origin: required key is missing")
            else:
                _check_vec2(grid["origin"], "agents.grid.origin", errors)
            for key in sorted(set(grid) - {"nx", "ny", "dx", "dy", "origin"}):
                errors.append(f"agents.grid.{key}: unknown key")

    sim = data.get("sim", {})
    if not isinstance(sim, dict):
        errors.append("sim: expected a mapping")
        sim = {}
    else:
        for key in ("dt", "t_end"):
            if key in sim and not (_is_num(sim[key]) and sim[key] > 0):
                errors.append(f"sim.{key}: expected a positive number")
        if "variant" in sim and sim["variant"] not in _VARIANTS:
            errors.append(f"sim.variant: expected one of {list(_VARIANTS)}")
        if "traj_stride" in sim and not (isinstance(sim["traj_stride"], int)
                                         and sim["traj_stride"] >= 1):
            errors.append("sim.traj_stride: expected an integer >= 1")
        if "seed" in sim and not isinstance(sim["seed"], int):
            errors.append("sim.seed: expected an integer")
        for key in sorted(set(sim) - set(_SIM_KEYS)):
            errors.append(f"sim.{key}: unknown key")

    if errors:
        raise SchemaError("; ".join(errors))
    return Scenario(name=name, tube=tube, obstacles=obstacles,
                    beta_deg=float(beta_deg), params=params, agents=agents,
                    sim=sim)


def parse(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioSyntaxError(f"not valid YAML: {exc}") from exc
    return from_dict(data)


def load(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def to_dict(sc: Scenario) -> dict:
    out = {"tube": sc.tube, "beta_deg": sc.beta_deg, "params": sc.params,
           "agents": sc.agents, "sim": sc.sim}
    if sc.name:
        out = {"name": sc.name, **out}
    if sc.obstacles:
        out["obstacles"] = sc.obstacles
    return out


def dump(sc: Scenario) -> str:
    return yaml.safe_dump(to_dict(sc), sort_keys=False,
                          default_flow_style=None)


def save(sc: Scenario, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump(sc))


def validate(sc: Scenario) -> list[str]:
    """Semantic violations of a schema-valid scenario; empty means runnable."""
    out: list[str] = []
    try:
        tube = sc.build_tube()
    except TubeSwarmError as exc:
        return [f"tube: {exc}"]
    try:
        params = sc.build_params()
    except (TubeSwarmError, ValueError) as exc:
        return [f"params: {exc}"]
    out.extend(f"params: {msg}" for msg in params.basic_violations())

    obstacles = sc.build_obstacles()
    variant = sc.sim.get("variant", VARIANT_MODIFIED)
    partition = None
    try:
        partition = build_partition(tube, obstacles, params,
                                    math.radians(sc.beta_deg))
    except TubeSwarmError as exc:
        out.append(f"obstacles: {exc}")

    tubes = [("tube", tube)]
    if partition is not None and len(partition.sub_tubes) > 1:
        tubes += [(f"sub-tube {i}", t)
                  for i, t in enumerate(partition.sub_tubes) if t is not None]
    for label, t in tubes:
        try:
            report = validate_feasibility(t, params, variant)
        except TubeSwarmError as exc:
            out.append(f"{label}: {exc}")
            continue
        out.extend(f"{label}: {c.name}: {c.detail}" for c in report.failures())

    positions = sc.initial_positions()
    out.extend(validate_initial(tube, obstacles, positions, params))
    if partition is not None:
        for k, tri in enumerate(partition.triangles):
            for i in np.flatnonzero(tri.contains_many(positions)):
                out.append(f"agent {i} starts inside the excised triangle "
                           f"of obstacle {k}")
    return out


def require_valid(sc: Scenario) -> Scenario:
    problems = validate(sc)
    if problems:
        raise ValidationError(problems)
    return sc
