"""Command-line front end: simulate, field, partition, validate.

All outputs are delimited text with a one-line header; numbers use nine
significant digits so repeated runs diff clean.  Exit codes: 0 ok,
2 I/O problem, 3 validation or feasibility failure, 4 runtime safety
abort.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import scenario as scn
from .controller import PanelKeeper, VARIANT_BASIC, commands_many
from .errors import (SafetyAbort, ScenarioError, TubeSwarmError,
                     ValidationError)
from .geometry import contains
from .partition import build_partition, locate, partition_dump
from .potentials import dv_n_dx
from .simulator import run as sim_run
from .controller import validate_feasibility
from .simulator import validate_initial

EXIT_OK = 0
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_SAFETY = 4


def _fmt(x) -> str:
    return f"{float(x):.9g}"


def _load(path: str) -> scn.Scenario:
    try:
        return scn.load(path)
    except OSError as exc:
        raise _CliExit(EXIT_IO, f"cannot read scenario: {exc}")
    except ScenarioError as exc:
        raise _CliExit(EXIT_VALIDATION, f"scenario invalid: {exc}")


class _CliExit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


def _apply_overrides(sc: scn.Scenario, args) -> scn.Scenario:
    if getattr(args, "variant", None):
        sc.sim = {**sc.sim, "variant": args.variant}
    if getattr(args, "seed", None) is not None:
        sc.sim = {**sc.sim, "seed": args.seed}
    return sc


def _require_valid(sc: scn.Scenario):
    problems = scn.validate(sc)
    if problems:
        raise _CliExit(EXIT_VALIDATION,
                       "scenario fails validation:\n  " + "\n  ".join(problems))


_METRIC_COLUMNS = ("t", "min_pair_dist", "min_obstacle_dist", "min_d_tl",
                   "min_d_tr", "min_speed", "max_speed", "n_active",
                   "V_total", "dV")
_METRIC_FIELDS = ("t", "min_pair_dist", "min_obstacle_dist", "min_d_tl",
                  "min_d_tr", "min_speed", "max_speed", "n_active",
                  "v_total", "dv")


def cmd_simulate(args) -> int:
    sc = _apply_overrides(_load(args.scenario), args)
    _require_valid(sc)
    config = sc.sim_config()
    try:
        result = sim_run(config, sc.initial_positions())
    except SafetyAbort as exc:
        print(f"safety abort: {exc}", file=sys.stderr)
        return EXIT_SAFETY

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        log = result.metrics
        with open(out / "metrics.txt", "w", encoding="utf-8") as fh:
            fh.write(" ".join(_METRIC_COLUMNS) + "\n")
            for i in range(len(log)):
                row = [getattr(log, f)[i] for f in _METRIC_FIELDS]
                fh.write(" ".join(str(int(v)) if f == "n_active" else _fmt(v)
                                  for f, v in zip(_METRIC_FIELDS, row)) + "\n")
        with open(out / "trajectories.txt", "w", encoding="utf-8") as fh:
            fh.write("t id x y vx vy sub_tube active\n")
            for f, t in enumerate(result.frame_times):
                for a in range(result.trajectory.shape[1]):
                    x, y = result.trajectory[f, a]
                    vx, vy = result.commands[f, a]
                    fh.write(f"{_fmt(t)} {a} {_fmt(x)} {_fmt(y)} {_fmt(vx)} "
                             f"{_fmt(vy)} {result.sub_indices[f, a]} "
                             f"{int(result.active_flags[f, a])}\n")

        p = config.params
        checks = [
            ("min_pair_dist > 2*r_s",
             float(np.min(log.min_pair_dist)) > 2.0 * p.r_s),
            ("min_d_tl > 0", float(np.min(log.min_d_tl)) > 0.0),
            ("min_d_tr > 0", float(np.min(log.min_d_tr)) > 0.0),
            ("speeds within [v_min, v_max]",
             float(np.min(log.min_speed)) >= p.v_min - 1e-9
             and float(np.max(log.max_speed)) <= p.v_max + 1e-9),
        ]
        if config.obstacles:
            bound = max(ob.radius for ob in config.obstacles) + p.r_s
            checks.insert(1, ("min_obstacle_dist > r_o + r_s",
                              float(np.min(log.min_obstacle_dist)) > bound))
        with open(out / "summary.txt", "w", encoding="utf-8") as fh:
            fh.write("check result value\n")
            for name, ok in checks:
                fh.write(f"{name.replace(' ', '_')} "
                         f"{'pass' if ok else 'fail'}\n")
            if result.all_removed:
                fh.write("last_removal_time "
                         f"{_fmt(np.nanmax(result.removal_times))}\n")
            else:
                left = int(np.sum(~np.isfinite(result.removal_times)))
                fh.write(f"agents_not_finished {left}\n")
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_SAFETY


def _ghost_u2(pts: np.ndarray, ghosts, params) -> np.ndarray:
    out = np.zeros_like(pts)
    if not ghosts:
        return out
    bp = params.agent_barrier()
    for g in ghosts:
        diff = pts - np.asarray(g, dtype=float)
        d = np.linalg.norm(diff, axis=1)
        mask = (d <= params.r_a + params.r_s) & (d > 1e-12)
        coef = np.zeros_like(d)
        if np.any(mask):
            coef[mask] = -dv_n_dx(d[mask], bp) / d[mask]
        out += coef[:, None] * diff
    return out


def cmd_field(args) -> int:
    sc = _apply_overrides(_load(args.scenario), args)
    config_tube = sc.build_tube()
    params = sc.build_params()
    obstacles = sc.build_obstacles()
    variant = sc.sim.get("variant", "modified")
    try:
        partition = build_partition(config_tube, obstacles, params,
                                    math.radians(sc.beta_deg))
    except TubeSwarmError as exc:
        print(f"partition failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    nx, ny = args.grid
    verts = config_tube.vertices
    xs = np.linspace(verts[:, 0].min(), verts[:, 0].max(), nx)
    ys = np.linspace(verts[:, 1].min(), verts[:, 1].max(), ny)
    ghosts = args.ghost or []
    keepers: dict = {}

    lines = ["x y vx vy in_domain"]
    for y in ys:
        for x in xs:
            p = np.array([x, y])
            cmd = None
            try:
                if contains(config_tube, p):
                    idx = locate(partition, p, previous=None)
                    sub = None if idx is None else partition.sub_tubes[idx]
                    if sub is not None:
                        if variant == VARIANT_BASIC and idx not in keepers:
                            keepers[idx] = PanelKeeper(sub, params)
                        u2 = _ghost_u2(p[None, :], ghosts, params)
                        cmd = commands_many(sub, p[None, :], params, variant,
                                            keeper=keepers.get(idx),
                                            u2=u2)[0]
            except TubeSwarmError:
                cmd = None
            if cmd is None:
                lines.append(f"{_fmt(x)} {_fmt(y)} nan nan 0")
            else:
                lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(cmd[0])} "
                             f"{_fmt(cmd[1])} 1")
    return _write_text(args.out, "\n".join(lines) + "\n")


def cmd_partition(args) -> int:
    sc = _load(args.scenario)
    if not sc.obstacles:
        print("scenario has no obstacles; nothing to partition",
              file=sys.stderr)
        return EXIT_VALIDATION
    try:
        partition = build_partition(sc.build_tube(), sc.build_obstacles(),
                                    sc.build_params(),
                                    math.radians(sc.beta_deg))
    except TubeSwarmError as exc:
        print(f"partition failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return _write_text(args.out, partition_dump(partition))


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    ok = True
    try:
        params = sc.build_params()
        tube = sc.build_tube()
    except (TubeSwarmError, ValueError) as exc:
        print(f"[FAIL] construction: {exc}")
        return EXIT_VALIDATION
    variant = sc.sim.get("variant", "modified")

    tubes = [("parent tube", tube)]
    try:
        partition = build_partition(tube, sc.build_obstacles(), params,
                                    math.radians(sc.beta_deg))
        if len(partition.sub_tubes) > 1:
            tubes += [(f"sub-tube {i}", t)
                      for i, t in enumerate(partition.sub_tubes)
                      if t is not None]
    except TubeSwarmError as exc:
        print(f"[FAIL] partition: {exc}")
        ok = False

    for label, t in tubes:
        print(f"-- {label}")
        try:
            report = validate_feasibility(t, params, variant)
        except TubeSwarmError as exc:
            print(f"[FAIL] feasibility: {exc}")
            ok = False
            continue
        print(report.format())
        ok &= report.ok

    problems = validate_initial(tube, sc.build_obstacles(),
                                sc.initial_positions(), params)
    for msg in problems:
        print(f"[FAIL] initial state: {msg}")
    ok &= not problems
    return EXIT_OK if ok else EXIT_VALIDATION


def _write_text(out, text: str) -> int:
    try:
        if out:
            Path(out).parent.mkdir(parents=True, exist_ok=True)
            Path(out).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
    except OSError as exc:
        print(f"cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubeswarm",
        description="Swarm guidance through trapezoid virtual tubes")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_variant=True):
        p.add_argument("scenario", help="scenario YAML file")
        if with_variant:
            p.add_argument("--variant", choices=["basic", "modified"],
                           help="override the scenario's controller variant")
            p.add_argument("--seed", type=int, help="override the scenario seed")

    p = sub.add_parser("simulate", help="run a scenario and write traces")
    add_common(p)
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("field", help="rasterize the commanded vector field")
    add_common(p)
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"),
                   default=(40, 40))
    p.add_argument("--ghost", type=float, nargs=2, metavar=("X", "Y"),
                   action="append", help="extra stationary agent (repeatable)")
    p.add_argument("--out", default="", help="output file (default stdout)")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("partition", help="export the sub-tube decomposition")
    add_common(p, with_variant=False)
    p.add_argument("--out", default="", help="output file (default stdout)")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("validate", help="print the full feasibility report")
    add_common(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CliExit as exc:
        if str(exc):
            print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
