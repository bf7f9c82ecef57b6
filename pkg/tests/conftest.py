import math
from pathlib import Path

import numpy as np
import pytest

from tubeswarm import geometry as geo
from tubeswarm.controller import ControlParams

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture
def rectangle():
    """Axis-aligned 10 x 2 tube; every interior point is in the middle area."""
    return geo.build_tube((0, 1), (10, 1), (0, -1), (10, -1))


@pytest.fixture
def converging():
    """Tube narrowing from half-width 2 to 1 over length 10."""
    return geo.build_tube((0, 2), (10, 1), (0, -2), (10, -1))


@pytest.fixture
def large_params():
    """Gains and speeds of the 120-agent scenario."""
    return ControlParams(v=2.0, v_max_prime=1.5, v_min=0.5, v_max=3.5,
                         r_s=0.25, r_a=0.5, k_t=1.2)


def random_tube(rng, max_tilt_deg=15.0):
    """Random trapezoid with gentle leg angles, in general position."""
    length = rng.uniform(5.0, 15.0)
    w0 = rng.uniform(2.0, 6.0)
    shrink = length * math.tan(math.radians(rng.uniform(0.0, max_tilt_deg)))
    w1_l = max(w0 - rng.uniform(0.0, shrink), 0.5)
    w1_r = max(w0 - rng.uniform(0.0, shrink), 0.5)
    ang = rng.uniform(0.0, 2.0 * math.pi)
    c, s = math.cos(ang), math.sin(ang)
    rot = np.array([[c, -s], [s, c]])
    shift = rng.uniform(-20.0, 20.0, size=2)

    def pt(x, y):
        return rot @ np.array([x, y]) + shift

    return geo.build_tube(pt(0, w0), pt(length, w1_l),
                          pt(0, -w0), pt(length, -w1_r), k_t=1.2)


def sample_inside(tube, rng, n):
    """Uniform points inside the tube by rejection from the bounding box."""
    verts = tube.vertices
    lo, hi = verts.min(axis=0), verts.max(axis=0)
    out = np.empty((0, 2))
    while len(out) < n:
        cand = rng.uniform(lo, hi, size=(4 * n, 2))
        out = np.vstack([out, cand[geo.contains_many(tube, cand)]])
    return out[:n]
