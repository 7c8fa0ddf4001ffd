"""Shared fixtures: simulated episodes are expensive, so build them once.

Three scenes are exercised across the suite:

* ``scenario_b`` (repo fixture): mono-static UE, static facade + ground,
  one car crossing the beam.  Full 4096-chirp episode.
* ``scenario_c`` (repo fixture): bi-static BS -> car-mounted UE with a wall
  reflection.  Full 4096-chirp episode, reduced diffuse density to keep the
  suite fast (the CLI default stays at 16 samples per facet).
* the calibration plates: three small metal mirrors at known ranges and
  constant radial rates, built inline below.  Every delay/Doppler number for
  them is available in closed form, which makes them the reference fixture
  for map-level checks.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest

from rftwin.channel import ChirpConfig, SensingLink, simulate_cir
from rftwin.fmcw import synth_beat
from rftwin.raytrace import TraceConfig
from rftwin.scene import Scene, load_scene, scene_from_dict

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"

# Calibration plate layout: bearing from the radar, range at the middle of
# the first 128-chirp window, and d(range)/dt (negative = approaching).
PLATE_BEARINGS_DEG = (0.0, 20.0, -20.0)
PLATE_RANGES_M = (6.0, 9.3, 14.0)
PLATE_RATES_MPS = (0.0, -2.0302, 0.9556)
PLATE_T_MID = 64 * 125.86e-6   # window center with the default chirp timing

SCENARIO_B_T0 = 0.1
SCENARIO_C_T0 = 2.74223872


@dataclass
class Episode:
    """One simulated link: scene, geometry trace, CIR frames, beat frames."""

    scene: Scene
    config: ChirpConfig
    trace: TraceConfig
    link: SensingLink
    t0: float
    frames: list
    beats: list
    seconds: dict = field(default_factory=dict)


def _run_episode(scene, config, trace, link, t0) -> Episode:
    started = time.perf_counter()
    frames = simulate_cir(scene, link, config, trace, t0=t0)
    t_sim = time.perf_counter() - started
    started = time.perf_counter()
    beats = synth_beat(frames, config)
    t_synth = time.perf_counter() - started
    return Episode(scene, config, trace, link, t0, frames, beats,
                   {"simulate": t_sim, "synth": t_synth})


def plate_position(index: int, t: float) -> np.ndarray:
    """World position of a calibration plate center at time t."""
    bearing = np.radians(PLATE_BEARINGS_DEG[index])
    axis = np.array([np.cos(bearing), np.sin(bearing), 0.0])
    dist = PLATE_RANGES_M[index] + PLATE_RATES_MPS[index] * (t - PLATE_T_MID)
    return dist * axis + np.array([0.0, 0.0, 1.0])


def plates_scene_doc() -> dict:
    """Scene dict for the calibration plates (radar at the origin, z=1)."""
    square = [[0.0, -0.1, -0.1], [0.0, 0.1, -0.1], [0.0, 0.1, 0.1], [0.0, -0.1, 0.1]]
    reversed_square = [square[1], square[0], square[3], square[2]]
    static_plate = [[6.0, 0.1, 0.9], [6.0, -0.1, 0.9],
                    [6.0, -0.1, 1.1], [6.0, 0.1, 1.1]]
    return {
        "name": "calibration_plates",
        "materials": [{"preset": "metal"}],
        "transceivers": [
            {"id": "UE", "role": "UE", "position": [0.0, 0.0, 1.0],
             "boresight": [1.0, 0.0, 0.0],
             "pattern": {"peak_gain_dbi": 5.0, "hpbw_azimuth_deg": 90.0,
                         "hpbw_elevation_deg": 60.0}},
        ],
        "facets": [
            {"vertices": static_plate, "material": "metal"},
            {"vertices": square, "material": "metal", "body": "plate_b"},
            {"vertices": reversed_square, "material": "metal", "body": "plate_c"},
        ],
        "bodies": [
            {"id": "plate_b",
             "waypoints": [[0.0] + plate_position(1, 0.0).tolist(),
                           [0.1] + plate_position(1, 0.1).tolist()]},
            {"id": "plate_c",
             "waypoints": [[0.0] + plate_position(2, 0.0).tolist(),
                           [0.1] + plate_position(2, 0.1).tolist()]},
        ],
    }


def two_ray_doc() -> dict:
    """Elevated BS, distant UE, reflective ground patch under the hop."""
    pattern = {"peak_gain_dbi": 5.0, "hpbw_azimuth_deg": 90.0,
               "hpbw_elevation_deg": 60.0}
    return {
        "materials": [{"preset": "concrete"}],
        "facets": [
            {"vertices": [[10.0, -5.0, 0.0], [30.0, -5.0, 0.0],
                          [30.0, 5.0, 0.0], [10.0, 5.0, 0.0]],
             "material": "concrete"},
        ],
        "transceivers": [
            {"id": "BS", "role": "BS", "position": [0.0, 0.0, 10.0],
             "boresight": [1.0, 0.0, -0.3], "pattern": dict(pattern)},
            {"id": "UE", "role": "UE", "position": [30.0, 0.0, 1.5],
             "boresight": [-1.0, 0.0, 0.0], "pattern": dict(pattern)},
        ],
    }


def spin_rig_doc() -> dict:
    """A translating, yawing body carrying the UE, plus a static wall."""
    pattern = {"peak_gain_dbi": 5.0, "hpbw_azimuth_deg": 90.0,
               "hpbw_elevation_deg": 60.0}
    return {
        "materials": [{"preset": "metal"}],
        "facets": [
            {"vertices": [[8.0, -2.0, 0.0], [8.0, -2.0, 3.0],
                          [8.0, 2.0, 3.0], [8.0, 2.0, 0.0]], "material": "metal"},
            {"vertices": [[0.6, -0.4, 0.0], [0.6, 0.4, 0.0],
                          [0.6, 0.4, 0.8], [0.6, -0.4, 0.8]],
             "material": "metal", "body": "rig"},
        ],
        "transceivers": [
            {"id": "BS", "role": "BS", "position": [0.0, -6.0, 2.0],
             "boresight": [0.5, 1.0, -0.1], "pattern": dict(pattern)},
            {"id": "UE", "role": "UE", "body": "rig",
             "offset_position": [0.3, 0.2, 1.1], "offset_boresight": [1.0, 0.0, 0.0],
             "pattern": dict(pattern)},
        ],
        "bodies": [
            {"id": "rig", "waypoints": [[0.0, 2.0, 1.0, 0.0, 0.1],
                                        [1.0, 3.0, 2.5, 0.0, 0.9],
                                        [2.0, 3.5, 4.0, 0.0, 1.4]]},
        ],
    }


@pytest.fixture(scope="session")
def plates_episode() -> Episode:
    scene = scene_from_dict(plates_scene_doc())
    config = ChirpConfig(n_chirps_total=256)
    trace = TraceConfig(diffuse_enabled=False)
    return _run_episode(scene, config, trace, SensingLink("UE", "UE"), t0=0.0)


@pytest.fixture(scope="session")
def scenario_b_episode() -> Episode:
    scene = load_scene(FIXTURES / "scenario_b.json")
    config = ChirpConfig()
    trace = TraceConfig()
    return _run_episode(scene, config, trace, SensingLink("UE", "UE"),
                        t0=SCENARIO_B_T0)


@pytest.fixture(scope="session")
def scenario_c_episode() -> Episode:
    scene = load_scene(FIXTURES / "scenario_c.json")
    config = ChirpConfig()
    trace = TraceConfig(diffuse_samples_per_facet=8)
    return _run_episode(scene, config, trace, SensingLink("BS", "UE"),
                        t0=SCENARIO_C_T0)
