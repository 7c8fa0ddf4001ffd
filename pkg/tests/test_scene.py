"""Scene schema: materials, patterns, facet validation, JSON round-trip."""

import numpy as np
import pytest

from rftwin.scene import (
    AntennaPattern,
    Material,
    SceneError,
    Transceiver,
    boresight_angles,
    load_scene,
    material_defaults,
    scene_from_dict,
)

PATTERN = {"peak_gain_dbi": 5.0, "hpbw_azimuth_deg": 90.0, "hpbw_elevation_deg": 60.0}


def small_scene_doc():
    return {
        "name": "roundtrip",
        "materials": [{"preset": "metal"},
                      {"name": "custom", "rel_permittivity": 4.0, "conductivity": 0.1,
                       "scattering_coeff": 0.5, "lobe_exponent": 3}],
        "facets": [
            {"vertices": [[5.0, -1.0, 0.0], [5.0, -1.0, 2.0], [5.0, 1.0, 2.0],
                          [5.0, 1.0, 0.0]], "material": "custom"},
            {"vertices": [[0.5, -0.5, 0.0], [0.5, 0.5, 0.0], [0.5, 0.0, 1.0]],
             "material": "metal", "body": "cart"},
        ],
        "transceivers": [
            {"id": "BS", "role": "BS", "position": [0.0, 0.0, 3.0],
             "boresight": [1.0, 0.0, -0.3], "pattern": dict(PATTERN),
             "tx_power_dbm": 23.0, "noise_figure_db": 9.0},
            {"id": "UE", "role": "UE", "body": "cart",
             "offset_position": [0.1, 0.0, 0.5], "offset_boresight": [1.0, 0.0, 0.0],
             "pattern": dict(PATTERN)},
        ],
        "bodies": [
            {"id": "cart", "waypoints": [[0.0, 0.0, 0.0, 0.0, 0.2],
                                         [1.0, 1.0, 0.0, 0.0, 0.3],
                                         [2.0, 2.0, 1.0, 0.0, 0.4]]},
        ],
    }


def test_material_presets_conserve_power_and_values():
    presets = material_defaults()
    assert set(presets) == {"metal", "glass", "concrete", "brick"}
    for m in presets.values():
        assert m.reflection_reduction ** 2 + m.scattering_coeff ** 2 == pytest.approx(1.0)
    assert presets["metal"].conductivity == 1.0e7
    assert presets["metal"].scattering_coeff == 0.05
    assert presets["concrete"].rel_permittivity == 5.24
    assert presets["brick"].lobe_exponent == 2
    # scattering rises and lobes widen from mirror-like to rough materials
    order = [presets[n] for n in ("metal", "glass", "concrete", "brick")]
    assert all(a.scattering_coeff < b.scattering_coeff for a, b in zip(order, order[1:]))
    assert all(a.lobe_exponent > b.lobe_exponent for a, b in zip(order, order[1:]))


@pytest.mark.parametrize("kwargs", [
    {"rel_permittivity": 0.5},
    {"conductivity": -1.0},
    {"scattering_coeff": 1.2},
    {"lobe_exponent": 0},
    {"lobe_exponent": 2.5},
])
def test_material_validation(kwargs):
    base = {"name": "bad", "rel_permittivity": 2.0, "conductivity": 0.0,
            "scattering_coeff": 0.3, "lobe_exponent": 4}
    base.update(kwargs)
    with pytest.raises(SceneError, match="bad"):
        Material(**base)


def test_pattern_gain_peak_halfpower_and_floor():
    p = AntennaPattern(**PATTERN)
    assert p.gain_db(0.0, 0.0) == pytest.approx(5.0)
    assert p.gain_db(45.0, 0.0) == pytest.approx(2.0)    # -3 dB at half the beamwidth
    assert p.gain_db(0.0, 30.0) == pytest.approx(2.0)
    assert p.gain_db(180.0, 90.0) == pytest.approx(5.0 - 30.0)   # relative floor
    grid = p.gain_db(np.array([0.0, 45.0, 90.0]), np.zeros(3))
    assert grid.shape == (3,)
    assert np.all(np.diff(grid) < 0.0)
    assert np.min(grid) >= 5.0 - 30.0


def test_pattern_rejects_nonpositive_beamwidths():
    with pytest.raises(SceneError):
        AntennaPattern(5.0, 0.0, 60.0)
    with pytest.raises(SceneError):
        AntennaPattern(5.0, 90.0, -10.0)


def test_boresight_angles_principal_directions():
    b = [1.0, 0.0, 0.0]
    assert boresight_angles(b, [1.0, 0.0, 0.0]) == pytest.approx((0.0, 0.0))
    az, el = boresight_angles(b, [0.0, 1.0, 0.0])
    assert (az, el) == pytest.approx((90.0, 0.0))
    az, el = boresight_angles(b, [0.0, 0.0, 1.0])
    assert el == pytest.approx(90.0)
    az, el = boresight_angles(b, [1.0, 0.0, 1.0])
    assert (az, el) == pytest.approx((0.0, 45.0))
    # vertical boresight falls back to a horizontal reference axis
    az, el = boresight_angles([0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    assert el == pytest.approx(90.0)


def test_facet_validation_messages_name_the_facet():
    doc = small_scene_doc()
    doc["facets"][0]["vertices"][3][0] = 5.1   # bend one corner off-plane
    with pytest.raises(SceneError, match="facet 0"):
        scene_from_dict(doc)

    doc = small_scene_doc()
    doc["facets"][0]["vertices"] = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]]
    with pytest.raises(SceneError, match="facet 0"):
        scene_from_dict(doc)

    doc = small_scene_doc()
    doc["facets"][1]["vertices"] = [[0, 0, 0], [2, 0, 0], [1, 0.2, 0], [2, 1, 0],
                                    ][:3] + [[0.9, 0.1, 0]]
    with pytest.raises(SceneError, match="facet 1"):
        scene_from_dict(doc)


def test_facet_normal_area_from_scene():
    scene = scene_from_dict(small_scene_doc())
    wall = scene.facets[0]
    assert np.allclose(wall.normal, [-1.0, 0.0, 0.0])
    assert wall.area == pytest.approx(4.0)
    tri = scene.facets[1]
    assert tri.area == pytest.approx(0.5)
    assert scene.material_of(wall).name == "custom"


def test_body_waypoint_validation():
    doc = small_scene_doc()
    doc["bodies"][0]["waypoints"] = [[0.0, 0.0, 0.0, 0.0]]
    with pytest.raises(SceneError, match="cart"):
        scene_from_dict(doc)

    doc = small_scene_doc()
    doc["bodies"][0]["waypoints"] = [[0.0, 0, 0, 0], [0.0, 1, 0, 0]]
    with pytest.raises(SceneError, match="strictly increase"):
        scene_from_dict(doc)

    doc = small_scene_doc()
    doc["bodies"][0]["waypoints"] = [[0.0, 0, 0], [1.0, 1, 0]]
    with pytest.raises(SceneError, match=r"\[t,x,y,z\]"):
        scene_from_dict(doc)


@pytest.mark.parametrize("mutate,match", [
    (lambda d: d["facets"][0].update(material="nope"), "unknown material"),
    (lambda d: d["facets"][1].update(body="ghost"), "unknown body"),
    (lambda d: d["materials"].append({"preset": "plutonium"}), "unknown material preset"),
    (lambda d: d["materials"].append({"preset": "metal"}), "duplicate material"),
    (lambda d: d["transceivers"].append(dict(d["transceivers"][0])), "duplicate transceiver"),
    (lambda d: d["bodies"].append(dict(d["bodies"][0])), "duplicate body"),
    (lambda d: d.update(transceivers=[]), "no transceivers"),
    (lambda d: d["transceivers"][1].update(body="ghost"), "unknown body"),
    (lambda d: d["facets"][0].pop("material"), "missing material"),
])
def test_reference_validation(mutate, match):
    doc = small_scene_doc()
    mutate(doc)
    with pytest.raises(SceneError, match=match):
        scene_from_dict(doc)


def test_transceiver_needs_exactly_one_mount():
    with pytest.raises(SceneError, match="exactly one"):
        Transceiver("X", "UE", AntennaPattern(**PATTERN),
                    position=(0, 0, 0), boresight=(1, 0, 0),
                    body_id="cart", offset_position=(0, 0, 0),
                    offset_boresight=(1, 0, 0))
    with pytest.raises(SceneError, match="exactly one"):
        Transceiver("X", "UE", AntennaPattern(**PATTERN))
    with pytest.raises(SceneError, match="role"):
        Transceiver("X", "relay", AntennaPattern(**PATTERN),
                    position=(0, 0, 0), boresight=(1, 0, 0))


def test_scene_roundtrip_through_json(tmp_path):
    scene = scene_from_dict(small_scene_doc())
    path = tmp_path / "scene.json"
    scene.save(path)
    again = load_scene(path)
    assert again == scene
    assert again.name == "roundtrip"
    assert again.transceivers["BS"].tx_power_dbm == 23.0
    assert not again.transceivers["UE"].is_fixed
    assert again.bodies["cart"].yaws is not None


def test_scene_t_span():
    scene = scene_from_dict(small_scene_doc())
    assert scene.t_span == (0.0, 2.0)
    doc = small_scene_doc()
    doc["facets"] = doc["facets"][:1]
    doc["transceivers"] = doc["transceivers"][:1]
    doc["bodies"] = []
    assert scene_from_dict(doc).t_span is None


def test_unknown_transceiver_lookup():
    scene = scene_from_dict(small_scene_doc())
    with pytest.raises(SceneError, match="unknown transceiver"):
        scene.transceiver("XX")


def test_load_scene_errors(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(SceneError, match="nope.json"):
        load_scene(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SceneError, match="invalid JSON"):
        load_scene(bad)


def test_repo_fixture_scenes_load():
    from conftest import FIXTURES
    for name in ("scenario_b.json", "scenario_c.json"):
        scene = load_scene(FIXTURES / name)
        assert scene.facets and scene.transceivers
