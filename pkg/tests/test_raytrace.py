"""Ray tracer against brute-force minimization, image identities and FD Doppler."""

import numpy as np
import pytest
from scipy.optimize import minimize

from rftwin.kinematics import build_trajectories, snapshot
from rftwin.raytrace import (
    TraceConfig,
    build_sample_patterns,
    diffuse_sample_count,
    diffuse_sample_pattern,
    path_doppler,
    trace_diffuse,
    trace_los,
    trace_specular,
)
from rftwin.scene import scene_from_dict

from conftest import spin_rig_doc, two_ray_doc

PATTERN = {"peak_gain_dbi": 5.0, "hpbw_azimuth_deg": 90.0, "hpbw_elevation_deg": 60.0}
F_C = 79e9
C = 3.0e8


def corridor_doc():
    """Two parallel walls for multi-bounce image identities."""
    return {
        "materials": [{"preset": "metal"}],
        "facets": [
            {"vertices": [[0.0, 0.0, 0.0], [0.0, 10.0, 0.0],
                          [0.0, 10.0, 3.0], [0.0, 0.0, 3.0]], "material": "metal"},
            {"vertices": [[5.0, 10.0, 0.0], [5.0, 0.0, 0.0],
                          [5.0, 0.0, 3.0], [5.0, 10.0, 3.0]], "material": "metal"},
        ],
        "transceivers": [
            {"id": "BS", "role": "BS", "position": [1.0, 2.0, 1.0],
             "boresight": [1.0, 1.0, 0.0], "pattern": dict(PATTERN)},
            {"id": "UE", "role": "UE", "position": [4.0, 8.0, 1.2],
             "boresight": [-1.0, -1.0, 0.0], "pattern": dict(PATTERN)},
        ],
    }


def total_length(points):
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def test_ground_bounce_matches_brute_force_minimum():
    scene = scene_from_dict(two_ray_doc())
    snap = snapshot(scene, 0.0)
    paths = trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=1))
    assert len(paths) == 1
    bounce = paths[0]

    tx = np.array([0.0, 0.0, 10.0])
    rx = np.array([30.0, 0.0, 1.5])

    def path_len(p2):
        p = np.array([p2[0], p2[1], 0.0])
        return np.linalg.norm(p - tx) + np.linalg.norm(rx - p)

    res = minimize(path_len, x0=[20.0, 1.0], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12})
    assert res.success
    assert np.allclose(bounce.points[1][:2], res.x, atol=1e-6)
    assert bounce.total_length == pytest.approx(res.fun, abs=1e-6)
    # closed form: image of the BS below the ground plane
    x_star = 30.0 * 10.0 / 11.5
    assert bounce.points[1] == pytest.approx([x_star, 0.0, 0.0], abs=1e-9)
    assert bounce.total_length == pytest.approx(np.hypot(30.0, 11.5), abs=1e-9)
    # mirror law at the bounce point
    assert np.allclose(bounce.k_mirror[0], bounce.k_out[0], atol=1e-12)


def test_double_bounce_length_equals_unfolded_image_distance():
    scene = scene_from_dict(corridor_doc())
    snap = snapshot(scene, 0.0)
    paths = trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=2))
    by_seq = {p.facet_indices: p for p in paths}
    assert set(by_seq) == {(0,), (1,), (0, 1), (1, 0)}

    tx = np.array([1.0, 2.0, 1.0])
    rx = np.array([4.0, 8.0, 1.2])

    def mirror_x(p, plane_x):
        out = p.copy()
        out[0] = 2.0 * plane_x - p[0]
        return out

    left_right = np.linalg.norm(mirror_x(mirror_x(tx, 0.0), 5.0) - rx)
    right_left = np.linalg.norm(mirror_x(mirror_x(tx, 5.0), 0.0) - rx)
    assert by_seq[(0, 1)].total_length == pytest.approx(left_right, abs=1e-6)
    assert by_seq[(1, 0)].total_length == pytest.approx(right_left, abs=1e-6)
    # both bounce points on their walls, path length consistent with points
    p = by_seq[(0, 1)]
    assert p.points[1][0] == pytest.approx(0.0, abs=1e-9)
    assert p.points[2][0] == pytest.approx(5.0, abs=1e-9)
    assert p.total_length == pytest.approx(total_length(p.points), abs=1e-12)


def test_triple_bounce_length_identity():
    scene = scene_from_dict(corridor_doc())
    snap = snapshot(scene, 0.0)
    paths = trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=3))
    by_seq = {p.facet_indices: p for p in paths}
    assert (0, 1, 0) in by_seq and (1, 0, 1) in by_seq

    tx = np.array([1.0, 2.0, 1.0])
    rx = np.array([4.0, 8.0, 1.2])
    img = tx.copy()
    for plane in (0.0, 5.0, 0.0):
        img[0] = 2.0 * plane - img[0]
    assert by_seq[(0, 1, 0)].total_length == pytest.approx(
        np.linalg.norm(img - rx), abs=1e-6)


def test_los_occlusion_toggle():
    doc = two_ray_doc()
    doc["facets"].append({"vertices": [[15.0, -1.0, 0.0], [15.0, -1.0, 12.0],
                                       [15.0, 1.0, 12.0], [15.0, 1.0, 0.0]],
                          "material": "concrete"})
    scene = scene_from_dict(doc)
    snap = snapshot(scene, 0.0)
    assert trace_los(snap, "BS", "UE") is None
    # the screen also shadows the ground bounce
    assert trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=1)) == []

    doc["facets"][1]["vertices"] = [[15.0, 3.0, 0.0], [15.0, 3.0, 12.0],
                                    [15.0, 5.0, 12.0], [15.0, 5.0, 0.0]]
    snap = snapshot(scene_from_dict(doc), 0.0)
    los = trace_los(snap, "BS", "UE")
    assert los is not None
    assert los.total_length == pytest.approx(np.hypot(30.0, 8.5), abs=1e-12)
    assert len(trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=1))) == 1


def test_colocated_pair_has_no_los():
    scene = scene_from_dict(two_ray_doc())
    snap = snapshot(scene, 0.0)
    assert trace_los(snap, "BS", "BS") is None


def test_one_sided_facets_need_both_endpoints_in_front():
    doc = two_ray_doc()
    # flip the ground winding so its normal points down, away from the radios
    doc["facets"][0]["vertices"] = doc["facets"][0]["vertices"][::-1]
    scene = scene_from_dict(doc)
    snap = snapshot(scene, 0.0)
    assert trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=1)) == []
    assert trace_diffuse(snap, "BS", "UE", TraceConfig(diffuse_samples_per_facet=4)) == []


def test_reflection_foot_outside_facet_is_rejected():
    doc = two_ray_doc()
    # specular foot sits near x = 26.1; a patch ending at x = 20 misses it
    doc["facets"][0]["vertices"] = [[10.0, -5.0, 0.0], [20.0, -5.0, 0.0],
                                    [20.0, 5.0, 0.0], [10.0, 5.0, 0.0]]
    scene = scene_from_dict(doc)
    snap = snapshot(scene, 0.0)
    assert trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=1)) == []


def test_trace_config_validation():
    with pytest.raises(ValueError):
        TraceConfig(max_specular_order=4)
    with pytest.raises(ValueError):
        TraceConfig(diffuse_samples_per_facet=0)
    with pytest.raises(ValueError):
        TraceConfig(occlusion_epsilon=0.0)


def test_diffuse_sample_count_scales_with_area():
    config = TraceConfig(diffuse_samples_per_facet=16, subdivide_area=25.0)
    assert diffuse_sample_count(4.0, config) == 16
    assert diffuse_sample_count(25.0, config) == 16
    assert diffuse_sample_count(100.0, config) == 64
    assert diffuse_sample_count(30.0, config) == 36   # 2 blocks -> 32 -> side 6


def test_diffuse_pattern_is_deterministic_and_convex():
    config = TraceConfig()
    a = diffuse_sample_pattern(3, 4, 10.0, config)
    b = diffuse_sample_pattern(3, 4, 10.0, config)
    assert np.array_equal(a.weights, b.weights)
    c = diffuse_sample_pattern(3, 4, 10.0, TraceConfig(seed=99))
    assert not np.array_equal(a.weights, c.weights)
    for pat in (a, diffuse_sample_pattern(0, 3, 2.0, config)):
        assert np.all(pat.weights >= 0.0)
        assert np.allclose(pat.weights.sum(axis=1), 1.0, atol=1e-12)


def test_diffuse_paths_cover_facet_and_sum_area():
    scene = scene_from_dict(two_ray_doc())
    snap = snapshot(scene, 0.0)
    config = TraceConfig(diffuse_samples_per_facet=4, subdivide_area=1e9)
    paths = trace_diffuse(snap, "BS", "UE", config)
    assert len(paths) == diffuse_sample_count(200.0, config)
    assert sum(p.effective_area for p in paths) == pytest.approx(200.0, rel=1e-12)
    pts = np.array([p.points[1] for p in paths])
    assert snap.pack.contains(pts[:, None, :]).all()
    assert len({p.sample_index for p in paths}) == len(paths)
    for p in paths[:5]:
        assert p.total_length == pytest.approx(total_length(p.points), abs=1e-12)


def test_diffuse_respects_occlusion_per_sample():
    doc = two_ray_doc()
    # low screen at x=19: samples before it lose the hop to the UE, samples
    # between x=19 and x=23.75 lose the hop from the BS (descending ray still
    # below the 2 m top), so only the far end of the patch stays lit
    doc["facets"].append({"vertices": [[19.0, -6.0, 0.0], [19.0, -6.0, 2.0],
                                       [19.0, 6.0, 2.0], [19.0, 6.0, 0.0]],
                          "material": "concrete"})
    scene = scene_from_dict(doc)
    snap = snapshot(scene, 0.0)
    config = TraceConfig(diffuse_samples_per_facet=16, subdivide_area=1e9)
    open_paths = trace_diffuse(snapshot(scene_from_dict(two_ray_doc()), 0.0),
                               "BS", "UE", config)
    shadowed = [p for p in trace_diffuse(snap, "BS", "UE", config)
                if p.facet_indices == (0,)]
    assert 0 < len(shadowed) < len(open_paths)
    for p in shadowed:
        assert p.points[1][0] > 23.74


def test_build_sample_patterns_matches_per_facet_calls():
    scene = scene_from_dict(two_ray_doc())
    config = TraceConfig()
    patterns = build_sample_patterns(scene, config)
    direct = diffuse_sample_pattern(0, 4, scene.facets[0].area, config)
    assert np.array_equal(patterns[0].weights, direct.weights)


def path_by_key(paths, key):
    for p in paths:
        if p.key == key:
            return p
    return None


def test_path_doppler_matches_finite_difference_of_length():
    scene = scene_from_dict(spin_rig_doc())
    traj = build_trajectories(scene)
    config = TraceConfig(diffuse_samples_per_facet=4, subdivide_area=1e9)
    t, h = 0.7, 5e-7

    def all_paths(tt):
        snap = snapshot(scene, tt, traj)
        paths = []
        los = trace_los(snap, "BS", "UE", config)
        if los is not None:
            paths.append(los)
        paths += trace_specular(snap, "BS", "UE", config)
        paths += trace_diffuse(snap, "BS", "UE", config)
        return snap, paths

    snap, paths = all_paths(t)
    _, before = all_paths(t - h)
    _, after = all_paths(t + h)
    assert len(paths) >= 6
    checked = 0
    for p in paths:
        pm, pp = path_by_key(before, p.key), path_by_key(after, p.key)
        if pm is None or pp is None:
            continue
        rate_fd = (pp.total_length - pm.total_length) / (2.0 * h)
        nu_fd = -(F_C / C) * rate_fd
        nu = path_doppler(p, snap, F_C)
        assert nu == pytest.approx(nu_fd, abs=max(0.5, 1e-4 * abs(nu_fd)))
        checked += 1
    assert checked >= 6


def test_path_doppler_sign_convention():
    # UE riding straight toward the BS: shrinking path, positive Doppler
    doc = spin_rig_doc()
    doc["bodies"][0]["waypoints"] = [[0.0, 4.0, -6.0, 0.0, np.pi],
                                     [1.0, 2.0, -6.0, 0.0, np.pi]]
    scene = scene_from_dict(doc)
    snap = snapshot(scene, 0.5)
    los = trace_los(snap, "BS", "UE")
    assert los is not None
    assert path_doppler(los, snap, F_C) > 0.0


def test_specular_order_and_stable_sort():
    scene = scene_from_dict(corridor_doc())
    snap = snapshot(scene, 0.0)
    paths = trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=2))
    orders = [p.order for p in paths]
    assert orders == sorted(orders)
    seqs = [p.facet_indices for p in paths]
    assert len(seqs) == len(set(seqs))
    again = trace_specular(snap, "BS", "UE", TraceConfig(max_specular_order=2))
    assert seqs == [p.facet_indices for p in again]
