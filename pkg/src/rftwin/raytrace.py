"""Ray tracing over one world snapshot: LOS, specular images, diffuse samples.

Specular paths come from the image method: the transmitter is mirrored
through each candidate facet sequence, the candidate is intersected back to
front, and survivors are validated for facet membership, front-sidedness and
occlusion.  Diffuse paths use a deterministic stratified sample pattern per
facet (centroid-jittered grid, seeded from TraceConfig), so reruns of the
same scene and config reproduce the exact same paths.

Doppler is assembled analytically: each segment contributes the projection
of its endpoint velocities onto the segment direction.  For specular points
the in-plane migration of the reflection point does not change path length
to first order (the mirror law makes the length stationary), so the rigid
body velocity of the touched facet is exactly the right rate.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .geometry import facet_area, reflect_direction, unit
from .kinematics import WorldSnapshot
from .scene import Scene

_FRONT_EPS = 1e-9   # m, strict front-side margin
_PARAM_EPS = 1e-9   # unitless span margin for image-line intersections


@dataclass(frozen=True)
class TraceConfig:
    """Tracer knobs; defaults match the shipped fixtures.

    diffuse_samples_per_facet is a base count; facets larger than
    subdivide_area get proportionally more samples, rounded up to a full
    stratification grid.  The jitter seed makes sample patterns reproducible.
    """

    max_specular_order: int = 2
    diffuse_enabled: bool = True
    diffuse_samples_per_facet: int = 16
    occlusion_epsilon: float = 1e-4
    seed: int = 1729
    subdivide_area: float = 25.0

    def __post_init__(self):
        if not 0 <= self.max_specular_order <= 3:
            raise ValueError("max_specular_order must be between 0 and 3")
        if self.diffuse_samples_per_facet < 1:
            raise ValueError("diffuse_samples_per_facet must be >= 1")
        if self.occlusion_epsilon <= 0:
            raise ValueError("occlusion_epsilon must be positive")


@dataclass
class PathGeometry:
    """One propagation path at one instant.

    points runs TX, interaction(s)..., RX.  k_in/k_out/k_mirror hold the
    incident, outgoing and mirror-law unit vectors per interaction.  For
    diffuse paths effective_area is the patch area represented by the sample
    and sample_index identifies the sample within its facet's pattern.
    """

    kind: str
    tx_id: str
    rx_id: str
    points: np.ndarray
    facet_indices: tuple[int, ...]
    total_length: float
    k_in: np.ndarray
    k_out: np.ndarray
    k_mirror: np.ndarray
    effective_area: float | None = None
    sample_index: int | None = None

    @property
    def order(self) -> int:
        return len(self.facet_indices)

    @property
    def departure(self) -> np.ndarray:
        return unit(self.points[1] - self.points[0])

    @property
    def arrival(self) -> np.ndarray:
        return unit(self.points[-1] - self.points[-2])

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def key(self) -> tuple:
        """Association key, stable across epochs of one simulation."""
        return (self.kind, self.facet_indices, self.sample_index)


def _path_from_points(kind, tx_id, rx_id, points, facet_indices, normals,
                      effective_area=None, sample_index=None) -> PathGeometry:
    pts = np.asarray(points, dtype=float)
    segs = np.diff(pts, axis=0)
    lengths = np.linalg.norm(segs, axis=1)
    units = segs / lengths[:, None]
    k_in = units[:-1] if len(facet_indices) else np.zeros((0, 3))
    k_out = units[1:] if len(facet_indices) else np.zeros((0, 3))
    k_mirror = np.array([reflect_direction(k_in[i], normals[i])
                         for i in range(len(facet_indices))]).reshape(-1, 3)
    return PathGeometry(kind, tx_id, rx_id, pts, tuple(facet_indices),
                        float(lengths.sum()), k_in, k_out, k_mirror,
                        effective_area, sample_index)


def trace_los(snap: WorldSnapshot, tx_id: str, rx_id: str,
              config: TraceConfig = TraceConfig()) -> PathGeometry | None:
    """Direct path, or None when blocked or for a co-located pair."""
    txp = snap.transceiver_state(tx_id).position
    rxp = snap.transceiver_state(rx_id).position
    if np.linalg.norm(rxp - txp) < 1e-9:
        return None
    blocked = snap.pack.segments_blocked(txp[None], rxp[None],
                                         config.occlusion_epsilon)
    if bool(blocked[0]):
        return None
    return _path_from_points("los", tx_id, rx_id, [txp, rxp], (), [])


def trace_specular(snap: WorldSnapshot, tx_id: str, rx_id: str,
                   config: TraceConfig = TraceConfig()) -> list[PathGeometry]:
    """Specular paths up to config.max_specular_order, image method.

    Candidates are deduplicated by facet sequence and returned in a stable
    order (by order, then facet indices).
    """
    txp = snap.transceiver_state(tx_id).position
    rxp = snap.transceiver_state(rx_id).position
    pack = snap.pack
    if pack.n_facets == 0 or config.max_specular_order == 0:
        return []

    candidates: list[tuple[tuple, list]] = []   # (facet sequence, points)
    if config.max_specular_order >= 1:
        candidates += _order1_candidates(pack, txp, rxp)
    if config.max_specular_order >= 2:
        candidates += _order2_candidates(pack, txp, rxp)
    if config.max_specular_order >= 3:
        candidates += _orderk_candidates(pack, txp, rxp, 3)

    if not candidates:
        return []

    # One batched occlusion pass over every segment of every candidate.
    starts, ends, owner = [], [], []
    for ci, (_, pts) in enumerate(candidates):
        for a, b in zip(pts[:-1], pts[1:]):
            starts.append(a)
            ends.append(b)
            owner.append(ci)
    blocked = pack.segments_blocked(np.array(starts), np.array(ends),
                                    config.occlusion_epsilon)
    bad = set(np.asarray(owner)[blocked].tolist())

    paths, seen = [], set()
    for ci, (seq, pts) in enumerate(candidates):
        if ci in bad or seq in seen:
            continue
        seen.add(seq)
        normals = [pack.normals[f] for f in seq]
        paths.append(_path_from_points("specular", tx_id, rx_id, pts, seq, normals))
    paths.sort(key=lambda p: (p.order, p.facet_indices))
    return paths


def _order1_candidates(pack, txp, rxp):
    n, off = pack.normals, pack.offsets
    sd_tx = txp @ n.T - off
    sd_rx = rxp @ n.T - off
    images = txp[None, :] - 2.0 * sd_tx[:, None] * n
    d = rxp[None, :] - images
    denom = np.einsum("fj,fj->f", d, n)
    ok = (sd_tx > _FRONT_EPS) & (sd_rx > _FRONT_EPS) & (np.abs(denom) > 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(ok, (off - np.einsum("fj,fj->f", images, n)) / denom, -1.0)
    ok &= (t > _PARAM_EPS) & (t < 1.0 - _PARAM_EPS)
    p = images + t[:, None] * d
    idx = np.flatnonzero(ok)
    if idx.size:
        idx = idx[pack.contains_at(p[idx], idx)]
    return [((int(f),), [txp, p[f], rxp]) for f in idx]


def _order2_candidates(pack, txp, rxp):
    f = pack.n_facets
    if f < 2:
        return []
    n, off = pack.normals, pack.offsets
    sd_tx = txp @ n.T - off
    sd_rx = rxp @ n.T - off
    im1 = txp[None, :] - 2.0 * sd_tx[:, None] * n                  # (F,3)
    sd_im1 = im1 @ n.T - off[None, :]                              # (F,F) im1[i] vs plane j
    im2 = im1[:, None, :] - 2.0 * sd_im1[..., None] * n[None]      # (F,F,3)

    d2 = rxp[None, None, :] - im2
    denom2 = np.einsum("ifj,fj->if", d2, n)
    safe2 = np.abs(denom2) > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t2 = np.where(safe2, (off[None, :] - np.einsum("ifj,fj->if", im2, n))
                      / np.where(safe2, denom2, 1.0), -1.0)
    ok = safe2 & (t2 > _PARAM_EPS) & (t2 < 1.0 - _PARAM_EPS)
    ok &= (sd_tx[:, None] > _FRONT_EPS) & (sd_rx[None, :] > _FRONT_EPS)
    ok &= ~np.eye(f, dtype=bool)
    p2 = im2 + t2[..., None] * d2

    d1 = p2 - im1[:, None, :]
    denom1 = np.einsum("ifj,ij->if", d1, n)
    safe1 = np.abs(denom1) > 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(safe1, (off[:, None] - np.einsum("ij,ij->i", im1, n)[:, None])
                      / np.where(safe1, denom1, 1.0), -1.0)
    ok &= safe1 & (t1 > _PARAM_EPS) & (t1 < 1.0 - _PARAM_EPS)
    p1 = im1[:, None, :] + np.where(ok, t1, 0.0)[..., None] * d1

    # Reflected leg must leave facet i frontward, and hit facet j frontward.
    ok &= np.einsum("ifj,ij->if", p2, n) - off[:, None] > _FRONT_EPS
    ok &= np.einsum("ifj,fj->if", p1, n) - off[None, :] > _FRONT_EPS

    ii, jj = np.nonzero(ok)
    if ii.size:
        keep = pack.contains_at(p1[ii, jj], ii) & pack.contains_at(p2[ii, jj], jj)
        ii, jj = ii[keep], jj[keep]
    return [((int(i), int(j)), [txp, p1[i, j], p2[i, j], rxp])
            for i, j in zip(ii, jj)]


def _orderk_candidates(pack, txp, rxp, order):
    """Generic nested-image search for one fixed order (used for order 3)."""
    out = []
    n, off = pack.normals, pack.offsets
    for seq in itertools.product(range(pack.n_facets), repeat=order):
        if any(seq[i] == seq[i + 1] for i in range(order - 1)):
            continue
        images = [txp]
        for fidx in seq:
            p = images[-1]
            images.append(p - 2.0 * (float(p @ n[fidx]) - off[fidx]) * n[fidx])
        pts = [rxp]
        target = rxp
        valid = True
        for depth in range(order - 1, -1, -1):
            fidx = seq[depth]
            src = images[depth + 1]
            d = target - src
            denom = float(d @ n[fidx])
            if abs(denom) < 1e-12:
                valid = False
                break
            t = (off[fidx] - float(src @ n[fidx])) / denom
            if not (_PARAM_EPS < t < 1.0 - _PARAM_EPS):
                valid = False
                break
            hit = src + t * d
            if not bool(pack.contains_at(hit[None], np.array([fidx]))[0]):
                valid = False
                break
            pts.append(hit)
            target = hit
        if not valid:
            continue
        pts.append(txp)
        pts = pts[::-1]
        # Front-side checks along the unfolded chain.
        for i, fidx in enumerate(seq):
            before, after = pts[i], pts[i + 2]
            if (float(before @ n[fidx]) - off[fidx] <= _FRONT_EPS
                    or float(after @ n[fidx]) - off[fidx] <= _FRONT_EPS):
                valid = False
                break
        if valid:
            out.append((tuple(int(s) for s in seq), pts))
    return out


@dataclass
class _SamplePattern:
    weights: np.ndarray       # (M, n_vertices) convex vertex weights
    n_samples: int


def diffuse_sample_count(area: float, config: TraceConfig) -> int:
    """Samples for one facet: base count scaled by area, as a full grid."""
    target = config.diffuse_samples_per_facet * max(
        1, int(np.ceil(area / config.subdivide_area)))
    side = int(np.ceil(np.sqrt(target)))
    return side * side


def diffuse_sample_pattern(facet_index: int, n_vertices: int, area: float,
                           config: TraceConfig) -> _SamplePattern:
    """Deterministic stratified pattern in facet parameter space.

    A sqrt(n) x sqrt(n) grid jittered around each cell centroid, seeded by
    (config.seed, facet index).  Quads map bilinearly, triangles through the
    folded-square map, both expressed as convex weights over the vertices so
    world points are a single matrix product with the posed vertices.
    """
    m = diffuse_sample_count(area, config)
    side = int(round(np.sqrt(m)))
    rng = np.random.default_rng([config.seed, facet_index])
    jitter = 0.8 * (rng.random((m, 2)) - 0.5)
    grid = np.stack(np.meshgrid(np.arange(side), np.arange(side),
                                indexing="ij"), axis=-1).reshape(-1, 2)
    uv = (grid + 0.5 + jitter) / side
    u, v = uv[:, 0], uv[:, 1]
    if n_vertices == 4:
        weights = np.stack([(1 - u) * (1 - v), u * (1 - v), u * v, (1 - u) * v], axis=1)
    else:
        fold = u + v > 1.0
        u = np.where(fold, 1.0 - u, u)
        v = np.where(fold, 1.0 - v, v)
        weights = np.stack([1.0 - u - v, u, v], axis=1)
    return _SamplePattern(weights, m)


def trace_diffuse(snap: WorldSnapshot, tx_id: str, rx_id: str,
                  config: TraceConfig = TraceConfig(),
                  patterns: dict | None = None) -> list[PathGeometry]:
    """Single-bounce diffuse paths from the stratified facet samples.

    Samples facing away from either endpoint or with a blocked leg are
    dropped; each survivor carries effective_area = facet area / n_samples.
    """
    if not config.diffuse_enabled or snap.pack.n_facets == 0:
        return []
    txp = snap.transceiver_state(tx_id).position
    rxp = snap.transceiver_state(rx_id).position
    pack = snap.pack

    points, owners, sample_ids, areas = [], [], [], []
    for fi, facet in enumerate(snap.facets):
        sd_tx = float(txp @ pack.normals[fi]) - pack.offsets[fi]
        sd_rx = float(rxp @ pack.normals[fi]) - pack.offsets[fi]
        if sd_tx <= _FRONT_EPS or sd_rx <= _FRONT_EPS:
            continue
        nv = len(facet.vertices)
        area = facet_area(facet.vertices)
        if patterns is not None and facet.index in patterns:
            pat = patterns[facet.index]
        else:
            pat = diffuse_sample_pattern(facet.index, nv, area, config)
        pts = pat.weights @ facet.vertices[:nv]
        points.append(pts)
        owners.append(np.full(pat.n_samples, fi))
        sample_ids.append(np.arange(pat.n_samples))
        areas.append(np.full(pat.n_samples, area / pat.n_samples))
    if not points:
        return []

    pts = np.concatenate(points)
    owners = np.concatenate(owners)
    sample_ids = np.concatenate(sample_ids)
    areas = np.concatenate(areas)

    blocked_in = pack.segments_blocked(np.broadcast_to(txp, pts.shape), pts,
                                       config.occlusion_epsilon)
    blocked_out = pack.segments_blocked(pts, np.broadcast_to(rxp, pts.shape),
                                        config.occlusion_epsilon)
    keep = ~(blocked_in | blocked_out)

    paths = []
    for p, fi, si, a in zip(pts[keep], owners[keep], sample_ids[keep], areas[keep]):
        paths.append(_path_from_points(
            "diffuse", tx_id, rx_id, [txp, p, rxp], (int(snap.facets[fi].index),),
            [pack.normals[fi]], effective_area=float(a), sample_index=int(si)))
    return paths


def build_sample_patterns(scene: Scene, config: TraceConfig) -> dict:
    """Precompute per-facet sample patterns keyed by scene facet index."""
    return {f.index: diffuse_sample_pattern(f.index, len(f.vertices), f.area, config)
            for f in scene.facets}


def path_doppler(path: PathGeometry, snap: WorldSnapshot, f_c: float,
                 speed_of_light: float | None = None) -> float:
    """Doppler shift in Hz; positive while the total path length shrinks.

    nu = -(f_c / c) d(total_length)/dt, with the rate assembled from the
    snapshot velocity field at the two endpoints and every interaction point.
    """
    from .em import SPEED_OF_LIGHT
    c = SPEED_OF_LIGHT if speed_of_light is None else speed_of_light
    vels = [snap.transceiver_state(path.tx_id).velocity]
    for fi, pt in zip(path.facet_indices, path.points[1:-1]):
        vels.append(snap.point_velocity(fi, pt))
    vels.append(snap.transceiver_state(path.rx_id).velocity)
    vels = np.asarray(vels)
    segs = np.diff(path.points, axis=0)
    units = segs / np.linalg.norm(segs, axis=1)[:, None]
    rate = float(np.einsum("sj,sj->", units, np.diff(vels, axis=0)))
    return -(f_c / c) * rate
