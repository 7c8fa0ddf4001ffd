"""Planar-facet geometry kernels shared by the scene and ray-tracing layers."""

from __future__ import annotations

import numpy as np

COPLANARITY_TOL = 1e-6   # m, max vertex distance from the facet plane
MIN_FACET_AREA = 1e-9    # m^2
_EDGE_TOL = 1e-9         # m^2, point-in-polygon cross-product slack


def unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("zero-length vector has no direction")
    return v / n


def facet_normal(vertices: np.ndarray) -> np.ndarray:
    """Unit normal from the first three vertices, right-handed in vertex order."""
    v = np.asarray(vertices, dtype=float)
    return unit(np.cross(v[1] - v[0], v[2] - v[0]))


def facet_area(vertices: np.ndarray) -> float:
    v = np.asarray(vertices, dtype=float)
    area = 0.0
    for i in range(1, len(v) - 1):
        area += 0.5 * np.linalg.norm(np.cross(v[i] - v[0], v[i + 1] - v[0]))
    return float(area)


def facet_centroid(vertices: np.ndarray) -> np.ndarray:
    return np.asarray(vertices, dtype=float).mean(axis=0)


def coplanarity_error(vertices: np.ndarray) -> float:
    """Max distance of the remaining vertices from the plane of the first three."""
    v = np.asarray(vertices, dtype=float)
    if len(v) <= 3:
        return 0.0
    n = facet_normal(v)
    return float(np.max(np.abs((v[3:] - v[0]) @ n)))


def is_convex(vertices: np.ndarray) -> bool:
    """Convexity with winding consistent with the facet normal."""
    v = np.asarray(vertices, dtype=float)
    n = facet_normal(v)
    m = len(v)
    for i in range(m):
        e1 = v[(i + 1) % m] - v[i]
        e2 = v[(i + 2) % m] - v[(i + 1) % m]
        if float(np.dot(np.cross(e1, e2), n)) < -_EDGE_TOL:
            return False
    return True


def mirror_point(p: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Reflect a point across the plane {x : normal . x = offset}."""
    return p - 2.0 * (float(np.dot(p, normal)) - offset) * normal


def reflect_direction(k_in: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Mirror law: k_r = k_i - 2 (k_i . n) n."""
    return k_in - 2.0 * float(np.dot(k_in, normal)) * normal


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class FacetPack:
    """Stacked facet arrays for one snapshot, for vectorized hit/occlusion tests.

    Triangles are padded to quads by repeating the last vertex; the degenerate
    edge contributes a zero cross product and never rejects a point.
    """

    def __init__(self, vertex_arrays):
        f = len(vertex_arrays)
        verts = np.empty((f, 4, 3))
        for i, v in enumerate(vertex_arrays):
            v = np.asarray(v, dtype=float)
            verts[i, : len(v)] = v
            if len(v) == 3:
                verts[i, 3] = v[2]
        self.n_facets = f
        self.verts = verts
        if f:
            self.normals = np.array([facet_normal(v) for v in vertex_arrays])
        else:
            self.normals = np.zeros((0, 3))
        self.offsets = np.einsum("fj,fj->f", self.normals, verts[:, 0])
        self.edges = np.roll(verts, -1, axis=1) - verts

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Point-in-facet mask. points[..., F, 3] broadcast against the pack."""
        rel = points[..., None, :] - self.verts      # (..., F, 4, 3)
        cross = np.cross(self.edges, rel)
        side = np.einsum("...fkj,fj->...fk", cross, self.normals)
        return np.all(side >= -_EDGE_TOL, axis=-1)

    def contains_at(self, points: np.ndarray, facet_idx: np.ndarray) -> np.ndarray:
        """Per-row test of points[m] against facet facet_idx[m]."""
        rel = points[:, None, :] - self.verts[facet_idx]         # (M, 4, 3)
        cross = np.cross(self.edges[facet_idx], rel)
        side = np.einsum("mkj,mj->mk", cross, self.normals[facet_idx])
        return np.all(side >= -_EDGE_TOL, axis=-1)

    def segments_blocked(self, starts: np.ndarray, ends: np.ndarray,
                         eps: float) -> np.ndarray:
        """True per segment if any facet intersects it strictly inside.

        Hits within eps meters of either endpoint do not count, so segments
        that terminate on a facet are not occluded by it.
        """
        p = np.atleast_2d(np.asarray(starts, dtype=float))
        q = np.atleast_2d(np.asarray(ends, dtype=float))
        if self.n_facets == 0:
            return np.zeros(len(p), dtype=bool)
        d = q - p                                     # (S, 3)
        lengths = np.linalg.norm(d, axis=1)
        denom = d @ self.normals.T                    # (S, F)
        num = self.offsets[None, :] - p @ self.normals.T
        safe = np.abs(denom) > 1e-12
        t = np.where(safe, num / np.where(safe, denom, 1.0), -1.0)
        margin = eps / np.maximum(lengths, 1e-12)
        inside_span = (t > margin[:, None]) & (t < 1.0 - margin[:, None])
        hit = p[:, None, :] + t[..., None] * d[:, None, :]
        valid = inside_span & self._contains_per_facet(hit)
        return np.any(valid, axis=1)

    def _contains_per_facet(self, points: np.ndarray) -> np.ndarray:
        """points shaped (S, F, 3), tested against the matching facet."""
        rel = points[:, :, None, :] - self.verts[None]   # (S, F, 4, 3)
        cross = np.cross(self.edges[None], rel)
        side = np.einsum("sfkj,fj->sfk", cross, self.normals)
        return np.all(side >= -_EDGE_TOL, axis=-1)


def segment_hits_facet(p: np.ndarray, q: np.ndarray, vertices: np.ndarray,
                       eps: float = 0.0):
    """Intersection point of segment pq with one facet, or None."""
    pack = FacetPack([vertices])
    v = np.asarray(vertices, dtype=float)
    n = facet_normal(v)
    offset = float(np.dot(n, v[0]))
    d = q - p
    denom = float(np.dot(d, n))
    if abs(denom) < 1e-12:
        return None
    t = (offset - float(np.dot(p, n))) / denom
    margin = eps / max(float(np.linalg.norm(d)), 1e-12)
    if not (margin < t < 1.0 - margin):
        return None
    x = p + t * d
    if not bool(pack.contains(x[None, None, :])[0, 0]):
        return None
    return x
