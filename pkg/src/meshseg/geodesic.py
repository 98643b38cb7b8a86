"""Geodesic distance fields, capital-face estimation, and distance reweighting.

The lifting step scores every face a detector box touched. Those scores are
modulated by how far each face lies — along the surface, not through the air —
from the "capital" face that best represents the box. This module provides the
three pieces: picking the capital face, computing distance fields from it, and
converting distances into multiplicative weights (Gaussian density, linear
max-normalized, or softmax).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .mesh import Mesh

# Linear reweighting offset: keeps the farthest face's weight positive.
MAX_REWEIGHT_EPS = 1e-8
# Gaussian sigma floor, as a fraction of the mesh bounding-box diagonal.
SIGMA_FLOOR_FRAC = 1e-6


@dataclass(frozen=True)
class GeodesicField:
    """Distances from a source face to a target face set.

    ``distances[i]`` is the surface distance from ``source`` to
    ``target_faces[i]``; unreachable targets hold ``inf``. ``scale`` is the
    mesh bounding-box diagonal, kept so weighting stays resolution-independent.
    """

    source: int
    target_faces: np.ndarray
    distances: np.ndarray
    scale: float

    def to_dense(self, n_faces: int) -> np.ndarray:
        """Per-face distance array with NaN for faces outside the target set."""
        out = np.full(n_faces, np.nan)
        out[self.target_faces] = self.distances
        return out


@dataclass(frozen=True)
class ReweightVector:
    """Nonnegative per-face weights aligned with a target face set."""

    target_faces: np.ndarray
    weights: np.ndarray


def _closest_point_distances(points: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Distance from each point to its corresponding triangle (exact projection).

    ``points`` is (n, 3) and ``tri`` is (n, 3, 3); the i-th point is tested
    against the i-th triangle.
    """
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac, ap = b - a, c - a, points - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = points - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = points - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(points)
    done = np.zeros(len(points), dtype=bool)

    def settle(mask, value):
        mask = mask & ~done
        closest[mask] = value[mask] if value.ndim == 2 else value
        done[mask] = True

    settle((d1 <= 0) & (d2 <= 0), a)                      # vertex region A
    settle((d3 >= 0) & (d4 <= d3), b)                     # vertex region B
    settle((d6 >= 0) & (d5 <= d6), c)                     # vertex region C

    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    settle((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)   # edge AB

    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    settle((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)   # edge AC

    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_bc = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
    settle((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))  # edge BC

    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
    interior = a + v[:, None] * ab + w[:, None] * ac
    settle(np.ones(len(points), dtype=bool), interior)    # face interior
    return np.linalg.norm(points - closest, axis=1)


def capital_face(mesh: Mesh, target: np.ndarray, areas: np.ndarray,
                 vertex_multiset: bool = False) -> int:
    """Representative face of a target set: the one nearest its weighted center.

    The center is the area-weighted mean of target face centroids, with areas
    usually being per-face pixel counts from a rendered view. With
    ``vertex_multiset`` the center is instead the plain mean of all corner
    vertices of the target faces (each counted once per face, no weighting);
    with per-face weights the two definitions coincide, so the flag only
    matters as an unweighted variant.
    """
    target = np.asarray(target, dtype=np.int64)
    if target.size == 0:
        raise ValueError("capital_face: target set is empty")
    areas = np.asarray(areas, dtype=np.float64)
    if areas.shape != target.shape:
        raise ValueError("capital_face: areas must align with target")
    if (areas <= 0).any():
        raise ValueError("capital_face: areas must be positive on the target set")
    if vertex_multiset:
        corners = mesh.vertices[mesh.faces[target]]     # (t, 3, 3)
        center = corners.reshape(-1, 3).mean(axis=0)
    else:
        cents = mesh.face_centroids[target]
        center = (areas[:, None] * cents).sum(axis=0) / areas.sum()
    tri = mesh.vertices[mesh.faces[target]]
    d = _closest_point_distances(np.broadcast_to(center, (len(target), 3)).copy(), tri)
    return int(target[int(np.argmin(d))])


def _heat_method_vertex_distances(mesh: Mesh, source_vertices: np.ndarray) -> np.ndarray:
    """Heat-method distances from a vertex set to every vertex."""
    from scipy.sparse.linalg import spsolve

    v, f = mesh.vertices, mesh.faces
    n = mesh.n_vertices
    vi, vj, vk = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    # cotangent Laplacian and barycentric-lumped mass matrix
    rows, cols, vals = [], [], []
    corners = ((f[:, 0], f[:, 1], f[:, 2]), (f[:, 1], f[:, 2], f[:, 0]),
               (f[:, 2], f[:, 0], f[:, 1]))
    area2 = 2.0 * mesh.face_areas
    for a_idx, b_idx, c_idx in corners:
        # cotangent at corner a, opposite edge (b, c)
        u = v[b_idx] - v[a_idx]
        w = v[c_idx] - v[a_idx]
        cot = np.einsum("ij,ij->i", u, w) / np.maximum(area2, 1e-300)
        half = 0.5 * cot
        rows.extend((b_idx, c_idx, b_idx, c_idx))
        cols.extend((c_idx, b_idx, b_idx, c_idx))
        vals.extend((-half, -half, half, half))
    L = sparse.csr_matrix((np.concatenate(vals),
                           (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    mass = np.zeros(n)
    for k in range(3):
        np.add.at(mass, f[:, k], mesh.face_areas / 3.0)
    M = sparse.diags(mass)

    edge_lens = np.concatenate([np.linalg.norm(vj - vi, axis=1),
                                np.linalg.norm(vk - vj, axis=1),
                                np.linalg.norm(vi - vk, axis=1)])
    t = float(np.mean(edge_lens)) ** 2

    u0 = np.zeros(n)
    u0[source_vertices] = 1.0
    heat = spsolve((M + t * L).tocsc(), u0)

    # per-face gradient of the heat field, normalized, then divergence
    normals = np.cross(vj - vi, vk - vi)
    grad = (heat[f[:, 0], None] * np.cross(normals, vk - vj)
            + heat[f[:, 1], None] * np.cross(normals, vi - vk)
            + heat[f[:, 2], None] * np.cross(normals, vj - vi))
    norm = np.linalg.norm(grad, axis=1, keepdims=True)
    x = -grad / np.maximum(norm, 1e-300)

    div = np.zeros(n)

    def corner_cot(a_idx, b_idx, c_idx):
        u = v[b_idx] - v[a_idx]
        w = v[c_idx] - v[a_idx]
        return np.einsum("ij,ij->i", u, w) / np.maximum(area2, 1e-300)

    cot0 = corner_cot(f[:, 0], f[:, 1], f[:, 2])
    cot1 = corner_cot(f[:, 1], f[:, 2], f[:, 0])
    cot2 = corner_cot(f[:, 2], f[:, 0], f[:, 1])
    e01, e12, e20 = vj - vi, vk - vj, vi - vk
    xd = lambda e: np.einsum("ij,ij->i", x, e)
    np.add.at(div, f[:, 0], 0.5 * (cot2 * xd(e01) - cot1 * xd(e20)))
    np.add.at(div, f[:, 1], 0.5 * (cot0 * xd(e12) - cot2 * xd(e01)))
    np.add.at(div, f[:, 2], 0.5 * (cot1 * xd(e20) - cot0 * xd(e12)))

    # L is the positive-semidefinite operator (= -cotan Laplacian), so the
    # Poisson step solves L phi = -div; tiny shift pins the constant nullspace.
    reg = L + 1e-12 * sparse.eye(n)
    phi = spsolve(reg.tocsc(), -div)
    phi -= phi[source_vertices].min()
    return phi


def geodesic_distances(mesh: Mesh, source: int, targets: np.ndarray,
                       backend: str = "graph") -> GeodesicField:
    """Surface distances from ``source`` to each face in ``targets``.

    The graph backend runs Dijkstra on the dual graph (faces as nodes, edges
    between shared-edge neighbors, weighted by centroid distance); faces in
    other connected components come back as ``inf``. The heat backend solves
    the heat-method linear systems on vertices and averages onto faces.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("geodesic_distances: targets is empty")
    m = mesh.n_faces
    if not (0 <= source < m):
        raise ValueError(f"geodesic_distances: source {source} out of range [0, {m})")
    if targets.min() < 0 or targets.max() >= m:
        raise ValueError("geodesic_distances: target face id out of range")
    if backend == "graph":
        dist_all = dijkstra(mesh.dual_graph, directed=False, indices=source)
    elif backend == "heat":
        phi = _heat_method_vertex_distances(mesh, mesh.faces[source])
        dist_all = phi[mesh.faces].mean(axis=1)
        dist_all[source] = 0.0
    else:
        raise ValueError(f"unknown geodesic backend {backend!r}")
    return GeodesicField(source=int(source), target_faces=targets,
                         distances=dist_all[targets], scale=mesh.diameter)


def gaussian_reweight(field: GeodesicField) -> ReweightVector:
    """Weights = normal density of each distance under a Gaussian fit to all of them.

    Faces near the bulk of the box get boosted; geodesic outliers — typically
    faces the box clipped from an unrelated region — land in the tail and are
    suppressed. Sigma is the population deviation, floored to avoid a
    degenerate spike when all distances coincide. Unreachable faces get 0.
    """
    d = field.distances
    finite = np.isfinite(d)
    if not finite.any():
        return ReweightVector(field.target_faces, np.zeros_like(d))
    mu = d[finite].mean()
    sigma = d[finite].std()
    sigma = max(sigma, SIGMA_FLOOR_FRAC * field.scale)
    weights = np.zeros_like(d)
    z = (d[finite] - mu) / sigma
    weights[finite] = np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))
    return ReweightVector(field.target_faces, weights)


def max_geodesic_reweight(field: GeodesicField) -> ReweightVector:
    """Weights = 1 - d / (max distance + eps); linear falloff, farthest stays > 0."""
    d = field.distances
    finite = np.isfinite(d)
    weights = np.zeros_like(d)
    if finite.any():
        dmax = d[finite].max()
        weights[finite] = 1.0 - d[finite] / (dmax + MAX_REWEIGHT_EPS)
    return ReweightVector(field.target_faces, weights)


def softmax_geodesic_reweight(field: GeodesicField) -> ReweightVector:
    """Weights = softmax of negated distances; they sum to 1 over reachable faces."""
    d = field.distances
    finite = np.isfinite(d)
    weights = np.zeros_like(d)
    if finite.any():
        e = np.exp(-(d[finite] - d[finite].min()))  # shift for stability
        weights[finite] = e / e.sum()
    return ReweightVector(field.target_faces, weights)


REWEIGHTINGS = {
    "gaussian": gaussian_reweight,
    "max": max_geodesic_reweight,
    "softmax": softmax_geodesic_reweight,
}
