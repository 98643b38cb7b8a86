"""Synthetic labeled meshes used for desk-scale benchmarks and tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, normalize_mesh


@dataclass(frozen=True)
class PartDef:
    """A named semantic part: the prompt string and its ground-truth class id."""

    class_id: int
    prompt: str


def _lathe(profile_a: np.ndarray, profile_r: np.ndarray, segments: int, axis: str = "x"):
    """Revolve a radius profile around an axis.

    The profile must start and end with r == 0 (poles) and be positive in
    between. Returns (vertices, faces, vertex_a, face_a) where the *_a arrays
    carry the axial profile coordinate used for part labeling.
    """
    profile_a = np.asarray(profile_a, dtype=np.float64)
    profile_r = np.asarray(profile_r, dtype=np.float64)
    if profile_r[0] != 0.0 or profile_r[-1] != 0.0:
        raise ValueError("lathe profile must start and end at radius 0")
    if (profile_r[1:-1] <= 0.0).any():
        raise ValueError("lathe profile must be positive between the poles")
    n_rings = len(profile_a) - 2
    phi = 2.0 * np.pi * np.arange(segments) / segments

    verts = [np.array([profile_a[0], 0.0, 0.0])]
    vert_a = [profile_a[0]]
    for i in range(1, len(profile_a) - 1):
        ring = np.column_stack([
            np.full(segments, profile_a[i]),
            profile_r[i] * np.cos(phi),
            profile_r[i] * np.sin(phi),
        ])
        verts.append(ring)
        vert_a.extend([profile_a[i]] * segments)
    verts.append(np.array([profile_a[-1], 0.0, 0.0]))
    vert_a.append(profile_a[-1])
    vertices = np.vstack([v.reshape(-1, 3) for v in verts])
    vert_a = np.asarray(vert_a)

    def ring_start(i):  # ring index i in [0, n_rings)
        return 1 + i * segments

    faces, face_a = [], []
    first = ring_start(0)
    for j in range(segments):
        faces.append((0, first + j, first + (j + 1) % segments))
        face_a.append((profile_a[0] + 2 * profile_a[1]) / 3.0)
    for i in range(n_rings - 1):
        lo, hi = ring_start(i), ring_start(i + 1)
        a_mid = (profile_a[i + 1] + profile_a[i + 2]) / 2.0
        for j in range(segments):
            jn = (j + 1) % segments
            faces.append((lo + j, hi + j, hi + jn))
            faces.append((lo + j, hi + jn, lo + jn))
            face_a.extend((a_mid, a_mid))
    last_ring = ring_start(n_rings - 1)
    pole1 = len(vertices) - 1
    for j in range(segments):
        faces.append((last_ring + j, pole1, last_ring + (j + 1) % segments))
        face_a.append((profile_a[-1] + 2 * profile_a[-2]) / 3.0)

    if axis == "x":
        pass
    elif axis == "z":
        vertices = vertices[:, [1, 2, 0]]
    else:
        raise ValueError(f"unsupported lathe axis {axis!r}")
    return vertices, np.asarray(faces, dtype=np.int64), vert_a, np.asarray(face_a)


def _labeled_lathe(profile_a, profile_r, segments, axis, class_of_a) -> Mesh:
    vertices, faces, vert_a, face_a = _lathe(profile_a, profile_r, segments, axis)
    face_labels = np.asarray([class_of_a(a) for a in face_a], dtype=np.int64)
    vertex_labels = np.asarray([class_of_a(a) for a in vert_a], dtype=np.int64)
    return Mesh(vertices, faces, face_labels=face_labels, vertex_labels=vertex_labels)


def grid(nx: int = 10, ny: int = 10, label: int = 0) -> tuple[Mesh, list[PartDef]]:
    """Planar nx-by-ny quad grid in the z=0 plane, each quad split into 2 triangles.

    Diagonals alternate per cell so the dual graph is close to isotropic.
    """
    xs = np.linspace(-1.0, 1.0, nx + 1)
    ys = np.linspace(-1.0, 1.0, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])

    def vid(i, j):
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if (i + j) % 2 == 0:  # diagonal a-c
                faces.append((a, b, c))
                faces.append((a, c, d))
            else:  # diagonal b-d
                faces.append((a, b, d))
                faces.append((b, c, d))
    faces = np.asarray(faces, dtype=np.int64)
    mesh = Mesh(vertices, faces,
                face_labels=np.full(len(faces), label),
                vertex_labels=np.full(len(vertices), label))
    return normalize_mesh(mesh), [PartDef(label, "plane")]


def icosphere(subdivisions: int = 3, radius: float = 1.0, label: int = 0) -> tuple[Mesh, list[PartDef]]:
    """Icosahedron subdivided ``subdivisions`` times, projected onto a sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = np.asarray(verts[i]) + np.asarray(verts[j])
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(tuple(m))
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    vertices = np.asarray(verts) * radius
    faces = np.asarray(faces, dtype=np.int64)
    mesh = Mesh(vertices, faces,
                face_labels=np.full(len(faces), label),
                vertex_labels=np.full(len(vertices), label))
    return mesh, [PartDef(label, "sphere")]


def snowman(body_radius: float = 0.5, head_radius: float = 0.26, head_offset: float = 0.68,
            segments: int = 44, rows_body: int = 32, rows_head: int = 22) -> tuple[Mesh, list[PartDef]]:
    """Two overlapping spheres revolved into one connected surface.

    Parts: head (class 0, the upper sphere) and body (class 1).
    """
    if head_offset >= body_radius + head_radius:
        raise ValueError("spheres must overlap so the surface stays connected")
    if head_offset + head_radius <= body_radius:
        raise ValueError("head sphere must poke out of the body")
    # z where the two sphere surfaces cross
    z_cross = (body_radius**2 - head_radius**2 + head_offset**2) / (2.0 * head_offset)
    theta_body = np.linspace(-np.pi / 2, np.arcsin(z_cross / body_radius), rows_body)
    theta_head = np.linspace(np.arcsin((z_cross - head_offset) / head_radius), np.pi / 2, rows_head)
    za = np.concatenate([body_radius * np.sin(theta_body),
                         head_offset + head_radius * np.sin(theta_head[1:])])
    ra = np.concatenate([body_radius * np.cos(theta_body),
                         head_radius * np.cos(theta_head[1:])])
    ra[0] = ra[-1] = 0.0
    mesh = _labeled_lathe(za, ra, segments, "z",
                          lambda z: 0 if z > z_cross else 1)
    return normalize_mesh(mesh), [PartDef(0, "head"), PartDef(1, "body")]


def _bend_around_circle(points: np.ndarray, half_span: float, bend_angle: float) -> np.ndarray:
    """Bend the x in [-half_span, half_span] slab of a straight shape onto a circular arc.

    Outside the slab the map continues rigidly, so end caps keep their shape.
    The arc lives in the xz-plane and subtends ``bend_angle`` radians in total.
    """
    rho = 2.0 * half_span / bend_angle
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    xc = np.clip(x, -half_span, half_span)
    psi = xc / rho
    overshoot = x - xc
    sin_p, cos_p = np.sin(psi), np.cos(psi)
    bx = (rho - z) * sin_p + overshoot * cos_p
    bz = rho - (rho - z) * cos_p + overshoot * sin_p
    return np.column_stack([bx, y, bz])


def dumbbell(sphere_radius: float = 0.25, tube_radius: float = 0.07, tube_half_length: float = 0.8,
             bend_angle: float = 4.15, segments: int = 24, tube_rows: int = 40,
             cap_rows: int = 14) -> tuple[Mesh, list[PartDef]]:
    """Two spheres joined by a thin tube, bent into a horseshoe.

    The bend brings the spheres close together in Euclidean space while the
    surface path between them stays long, which is exactly the geometry that
    makes bounding boxes of one sphere swallow faces of the other. Parts:
    sphere a (class 0), sphere b (class 1), tube (class 2).
    """
    off = np.sqrt(sphere_radius**2 - tube_radius**2)
    ca = -(tube_half_length + off)  # sphere centers on the straight axis
    cb = tube_half_length + off
    theta_lo = -np.pi / 2
    theta_hi = np.arcsin(off / sphere_radius)
    th_a = np.linspace(theta_lo, theta_hi, cap_rows)
    xa = ca + sphere_radius * np.sin(th_a)
    raa = sphere_radius * np.cos(th_a)
    xt = np.linspace(-tube_half_length, tube_half_length, tube_rows)[1:-1]
    rt = np.full(len(xt), tube_radius)
    th_b = np.linspace(-theta_hi, np.pi / 2, cap_rows)
    xb = cb + sphere_radius * np.sin(th_b)
    rbb = sphere_radius * np.cos(th_b)
    xs = np.concatenate([xa, xt, xb])
    rs = np.concatenate([raa, rt, rbb])
    rs[0] = rs[-1] = 0.0

    def class_of(a):
        if a < -tube_half_length:
            return 0
        if a > tube_half_length:
            return 1
        return 2

    mesh = _labeled_lathe(xs, rs, segments, "x", class_of)
    bent = _bend_around_circle(mesh.vertices, tube_half_length, bend_angle)
    mesh = Mesh(bent, mesh.faces, face_labels=mesh.face_labels, vertex_labels=mesh.vertex_labels)
    parts = [PartDef(0, "sphere a"), PartDef(1, "sphere b"), PartDef(2, "tube")]
    return normalize_mesh(mesh), parts


def _capsule(p0: np.ndarray, p1: np.ndarray, radius: float, segments: int = 16,
             shaft_rows: int = 8, cap_rows: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Capsule (cylinder with hemispherical caps) from p0 to p1."""
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    length = np.linalg.norm(p1 - p0)
    th = np.linspace(-np.pi / 2, 0.0, cap_rows)
    xs = np.concatenate([radius * np.sin(th),
                         np.linspace(0, length, shaft_rows)[1:-1],
                         length + radius * np.sin(-th[::-1])])
    rs = np.concatenate([radius * np.cos(th),
                         np.full(shaft_rows - 2, radius),
                         radius * np.cos(th[::-1])])
    rs[0] = rs[-1] = 0.0
    verts, faces, _, _ = _lathe(xs, rs, segments, "x")
    # rotate x-axis onto the segment direction, then translate to p0
    d = (p1 - p0) / length
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(d, ref)
    u /= np.linalg.norm(u)
    w = np.cross(d, u)
    rot = np.column_stack([d, u, w])
    return verts @ rot.T + p0, faces


def _uv_sphere(center, radius, segments=18, rows=14) -> tuple[np.ndarray, np.ndarray]:
    th = np.linspace(-np.pi / 2, np.pi / 2, rows)
    xs = radius * np.sin(th)
    rs = radius * np.cos(th)
    rs[0] = rs[-1] = 0.0
    verts, faces, _, _ = _lathe(xs, rs, segments, "z")
    return verts + np.asarray(center, dtype=np.float64), faces


def humanoid(scale: float = 1.0) -> tuple[Mesh, list[PartDef]]:
    """Stick figure from spheres and capsules: head, torso, two arms, two legs.

    Limb pairs share a class (arm=2, leg=3) like coarse human-part benchmarks.
    """
    pieces = [
        (_uv_sphere((0.0, 0.0, 0.78), 0.14), 0),                                # head
        (_capsule((0.0, 0.0, 0.12), (0.0, 0.0, 0.55), 0.17), 1),                # torso
        (_capsule((0.24, 0.0, 0.52), (0.50, 0.0, 0.05), 0.055), 2),             # arms
        (_capsule((-0.24, 0.0, 0.52), (-0.50, 0.0, 0.05), 0.055), 2),
        (_capsule((0.10, 0.0, 0.05), (0.14, 0.0, -0.72), 0.07), 3),             # legs
        (_capsule((-0.10, 0.0, 0.05), (-0.14, 0.0, -0.72), 0.07), 3),
    ]
    all_v, all_f, flabs, vlabs = [], [], [], []
    offset = 0
    for (verts, faces), cls in pieces:
        all_v.append(verts * scale)
        all_f.append(faces + offset)
        flabs.append(np.full(len(faces), cls))
        vlabs.append(np.full(len(verts), cls))
        offset += len(verts)
    mesh = Mesh(np.vstack(all_v), np.vstack(all_f),
                face_labels=np.concatenate(flabs), vertex_labels=np.concatenate(vlabs))
    parts = [PartDef(0, "head"), PartDef(1, "torso"), PartDef(2, "arm"), PartDef(3, "leg")]
    return normalize_mesh(mesh), parts


FIXTURES = {
    "snowman": snowman,
    "dumbbell": dumbbell,
    "humanoid": humanoid,
    "grid": grid,
    "icosphere": icosphere,
}


def make_fixture(kind: str, **params) -> tuple[Mesh, list[PartDef]]:
    """Build a named fixture; see :data:`FIXTURES` for available kinds."""
    try:
        builder = FIXTURES[kind]
    except KeyError:
        raise ValueError(f"unknown fixture kind {kind!r}; choose from {sorted(FIXTURES)}") from None
    return builder(**params)
