import numpy as np
import pytest

from meshseg.mesh import Mesh, normalize_mesh
from meshseg.fixtures import icosphere, snowman, dumbbell


def two_triangle_square():
    """Unit square in z=0 split along the main diagonal."""
    v = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    f = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(v, f)


def tetrahedron():
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(v, f)


def jitter(mesh: Mesh, seed: int, scale: float = 1e-3) -> Mesh:
    rng = np.random.default_rng(seed)
    v = mesh.vertices + rng.normal(0.0, scale, mesh.vertices.shape)
    return Mesh(v, mesh.faces, face_labels=mesh.face_labels,
                vertex_labels=mesh.vertex_labels)


def disconnected_pair() -> Mesh:
    """Two icosahedra with no path between them."""
    a = icosphere(subdivisions=0)[0]
    b = icosphere(subdivisions=0)[0]
    v = np.vstack([a.vertices - [2, 0, 0], b.vertices + [2, 0, 0]])
    f = np.vstack([a.faces, b.faces + a.n_vertices])
    return Mesh(v, f)


def small_exact_meshes():
    """Tie-free meshes (jittered to break symmetry), all at most 200 faces."""
    out = []
    for seed in (101, 102, 103, 104, 105):
        out.append((f"ico0-j{seed}", jitter(icosphere(subdivisions=0)[0], seed)))
        out.append((f"ico1-j{seed}", jitter(icosphere(subdivisions=1)[0], seed)))
        out.append((f"snowman-j{seed}",
                    jitter(snowman(segments=8, rows_body=8, rows_head=6)[0], seed)))
        out.append((f"dumbbell-j{seed}",
                    jitter(dumbbell(segments=6, tube_rows=8, cap_rows=4)[0], seed)))
        out.append((f"split-j{seed}", jitter(disconnected_pair(), seed)))
    return out


@pytest.fixture(scope="session")
def snowman_mesh():
    mesh, parts = snowman()
    return normalize_mesh(mesh), parts


@pytest.fixture(scope="session")
def dumbbell_mesh():
    mesh, parts = dumbbell()
    return normalize_mesh(mesh), parts
