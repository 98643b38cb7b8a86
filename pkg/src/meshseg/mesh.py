"""Triangle mesh container, OBJ/PLY io, normalization and face-graph indices."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

UNLABELED = -1

# Fixed palette used when writing segmented meshes, so visual diffs are stable.
CLASS_PALETTE = np.array(
    [
        (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
        (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
        (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
        (152, 223, 138), (255, 152, 150), (197, 176, 213), (196, 156, 148),
        (247, 182, 210), (199, 199, 199), (219, 219, 141), (158, 218, 229),
    ],
    dtype=np.uint8,
)


class MeshError(ValueError):
    """Raised for malformed mesh files or invalid mesh data."""


class Mesh:
    """Indexed triangle surface with optional integer part labels.

    Parameters
    ----------
    vertices : array_like
        (n, 3) float coordinates.
    faces : array_like
        (m, 3) int vertex indices. Every index must be in [0, n).
    face_labels : array_like, optional
        (m,) int class per face; -1 marks unlabeled faces.
    vertex_labels : array_like, optional
        (n,) int class per vertex.

    Vertex and face arrays are frozen after construction; all operations on
    meshes return new instances.
    """

    def __init__(self, vertices, faces, face_labels=None, vertex_labels=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.size == 0:
            self.faces = self.faces.reshape(0, 3)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError(f"faces must be (m, 3), got {self.faces.shape}")
        if not np.isfinite(self.vertices).all():
            raise MeshError("non-finite vertex coordinate")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshError("face index out of range")

        self.face_labels = None
        if face_labels is not None:
            self.face_labels = np.ascontiguousarray(face_labels, dtype=np.int64)
            if self.face_labels.shape != (len(self.faces),):
                raise MeshError("face_labels length must equal number of faces")
            self.face_labels.setflags(write=False)
        self.vertex_labels = None
        if vertex_labels is not None:
            self.vertex_labels = np.ascontiguousarray(vertex_labels, dtype=np.int64)
            if self.vertex_labels.shape != (len(self.vertices),):
                raise MeshError("vertex_labels length must equal number of vertices")
            self.vertex_labels.setflags(write=False)

        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def face_centroids(self) -> np.ndarray:
        """(m, 3) mean of each face's three vertices."""
        c = self.vertices[self.faces].mean(axis=1)
        c.setflags(write=False)
        return c

    @cached_property
    def face_areas(self) -> np.ndarray:
        """(m,) triangle surface areas in mesh units."""
        v = self.vertices[self.faces]
        a = 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
        a.setflags(write=False)
        return a

    @cached_property
    def face_normals(self) -> np.ndarray:
        """(m, 3) unit normals; zero-area faces get a zero normal."""
        v = self.vertices[self.faces]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        out = np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)
        out.setflags(write=False)
        return out

    @cached_property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if self.n_vertices == 0:
            raise MeshError("empty mesh has no bounding box")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def diameter(self) -> float:
        """Bounding-box diagonal length, used as the mesh scale reference."""
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    def with_labels(self, face_labels=None, vertex_labels=None) -> "Mesh":
        return Mesh(
            self.vertices,
            self.faces,
            face_labels=self.face_labels if face_labels is None else face_labels,
            vertex_labels=self.vertex_labels if vertex_labels is None else vertex_labels,
        )

    @cached_property
    def vertex_face_incidence(self) -> sparse.csr_matrix:
        """(m, n) boolean CSR: face i is incident to vertex j."""
        m = self.n_faces
        rows = np.repeat(np.arange(m), 3)
        cols = self.faces.reshape(-1)
        data = np.ones(3 * m, dtype=bool)
        mat = sparse.csr_matrix((data, (rows, cols)), shape=(m, self.n_vertices))
        mat.data[:] = True
        return mat

    @cached_property
    def shared_vertex_adjacency(self) -> sparse.csr_matrix:
        """(m, m) boolean CSR face graph; faces adjacent iff they share >= 1 vertex.

        Includes self-loops (every face shares vertices with itself).
        """
        inc = self.vertex_face_incidence
        adj = (inc @ inc.T).astype(bool).tocsr()
        return adj

    @cached_property
    def shared_edge_adjacency(self) -> sparse.csr_matrix:
        """(m, m) boolean CSR dual graph; faces adjacent iff they share an edge.

        No self-loops. Non-manifold edges connect all incident face pairs.
        """
        f = self.faces
        edges = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        face_ids = np.tile(np.arange(self.n_faces), 3)
        # group faces by undirected edge key
        keys = edges[:, 0] * (self.n_vertices + 1) + edges[:, 1]
        order = np.argsort(keys, kind="stable")
        keys, face_ids = keys[order], face_ids[order]
        rows, cols = [], []
        start = 0
        for end in np.flatnonzero(np.diff(keys)) + 1:
            group = face_ids[start:end]
            if len(group) > 1:
                for i in range(len(group)):
                    for j in range(i + 1, len(group)):
                        rows.extend((group[i], group[j]))
                        cols.extend((group[j], group[i]))
            start = end
        group = face_ids[start:]
        if len(group) > 1:
            for i in range(len(group)):
                for j in range(i + 1, len(group)):
                    rows.extend((group[i], group[j]))
                    cols.extend((group[j], group[i]))
        data = np.ones(len(rows), dtype=bool)
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n_faces, self.n_faces))

    @cached_property
    def dual_graph(self) -> sparse.csr_matrix:
        """(m, m) float CSR: shared-edge dual graph weighted by centroid distance."""
        adj = self.shared_edge_adjacency.tocoo()
        c = self.face_centroids
        w = np.linalg.norm(c[adj.row] - c[adj.col], axis=1)
        return sparse.csr_matrix((w, (adj.row, adj.col)), shape=adj.shape)


@dataclass(frozen=True)
class QRingIndex:
    """Per-face neighborhoods of the shared-vertex face graph, truncated at q hops.

    ``reach`` is a boolean CSR matrix where row f marks every face reachable
    from f within q hops, including f itself.
    """

    q: int
    reach: sparse.csr_matrix = field(repr=False)

    def neighbors(self, face: int) -> np.ndarray:
        """Sorted face ids in the q-ring of ``face`` (contains ``face``)."""
        lo, hi = self.reach.indptr[face], self.reach.indptr[face + 1]
        return self.reach.indices[lo:hi]

    @property
    def sizes(self) -> np.ndarray:
        """(m,) neighborhood cardinalities."""
        return np.diff(self.reach.indptr)


def build_q_ring(mesh: Mesh, q: int) -> QRingIndex:
    """BFS over the shared-vertex face graph, truncated at depth q.

    Symmetric by construction; every face belongs to its own neighborhood.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    one_hop = mesh.shared_vertex_adjacency  # includes self-loops
    reach = one_hop.copy()
    for _ in range(q - 1):
        grown = (reach @ one_hop).astype(bool).tocsr()
        if grown.nnz == reach.nnz:
            break  # all neighborhoods saturated
        reach = grown
    reach.sort_indices()
    return QRingIndex(q=q, reach=reach)


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Center the bounding box at the origin and scale the mesh into the unit sphere.

    The translation is by minus the bounding-box center; scaling is uniform so
    that the farthest vertex has norm exactly 1. Labels are preserved.
    """
    if mesh.n_vertices == 0:
        raise MeshError("cannot normalize an empty mesh")
    lo, hi = mesh.bbox
    center = (lo + hi) / 2.0
    shifted = mesh.vertices - center
    radius = float(np.linalg.norm(shifted, axis=1).max())
    if radius <= 0.0:
        raise MeshError("degenerate mesh: all vertices identical, scale undefined")
    return Mesh(
        shifted / radius,
        mesh.faces,
        face_labels=mesh.face_labels,
        vertex_labels=mesh.vertex_labels,
    )


def face_labels_from_vertex_labels(faces: np.ndarray, vertex_labels: np.ndarray) -> np.ndarray:
    """Majority vote of the three corner labels; ties go to the lowest class index."""
    tri = np.sort(vertex_labels[faces], axis=1)
    mid_wins = (tri[:, 1] == tri[:, 0]) | (tri[:, 1] == tri[:, 2])
    return np.where(mid_wins, tri[:, 1], tri[:, 0])


def transfer_labels(src: Mesh, dst: Mesh) -> Mesh:
    """Carry vertex labels from ``src`` to ``dst`` by Euclidean nearest vertex.

    Face labels on the result are derived from the transferred vertex labels by
    majority vote (lowest class index on ties). Both meshes must live in the
    same coordinate frame.
    """
    if src.vertex_labels is None:
        raise MeshError("source mesh has no vertex labels to transfer")
    tree = cKDTree(src.vertices)
    _, nearest = tree.query(dst.vertices, k=1)
    vlabels = src.vertex_labels[nearest]
    flabels = face_labels_from_vertex_labels(dst.faces, vlabels)
    return dst.with_labels(face_labels=flabels, vertex_labels=vlabels)


# ---------------------------------------------------------------------------
# OBJ io


def _load_obj(path: str) -> Mesh:
    vertices: list[tuple[float, float, float]] = []
    tris: list[tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    xyz = tuple(float(p) for p in parts[1:4])
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad vertex coordinate: {exc}") from exc
                vertices.append(xyz)
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: face needs at least 3 indices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise MeshError(f"{path}:{lineno}: bad face index {token!r}") from exc
                    if i > 0:
                        i -= 1
                    elif i < 0:
                        i += len(vertices)
                    else:
                        raise MeshError(f"{path}:{lineno}: OBJ indices are 1-based, got 0")
                    if i < 0 or i >= len(vertices):
                        raise MeshError(f"{path}:{lineno}: face index {token} out of range")
                    idx.append(i)
                for k in range(1, len(idx) - 1):  # fan triangulation
                    tris.append((idx[0], idx[k], idx[k + 1]))
            # everything else (vn, vt, usemtl, ...) is ignored
    if not vertices:
        raise MeshError(f"{path}: no vertices found")
    mesh = Mesh(np.asarray(vertices, dtype=np.float64), np.asarray(tris, dtype=np.int64).reshape(-1, 3))
    if not np.isfinite(mesh.vertices).all():
        raise MeshError(f"{path}: non-finite vertex coordinate")
    return mesh


def _save_obj(mesh: Mesh, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


# ---------------------------------------------------------------------------
# PLY io

_PLY_DTYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def _parse_ply_header(fh):
    magic = fh.readline().strip()
    if magic != b"ply":
        raise MeshError("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements = []  # (name, count, [(prop_name, kind)]) kind: dtype str or ('list', count_dt, item_dt)
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise MeshError(f"line {lineno}: unexpected end of PLY header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        parts = line.split()
        if parts[0] == "format":
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise MeshError(f"line {lineno}: unsupported PLY format {parts[1]!r}")
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshError(f"line {lineno}: property before any element")
            if parts[1] == "list":
                cnt, item = parts[2], parts[3]
                if cnt not in _PLY_DTYPES or item not in _PLY_DTYPES:
                    raise MeshError(f"line {lineno}: unsupported list types {cnt}/{item}")
                elements[-1][2].append((parts[4], ("list", _PLY_DTYPES[cnt], _PLY_DTYPES[item])))
            else:
                if parts[1] not in _PLY_DTYPES:
                    raise MeshError(f"line {lineno}: unsupported property type {parts[1]!r}")
                elements[-1][2].append((parts[2], _PLY_DTYPES[parts[1]]))
        elif parts[0] == "end_header":
            break
        else:
            raise MeshError(f"line {lineno}: unknown PLY header record {parts[0]!r}")
    if fmt is None:
        raise MeshError("PLY header missing 'format' line")
    return fmt, elements


def _load_ply(path: str) -> Mesh:
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        data = {}
        if fmt == "ascii":
            tokens_by_elem = {}
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    line = fh.readline()
                    if not line:
                        raise MeshError(f"{path}: truncated PLY body in element {name!r}")
                    rows.append(line.split())
                tokens_by_elem[name] = (rows, props)
            for name, (rows, props) in tokens_by_elem.items():
                cols = {}
                for pname, _ in props:
                    cols[pname] = []
                for row in rows:
                    pos = 0
                    for pname, kind in props:
                        if isinstance(kind, tuple):
                            n = int(row[pos]); pos += 1
                            cols[pname].append([float(x) for x in row[pos:pos + n]])
                            pos += n
                        else:
                            cols[pname].append(float(row[pos])); pos += 1
                data[name] = cols
        else:
            for name, count, props in elements:
                cols = {pname: [] for pname, _ in props}
                fixed = all(not isinstance(k, tuple) for _, k in props)
                if fixed:
                    dtype = np.dtype([(pname, "<" + k) for pname, k in props])
                    buf = fh.read(dtype.itemsize * count)
                    if len(buf) != dtype.itemsize * count:
                        raise MeshError(f"{path}: truncated PLY body in element {name!r}")
                    arr = np.frombuffer(buf, dtype=dtype)
                    for pname, _ in props:
                        cols[pname] = arr[pname]
                else:
                    for _ in range(count):
                        for pname, kind in props:
                            if isinstance(kind, tuple):
                                _, cnt_dt, item_dt = kind
                                cnt_sz = np.dtype(cnt_dt).itemsize
                                n = int(np.frombuffer(fh.read(cnt_sz), dtype="<" + cnt_dt)[0])
                                item_sz = np.dtype(item_dt).itemsize
                                vals = np.frombuffer(fh.read(item_sz * n), dtype="<" + item_dt)
                                cols[pname].append(vals.tolist())
                            else:
                                sz = np.dtype(kind).itemsize
                                cols[pname].append(np.frombuffer(fh.read(sz), dtype="<" + kind)[0])
                data[name] = cols

    if "vertex" not in data:
        raise MeshError(f"{path}: PLY has no vertex element")
    vcols = data["vertex"]
    for axis in ("x", "y", "z"):
        if axis not in vcols:
            raise MeshError(f"{path}: vertex element lacks {axis!r} property")
    vertices = np.column_stack([np.asarray(vcols["x"], dtype=np.float64),
                                np.asarray(vcols["y"], dtype=np.float64),
                                np.asarray(vcols["z"], dtype=np.float64)])
    if not np.isfinite(vertices).all():
        raise MeshError(f"{path}: non-finite vertex coordinate")
    vertex_labels = None
    if "label" in vcols:
        vertex_labels = np.asarray(vcols["label"], dtype=np.int64)

    tris, tri_labels = [], []
    if "face" in data:
        fcols = data["face"]
        key = "vertex_indices" if "vertex_indices" in fcols else "vertex_index"
        if key not in fcols:
            raise MeshError(f"{path}: face element lacks vertex index list")
        face_label_col = fcols.get("label")
        for i, poly in enumerate(fcols[key]):
            idx = [int(v) for v in poly]
            if any(v < 0 or v >= len(vertices) for v in idx):
                raise MeshError(f"{path}: face {i}: vertex index out of range")
            lab = int(face_label_col[i]) if face_label_col is not None else None
            for k in range(1, len(idx) - 1):
                tris.append((idx[0], idx[k], idx[k + 1]))
                if lab is not None:
                    tri_labels.append(lab)
    face_labels = np.asarray(tri_labels, dtype=np.int64) if tri_labels else None
    return Mesh(vertices, np.asarray(tris, dtype=np.int64).reshape(-1, 3),
                face_labels=face_labels, vertex_labels=vertex_labels)


def _save_ply(mesh: Mesh, path: str, binary: bool = True, face_colors: np.ndarray | None = None) -> None:
    has_vlab = mesh.vertex_labels is not None
    has_flab = mesh.face_labels is not None
    if face_colors is None and has_flab:
        face_colors = CLASS_PALETTE[np.where(mesh.face_labels >= 0,
                                             mesh.face_labels % len(CLASS_PALETTE), 0)]
        face_colors = np.where((mesh.face_labels >= 0)[:, None], face_colors, 64).astype(np.uint8)

    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {mesh.n_vertices}",
              "property double x", "property double y", "property double z"]
    if has_vlab:
        header.append("property int label")
    header.append(f"element face {mesh.n_faces}")
    header.append("property list uchar int vertex_indices")
    if has_flab:
        header.append("property int label")
    if face_colors is not None:
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            for i in range(mesh.n_vertices):
                fh.write(struct.pack("<3d", *mesh.vertices[i]))
                if has_vlab:
                    fh.write(struct.pack("<i", int(mesh.vertex_labels[i])))
            for i in range(mesh.n_faces):
                fh.write(struct.pack("<B3i", 3, *(int(v) for v in mesh.faces[i])))
                if has_flab:
                    fh.write(struct.pack("<i", int(mesh.face_labels[i])))
                if face_colors is not None:
                    fh.write(struct.pack("<3B", *(int(c) for c in face_colors[i])))
        else:
            for i in range(mesh.n_vertices):
                row = f"{mesh.vertices[i][0]:.17g} {mesh.vertices[i][1]:.17g} {mesh.vertices[i][2]:.17g}"
                if has_vlab:
                    row += f" {int(mesh.vertex_labels[i])}"
                fh.write((row + "\n").encode("ascii"))
            for i in range(mesh.n_faces):
                row = "3 " + " ".join(str(int(v)) for v in mesh.faces[i])
                if has_flab:
                    row += f" {int(mesh.face_labels[i])}"
                if face_colors is not None:
                    row += " " + " ".join(str(int(c)) for c in face_colors[i])
                fh.write((row + "\n").encode("ascii"))


def load_mesh(path: str, format: str | None = None) -> Mesh:
    """Load a mesh from OBJ or PLY (ASCII or binary little-endian).

    Non-triangle polygons are fan-triangulated. Raises :class:`MeshError` with
    a line number on parse failures.
    """
    if not os.path.exists(path):
        raise MeshError(f"mesh file not found: {path}")
    fmt = (format or os.path.splitext(path)[1].lstrip(".")).lower()
    if fmt == "obj":
        return _load_obj(path)
    if fmt == "ply":
        return _load_ply(path)
    raise MeshError(f"unsupported mesh format {fmt!r} (expected obj or ply)")


def save_mesh(mesh: Mesh, path: str, format: str | None = None,
              binary: bool = True, face_colors: np.ndarray | None = None) -> None:
    """Write a mesh to OBJ or PLY. PLY carries labels; OBJ stores geometry only."""
    fmt = (format or os.path.splitext(path)[1].lstrip(".")).lower()
    if fmt == "obj":
        _save_obj(mesh, path)
    elif fmt == "ply":
        _save_ply(mesh, path, binary=binary, face_colors=face_colors)
    else:
        raise MeshError(f"unsupported mesh format {fmt!r} (expected obj or ply)")
