import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshseg.mesh import Mesh
from meshseg.fixtures import icosphere
from meshseg.render import (
    BACKGROUND,
    Camera,
    RenderOutput,
    faces_in_box,
    load_pixel2face,
    load_png,
    png_bytes,
    rasterize,
    sample_views,
    save_pixel2face,
    save_png,
)


# ---------------------------------------------------------------- cameras


def test_camera_eye_sits_at_distance():
    for elev, az in [(0.0, 0.0), (0.4, 1.3), (-1.2, 5.0)]:
        cam = Camera(elevation=elev, azimuth=az, distance=3.0, look_at=(1.0, -2.0, 0.5))
        assert np.linalg.norm(cam.eye - np.array(cam.look_at)) == pytest.approx(3.0)


def test_camera_basis_orthonormal_and_aimed():
    cam = Camera(elevation=0.6, azimuth=2.1, distance=2.5)
    right, up, forward = cam.basis()
    for v in (right, up, forward):
        assert np.linalg.norm(v) == pytest.approx(1.0)
    assert abs(right @ up) < 1e-12
    assert abs(right @ forward) < 1e-12
    assert abs(up @ forward) < 1e-12
    aim = np.array(cam.look_at) - cam.eye
    assert np.allclose(forward, aim / np.linalg.norm(aim))


def test_camera_basis_survives_straight_down_view():
    # looking along the world up axis, where the usual cross product vanishes
    cam = Camera(elevation=np.pi / 2, azimuth=0.0, distance=2.2)
    right, up, forward = cam.basis()
    assert np.linalg.norm(np.cross(right, up) - forward * np.dot(np.cross(right, up), forward)) < 1e-9
    for v in (right, up, forward):
        assert np.linalg.norm(v) == pytest.approx(1.0)


def test_camera_rejects_bad_parameters():
    with pytest.raises(ValueError):
        Camera(elevation=0.0, azimuth=0.0, distance=1.0)
    with pytest.raises(ValueError):
        Camera(elevation=0.0, azimuth=0.0, fov_y=0.0)
    with pytest.raises(ValueError):
        Camera(elevation=0.0, azimuth=0.0, fov_y=np.pi)


def test_camera_look_at_translates_eye():
    a = Camera(elevation=0.3, azimuth=0.9, distance=2.0)
    b = Camera(elevation=0.3, azimuth=0.9, distance=2.0, look_at=(5.0, 0.0, -1.0))
    assert np.allclose(b.eye - a.eye, [5.0, 0.0, -1.0])


# ------------------------------------------------------------ view sampling


def test_sample_views_deterministic_in_seed():
    assert sample_views(6, seed=11) == sample_views(6, seed=11)
    assert sample_views(6, seed=11) != sample_views(6, seed=12)


def test_sample_views_prefix_property():
    # a longer draw must extend a shorter one, or view-count sweeps would
    # compare different view sets
    short = sample_views(5, seed=7)
    long = sample_views(15, seed=7)
    assert long[:5] == short
    short_u = sample_views(4, mode="uniform", seed=9)
    long_u = sample_views(12, mode="uniform", seed=9)
    assert long_u[:4] == short_u


def test_sample_views_uniform_range():
    cams = sample_views(200, mode="uniform", seed=3)
    angles = np.array([[c.elevation, c.azimuth] for c in cams])
    assert (angles >= 0.0).all() and (angles < 2.0 * np.pi).all()


def test_sample_views_passes_camera_parameters():
    cams = sample_views(3, seed=0, distance=3.5, fov_y=1.0)
    assert all(c.distance == 3.5 and c.fov_y == 1.0 for c in cams)


def test_sample_views_rejects_bad_arguments():
    with pytest.raises(ValueError):
        sample_views(0)
    with pytest.raises(ValueError):
        sample_views(5, mode="spiral")


# ------------------------------------------------------------- rasterizing


def front_cam(distance: float = 2.2) -> Camera:
    # eye on +x, forward -x, screen x tracks world y, screen y tracks world z
    return Camera(elevation=0.0, azimuth=0.0, distance=distance)


def test_rasterize_rejects_tiny_resolution():
    mesh, _ = icosphere(subdivisions=0)
    with pytest.raises(ValueError):
        rasterize(mesh, front_cam(), resolution=(8, 8))


def test_rasterize_is_deterministic():
    mesh, _ = icosphere(subdivisions=2)
    cam = Camera(elevation=0.5, azimuth=1.7)
    a = rasterize(mesh, cam, resolution=(128, 128))
    b = rasterize(mesh, cam, resolution=(128, 128))
    assert np.array_equal(a.image, b.image)
    assert np.array_equal(a.pixel2face, b.pixel2face)
    assert np.array_equal(a.face_pixel_area, b.face_pixel_area)


def test_rasterize_bookkeeping_consistent():
    mesh, _ = icosphere(subdivisions=2)
    r = rasterize(mesh, front_cam(), resolution=(128, 128))
    drawn = r.pixel2face[r.pixel2face != BACKGROUND]
    assert r.face_pixel_area.sum() == drawn.size
    counts = np.bincount(drawn, minlength=mesh.n_faces)
    assert np.array_equal(counts, r.face_pixel_area)
    assert np.array_equal(r.visible_faces, np.flatnonzero(r.face_pixel_area > 0))


def test_sphere_visible_fraction_matches_cap_area():
    # a sphere viewed from distance d exposes a cap of (1 - 1/d)/2 of its faces
    mesh, _ = icosphere(subdivisions=3)
    for d in (2.2, 3.0):
        r = rasterize(mesh, Camera(elevation=0.3, azimuth=1.1, distance=d),
                      resolution=(256, 256))
        frac = len(r.visible_faces) / mesh.n_faces
        assert frac == pytest.approx((1 - 1 / d) / 2, abs=0.02)


def test_convex_mesh_shows_only_front_faces():
    mesh, _ = icosphere(subdivisions=3)
    cam = Camera(elevation=0.3, azimuth=1.1)
    r = rasterize(mesh, cam, resolution=(512, 512))
    to_eye = cam.eye - mesh.face_centroids
    to_eye /= np.linalg.norm(to_eye, axis=1, keepdims=True)
    facing = np.einsum("ij,ij->i", mesh.face_normals, to_eye)
    assert (facing[r.visible_faces] > 0).all()


def test_vertices_behind_eye_project_to_nan_and_are_skipped():
    # front triangle at the origin plane, second triangle behind the camera
    v = np.array([
        [0.0, -0.4, -0.3], [0.0, 0.4, -0.3], [0.0, 0.0, 0.4],
        [4.0, 0.0, 0.0], [4.0, 0.1, 0.0], [4.0, 0.0, 0.1],
    ])
    mesh = Mesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
    r = rasterize(mesh, front_cam(), resolution=(64, 64))
    assert np.isnan(r.projected_vertices[3:, 0]).all()
    assert np.isnan(r.projected_vertices[3:, 1]).all()
    assert 0 in r.visible_faces and 1 not in r.visible_faces


def test_nearer_face_wins_regardless_of_draw_order():
    shape = np.array([[-0.3, -0.3], [0.3, -0.3], [0.0, 0.3]])
    far = np.column_stack([np.zeros(3), shape])
    near = np.column_stack([np.full(3, 0.5), shape])
    for order, winner in [((far, near), 1), ((near, far), 0)]:
        v = np.vstack(order)
        mesh = Mesh(v, np.array([[0, 1, 2], [3, 4, 5]]))
        r = rasterize(mesh, front_cam(), resolution=(64, 64))
        assert r.pixel2face[32, 32] == winner


def test_equal_depth_tie_goes_to_lower_face_index():
    v = np.array([[0.0, -0.3, -0.3], [0.0, 0.3, -0.3], [0.0, 0.0, 0.3]])
    mesh = Mesh(v, np.array([[0, 1, 2], [0, 1, 2]]))
    r = rasterize(mesh, front_cam(), resolution=(64, 64))
    assert np.array_equal(r.visible_faces, [0])
    drawn = r.pixel2face[r.pixel2face != BACKGROUND]
    assert (drawn == 0).all()


def test_image_row_zero_is_top_and_projection_y_is_up():
    # triangle above the look-at point lands in upper image rows but at
    # large y_px, tying the two documented conventions together
    v = np.array([[0.0, -0.2, 0.35], [0.0, 0.2, 0.35], [0.0, 0.0, 0.75]])
    mesh = Mesh(v, np.array([[0, 1, 2]]))
    r = rasterize(mesh, front_cam(), resolution=(128, 128))
    rows = np.flatnonzero((r.pixel2face != BACKGROUND).any(axis=1))
    assert rows.size and rows.max() < 64
    assert (r.projected_vertices[:, 1] > 64).all()


def test_face_colors_and_background_used_verbatim():
    v = np.array([[0.0, -0.3, -0.3], [0.0, 0.3, -0.3], [0.0, 0.0, 0.3]])
    mesh = Mesh(v, np.array([[0, 1, 2]]))
    r = rasterize(mesh, front_cam(), resolution=(64, 64),
                  face_colors=np.array([[200, 30, 90]]),
                  background=(10, 20, 30))
    covered = r.pixel2face != BACKGROUND
    assert (r.image[covered] == [200, 30, 90]).all()
    assert (r.image[~covered] == [10, 20, 30]).all()
    assert r.background == (10, 20, 30)


# ------------------------------------------------------------ faces_in_box


def square_output() -> RenderOutput:
    # hand-built output with exact integer projections for edge-case boxes:
    # face 0 visible with vertices at (10,20), (30,20), (20,40);
    # face 1 shares the geometry but is fully occluded
    proj = np.array([[10.0, 20.0, 2.0], [30.0, 20.0, 2.0], [20.0, 40.0, 2.0]])
    p2f = np.full((64, 64), BACKGROUND, dtype=np.int32)
    p2f[30:40, 12:28] = 0
    area = np.array([160, 0], dtype=np.int64)
    return RenderOutput(
        image=np.zeros((64, 64, 3), dtype=np.uint8),
        pixel2face=p2f,
        face_pixel_area=area,
        visible_faces=np.array([0]),
        projected_vertices=proj,
        faces=np.array([[0, 1, 2], [0, 1, 2]]),
    )


def test_faces_in_box_interval_is_closed():
    r = square_output()
    assert 0 in faces_in_box(r, (10.0, 20.0, 5.0, 5.0))      # vertex on lower-left edge
    assert 0 in faces_in_box(r, (5.0, 15.0, 5.0, 5.0))       # vertex on upper-right edge
    assert faces_in_box(r, (5.0, 15.0, 4.999, 4.999)).size == 0


def test_faces_in_box_requires_visibility():
    r = square_output()
    hits = faces_in_box(r, (0.0, 0.0, 64.0, 64.0))
    assert np.array_equal(hits, [0])         # face 1 has vertices inside but no pixels


def test_faces_in_box_degenerate_and_off_image():
    r = square_output()
    assert faces_in_box(r, (10.0, 20.0, 0.0, 5.0)).size == 0
    assert faces_in_box(r, (10.0, 20.0, 5.0, -1.0)).size == 0
    assert faces_in_box(r, (100.0, 0.0, 10.0, 10.0)).size == 0
    assert faces_in_box(r, (-300.0, 0.0, 10.0, 10.0)).size == 0


def test_faces_in_box_clamps_oversized_boxes():
    r = square_output()
    assert np.array_equal(faces_in_box(r, (-1e6, -1e6, 2e6, 2e6)), [0])


def test_occluded_vertex_still_counts_for_its_visible_face():
    # a small nearer triangle hides exactly the apex of a big one; the big
    # face stays visible and its hidden apex must still hit boxes around it
    big = np.array([[0.0, -0.5, -0.5], [0.0, 0.5, -0.5], [0.0, 0.0, 0.5]])
    occ = np.array([[0.5, -0.15, 0.3], [0.5, 0.15, 0.3], [0.5, 0.0, 0.55]])
    mesh = Mesh(np.vstack([big, occ]), np.array([[0, 1, 2], [3, 4, 5]]))
    r = rasterize(mesh, front_cam(), resolution=(256, 256))
    apex_px, apex_py = r.projected_vertices[2, :2]
    row, col = int(256 - apex_py), int(apex_px)
    assert r.pixel2face[row, col] == 1      # the apex pixel belongs to the occluder
    assert 0 in r.visible_faces
    hits = faces_in_box(r, (apex_px - 2, apex_py - 2, 4.0, 4.0))
    assert 0 in hits


@pytest.fixture(scope="module")
def sphere_render() -> RenderOutput:
    mesh, _ = icosphere(subdivisions=2)
    return rasterize(mesh, Camera(elevation=0.4, azimuth=0.9), resolution=(128, 128))


@given(x=st.floats(-20, 140), y=st.floats(-20, 140),
       w=st.floats(0, 80), h=st.floats(0, 80),
       grow=st.floats(0, 30))
@settings(max_examples=50, deadline=None)
def test_faces_in_box_monotone_under_growth(sphere_render, x, y, w, h, grow):
    small = set(faces_in_box(sphere_render, (x, y, w, h)).tolist())
    big = set(faces_in_box(sphere_render,
                           (x - grow, y - grow, w + 2 * grow, h + 2 * grow)).tolist())
    assert small <= big
    assert big <= set(sphere_render.visible_faces.tolist())


# ---------------------------------------------------------------- file I/O


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(48, 64, 3), dtype=np.uint8)
    path = tmp_path / "view.png"
    save_png(image, str(path))
    assert np.array_equal(load_png(str(path)), image)


def test_png_bytes_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    image = rng.integers(0, 256, size=(32, 32, 3), dtype=np.uint8)
    blob = png_bytes(image)
    path = tmp_path / "blob.png"
    path.write_bytes(blob)
    assert np.array_equal(load_png(str(path)), image)


def test_pixel2face_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    p2f = rng.integers(-1, 500, size=(40, 56)).astype(np.int32)
    path = tmp_path / "view.p2f"
    save_pixel2face(p2f, str(path))
    back = load_pixel2face(str(path))
    assert back.dtype == np.int32
    assert np.array_equal(back, p2f)
