"""Acceptance gate: one test per release criterion.

Each test pins the exact fixture, seeds, and tolerance it is graded at and
finishes by printing a PASS line with the measured values, so a verbose run
yields one pass/fail line per criterion.  The dumbbell suite (10 fixed seeds,
six pipeline settings) is computed once and shared by the three criteria that
read it.
"""

import os
import time

import numpy as np
import pytest

from meshseg.cli import main
from meshseg.detector import Detection
from meshseg.evaluation import iou_per_part, mean_iou
from meshseg.fixtures import FIXTURES, dumbbell, grid, icosphere, make_fixture, snowman
from meshseg.geodesic import geodesic_distances
from meshseg.mesh import Mesh
from meshseg.pipeline import PipelineConfig, segment_mesh
from meshseg.render import BACKGROUND, RenderOutput
from meshseg.scoring import baseline_view_scores, reweighted_view_scores

from conftest import small_exact_meshes
from geodesic_oracle import dense_dual_weights, floyd_warshall_next_hop, oracle_distances


def report(line: str) -> None:
    print(f"PASS {line}")


def run_fixture(mesh, parts, cfg) -> np.ndarray:
    classes = {p.prompt: p.class_id for p in parts}
    prompts = [p.prompt for p in sorted(parts, key=lambda q: q.class_id)]
    seg = segment_mesh(mesh, prompts, cfg, prompt_classes=classes)
    return iou_per_part(seg.labels, mesh.face_labels, len(prompts))


# The fixed dumbbell suite: 10 seeds, boxes jittered by 12% of their size so
# projections leak across parts, every other noise source off.  View count,
# resolution, and aggregation are pinned so reruns are bit-reproducible.
SUITE_SEEDS = tuple(range(10))
SUITE_SETTINGS = {
    "baseline": dict(reweight_mode="none", smoothing=False),
    "gaussian_only": dict(reweight_mode="gaussian", smoothing=False),
    "smoothing_only": dict(reweight_mode="none", smoothing=True),
    "full": dict(reweight_mode="gaussian", smoothing=True),
    "softmax": dict(reweight_mode="softmax", smoothing=True),
    "max_geodesic": dict(reweight_mode="max", smoothing=True),
}


@pytest.fixture(scope="module")
def dumbbell_suite():
    """Per-part IoU, shape (len(SUITE_SEEDS), 3), for every suite setting."""
    mesh, parts = dumbbell()
    out = {name: [] for name in SUITE_SETTINGS}
    for seed in SUITE_SEEDS:
        for name, knobs in SUITE_SETTINGS.items():
            cfg = PipelineConfig(n_views=15, resolution=512, aggregation="sum",
                                 q=5, seed=seed, jitter_frac=0.12,
                                 noise_seed=seed, **knobs)
            out[name].append(run_fixture(mesh, parts, cfg))
    return {name: np.vstack(rows) for name, rows in out.items()}


def suite_mean(suite: dict, name: str) -> float:
    return float(suite[name].mean(axis=1).mean())


# --------------------------------------------------------------- criteria


def test_snowman_end_to_end_accuracy_and_runtime():
    mesh, parts = snowman()
    assert mesh.n_faces <= 5000 and len(parts) == 2
    cfg = PipelineConfig(n_views=10, resolution=512, aggregation="sum", seed=3)
    start = time.perf_counter()
    iou = run_fixture(mesh, parts, cfg)
    elapsed = time.perf_counter() - start
    assert (iou >= 0.90).all(), f"per-part IoU {iou}"
    assert elapsed < 60.0
    report(f"snowman end-to-end: per-part IoU {np.round(iou, 3)} >= 0.90, "
           f"{elapsed:.1f}s < 60s at 512^2")


def test_leak_suppression_on_every_suite_seed(dumbbell_suite):
    # Jittered boxes for one sphere keep catching the sliver of its twin that
    # peeks around the tube, so the far sphere (class 1) is the part that
    # leaks; distance reweighting plus smoothing must win it back on every
    # seed, by at least 10 IoU points on average.
    gain = dumbbell_suite["full"][:, 1] - dumbbell_suite["baseline"][:, 1]
    assert (gain > 0).all(), f"per-seed improvement {np.round(gain, 3)}"
    assert gain.mean() >= 0.10
    report(f"leak suppression: sphere IoU improves on {len(gain)}/"
           f"{len(gain)} seeds, mean +{gain.mean() * 100:.1f} points >= 10")


def test_gaussian_reweighting_orders_above_alternatives(dumbbell_suite):
    means = {name: suite_mean(dumbbell_suite, name)
             for name in ("full", "softmax", "max_geodesic")}
    assert means["full"] >= means["softmax"]
    assert means["full"] >= means["max_geodesic"]
    report("reweighting order: gaussian {full:.3f} >= softmax {softmax:.3f}, "
           "max-geodesic {max_geodesic:.3f}".format(**means))


def test_each_component_helps_and_both_help_most(dumbbell_suite):
    tie = 0.005  # 0.5 IoU points
    m = {name: suite_mean(dumbbell_suite, name) for name in
         ("baseline", "gaussian_only", "smoothing_only", "full")}
    assert m["gaussian_only"] >= m["baseline"] - tie
    assert m["smoothing_only"] >= m["baseline"] - tie
    assert m["full"] >= m["gaussian_only"] - tie
    assert m["full"] >= m["smoothing_only"] - tie
    report("component ablation (ties within 0.5 points): baseline {baseline:.3f}, "
           "+geodesic {gaussian_only:.3f}, +smoothing {smoothing_only:.3f}, "
           "both {full:.3f}".format(**m))


def test_fifteen_views_never_worse_than_five_on_any_fixture():
    results = {}
    for kind in sorted(FIXTURES):
        mesh, parts = make_fixture(kind)
        scores = []
        for n_views in (5, 15):
            cfg = PipelineConfig(n_views=n_views, resolution=512,
                                 aggregation="sum", seed=0)
            scores.append(mean_iou(run_fixture(mesh, parts, cfg)))
        assert scores[1] >= scores[0], f"{kind}: {scores[0]:.3f} -> {scores[1]:.3f}"
        results[kind] = scores
    summary = ", ".join(f"{k} {lo:.3f}->{hi:.3f}" for k, (lo, hi) in results.items())
    report(f"view trend: mIoU(15 views) >= mIoU(5 views) on every fixture ({summary})")


def test_geodesic_distances_match_independent_oracles():
    # (a) bit-exact agreement with Floyd-Warshall path re-evaluation on the
    # tie-free corpus of meshes at or below 200 faces
    meshes = small_exact_meshes()
    for name, mesh in meshes:
        n = mesh.n_faces
        assert n <= 200
        W = dense_dual_weights(mesh)
        nxt = floyd_warshall_next_hop(W)
        for source in sorted({0, n // 3, n // 2, (2 * n) // 3, n - 1}):
            got = geodesic_distances(mesh, source, np.arange(n)).distances
            want = oracle_distances(W, nxt, source)
            assert np.array_equal(got, want), f"{name} source {source}"

    # (b) planar grid: corner-to-corner along a lattice axis stays within 15%
    # of the true (Euclidean) geodesic
    gmesh, _ = grid(nx=20, ny=20)
    src, dst = 0, 760
    euclid = np.linalg.norm(gmesh.face_centroids[dst] - gmesh.face_centroids[src])
    assert euclid > 0.6 * gmesh.diameter
    dist = geodesic_distances(gmesh, src, np.array([dst])).distances[0]
    grid_err = abs(dist - euclid) / euclid
    assert grid_err <= 0.15

    # (c) unit icosphere: antipodal distance within 10% of pi (heat backend,
    # the metrically accurate one at long range)
    imesh, _ = icosphere(subdivisions=4)
    c0 = imesh.face_centroids[0]
    anti = int(np.argmin(np.linalg.norm(imesh.face_centroids + c0, axis=1)))
    adist = geodesic_distances(imesh, 0, np.array([anti]), backend="heat").distances[0]
    anti_err = abs(adist - np.pi) / np.pi
    assert anti_err <= 0.10

    report(f"geodesics: exact vs Floyd-Warshall on {len(meshes)} meshes x 5 sources, "
           f"grid corner pair {grid_err * 100:.1f}% <= 15%, "
           f"antipodal {anti_err * 100:.1f}% <= 10% of pi")


def test_iou_matches_brute_force_oracle_on_1000_vectors():
    rng = np.random.default_rng(2024)
    for trial in range(1000):
        k = int(rng.integers(1, 7))
        n = int(rng.integers(1, 80))
        pred = rng.integers(-1, k, size=n)
        gt = rng.integers(-1, k, size=n)
        got = iou_per_part(pred, gt, k)
        for c in range(k):
            p = {i for i in range(n) if pred[i] == c}
            g = {i for i in range(n) if gt[i] == c}
            union = p | g
            if not union:
                assert np.isnan(got[c]), f"trial {trial} part {c}"
            else:
                assert got[c] == len(p & g) / len(union), f"trial {trial} part {c}"
    report("metric: iou_per_part equals set-arithmetic oracle on 1000 random "
           "label vectors, exact")


def test_segment_command_bit_identical_across_reruns(tmp_path):
    fixture = tmp_path / "snowman.ply"
    assert main(["make-fixture", "snowman", "--out", str(fixture),
                 "--param", "segments=8", "--param", "rows_body=8",
                 "--param", "rows_head=6"]) == 0
    record = tmp_path / "detections.json"
    shared = ["--seed", "6", "--n-views", "4", "--resolution", "128"]
    assert main(["record", "--mesh", str(fixture), "--prompts", "head,body",
                 "--out", str(record), *shared]) == 0

    for run in ("first", "second"):
        assert main(["segment", "--mesh", str(fixture), "--prompts", "head,body",
                     "--out", str(tmp_path / run), "--detector", "replay",
                     "--replay", str(record), *shared]) == 0
    for artifact in ("labels.ply", "scores.bin"):
        a = (tmp_path / "first" / artifact).read_bytes()
        b = (tmp_path / "second" / artifact).read_bytes()
        assert a == b, f"{artifact} differs between identical runs"
    report("determinism: segment twice with one seed and a replay detector -> "
           "bit-identical labeled PLY and score dump")


def test_baseline_arithmetic_reproduced_bit_exactly():
    # Two-face square, hand-checkable numbers: face 0 covers 50 pixels,
    # face 1 covers 120; dyadic confidences keep every product decimal-exact.
    mesh = Mesh(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float),
                np.array([[0, 1, 2], [0, 2, 3]]))
    p2f = np.full((64, 64), BACKGROUND, dtype=np.int32)
    p2f[0:5, 0:10] = 0
    p2f[10:20, 0:12] = 1
    render = RenderOutput(
        image=np.zeros((64, 64, 3), dtype=np.uint8),
        pixel2face=p2f,
        face_pixel_area=np.array([50, 120]),
        visible_faces=np.array([0, 1]),
        projected_vertices=np.array(
            [[10, 10, 1.0], [30, 10, 1.0], [30, 30, 1.0], [10, 30, 1.0]]),
        faces=mesh.faces,
    )
    box_both = (5.0, 5.0, 30.0, 30.0)     # all four projected vertices inside
    box_face1 = (5.0, 25.0, 10.0, 10.0)   # only vertex 3 -> only face 1
    instances = [
        ([Detection(box_both, 0.5, 0, 0)], [[50 * 0.5], [120 * 0.5]]),
        ([Detection(box_face1, 0.25, 0, 0)], [[0.0], [120 * 0.25]]),
        ([Detection(box_both, 0.5, 0, 0), Detection(box_face1, 0.75, 0, 0)],
         [[50 * 0.5], [120 * 0.75]]),      # per-face max confidence
        ([], [[0.0], [0.0]]),
    ]
    for dets, expected in instances:
        want = np.array(expected)
        base = baseline_view_scores(render, dets, 2, 1)
        assert np.array_equal(base, want), f"{len(dets)} boxes"
        stripped = reweighted_view_scores(render, dets, mesh, None, 1,
                                          reweight_mode="none", smoothing=False)
        assert np.array_equal(stripped, base), f"{len(dets)} boxes"
    report("baseline reduction: pixel-area x max-confidence reproduced "
           "bit-exactly on hand-computed two-face micro-instances, and the "
           "full scorer with both components off matches it bit for bit")


def test_detector_service_wire_protocol_conformance():
    url = os.environ.get("MESHSEG_DETECTOR_URL")
    if not url:
        pytest.skip("MESHSEG_DETECTOR_URL unset; detector service not running")
    from protocol_checks import run_all
    run_all(url.rstrip("/"))
    report("detector service passes every wire-protocol check "
           "(health, detect, black image -> empty 200, 400s, 413, determinism)")
