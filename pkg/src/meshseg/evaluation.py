"""Part-IoU metrics, manifest-driven benchmarks, and ablation sweeps.

The benchmark consumes a JSON manifest::

    {"shapes": [{"mesh": "path.ply", "labels": "", "category": "snowman"}, ...],
     "parts":  [{"class_id": 0, "prompt": "head"}, ...]}

``labels`` may be empty (ground truth embedded in the mesh file) or point to a
JSON array of per-face integers; a sidecar array overrides whatever the mesh
carries, so label-free meshes still work with the ground-truth-driven oracle
detector.  Aggregation is two-level: IoU per part across all shapes first,
then the mean over parts.  Reports are written as JSON, CSV,
and rendered figures side by side.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .mesh import Mesh, MeshError, load_mesh
from .pipeline import PipelineConfig, save_config, segment_mesh

__all__ = [
    "PartIoUReport",
    "ShapeResult",
    "ablation_sweep",
    "iou_per_part",
    "load_manifest",
    "mean_iou",
    "run_benchmark",
    "write_report",
]

SWEEP_AXES = {
    "n_views": "n_views",
    "sampling": "view_mode",
    "reweight_mode": "reweight_mode",
    "smoothing": "smoothing",
    "color": "mesh_color",
}


def iou_per_part(pred: np.ndarray, gt: np.ndarray, k: int) -> np.ndarray:
    """Per-part intersection-over-union for labels in {-1, 0..k-1}.

    Parts absent from both ``pred`` and ``gt`` get NaN so callers can exclude
    them from means instead of counting a vacuous 1.0.  The background label
    -1 counts as "not this part" everywhere and has no IoU of its own.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"label length mismatch: {pred.shape} vs {gt.shape}")
    out = np.full(k, np.nan)
    for c in range(k):
        p = pred == c
        g = gt == c
        union = (p | g).sum()
        if union:
            out[c] = (p & g).sum() / union
    return out


def mean_iou(per_part: np.ndarray) -> float:
    """Mean over parts, excluding NaN (absent) entries; NaN if all absent."""
    per_part = np.asarray(per_part, dtype=float)
    if np.isnan(per_part).all():
        return math.nan
    return float(np.nanmean(per_part))


@dataclass
class ShapeResult:
    mesh: str
    category: str
    status: str  # "ok" | "failed"
    error: str = ""
    per_part: list[float] = field(default_factory=list)
    face_counts: list[int] = field(default_factory=list)


@dataclass
class PartIoUReport:
    """Two-level aggregate: per part across shapes, then mean over parts."""

    prompts: list[str]
    part_iou: list[float]
    face_counts: list[int]
    category_miou: dict[str, float]
    overall: float
    shapes: list[ShapeResult]

    def to_json_dict(self) -> dict:
        return {
            "parts": [
                {
                    "class_id": c,
                    "prompt": self.prompts[c],
                    "iou": self.part_iou[c],
                    "faces": self.face_counts[c],
                }
                for c in range(len(self.prompts))
            ],
            "categories": self.category_miou,
            "overall": self.overall,
            "shapes": [
                {
                    "mesh": s.mesh,
                    "category": s.category,
                    "status": s.status,
                    "error": s.error,
                    "per_part": s.per_part,
                }
                for s in self.shapes
            ],
        }


def load_manifest(path: str | Path) -> tuple[list[dict], list[dict]]:
    """Parse and validate a benchmark manifest; returns (shapes, parts)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    shapes = doc.get("shapes")
    parts = doc.get("parts")
    if not isinstance(shapes, list) or not shapes:
        raise ValueError("manifest has no shapes to evaluate")
    if not isinstance(parts, list) or not parts:
        raise ValueError("manifest has no parts")
    ids = sorted(p["class_id"] for p in parts)
    if ids != list(range(len(parts))):
        raise ValueError(f"part class_ids must form 0..{len(parts) - 1}, got {ids}")
    for s in shapes:
        if "mesh" not in s:
            raise ValueError("every shape needs a 'mesh' path")
    return shapes, parts


def _load_gt(shape: dict, base: Path, n_faces: int) -> np.ndarray:
    label_path = shape.get("labels", "")
    if label_path:
        with open(base / label_path, encoding="utf-8") as fh:
            gt = np.asarray(json.load(fh), dtype=np.int64)
    else:
        mesh = load_mesh(base / shape["mesh"])
        if mesh.face_labels is None:
            raise MeshError(f"{shape['mesh']} has no embedded face labels")
        gt = mesh.face_labels
    if len(gt) != n_faces:
        raise MeshError(f"ground truth has {len(gt)} labels for {n_faces} faces")
    return gt


def run_benchmark(
    manifest_path: str | Path,
    cfg: PipelineConfig,
    out_dir: str | Path | None = None,
) -> PartIoUReport:
    """Segment every manifest shape and aggregate per-part IoU.

    Per-shape failures (missing files, bad labels) are recorded on the report
    and the metrics are computed over the remaining shapes.
    """
    manifest_path = Path(manifest_path)
    shapes, parts = load_manifest(manifest_path)
    base = manifest_path.parent
    by_id = {p["class_id"]: p["prompt"] for p in parts}
    prompts = [by_id[c] for c in range(len(parts))]
    k = len(prompts)

    results: list[ShapeResult] = []
    per_shape_iou: list[np.ndarray] = []
    per_shape_counts: list[np.ndarray] = []
    for shape in shapes:
        cat = shape.get("category", "")
        try:
            mesh = load_mesh(base / shape["mesh"])
            gt = _load_gt(shape, base, mesh.n_faces)
            if shape.get("labels"):
                mesh = Mesh(mesh.vertices, mesh.faces, face_labels=gt,
                            vertex_labels=mesh.vertex_labels)
            seg = segment_mesh(mesh, prompts, cfg)
            iou = iou_per_part(seg.labels, gt, k)
            counts = np.array([(gt == c).sum() for c in range(k)])
            results.append(
                ShapeResult(shape["mesh"], cat, "ok",
                            per_part=[float(v) for v in iou],
                            face_counts=[int(n) for n in counts])
            )
            per_shape_iou.append(iou)
            per_shape_counts.append(counts)
        except (OSError, MeshError, ValueError) as exc:
            results.append(ShapeResult(shape["mesh"], cat, "failed", error=str(exc)))

    if per_shape_iou:
        stack = np.vstack(per_shape_iou)
        with np.errstate(invalid="ignore"):
            part_means = np.nanmean(stack, axis=0)
        part_means = np.where(np.isnan(stack).all(axis=0), np.nan, part_means)
        counts_total = np.vstack(per_shape_counts).sum(axis=0)
    else:
        part_means = np.full(k, np.nan)
        counts_total = np.zeros(k, dtype=int)

    cat_miou: dict[str, float] = {}
    for cat in sorted({r.category for r in results if r.status == "ok"}):
        rows = [np.array(r.per_part) for r in results if r.status == "ok" and r.category == cat]
        stack = np.vstack(rows)
        with np.errstate(invalid="ignore"):
            cat_miou[cat] = mean_iou(np.nanmean(stack, axis=0))

    report = PartIoUReport(
        prompts=prompts,
        part_iou=[float(v) for v in part_means],
        face_counts=[int(n) for n in counts_total],
        category_miou=cat_miou,
        overall=mean_iou(part_means),
        shapes=results,
    )
    if out_dir is not None:
        write_report(report, Path(out_dir), cfg)
    return report


def write_report(report: PartIoUReport, out_dir: Path, cfg: PipelineConfig | None = None) -> None:
    """Emit report.json, report.csv, figures/, and the effective config."""
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2)
        fh.write("\n")

    with open(out_dir / "report.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "key", "prompt", "iou", "faces"])
        for c, prompt in enumerate(report.prompts):
            writer.writerow(["part", c, prompt, _fmt(report.part_iou[c]), report.face_counts[c]])
        for cat, val in report.category_miou.items():
            writer.writerow(["category", cat, "", _fmt(val), ""])
        writer.writerow(["overall", "", "", _fmt(report.overall), ""])

    fig_dir = out_dir / "figures"
    fig_dir.mkdir(exist_ok=True)
    _bar_figure(
        fig_dir / "per_part_iou.png",
        report.prompts,
        report.part_iou,
        "IoU per part (mean over shapes)",
    )
    if report.category_miou:
        _bar_figure(
            fig_dir / "per_category_miou.png",
            list(report.category_miou),
            list(report.category_miou.values()),
            "mIoU per category",
        )
    if cfg is not None:
        save_config(cfg, out_dir / "config.toml")


def _fmt(v: float) -> str:
    return "" if (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def _bar_figure(path: Path, names: list[str], values: list[float], title: str) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 3.2))
    vals = [0.0 if (isinstance(v, float) and math.isnan(v)) else v for v in values]
    ax.bar(range(len(names)), vals, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("IoU")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ablation_sweep(
    axis: str,
    values: list,
    manifest_path: str | Path,
    base_cfg: PipelineConfig,
    out_dir: str | Path | None = None,
) -> list[tuple[object, PartIoUReport]]:
    """One benchmark per axis value, identical seeds across settings."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    if not values:
        raise ValueError("sweep needs at least one axis value")
    field_name = SWEEP_AXES[axis]
    rows: list[tuple[object, PartIoUReport]] = []
    for value in values:
        cfg = base_cfg.with_overrides(**{field_name: value})
        rows.append((value, run_benchmark(manifest_path, cfg)))

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        doc = [
            {"value": _jsonable(v), "overall": r.overall,
             "per_part": r.part_iou, "prompts": r.prompts}
            for v, r in rows
        ]
        with open(out / "sweep.json", "w", encoding="utf-8") as fh:
            json.dump({"axis": axis, "rows": doc}, fh, indent=2)
            fh.write("\n")
        with open(out / "sweep.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["axis", "value", "overall"] + rows[0][1].prompts)
            for v, r in rows:
                writer.writerow([axis, _jsonable(v), _fmt(r.overall)]
                                + [_fmt(x) for x in r.part_iou])
        _sweep_figure(out / "sweep.png", axis, rows)
        save_config(base_cfg, out / "config.toml")
    return rows


def _jsonable(v):
    return list(v) if isinstance(v, tuple) else v


def _sweep_figure(path: Path, axis: str, rows: list[tuple[object, PartIoUReport]]) -> None:
    labels = [str(_jsonable(v)) for v, _ in rows]
    overall = [0.0 if math.isnan(r.overall) else r.overall for _, r in rows]
    fig, ax = plt.subplots(figsize=(max(4, 1.4 * len(rows)), 3.2))
    ax.plot(range(len(rows)), overall, marker="o", color="#4878a8")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_xlabel(axis)
    ax.set_ylabel("overall mIoU")
    ax.set_title(f"ablation over {axis}")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
