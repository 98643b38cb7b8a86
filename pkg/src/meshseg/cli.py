"""Command-line surface: segment | evaluate | sweep | render | record | make-fixture.

Exit codes: 0 on success, 1 on input errors (bad flags, unreadable meshes,
invalid manifests), 2 on detector transport failure after retries.  Every
command that writes an output directory echoes the effective configuration
into it as ``config.toml``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .detector import DetectorTransportError, save_detections
from .evaluation import ablation_sweep, run_benchmark
from .fixtures import FIXTURES, make_fixture
from .mesh import UNLABELED, MeshError, load_mesh, normalize_mesh, save_mesh
from .pipeline import (
    PipelineConfig,
    detect_all,
    load_config,
    make_detector,
    preset_config,
    render_views,
    save_config,
    segment_mesh,
)
from .render import save_pixel2face, save_png
from .scoring import save_scores

__all__ = ["PALETTE", "UNLABELED_COLOR", "main", "palette_color"]

# Fixed 20-color palette indexed by class id so visual diffs stay stable.
PALETTE = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
    (152, 223, 138), (255, 152, 150), (197, 176, 213), (196, 156, 148),
    (247, 182, 210), (199, 199, 199), (219, 219, 141), (158, 218, 229),
)
UNLABELED_COLOR = (60, 60, 60)


def palette_color(class_id: int) -> tuple[int, int, int]:
    if class_id == UNLABELED:
        return UNLABELED_COLOR
    return PALETTE[class_id % len(PALETTE)]


class CLIError(ValueError):
    """Usage error carrying exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; 2 is reserved for
    # detector transport failures here, so route usage errors to CLIError.
    def error(self, message):
        raise CLIError(message)


# --- config plumbing ---------------------------------------------------------

_CONFIG_FLAGS = [
    # (flag, config field, parser)
    ("--n-views", "n_views", int),
    ("--view-mode", "view_mode", str),
    ("--seed", "seed", int),
    ("--resolution", "resolution", int),
    ("--q", "q", int),
    ("--reweight-mode", "reweight_mode", str),
    ("--aggregation", "aggregation", str),
    ("--normalization", "normalization", str),
    ("--detector", "detector", str),
    ("--remote-url", "remote_url", str),
    ("--remote-threshold", "remote_threshold", float),
    ("--replay", "replay_path", str),
    ("--jitter-frac", "jitter_frac", float),
    ("--drop-prob", "drop_prob", float),
    ("--spurious-rate", "spurious_rate", float),
    ("--noise-seed", "noise_seed", int),
    ("--background-threshold", "background_threshold", float),
    ("--geodesic-backend", "geodesic_backend", str),
    ("--camera-distance", "camera_distance", float),
    ("--fov-y", "fov_y_deg", float),
]


def _parse_onoff(value: str) -> bool:
    low = value.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise CLIError(f"expected on/off, got {value!r}")


def _parse_color(value: str) -> tuple[int, int, int]:
    parts = value.split(",")
    if len(parts) != 3:
        raise CLIError(f"expected r,g,b color, got {value!r}")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def _parse_range(value: str) -> tuple[float, float]:
    parts = value.split(",")
    if len(parts) != 2:
        raise CLIError(f"expected lo,hi range, got {value!r}")
    return float(parts[0]), float(parts[1])


def add_config_args(parser: argparse.ArgumentParser) -> None:
    grp = parser.add_argument_group("pipeline configuration")
    grp.add_argument("--config", help="TOML config file; flags override its values")
    grp.add_argument("--preset", choices=("default", "human"),
                     help="named preset applied before file/flag overrides")
    for flag, _, typ in _CONFIG_FLAGS:
        grp.add_argument(flag, type=typ, default=None)
    grp.add_argument("--smoothing", choices=("on", "off"), default=None)
    grp.add_argument("--vertex-multiset", choices=("on", "off"), default=None)
    grp.add_argument("--mesh-color", default=None, metavar="R,G,B")
    grp.add_argument("--score-range", default=None, metavar="LO,HI",
                     help="oracle detector confidence range")


def build_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        cfg = load_config(args.config)
        if args.preset:
            raise CLIError("--preset and --config are mutually exclusive")
    else:
        cfg = preset_config(args.preset or "default")
    overrides = {}
    for flag, field_name, _ in _CONFIG_FLAGS:
        value = getattr(args, flag.lstrip("-").replace("-", "_"))
        if value is not None:
            overrides[field_name] = value
    if args.smoothing is not None:
        overrides["smoothing"] = _parse_onoff(args.smoothing)
    if args.vertex_multiset is not None:
        overrides["vertex_multiset"] = _parse_onoff(args.vertex_multiset)
    if args.mesh_color is not None:
        overrides["mesh_color"] = _parse_color(args.mesh_color)
    if args.score_range is not None:
        lo, hi = _parse_range(args.score_range)
        overrides["score_min"] = lo
        overrides["score_max"] = hi
    valid = {f.name for f in dataclass_fields(PipelineConfig)}
    unknown = set(overrides) - valid
    if unknown:
        raise CLIError(f"unknown config fields: {sorted(unknown)}")
    return cfg.with_overrides(**overrides) if overrides else cfg


def _collect_prompts(args: argparse.Namespace) -> list[str]:
    prompts: list[str] = []
    if args.prompts:
        prompts.extend(p.strip() for p in args.prompts.split(",") if p.strip())
    if args.prompt:
        prompts.extend(args.prompt)
    if not prompts:
        raise CLIError("at least one prompt is required (--prompts or --prompt)")
    return prompts


def _add_prompt_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--prompts", help="comma-separated prompt list")
    parser.add_argument("--prompt", action="append",
                        help="single prompt; repeat for several (may contain commas)")


# --- commands ----------------------------------------------------------------

def cmd_segment(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    mesh = load_mesh(args.mesh)
    prompts = _collect_prompts(args)
    result = segment_mesh(mesh, prompts, cfg)
    if not result.detections:
        print("warning: no detections fired; labels follow tie-break/background policy",
              file=sys.stderr)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    colors = np.array([palette_color(int(c)) for c in result.labels], dtype=np.uint8)
    labeled = mesh.with_labels(face_labels=result.labels)
    save_mesh(labeled, str(out / "labels.ply"), face_colors=colors)
    save_scores(result.scores, out / "scores.bin")
    save_detections(result.detections, out / "detections.json")
    save_config(cfg, out / "config.toml")

    counts = {p: int((result.labels == i).sum()) for i, p in enumerate(prompts)}
    unlabeled = int((result.labels == UNLABELED).sum())
    print(f"segmented {mesh.n_faces} faces over {len(prompts)} prompts -> {out}")
    for p, n in counts.items():
        print(f"  {p}: {n} faces")
    if unlabeled:
        print(f"  (background): {unlabeled} faces")
    return 0


def cmd_make_fixture(args: argparse.Namespace) -> int:
    params = {}
    for item in args.param or []:
        if "=" not in item:
            raise CLIError(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value: object = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                value = raw
        params[key] = value
    try:
        mesh, parts = make_fixture(args.kind, **params)
    except TypeError as exc:  # bad parameter name for this fixture
        raise CLIError(str(exc)) from exc

    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    colors = None
    if mesh.face_labels is not None:
        colors = np.array([palette_color(int(c)) for c in mesh.face_labels], dtype=np.uint8)
    save_mesh(mesh, str(out), face_colors=colors)
    sidecar = {"parts": [{"class_id": p.class_id, "prompt": p.prompt} for p in parts]}
    with open(out.with_suffix(out.suffix + ".parts.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")
    print(f"wrote {args.kind} fixture: {mesh.n_vertices} vertices, "
          f"{mesh.n_faces} faces, parts {[p.prompt for p in parts]} -> {out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    report = run_benchmark(args.manifest, cfg, out_dir=args.out)
    print(f"evaluated {sum(1 for s in report.shapes if s.status == 'ok')} shapes "
          f"({sum(1 for s in report.shapes if s.status == 'failed')} failed)")
    for c, prompt in enumerate(report.prompts):
        print(f"  IoU[{prompt}] = {report.part_iou[c]:.4f}")
    print(f"  overall mIoU = {report.overall:.4f}")
    for shape in report.shapes:
        if shape.status == "failed":
            print(f"  failed: {shape.mesh}: {shape.error}", file=sys.stderr)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    raw = [v.strip() for v in args.values.split(",") if v.strip()]
    if args.axis == "n_views":
        values: list = [int(v) for v in raw]
    elif args.axis == "smoothing":
        values = [_parse_onoff(v) for v in raw]
    elif args.axis == "color":
        values = [_parse_color(v) for v in args.values.split(";") if v.strip()]
    else:
        values = raw
    rows = ablation_sweep(args.axis, values, args.manifest, cfg, out_dir=args.out)
    print(f"sweep over {args.axis}:")
    for value, report in rows:
        print(f"  {value!r:>12}: overall mIoU = {report.overall:.4f}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    mesh = load_mesh(args.mesh)
    cams, renders = render_views(mesh, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, r in enumerate(renders):
        save_png(r.image, out / f"view_{i:03d}.png")
        save_pixel2face(r.pixel2face, out / f"view_{i:03d}.p2f")
    save_config(cfg, out / "config.toml")
    print(f"rendered {len(renders)} views at {cfg.resolution}x{cfg.resolution} -> {out}")
    return 0


def cmd_record(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    mesh = load_mesh(args.mesh)
    prompts = _collect_prompts(args)
    mesh = normalize_mesh(mesh)
    detector = make_detector(cfg, mesh, {p: i for i, p in enumerate(prompts)})
    cams, renders = render_views(mesh, cfg)
    detections = detect_all(renders, prompts, detector)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    save_detections(detections, out)
    save_config(cfg, out.with_suffix(".config.toml"))
    print(f"recorded {len(detections)} detections over {len(renders)} views -> {out}")
    return 0


# --- entry point ---------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="meshseg",
                     description="Open-vocabulary 3D mesh part segmentation "
                                 "via multi-view 2D detection lifting.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("segment",
                       help="label mesh faces from text prompts")
    p.add_argument("--mesh", required=True)
    _add_prompt_args(p)
    p.add_argument("--out", required=True, help="output directory")
    add_config_args(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("make-fixture",
                       help="generate a labeled synthetic mesh")
    p.add_argument("kind", choices=sorted(FIXTURES))
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", required=True, help="output PLY path")
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("evaluate",
                       help="run the benchmark over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="report directory")
    add_config_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep",
                       help="ablation sweep over one config axis")
    p.add_argument("--axis", required=True,
                   choices=("n_views", "sampling", "reweight_mode", "smoothing", "color"))
    p.add_argument("--values", required=True,
                   help="comma-separated values (';'-separated r,g,b for color)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("render",
                       help="write per-view PNGs and pixel-to-face rasters")
    p.add_argument("--mesh", required=True)
    p.add_argument("--out", required=True)
    add_config_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("record",
                       help="run the detector and save detections for replay")
    p.add_argument("--mesh", required=True)
    _add_prompt_args(p)
    p.add_argument("--out", required=True, help="output JSON path")
    add_config_args(p)
    p.set_defaults(func=cmd_record)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except DetectorTransportError as exc:
        print(f"error: detector transport failure: {exc}", file=sys.stderr)
        return 2
    except (CLIError, MeshError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
