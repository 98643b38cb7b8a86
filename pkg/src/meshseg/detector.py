"""Pluggable 2D detectors: ground-truth oracle, record/replay, remote client.

Detection is the only stochastic, non-geometric stage of the pipeline, so it
hides behind one small interface. The oracle backend turns ground-truth labels
into tight pixel boxes (optionally corrupted by a seeded noise model) for
desk-scale evaluation without any ML model; the replay backend makes runs
reproducible from a JSON file; the remote backend speaks the wire protocol of
an actual detector service.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .render import RenderOutput, png_bytes

RECORD_VERSION = 1
DEFAULT_SCORE_THRESHOLD = 0.5


class DetectorTransportError(RuntimeError):
    """Remote detector unreachable or persistently failing."""


@dataclass(frozen=True)
class Detection:
    """One detector hit: lower-left anchored pixel box plus confidence."""

    box: tuple[float, float, float, float]
    score: float
    prompt_index: int = 0
    view_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class NoiseModel:
    """Deterministic corruption applied to oracle boxes.

    jitter_frac displaces each box edge by up to that fraction of the box
    dimension; drop_prob removes the true box; spurious_rate is the expected
    Poisson count of random false boxes; scores are drawn from score_range.
    All draws come from a substream keyed by (seed, view, prompt), so results
    do not depend on call order.
    """

    jitter_frac: float = 0.0
    drop_prob: float = 0.0
    spurious_rate: float = 0.0
    score_range: tuple[float, float] = (1.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValueError("drop_prob must be a probability")
        if self.jitter_frac < 0 or self.spurious_rate < 0:
            raise ValueError("jitter_frac and spurious_rate must be nonnegative")
        lo, hi = self.score_range
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("score_range must satisfy 0 <= lo <= hi <= 1")

    @property
    def is_silent(self) -> bool:
        return self.jitter_frac == 0 and self.drop_prob == 0 and self.spurious_rate == 0


def _tight_box(render: RenderOutput, face_mask: np.ndarray):
    """Tight (x, y, w, h) around pixels whose face satisfies ``face_mask``."""
    p2f = render.pixel2face
    hit = np.zeros(p2f.shape, dtype=bool)
    fg = p2f >= 0
    hit[fg] = face_mask[p2f[fg]]
    if not hit.any():
        return None
    rows = np.flatnonzero(hit.any(axis=1))
    cols = np.flatnonzero(hit.any(axis=0))
    r0, r1 = rows[0], rows[-1]
    c0, c1 = cols[0], cols[-1]
    height = p2f.shape[0]
    # pixel row r spans y in [H-r-1, H-r]; box covers rows r0..r1 inclusive
    return (float(c0), float(height - r1 - 1), float(c1 - c0 + 1), float(r1 - r0 + 1))


def _clamp_box(box, width, height):
    x, y, w, h = box
    x0, x1 = max(x, 0.0), min(x + w, float(width))
    y0, y1 = max(y, 0.0), min(y + h, float(height))
    if x1 - x0 < 1.0:
        x0 = min(max(x0, 0.0), width - 1.0)
        x1 = x0 + 1.0
    if y1 - y0 < 1.0:
        y0 = min(max(y0, 0.0), height - 1.0)
        y1 = y0 + 1.0
    return (x0, y0, x1 - x0, y1 - y0)


def oracle_detect(render: RenderOutput, gt_face_labels: np.ndarray, prompt_class: int,
                  noise: NoiseModel, view_index: int = 0, prompt_index: int = 0) -> list[Detection]:
    """Tight ground-truth box for one prompt's class, plus modeled noise.

    A fully occluded part yields no detections. With a silent noise model the
    box is exact and the score is the top of the score range; otherwise the
    rng substream draws, in order: drop coin, four edge jitters, score, then
    spurious boxes.
    """
    height, width = render.resolution
    face_mask = np.asarray(gt_face_labels) == prompt_class
    box = _tight_box(render, face_mask)
    if noise.is_silent:
        if box is None:
            return []
        return [Detection(box, noise.score_range[1], prompt_index, view_index)]

    rng = np.random.default_rng([noise.seed, view_index, prompt_index])
    out = []
    if box is not None and rng.uniform() >= noise.drop_prob:
        x, y, w, h = box
        if noise.jitter_frac > 0:
            jx0, jx1, jy0, jy1 = rng.uniform(-noise.jitter_frac, noise.jitter_frac, 4)
            x0, x1 = sorted((x + jx0 * w, x + w + jx1 * w))
            y0, y1 = sorted((y + jy0 * h, y + h + jy1 * h))
            box = (x0, y0, x1 - x0, y1 - y0)
        score = rng.uniform(*noise.score_range)
        out.append(Detection(_clamp_box(box, width, height), score, prompt_index, view_index))
    n_spurious = rng.poisson(noise.spurious_rate)
    for _ in range(n_spurious):
        w = rng.uniform(0.1, 0.5) * width
        h = rng.uniform(0.1, 0.5) * height
        x = rng.uniform(0, width - w)
        y = rng.uniform(0, height - h)
        score = rng.uniform(*noise.score_range)
        out.append(Detection(_clamp_box((x, y, w, h), width, height), score,
                             prompt_index, view_index))
    return out


class OracleDetector:
    """Backend that answers from ground-truth labels instead of the image."""

    def __init__(self, gt_face_labels: np.ndarray, prompt_classes: dict[str, int],
                 noise: NoiseModel | None = None):
        self.gt_face_labels = np.asarray(gt_face_labels)
        self.prompt_classes = dict(prompt_classes)
        self.noise = noise if noise is not None else NoiseModel()

    def detect(self, render: RenderOutput, prompt: str,
               view_index: int = 0, prompt_index: int = 0) -> list[Detection]:
        try:
            cls = self.prompt_classes[prompt]
        except KeyError:
            raise ValueError(f"oracle has no class for prompt {prompt!r}") from None
        return oracle_detect(render, self.gt_face_labels, cls, self.noise,
                             view_index, prompt_index)


class ReplayDetector:
    """Backend that replays a recorded detection stream from JSON."""

    def __init__(self, path: str):
        self._table = load_detections(path)

    def detect(self, render: RenderOutput, prompt: str,
               view_index: int = 0, prompt_index: int = 0) -> list[Detection]:
        return list(self._table.get((view_index, prompt_index), []))


class RemoteDetector:
    """Backend that POSTs PNG frames to a detector service."""

    def __init__(self, base_url: str, threshold: float = DEFAULT_SCORE_THRESHOLD,
                 timeout: float = 30.0, retries: int = 2):
        self.base_url = base_url.rstrip("/")
        self.threshold = threshold
        self.timeout = timeout
        self.retries = retries

    def detect(self, render: RenderOutput, prompt: str,
               view_index: int = 0, prompt_index: int = 0) -> list[Detection]:
        import requests

        payload = {
            "image": base64.b64encode(png_bytes(render.image)).decode("ascii"),
            "prompt": prompt,
            "threshold": self.threshold,
        }
        url = f"{self.base_url}/detect"
        last_err = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(url, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_err = exc
                continue
            if resp.status_code >= 500:
                last_err = RuntimeError(f"detector service error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise DetectorTransportError(
                    f"detector service rejected request: {resp.status_code} {resp.text[:200]}")
            body = resp.json()
            height, width = render.resolution
            out = []
            for d in body.get("detections", []):
                box = _clamp_box((d["x"], d["y"], d["w"], d["h"]), width, height)
                out.append(Detection(box, float(d["score"]), prompt_index, view_index))
            return out
        raise DetectorTransportError(f"detector service unreachable: {last_err}")


def save_detections(detections: list[Detection], path: str) -> None:
    """Write the versioned record file; one entry per (view, prompt) pair."""
    groups: dict[tuple[int, int], list[Detection]] = {}
    for d in detections:
        groups.setdefault((d.view_index, d.prompt_index), []).append(d)
    views = []
    for (v, p) in sorted(groups):
        views.append({
            "view_index": v,
            "prompt_index": p,
            "detections": [
                {"x": d.box[0], "y": d.box[1], "w": d.box[2], "h": d.box[3],
                 "score": d.score}
                for d in groups[(v, p)]
            ],
        })
    with open(path, "w") as fh:
        json.dump({"version": RECORD_VERSION, "views": views}, fh, indent=2)
        fh.write("\n")


def load_detections(path: str) -> dict[tuple[int, int], list[Detection]]:
    """Parse a record file into a (view, prompt) -> detections table."""
    with open(path) as fh:
        data = json.load(fh)
    version = data.get("version")
    if version != RECORD_VERSION:
        raise ValueError(f"detection record version {version!r}, expected {RECORD_VERSION}")
    table: dict[tuple[int, int], list[Detection]] = {}
    for entry in data.get("views", []):
        key = (int(entry["view_index"]), int(entry["prompt_index"]))
        dets = [Detection((float(d["x"]), float(d["y"]), float(d["w"]), float(d["h"])),
                          float(d["score"]), key[1], key[0])
                for d in entry.get("detections", [])]
        table.setdefault(key, []).extend(dets)
    return table
