"""Reference detector service speaking the remote-detector wire protocol.

Run with ``python3 -m meshseg.stub_server --port 8750``.  The "model" is a
brightness-saliency stand-in: it boxes the non-black region of the frame, so a
solid-black image legitimately yields zero detections.  The endpoints, error
codes, and payload shapes are exactly what any real detector service must
implement:

* ``POST /detect``  {image: base64 PNG, prompt: string,
                     threshold: number, optional, default 0.5}
  -> 200 {"detections": [{x, y, w, h, score}]}
  -> 400 malformed request (JSON, fields, base64, or PNG)
  -> 413 when the image field exceeds MAX_IMAGE_B64 base64 characters,
     checked before any decoding
* ``GET /health``   -> 200 {"status": "ok", "model_id": ...}, 503 before load
"""

from __future__ import annotations

import argparse
import base64
import binascii
import io
import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
from PIL import Image

MODEL_ID = "brightness-saliency-stub/1"
DEFAULT_PORT = 8750
MAX_IMAGE_B64 = 8 * 1024 * 1024  # base64 characters, not decoded bytes
DEFAULT_THRESHOLD = 0.5
BRIGHTNESS_CUTOFF = 10  # 0..255; pixels at or below this count as background
STUB_SCORE = 0.9


def salient_box(image: np.ndarray) -> tuple[int, int, int, int] | None:
    """Tight lower-left-anchored box around non-black pixels, or None."""
    mask = image.max(axis=2) > BRIGHTNESS_CUTOFF
    if not mask.any():
        return None
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    height = image.shape[0]
    return (c0, height - r1 - 1, c1 - c0 + 1, r1 - r0 + 1)


class _BadRequest(ValueError):
    pass


class _PayloadTooLarge(ValueError):
    pass


def handle_detect(body: dict, max_image_b64: int = MAX_IMAGE_B64) -> dict:
    """Pure request handler; raises _BadRequest / _PayloadTooLarge on bad input."""
    if not isinstance(body, dict):
        raise _BadRequest("request body must be a JSON object")
    for key in ("image", "prompt"):
        if key not in body:
            raise _BadRequest(f"missing field {key!r}")
    if not isinstance(body["image"], str) or not body["image"]:
        raise _BadRequest("image must be a non-empty base64 string")
    if not isinstance(body["prompt"], str) or not body["prompt"].strip():
        raise _BadRequest("prompt must be a non-empty string")
    try:
        threshold = float(body.get("threshold", DEFAULT_THRESHOLD))
    except (TypeError, ValueError):
        raise _BadRequest("threshold must be a number") from None
    if not 0.0 <= threshold <= 1.0:
        raise _BadRequest("threshold must be within [0, 1]")
    if len(body["image"]) > max_image_b64:
        raise _PayloadTooLarge(f"image exceeds {max_image_b64} base64 characters")
    try:
        raw = base64.b64decode(body["image"], validate=True)
    except (TypeError, binascii.Error) as exc:
        raise _BadRequest(f"image is not valid base64: {exc}") from None
    try:
        with Image.open(io.BytesIO(raw)) as img:
            arr = np.asarray(img.convert("RGB"))
    except Exception as exc:
        raise _BadRequest(f"image does not decode as PNG: {exc}") from None

    box = salient_box(arr)
    detections = []
    if box is not None and STUB_SCORE >= threshold:
        x, y, w, h = box
        detections.append({"x": x, "y": y, "w": w, "h": h, "score": STUB_SCORE})
    return {"detections": detections}


class StubHandler(BaseHTTPRequestHandler):
    max_image_b64 = MAX_IMAGE_B64

    def _send(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):  # noqa: N802 (http.server naming)
        if self.path == "/health":
            self._send(200, {"status": "ok", "model_id": MODEL_ID})
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):  # noqa: N802
        if self.path != "/detect":
            self._send(404, {"error": f"unknown path {self.path}"})
            return
        length = int(self.headers.get("Content-Length", 0))
        # Transport guard only; leaves room for JSON overhead so the
        # per-field limit in handle_detect is the binding 413.
        if length > self.max_image_b64 + 64 * 1024:
            self._send(413, {"error": "request body too large"})
            return
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw)
        except json.JSONDecodeError as exc:
            self._send(400, {"error": f"invalid JSON: {exc}"})
            return
        try:
            self._send(200, handle_detect(body, self.max_image_b64))
        except _PayloadTooLarge as exc:
            self._send(413, {"error": str(exc)})
        except _BadRequest as exc:
            self._send(400, {"error": str(exc)})

    def log_message(self, *args):  # keep test output quiet
        pass


def make_server(port: int = 0, max_image_b64: int = MAX_IMAGE_B64) -> ThreadingHTTPServer:
    handler = type("Handler", (StubHandler,), {"max_image_b64": max_image_b64})
    return ThreadingHTTPServer(("127.0.0.1", port), handler)


def serve_background(port: int = 0, max_image_b64: int = MAX_IMAGE_B64):
    """Start the stub on a daemon thread; returns (server, base_url)."""
    server = make_server(port, max_image_b64)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://127.0.0.1:{server.server_address[1]}"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--port", type=int,
                        default=int(os.environ.get("MESHSEG_STUB_PORT", DEFAULT_PORT)))
    parser.add_argument("--max-image-b64", type=int,
                        default=int(os.environ.get("MESHSEG_STUB_MAX_B64",
                                                   MAX_IMAGE_B64)))
    args = parser.parse_args(argv)
    server = make_server(args.port, args.max_image_b64)
    print(f"stub detector listening on http://127.0.0.1:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
