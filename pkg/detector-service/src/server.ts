import http from "node:http";

import { Detector } from "./detector";
import { decodePng } from "./png";
import {
  DEFAULT_THRESHOLD,
  DetectRequest,
  DetectionBox,
  MAX_IMAGE_B64,
} from "./protocol";

export type ServiceOptions = {
  detector: Detector;
  /** Cutoff applied when a request omits the threshold field. */
  threshold?: number;
  /** Longest accepted image field, in base64 characters. */
  maxImageB64?: number;
};

export type DetectorService = {
  server: http.Server;
  /** Flip the service from 503 "still loading" to live. */
  markReady(): void;
  /** Start listening; resolves with the bound port (useful with port 0). */
  listen(port: number, host?: string): Promise<number>;
  close(): Promise<void>;
};

const BASE64_SHAPE = /^[A-Za-z0-9+/]*={0,2}$/;

export function createDetectorService(options: ServiceOptions): DetectorService {
  const detector = options.detector;
  const defaultThreshold = options.threshold ?? DEFAULT_THRESHOLD;
  const maxImageB64 = options.maxImageB64 ?? MAX_IMAGE_B64;
  // Small allowance on top of the image bound so the surrounding JSON never
  // trips the transport-level cap before the per-field 413 check can run.
  const maxBodyBytes = maxImageB64 + 64 * 1024;
  let ready = false;

  const server = http.createServer((req, res) => {
    handle(req, res).catch(() => reply(res, 500, { error: "internal error" }));
  });

  async function handle(req: http.IncomingMessage, res: http.ServerResponse): Promise<void> {
    const path = (req.url ?? "").split("?")[0];
    if (req.method === "GET" && path === "/health") {
      if (!ready) {
        reply(res, 503, { error: "model is still loading" });
      } else {
        reply(res, 200, { status: "ok", model_id: detector.modelId });
      }
      return;
    }
    if (req.method === "POST" && path === "/detect") {
      if (!ready) {
        reply(res, 503, { error: "model is still loading" });
        return;
      }
      await handleDetect(req, res);
      return;
    }
    reply(res, 404, { error: "no such route" });
  }

  async function handleDetect(req: http.IncomingMessage, res: http.ServerResponse): Promise<void> {
    const { body, overLimit } = await readBody(req, maxBodyBytes);
    if (overLimit) {
      reply(res, 413, { error: "request body too large" });
      return;
    }
    let payload: Partial<DetectRequest>;
    try {
      payload = JSON.parse(body.toString("utf-8"));
    } catch {
      reply(res, 400, { error: "body is not JSON" });
      return;
    }
    const image = payload?.image;
    const prompt = payload?.prompt;
    if (typeof image !== "string" || !image || typeof prompt !== "string" || !prompt) {
      reply(res, 400, { error: "need non-empty image and prompt" });
      return;
    }
    if (image.length > maxImageB64) {
      reply(res, 413, { error: "image too large" });
      return;
    }
    const threshold = payload?.threshold ?? defaultThreshold;
    if (typeof threshold !== "number" || !Number.isFinite(threshold)) {
      reply(res, 400, { error: "threshold must be a number" });
      return;
    }
    if (!BASE64_SHAPE.test(image) || image.length % 4 !== 0) {
      reply(res, 400, { error: "image does not decode" });
      return;
    }
    let decoded;
    try {
      decoded = decodePng(Buffer.from(image, "base64"));
    } catch {
      reply(res, 400, { error: "image does not decode" });
      return;
    }
    const detections = detector
      .detect(decoded, prompt, threshold)
      .map((box) => clampBox(box, decoded.width, decoded.height))
      .filter((box): box is DetectionBox => box !== null);
    reply(res, 200, { detections });
  }

  return {
    server,
    markReady() {
      ready = true;
    },
    listen(port: number, host = "127.0.0.1"): Promise<number> {
      return new Promise((resolve, reject) => {
        server.once("error", reject);
        server.listen(port, host, () => {
          const addr = server.address();
          resolve(addr !== null && typeof addr === "object" ? addr.port : port);
        });
      });
    },
    close(): Promise<void> {
      server.closeAllConnections();
      return new Promise((resolve, reject) => {
        server.close((err) => (err ? reject(err) : resolve()));
      });
    },
  };
}

function reply(res: http.ServerResponse, status: number, body: unknown): void {
  if (res.headersSent) return;
  const raw = JSON.stringify(body);
  res.writeHead(status, {
    "Content-Type": "application/json",
    "Content-Length": Buffer.byteLength(raw),
  });
  res.end(raw);
}

/** Buffers the request body, discarding data beyond the limit but always
 * draining the stream so the client still receives a clean response. */
function readBody(
  req: http.IncomingMessage,
  limit: number,
): Promise<{ body: Buffer; overLimit: boolean }> {
  return new Promise((resolve, reject) => {
    const chunks: Buffer[] = [];
    let total = 0;
    let overLimit = false;
    req.on("data", (chunk: Buffer) => {
      total += chunk.length;
      if (total > limit) {
        overLimit = true;
        chunks.length = 0;
      } else {
        chunks.push(chunk);
      }
    });
    req.on("end", () => resolve({ body: Buffer.concat(chunks), overLimit }));
    req.on("error", reject);
  });
}

/** Enforces the wire guarantee: boxes in-image with at least 1px extent and
 * scores in [0, 1]; boxes that clamp to nothing are dropped. */
function clampBox(box: DetectionBox, width: number, height: number): DetectionBox | null {
  const x = Math.min(Math.max(box.x, 0), width);
  const y = Math.min(Math.max(box.y, 0), height);
  const w = Math.min(Math.max(box.w, 0), width - x);
  const h = Math.min(Math.max(box.h, 0), height - y);
  if (w < 1 || h < 1) return null;
  return { x, y, w, h, score: Math.min(Math.max(box.score, 0), 1) };
}
