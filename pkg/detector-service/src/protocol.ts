/**
 * Wire types for the detection service.
 *
 * GET /health -> 200 {status: "ok", model_id} once the model is ready,
 * 503 before that.
 *
 * POST /detect with {image: base64 PNG, prompt, threshold?} -> 200
 * {detections: [{x, y, w, h, score}, ...]}. Boxes are lower-left anchored
 * pixel rectangles, clamped in-image; scores lie in [0, 1]; an empty list is
 * a valid "nothing found". Malformed JSON, missing/empty fields, or an
 * undecodable image -> 400. An image field longer than MAX_IMAGE_B64
 * characters -> 413, checked before any decoding.
 */

export type DetectionBox = {
  x: number;
  y: number;
  w: number;
  h: number;
  score: number;
};

export type DetectRequest = {
  image: string;
  prompt: string;
  threshold?: number;
};

export type DetectResponse = {
  detections: DetectionBox[];
};

export type HealthResponse = {
  status: string;
  model_id: string;
};

export type ErrorResponse = {
  error: string;
};

/** Longest accepted image field, in base64 characters (not decoded bytes). */
export const MAX_IMAGE_B64 = 8 * 1024 * 1024;

/** Confidence cutoff applied when a request omits the threshold field. */
export const DEFAULT_THRESHOLD = 0.5;
