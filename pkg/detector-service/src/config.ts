import { parseArgs } from "node:util";

import { DEFAULT_THRESHOLD, MAX_IMAGE_B64 } from "./protocol";

export type ServiceConfig = {
  host: string;
  port: number;
  threshold: number;
  maxImageB64: number;
  /** Simulated model warm-up before the service reports healthy. */
  loadDelayMs: number;
};

export const DEFAULTS: ServiceConfig = {
  host: "127.0.0.1",
  port: 8800,
  threshold: DEFAULT_THRESHOLD,
  maxImageB64: MAX_IMAGE_B64,
  loadDelayMs: 0,
};

/** Flags win over environment variables, which win over DEFAULTS. */
export function loadConfig(argv: string[], env: NodeJS.ProcessEnv = {}): ServiceConfig {
  const { values } = parseArgs({
    args: argv,
    options: {
      host: { type: "string" },
      port: { type: "string" },
      threshold: { type: "string" },
      "load-delay-ms": { type: "string" },
    },
  });
  return {
    host: values.host ?? env.DETECTOR_HOST ?? DEFAULTS.host,
    port: intOption("port", values.port ?? env.DETECTOR_PORT, DEFAULTS.port, 0, 65535),
    threshold: floatOption(
      "threshold",
      values.threshold ?? env.DETECTOR_THRESHOLD,
      DEFAULTS.threshold,
      0,
      1,
    ),
    maxImageB64: DEFAULTS.maxImageB64,
    loadDelayMs: intOption(
      "load-delay-ms",
      values["load-delay-ms"] ?? env.DETECTOR_LOAD_DELAY_MS,
      DEFAULTS.loadDelayMs,
      0,
      Number.MAX_SAFE_INTEGER,
    ),
  };
}

function intOption(name: string, raw: string | undefined, fallback: number, lo: number, hi: number): number {
  if (raw === undefined) return fallback;
  const value = Number(raw);
  if (!Number.isInteger(value) || value < lo || value > hi) {
    throw new Error(`--${name} must be an integer in [${lo}, ${hi}], got ${raw!}`);
  }
  return value;
}

function floatOption(name: string, raw: string | undefined, fallback: number, lo: number, hi: number): number {
  if (raw === undefined) return fallback;
  const value = Number(raw);
  if (!Number.isFinite(value) || value < lo || value > hi) {
    throw new Error(`--${name} must be a number in [${lo}, ${hi}], got ${raw!}`);
  }
  return value;
}
