import { DecodedImage } from "./png";
import { DetectionBox } from "./protocol";

/** Channel value below which a pixel counts as background. */
export const BRIGHTNESS_FLOOR = 40;

export type Detector = {
  modelId: string;
  detect(image: DecodedImage, prompt: string, threshold: number): DetectionBox[];
};

/**
 * Single-blob brightness detector: every pixel whose peak RGB channel
 * reaches BRIGHTNESS_FLOOR is foreground, and the detection is the tight
 * box around all foreground pixels, anchored at the image's lower-left
 * corner (y counts up from the bottom row). The score is the mean peak
 * channel over the foreground scaled to [0, 1]; below the threshold the
 * detection is dropped. The prompt does not change the result. Alpha is
 * ignored, matching decoders that flatten to RGB.
 */
export function createBrightnessDetector(): Detector {
  return {
    modelId: "brightness-blob-001",
    detect(image: DecodedImage, _prompt: string, threshold: number): DetectionBox[] {
      const { width, height, data } = image;
      let r0 = height;
      let r1 = -1;
      let c0 = width;
      let c1 = -1;
      let sum = 0;
      let count = 0;
      for (let row = 0; row < height; row++) {
        for (let col = 0; col < width; col++) {
          const i = (row * width + col) * 4;
          const peak = Math.max(data[i], data[i + 1], data[i + 2]);
          if (peak < BRIGHTNESS_FLOOR) continue;
          sum += peak;
          count += 1;
          if (row < r0) r0 = row;
          if (row > r1) r1 = row;
          if (col < c0) c0 = col;
          if (col > c1) c1 = col;
        }
      }
      if (count === 0) return [];
      const score = roundTo(sum / count / 255, 6);
      if (score < threshold) return [];
      return [{ x: c0, y: height - r1 - 1, w: c1 - c0 + 1, h: r1 - r0 + 1, score }];
    },
  };
}

function roundTo(value: number, digits: number): number {
  const scale = 10 ** digits;
  return Math.round(value * scale) / scale;
}
