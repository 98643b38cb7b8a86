import { PNG } from "pngjs";

export type DecodedImage = {
  width: number;
  height: number;
  /** RGBA bytes, row-major starting at the top-left pixel. */
  data: Uint8Array;
};

/** Decodes a PNG byte buffer; throws if the bytes are not a valid PNG. */
export function decodePng(bytes: Buffer): DecodedImage {
  const png = PNG.sync.read(bytes);
  return { width: png.width, height: png.height, data: png.data };
}

/** Encodes an RGBA image back to PNG bytes (used by tests to build fixtures). */
export function encodePng(image: DecodedImage): Buffer {
  const png = new PNG({ width: image.width, height: image.height });
  png.data = Buffer.from(image.data);
  return PNG.sync.write(png);
}
