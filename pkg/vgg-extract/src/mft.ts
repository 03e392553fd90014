/**
 * MFT1 tensor files: the interchange format consumed by the morphing solver.
 *
 * Layout: magic "MFT1"; width, height, channels as little-endian uint32;
 * then width*height*channels little-endian float32 values, channel-major
 * with each channel row-major.
 */

import * as fs from "fs";
import { floatsFromBuffer, floatsToBuffer } from "./floatio";
import { Tensor } from "./tensor";

const MAGIC = "MFT1";
const HEADER_BYTES = 16;

export function encodeTensor(t: Tensor): Buffer {
  for (let i = 0; i < t.data.length; i++) {
    if (!Number.isFinite(t.data[i])) {
      throw new Error(`refusing to write non-finite value at flat index ${i}`);
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + 4 * t.data.length);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(t.w, 4);
  buf.writeUInt32LE(t.h, 8);
  buf.writeUInt32LE(t.c, 12);
  floatsToBuffer(t.data, buf, HEADER_BYTES);
  return buf;
}

export function writeTensor(path: string, t: Tensor): void {
  fs.writeFileSync(path, encodeTensor(t));
}

export function decodeTensor(buf: Buffer): Tensor {
  if (buf.length < HEADER_BYTES) {
    throw new Error(`file shorter than the ${HEADER_BYTES}-byte header`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(buf.toString("ascii", 0, 4))}`);
  }
  const w = buf.readUInt32LE(4);
  const h = buf.readUInt32LE(8);
  const c = buf.readUInt32LE(12);
  const expected = HEADER_BYTES + 4 * w * h * c;
  if (buf.length !== expected) {
    throw new Error(`expected ${expected} bytes for ${w}x${h}x${c}, found ${buf.length}`);
  }
  const data = floatsFromBuffer(buf, HEADER_BYTES, w * h * c);
  for (let i = 0; i < data.length; i++) {
    if (!Number.isFinite(data[i])) {
      throw new Error(`non-finite value at flat index ${i}`);
    }
  }
  return { c, h, w, data };
}

export function readTensor(path: string): Tensor {
  return decodeTensor(fs.readFileSync(path));
}

export function levelFilename(w: number, h: number, c: number): string {
  return `level_${w}x${h}_C${c}.mft`;
}
