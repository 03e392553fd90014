/**
 * Bulk little-endian float32 transfer between Buffers and Float32Arrays.
 * On little-endian hosts this is a straight memory copy; the byte-swapping
 * fallback keeps files portable either way.
 */

import * as os from "os";

const LITTLE = os.endianness() === "LE";

export function floatsToBuffer(values: Float32Array, target: Buffer, offset: number): void {
  if (LITTLE) {
    target.set(new Uint8Array(values.buffer, values.byteOffset, values.byteLength), offset);
  } else {
    for (let i = 0; i < values.length; i++) target.writeFloatLE(values[i], offset + 4 * i);
  }
}

export function floatsFromBuffer(source: Buffer, offset: number, count: number): Float32Array {
  const out = new Float32Array(count);
  if (LITTLE) {
    new Uint8Array(out.buffer).set(source.subarray(offset, offset + 4 * count));
  } else {
    for (let i = 0; i < count; i++) out[i] = source.readFloatLE(offset + 4 * i);
  }
  return out;
}
