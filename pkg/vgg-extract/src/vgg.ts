/**
 * VGG19 convolutional trunk: topology, weight containers, and the forward
 * pass up to a named post-ReLU layer.
 */

import * as fs from "fs";
import { floatsFromBuffer, floatsToBuffer } from "./floatio";
import { conv3x3Relu, maxPool2, Tensor } from "./tensor";

export interface ConvSpec {
  name: string;
  cIn: number;
  cOut: number;
  /** Max-pool stages applied before this layer (activation stride = 2^pools). */
  pools: number;
}

/** The 16 convolutions of the 19-layer configuration, in forward order. */
export const CONV_LAYERS: ConvSpec[] = (() => {
  const blocks = [
    { convs: 2, width: 64 },
    { convs: 2, width: 128 },
    { convs: 4, width: 256 },
    { convs: 4, width: 512 },
    { convs: 4, width: 512 },
  ];
  const layers: ConvSpec[] = [];
  let cIn = 3;
  blocks.forEach((block, b) => {
    for (let i = 1; i <= block.convs; i++) {
      layers.push({ name: `conv${b + 1}_${i}`, cIn, cOut: block.width, pools: b });
      cIn = block.width;
    }
  });
  return layers;
})();

export interface ConvWeights {
  kernels: Float32Array; // [oc][ic][ky*3+kx]
  bias: Float32Array;
}

export type Weights = Map<string, ConvWeights>;

/** ImageNet channel means; inputs are 0..255 RGB minus these. */
export const CHANNEL_MEANS = [123.68, 116.779, 103.939];

/** Run the trunk on a preprocessed tensor up to `layerName` (post-ReLU). */
export function forwardTo(input: Tensor, layerName: string, weights: Weights): Tensor {
  let x = input;
  let pools = 0;
  for (const spec of CONV_LAYERS) {
    while (pools < spec.pools) {
      x = maxPool2(x);
      pools++;
    }
    const w = weights.get(spec.name);
    if (!w) throw new Error(`missing weights for layer ${spec.name}`);
    x = conv3x3Relu(x, w.kernels, w.bias, spec.cOut);
    if (spec.name === layerName) return x;
  }
  throw new Error(`unknown layer ${layerName}`);
}

export function layerSpec(layerName: string): ConvSpec {
  const spec = CONV_LAYERS.find((l) => l.name === layerName);
  if (!spec) throw new Error(`unknown layer ${layerName}`);
  return spec;
}

/* ---------------------------------------------------------------- weights */

const WEIGHTS_MAGIC = "VGW1";

/**
 * Binary weights file: magic "VGW1", uint32 layer count, then per layer in
 * forward order: uint32 cOut, cIn, kh, kw; float32 kernels in
 * [oc][ic][ky][kx] order; float32 bias[cOut]. All little-endian.
 */
export function loadWeights(path: string): Weights {
  let buf: Buffer;
  try {
    buf = fs.readFileSync(path);
  } catch (err) {
    throw new Error(
      `cannot read weights file ${path}: ${(err as Error).message}\n` + weightsHelp(),
    );
  }
  if (buf.length < 8 || buf.toString("ascii", 0, 4) !== WEIGHTS_MAGIC) {
    throw new Error(`not a ${WEIGHTS_MAGIC} weights file: ${path}\n` + weightsHelp());
  }
  const count = buf.readUInt32LE(4);
  if (count !== CONV_LAYERS.length) {
    throw new Error(`expected ${CONV_LAYERS.length} conv layers, file declares ${count}`);
  }
  const weights: Weights = new Map();
  let off = 8;
  for (const spec of CONV_LAYERS) {
    const cOut = buf.readUInt32LE(off);
    const cIn = buf.readUInt32LE(off + 4);
    const kh = buf.readUInt32LE(off + 8);
    const kw = buf.readUInt32LE(off + 12);
    off += 16;
    if (cOut !== spec.cOut || cIn !== spec.cIn || kh !== 3 || kw !== 3) {
      throw new Error(
        `layer ${spec.name}: file declares ${cOut}x${cIn}x${kh}x${kw}, ` +
          `expected ${spec.cOut}x${spec.cIn}x3x3`,
      );
    }
    const kernels = floatsFromBuffer(buf, off, cOut * cIn * 9);
    off += 4 * kernels.length;
    const bias = floatsFromBuffer(buf, off, cOut);
    off += 4 * cOut;
    weights.set(spec.name, { kernels, bias });
  }
  if (off !== buf.length) {
    throw new Error(`${buf.length - off} trailing bytes after the last layer`);
  }
  return weights;
}

export function saveWeights(path: string, weights: Weights): void {
  let bytes = 8;
  for (const spec of CONV_LAYERS) bytes += 16 + 4 * (spec.cOut * spec.cIn * 9 + spec.cOut);
  const buf = Buffer.alloc(bytes);
  buf.write(WEIGHTS_MAGIC, 0, "ascii");
  buf.writeUInt32LE(CONV_LAYERS.length, 4);
  let off = 8;
  for (const spec of CONV_LAYERS) {
    const w = weights.get(spec.name);
    if (!w) throw new Error(`missing weights for layer ${spec.name}`);
    buf.writeUInt32LE(spec.cOut, off);
    buf.writeUInt32LE(spec.cIn, off + 4);
    buf.writeUInt32LE(3, off + 8);
    buf.writeUInt32LE(3, off + 12);
    off += 16;
    floatsToBuffer(w.kernels, buf, off);
    off += 4 * w.kernels.length;
    floatsToBuffer(w.bias, buf, off);
    off += 4 * w.bias.length;
  }
  fs.writeFileSync(path, buf);
}

function weightsHelp(): string {
  return (
    "Provide pretrained VGG19 weights as a VGW1 file: magic 'VGW1', uint32\n" +
    "layer count (16), then per conv layer in forward order (conv1_1..conv5_4):\n" +
    "uint32 cOut, cIn, 3, 3; float32 kernels in [out][in][ky][kx] order;\n" +
    "float32 biases. Convert from any standard VGG19 checkpoint, or pass\n" +
    "--synthetic-weights <seed> to exercise the pipeline without a download."
  );
}

/* ------------------------------------------------- deterministic synthesis */

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Seeded-random weights with a variance-preserving scale per layer.
 *
 * Meant for format conformance and pipeline testing, not for semantics;
 * the scale keeps activations finite and non-degenerate through the stack.
 */
export function syntheticWeights(seed: number): Weights {
  const rand = mulberry32(seed);
  const weights: Weights = new Map();
  for (const spec of CONV_LAYERS) {
    const amp = Math.sqrt(6 / (9 * spec.cIn));
    const kernels = new Float32Array(spec.cOut * spec.cIn * 9);
    for (let i = 0; i < kernels.length; i++) kernels[i] = Math.fround((2 * rand() - 1) * amp);
    const bias = new Float32Array(spec.cOut); // zero
    weights.set(spec.name, { kernels, bias });
  }
  return weights;
}
