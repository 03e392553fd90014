/**
 * Per-level extraction pipeline: resize the input image to the level grid,
 * preprocess, run the network to the level's layer, resize the activation
 * back to the grid if the layer is strided, normalize, write MFT1.
 */

import * as fs from "fs";
import * as path from "path";
import { PNG } from "pngjs";
import { levelFilename, writeTensor } from "./mft";
import {
  assertFinite,
  channelView,
  makeTensor,
  resizeBilinear,
  rmsNormalize,
  Tensor,
} from "./tensor";
import { CHANNEL_MEANS, forwardTo, layerSpec, Weights } from "./vgg";

export interface LevelRow {
  size: number;
  layer: string;
  channels: number;
}

/** Grid size, layer, and channel width of each pyramid level. */
export const LEVEL_TABLE: LevelRow[] = [
  { size: 512, layer: "conv1_2", channels: 64 },
  { size: 256, layer: "conv2_2", channels: 128 },
  { size: 128, layer: "conv3_4", channels: 256 },
  { size: 64, layer: "conv4_4", channels: 512 },
  { size: 32, layer: "conv5_4", channels: 512 },
];

export function loadPngRgb(file: string): Tensor {
  const png = PNG.sync.read(fs.readFileSync(file));
  const out = makeTensor(3, png.height, png.width);
  const plane = png.height * png.width;
  for (let i = 0; i < plane; i++) {
    out.data[i] = png.data[4 * i];
    out.data[plane + i] = png.data[4 * i + 1];
    out.data[2 * plane + i] = png.data[4 * i + 2];
  }
  return out; // 0..255 RGB
}

function preprocess(rgb255: Tensor): Tensor {
  const out = makeTensor(3, rgb255.h, rgb255.w);
  for (let c = 0; c < 3; c++) {
    const src = channelView(rgb255, c);
    const dst = channelView(out, c);
    const mean = CHANNEL_MEANS[c];
    for (let i = 0; i < src.length; i++) dst[i] = Math.fround(src[i] - mean);
  }
  return out;
}

export interface ExtractOptions {
  levels?: number[]; // subset of LEVEL_TABLE sizes; default all
  log?: (msg: string) => void;
}

/** Extract one tensor per level row and write `level_<w>x<h>_C<c>.mft`. */
export function extractImage(
  imagePath: string,
  outDir: string,
  weights: Weights,
  options: ExtractOptions = {},
): string[] {
  const log = options.log ?? ((msg: string) => process.stderr.write(msg + "\n"));
  const rows = options.levels
    ? LEVEL_TABLE.filter((r) => options.levels!.includes(r.size))
    : LEVEL_TABLE;
  if (rows.length === 0) {
    throw new Error(`no levels selected; known sizes: ${LEVEL_TABLE.map((r) => r.size).join(", ")}`);
  }
  const image = loadPngRgb(imagePath);
  if (image.w !== image.h || (image.w & (image.w - 1)) !== 0) {
    log(
      `warning: input is ${image.w}x${image.h}; levels are square power-of-two ` +
        "grids, the image is resized per level",
    );
  }
  fs.mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  for (const row of rows) {
    const resized = resizeBilinear(image, row.size, row.size);
    const activation = forwardTo(preprocess(resized), row.layer, weights);
    if (activation.c !== row.channels) {
      throw new Error(
        `layer ${row.layer} produced ${activation.c} channels, table says ${row.channels}`,
      );
    }
    const stride = 2 ** layerSpec(row.layer).pools;
    const onGrid =
      stride === 1 ? activation : resizeBilinear(activation, row.size, row.size);
    const normalized = rmsNormalize(onGrid);
    assertFinite(normalized, row.layer);
    const file = path.join(outDir, levelFilename(row.size, row.size, row.channels));
    writeTensor(file, normalized);
    log(`${row.layer} -> ${file}`);
    written.push(file);
  }
  return written;
}
