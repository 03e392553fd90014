#!/usr/bin/env node
/** Command line wrapper: vgg-extract <image> <outdir> [options]. */

import { parseArgs } from "node:util";
import { extractImage, LEVEL_TABLE } from "./extract";
import { loadWeights, syntheticWeights, Weights } from "./vgg";

const USAGE = `usage: vgg-extract <image.png> <outdir> [options]

Writes one MFT1 tensor per pyramid level (${LEVEL_TABLE.map((r) => r.size).join(", ")}).

options:
  --levels <list>             comma-separated level sizes (default: all)
  --weights <file>            pretrained weights in VGW1 format
  --synthetic-weights <seed>  deterministic seeded weights (pipeline testing)
`;

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        levels: { type: "string" },
        weights: { type: "string" },
        "synthetic-weights": { type: "string" },
        help: { type: "boolean", short: "h" },
      },
    });
  } catch (err) {
    process.stderr.write(`vgg-extract: ${(err as Error).message}\n${USAGE}`);
    return 2;
  }
  if (parsed.values.help || parsed.positionals.length !== 2) {
    process.stderr.write(USAGE);
    return parsed.values.help ? 0 : 2;
  }
  const [image, outDir] = parsed.positionals;
  try {
    let weights: Weights;
    if (parsed.values["synthetic-weights"] !== undefined) {
      weights = syntheticWeights(Number(parsed.values["synthetic-weights"]));
    } else if (parsed.values.weights) {
      weights = loadWeights(parsed.values.weights);
    } else {
      throw new Error(
        "no weights given; pass --weights <file> (VGW1 format) or " +
          "--synthetic-weights <seed>.\n" +
          "Pretrained VGG19 weights can be converted from any standard " +
          "checkpoint; see the README for the VGW1 layout.",
      );
    }
    const levels = parsed.values.levels
      ? parsed.values.levels.split(",").map((s) => Number(s.trim()))
      : undefined;
    extractImage(image, outDir, weights, { levels });
    return 0;
  } catch (err) {
    process.stderr.write(`vgg-extract: error: ${(err as Error).message}\n`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
