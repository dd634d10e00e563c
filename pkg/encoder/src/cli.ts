#!/usr/bin/env node
/**
 * encode --manifest <path> --out <path> --model <id> --batch-size N
 *
 * Reads the train sentence manifest and writes the binary embedding file
 * (one unit-norm row per sentence, in manifest order). `--model hash:512`
 * selects the deterministic offline backend; any other id is loaded as a
 * transformers.js feature-extraction pipeline.
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadEncoder } from "./backends.js";
import { encodeManifest } from "./encode.js";

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command("encode", "encode a sentence manifest into an embedding file")
    .option("manifest", { type: "string", demandOption: true, describe: "sentence manifest TSV" })
    .option("out", { type: "string", demandOption: true, describe: "output embedding file" })
    .option("model", {
      type: "string",
      default: "hash:512",
      describe: "encoder model id, or hash:<dim> for the offline backend",
    })
    .option("batch-size", { type: "number", default: 64 })
    .option("dim", { type: "number", describe: "expected output dimension (checked)" })
    .strict()
    .help()
    .parse();

  try {
    const encoder = await loadEncoder(argv.model);
    const result = await encodeManifest(argv.manifest, argv.out, encoder, {
      batchSize: argv["batch-size"],
      outputDim: argv.dim,
    });
    console.log(`wrote ${argv.out}: ${result.rows} rows, dim ${result.dim} (${encoder.name})`);
    return 0;
  } catch (err) {
    console.error(
      JSON.stringify({
        error: err instanceof Error ? err.constructor.name : "Error",
        message: err instanceof Error ? err.message : String(err),
      }),
    );
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
