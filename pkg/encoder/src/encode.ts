/** Manifest -> embedding file orchestration. */

import { Encoder } from "./backends.js";
import { readManifest } from "./manifest.js";
import { writeEmbeddings } from "./semb.js";

export interface EncodeOptions {
  batchSize: number;
  /** Expected output dimension; checked against what the encoder emits.
   * Required to write the header of an empty manifest when the backend
   * does not declare its dimension. */
  outputDim?: number;
}

export interface EncodeResult {
  rows: number;
  dim: number;
}

export async function encodeManifest(
  manifestPath: string,
  outPath: string,
  encoder: Encoder,
  options: EncodeOptions,
): Promise<EncodeResult> {
  const { batchSize } = options;
  if (!Number.isInteger(batchSize) || batchSize < 1) {
    throw new Error(`batch size must be a positive integer, got ${batchSize}`);
  }
  const sentences = readManifest(manifestPath);
  for (let i = 0; i < sentences.length; i++) {
    if (sentences[i].sentenceId !== i) {
      throw new Error(
        `manifest row ${i} has sentence_id ${sentences[i].sentenceId}; ` +
          "rows must be dense and in order since row index = sentence_id",
      );
    }
  }
  const rows: Float32Array[] = [];
  for (let start = 0; start < sentences.length; start += batchSize) {
    const batch = sentences.slice(start, start + batchSize).map((s) => s.text);
    const encoded = await encoder.encode(batch);
    if (encoded.length !== batch.length) {
      throw new Error(`encoder returned ${encoded.length} rows for a batch of ${batch.length}`);
    }
    rows.push(...encoded);
  }
  let dim = rows.length > 0 ? rows[0].length : encoder.dim ?? options.outputDim;
  if (dim === undefined) {
    throw new Error("empty manifest and unknown encoder dimension; pass --dim");
  }
  if (options.outputDim !== undefined && options.outputDim !== dim) {
    throw new Error(`encoder produced dimension ${dim}, expected ${options.outputDim}`);
  }
  writeEmbeddings(outPath, rows, dim);
  return { rows: rows.length, dim };
}
