/**
 * Binary embedding file format, bit-exact contract with the Python loader:
 * magic "SEMB", u32 version=1, u64 row count, u32 dimension (all
 * little-endian), then row-major float32. Row index = sentence_id.
 */

import { closeSync, fsyncSync, openSync, readFileSync, renameSync, writeSync } from "node:fs";

export const MAGIC = "SEMB";
export const VERSION = 1;
export const HEADER_SIZE = 20;

export function packHeader(n: number, dim: number): Buffer {
  const buf = Buffer.alloc(HEADER_SIZE);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt32LE(VERSION, 4);
  buf.writeBigUInt64LE(BigInt(n), 8);
  buf.writeUInt32LE(dim, 16);
  return buf;
}

function packRow(row: Float32Array): Buffer {
  const buf = Buffer.alloc(row.length * 4);
  for (let j = 0; j < row.length; j++) {
    buf.writeFloatLE(row[j], j * 4);
  }
  return buf;
}

/** L2-normalize in place; returns the original norm. */
export function normalizeRow(row: Float32Array): number {
  let sq = 0;
  for (let j = 0; j < row.length; j++) {
    sq += row[j] * row[j];
  }
  const norm = Math.sqrt(sq);
  if (norm > 0) {
    for (let j = 0; j < row.length; j++) {
      row[j] /= norm;
    }
  }
  return norm;
}

/**
 * Write rows atomically (temp file + rename). Rows are L2-normalized at
 * write time so the file contract holds regardless of the producer;
 * zero-norm rows are rejected because their direction is undefined.
 */
export function writeEmbeddings(path: string, rows: Float32Array[], dim: number): void {
  const tmp = `${path}.tmp`;
  const fd = openSync(tmp, "w");
  try {
    writeSync(fd, packHeader(rows.length, dim));
    for (let i = 0; i < rows.length; i++) {
      const row = rows[i];
      if (row.length !== dim) {
        throw new Error(`row ${i} has dimension ${row.length}, expected ${dim}`);
      }
      const copy = new Float32Array(row);
      if (normalizeRow(copy) === 0) {
        throw new Error(`row ${i} has zero norm; cannot normalize`);
      }
      writeSync(fd, packRow(copy));
    }
    fsyncSync(fd);
  } finally {
    closeSync(fd);
  }
  renameSync(tmp, path);
}

export interface EmbeddingFile {
  n: number;
  dim: number;
  rows: Float32Array[];
}

/** Reader used by the tests to validate what we wrote. */
export function readEmbeddings(path: string): EmbeddingFile {
  const blob = readFileSync(path);
  if (blob.length < HEADER_SIZE) {
    throw new Error(`${path}: truncated header (${blob.length} bytes)`);
  }
  if (blob.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic, not an embedding file`);
  }
  const version = blob.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`${path}: unsupported version ${version}`);
  }
  const n = Number(blob.readBigUInt64LE(8));
  const dim = blob.readUInt32LE(16);
  const expected = HEADER_SIZE + n * dim * 4;
  if (blob.length !== expected) {
    throw new Error(`${path}: expected ${expected} bytes, found ${blob.length}`);
  }
  const rows: Float32Array[] = [];
  for (let i = 0; i < n; i++) {
    const row = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      row[j] = blob.readFloatLE(HEADER_SIZE + (i * dim + j) * 4);
    }
    rows.push(row);
  }
  return { n, dim, rows };
}

export function cosine(a: Float32Array, b: Float32Array): number {
  if (a.length !== b.length) {
    throw new Error(`dimension mismatch: ${a.length} vs ${b.length}`);
  }
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let j = 0; j < a.length; j++) {
    dot += a[j] * b[j];
    na += a[j] * a[j];
    nb += b[j] * b[j];
  }
  return dot / (Math.sqrt(na) * Math.sqrt(nb));
}
