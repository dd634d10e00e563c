/**
 * Sentence manifest: the TSV the corpus pipeline emits for the train
 * sentences. Columns are sentence_id, user_id, item_id, review_rating,
 * ordinal, text; tab, newline, and backslash inside text arrive escaped
 * as \t, \n, \r, \\. Row order defines embedding row order; the bridge
 * never remaps ids.
 */

import { readFileSync } from "node:fs";

export const MANIFEST_HEADER = "sentence_id\tuser_id\titem_id\treview_rating\tordinal\ttext";

export interface SentenceRow {
  sentenceId: number;
  userId: string;
  itemId: string;
  reviewRating: number;
  ordinal: number;
  text: string;
}

const UNESCAPE: Record<string, string> = { "\\": "\\", t: "\t", n: "\n", r: "\r" };

export function unescapeField(text: string): string {
  return text.replace(/\\([\\tnr])/g, (_, ch: string) => UNESCAPE[ch]);
}

export function readManifest(path: string): SentenceRow[] {
  const raw = readFileSync(path, "utf-8");
  const lines = raw.split("\n");
  if (lines.length === 0 || lines[0] !== MANIFEST_HEADER) {
    throw new Error(`${path}: unexpected manifest header ${JSON.stringify(lines[0])}`);
  }
  const rows: SentenceRow[] = [];
  for (let lineno = 1; lineno < lines.length; lineno++) {
    const line = lines[lineno];
    if (line === "") {
      continue; // trailing newline
    }
    const parts = line.split("\t");
    if (parts.length !== 6) {
      throw new Error(`${path}:${lineno + 1}: expected 6 fields, got ${parts.length}`);
    }
    rows.push({
      sentenceId: Number(parts[0]),
      userId: parts[1],
      itemId: parts[2],
      reviewRating: Number(parts[3]),
      ordinal: Number(parts[4]),
      text: unescapeField(parts[5]),
    });
  }
  return rows;
}
