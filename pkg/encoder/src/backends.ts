/**
 * Sentence encoder backends.
 *
 * "hash:<dim>" is a deterministic offline feature-hashing encoder used by
 * the tests and for smoke runs without network access. Any other model id
 * is loaded as a transformers.js feature-extraction pipeline (mean
 * pooling, normalized), matching how pretrained multilingual sentence
 * encoders are normally served.
 */

export interface Encoder {
  name: string;
  /** Fixed output dimension, when known before the first batch. */
  dim?: number;
  encode(texts: string[]): Promise<Float32Array[]>;
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

function tokenize(text: string): string[] {
  const tokens = text.toLowerCase().match(/[\p{L}\p{N}]+/gu);
  if (tokens && tokens.length > 0) {
    return tokens;
  }
  // punctuation-only sentences still need a direction
  return text.length > 0 ? [text] : [];
}

export function hashingEncoder(dim: number): Encoder {
  if (!Number.isInteger(dim) || dim < 2) {
    throw new Error(`hash backend needs an integer dimension >= 2, got ${dim}`);
  }
  return {
    name: `hash:${dim}`,
    dim,
    async encode(texts: string[]): Promise<Float32Array[]> {
      return texts.map((text) => {
        const vec = new Float32Array(dim);
        const tokens = tokenize(text);
        if (tokens.length === 0) {
          throw new Error("cannot encode an empty sentence");
        }
        for (const tok of tokens) {
          const h = fnv1a(tok);
          const bucket = h % dim;
          const sign = (h & 0x80000000) !== 0 ? -1 : 1;
          vec[bucket] += sign;
        }
        // unigram + bigram mixing so near-identical sentences differ
        for (let i = 0; i + 1 < tokens.length; i++) {
          const h = fnv1a(`${tokens[i]}_${tokens[i + 1]}`);
          vec[h % dim] += (h & 0x40000000) !== 0 ? -0.5 : 0.5;
        }
        return vec;
      });
    },
  };
}

export async function transformersEncoder(model: string): Promise<Encoder> {
  let pipe: any;
  try {
    const mod: any = await import("@huggingface/transformers");
    pipe = await mod.pipeline("feature-extraction", model);
  } catch (err) {
    throw new Error(
      `failed to load encoder model "${model}": ${err instanceof Error ? err.message : err}. ` +
        `Check the model id and network access, or use the offline backend "hash:<dim>".`,
    );
  }
  return {
    name: model,
    async encode(texts: string[]): Promise<Float32Array[]> {
      const out = await pipe(texts, { pooling: "mean", normalize: true });
      const [batch, dim] = out.dims as [number, number];
      const data: Float32Array = out.data;
      const rows: Float32Array[] = [];
      for (let i = 0; i < batch; i++) {
        rows.push(data.slice(i * dim, (i + 1) * dim));
      }
      return rows;
    },
  };
}

export async function loadEncoder(model: string): Promise<Encoder> {
  const hashMatch = /^hash:(\d+)$/.exec(model);
  if (hashMatch) {
    return hashingEncoder(Number(hashMatch[1]));
  }
  return transformersEncoder(model);
}
