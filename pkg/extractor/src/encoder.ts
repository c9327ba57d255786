import { createHash } from "node:crypto";
import { readFile } from "node:fs/promises";

/**
 * An encoder turns image files or text strings into fixed-width float
 * vectors. Two implementations ship: a real CLIP model loaded on demand,
 * and a content-hash stand-in for offline and test use.
 */
export interface Encoder {
  readonly name: string;
  readonly dim: number;
  embedImages(paths: string[]): Promise<Float64Array[]>;
  embedTexts(texts: string[]): Promise<Float64Array[]>;
}

export class EncoderError extends Error {}

/** Unit-normalize in double precision; rejects near-zero vectors. */
export function unitVector(v: Float64Array): Float64Array {
  let sq = 0;
  for (const x of v) sq += x * x;
  const norm = Math.sqrt(sq);
  if (norm < 1e-9) throw new EncoderError("cannot normalize a near-zero vector");
  const out = new Float64Array(v.length);
  for (let i = 0; i < v.length; i++) out[i] = v[i] / norm;
  return out;
}

/* sfc32: small-state PRNG seeded from a digest. Arithmetic only, so the
 * stream is identical on every platform. */
function sfc32(a: number, b: number, c: number, d: number): () => number {
  return () => {
    a |= 0; b |= 0; c |= 0; d |= 0;
    const t = (((a + b) | 0) + d) | 0;
    d = (d + 1) | 0;
    a = b ^ (b >>> 9);
    b = (c + (c << 3)) | 0;
    c = (c << 21) | (c >>> 11);
    c = (c + t) | 0;
    return (t >>> 0) / 4294967296;
  };
}

function digestVector(digest: Buffer, dim: number): Float64Array {
  const rand = sfc32(
    digest.readUInt32LE(0),
    digest.readUInt32LE(4),
    digest.readUInt32LE(8),
    digest.readUInt32LE(12),
  );
  const v = new Float64Array(dim);
  for (let i = 0; i < dim; i++) {
    // Sum of 8 uniforms, centered: approximately normal, and free of
    // transcendental calls whose last bits could differ across libm builds.
    let s = 0;
    for (let k = 0; k < 8; k++) s += rand();
    v[i] = s - 4;
  }
  return unitVector(v);
}

/**
 * Deterministic stand-in encoder: SHA-256 of the content seeds a PRNG that
 * fills the vector. Same bytes always give the same unit vector; there is
 * no semantic similarity structure. Useful for plumbing tests and for
 * exercising the downstream pipeline without model downloads.
 */
export function hashEncoder(dim: number): Encoder {
  if (!Number.isInteger(dim) || dim < 4) {
    throw new EncoderError(`hash encoder dim must be an integer >= 4, got ${dim}`);
  }
  return {
    name: `hash-${dim}`,
    dim,
    async embedImages(paths: string[]): Promise<Float64Array[]> {
      const out: Float64Array[] = [];
      for (const p of paths) {
        const digest = createHash("sha256").update(await readFile(p)).digest();
        out.push(digestVector(digest, dim));
      }
      return out;
    },
    async embedTexts(texts: string[]): Promise<Float64Array[]> {
      return texts.map((t) =>
        digestVector(createHash("sha256").update(t, "utf-8").digest(), dim),
      );
    },
  };
}

interface ClipBundle {
  tokenizer: any;
  processor: any;
  textModel: any;
  visionModel: any;
  rawImage: any;
  dim: number;
}

async function loadClip(model: string): Promise<ClipBundle> {
  let tf: any;
  try {
    tf = await import("@xenova/transformers");
  } catch {
    throw new EncoderError(
      "@xenova/transformers is not installed; install it or use --model hash",
    );
  }
  const tokenizer = await tf.AutoTokenizer.from_pretrained(model);
  const processor = await tf.AutoProcessor.from_pretrained(model);
  const textModel = await tf.CLIPTextModelWithProjection.from_pretrained(model, {
    quantized: true,
  });
  const visionModel = await tf.CLIPVisionModelWithProjection.from_pretrained(model, {
    quantized: true,
  });
  const probe = await textModel(tokenizer(["probe"], { padding: true, truncation: true }));
  const dim = probe.text_embeds.dims.at(-1);
  return { tokenizer, processor, textModel, visionModel, rawImage: tf.RawImage, dim };
}

function rowsOf(tensor: any): Float64Array[] {
  const [n, dim] = tensor.dims.slice(-2);
  const data = tensor.data;
  const rows: Float64Array[] = [];
  for (let i = 0; i < n; i++) {
    const row = new Float64Array(dim);
    for (let d = 0; d < dim; d++) row[d] = data[i * dim + d];
    rows.push(unitVector(row));
  }
  return rows;
}

/**
 * CLIP encoder over a pretrained checkpoint (e.g.
 * "Xenova/clip-vit-base-patch32"). The model is downloaded on first use and
 * cached by the transformers runtime.
 */
export async function clipEncoder(model: string, batchSize = 8): Promise<Encoder> {
  const clip = await loadClip(model);
  return {
    name: model,
    dim: clip.dim,
    async embedImages(paths: string[]): Promise<Float64Array[]> {
      const out: Float64Array[] = [];
      for (let start = 0; start < paths.length; start += batchSize) {
        const batch = paths.slice(start, start + batchSize);
        const images = await Promise.all(batch.map((p) => clip.rawImage.read(p)));
        const inputs = await clip.processor(images);
        const result = await clip.visionModel(inputs);
        out.push(...rowsOf(result.image_embeds));
      }
      return out;
    },
    async embedTexts(texts: string[]): Promise<Float64Array[]> {
      const out: Float64Array[] = [];
      for (let start = 0; start < texts.length; start += batchSize) {
        const batch = texts.slice(start, start + batchSize);
        const inputs = clip.tokenizer(batch, { padding: true, truncation: true });
        const result = await clip.textModel(inputs);
        out.push(...rowsOf(result.text_embeds));
      }
      return out;
    },
  };
}

/** Resolve a --model flag value to an encoder. "hash" is the offline stand-in. */
export async function resolveEncoder(model: string, hashDim: number): Promise<Encoder> {
  if (model === "hash") return hashEncoder(hashDim);
  return clipEncoder(model);
}
