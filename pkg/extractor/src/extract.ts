import { readdirSync, readFileSync, statSync } from "node:fs";
import * as path from "node:path";

import { Encoder } from "./encoder.js";
import {
  EmbeddingFile,
  EmbeddingRecord,
  PrototypeFile,
  SOURCE,
  TARGET,
} from "./format.js";

/** Semantic misuse of an extraction job (bad folder layout, bad flags). */
export class ExtractError extends Error {}

export interface ImageJobSpec {
  /** Directory whose immediate subdirectories are class folders. */
  root: string;
  domain: "source" | "target";
  /** Known class names; folder names matching these get labels 0..k-1. */
  classes: string[];
  /** Force every record label to -1 (target only). */
  unlabeled?: boolean;
  /** Override the total-class count written to the header. */
  totalOverride?: number;
}

export interface ImageExtraction {
  file: EmbeddingFile;
  /** Relative paths skipped because they are not decodable images. */
  skipped: string[];
  /** Folder names not in the known class list (target extractions). */
  unknownFolders: string[];
}

interface Candidate {
  rel: string;
  abs: string;
  folder: string;
}

const MAGIC_SNIFFS: Array<(b: Buffer) => boolean> = [
  (b) => b.length >= 8 && b.readUInt32BE(0) === 0x89504e47 && b.readUInt32BE(4) === 0x0d0a1a0a,
  (b) => b.length >= 3 && b[0] === 0xff && b[1] === 0xd8 && b[2] === 0xff,
  (b) => b.length >= 6 && b.toString("ascii", 0, 4) === "GIF8",
  (b) => b.length >= 2 && b[0] === 0x42 && b[1] === 0x4d,
  (b) =>
    b.length >= 12 &&
    b.toString("ascii", 0, 4) === "RIFF" &&
    b.toString("ascii", 8, 12) === "WEBP",
  (b) => b.length >= 2 && b[0] === 0x50 && b[1] >= 0x31 && b[1] <= 0x36,
];

function looksLikeImage(abs: string): boolean {
  let head: Buffer;
  try {
    const fd = readFileSync(abs);
    head = fd.subarray(0, 16);
  } catch {
    return false;
  }
  return MAGIC_SNIFFS.some((sniff) => sniff(head));
}

function walkFiles(dir: string, root: string, out: Candidate[]): void {
  for (const entry of readdirSync(dir, { withFileTypes: true })) {
    const abs = path.join(dir, entry.name);
    if (entry.isDirectory()) {
      walkFiles(abs, root, out);
    } else if (entry.isFile()) {
      const rel = path.relative(root, abs);
      const folder = rel.split(path.sep)[0];
      out.push({ rel, abs, folder });
    }
  }
}

function toF32Unit(vec: Float64Array, dim: number, what: string): Float32Array {
  if (vec.length !== dim) {
    throw new ExtractError(`${what}: encoder returned dim ${vec.length}, expected ${dim}`);
  }
  let sq = 0;
  for (const x of vec) sq += x * x;
  const norm = Math.sqrt(sq);
  if (norm < 1e-9) throw new ExtractError(`${what}: zero-norm embedding`);
  const out = new Float32Array(dim);
  for (let i = 0; i < dim; i++) out[i] = vec[i] / norm;
  return out;
}

/**
 * Embed every image under job.root and assemble an embedding file.
 *
 * Files are processed in lexicographic relative-path order with sequential
 * record ids, so re-running over the same tree is byte-deterministic. The
 * first path segment names the class: known classes map to their index in
 * job.classes; unrecognized folders are allowed only for the target domain
 * and get labels numKnown, numKnown+1, ... in sorted folder order.
 * Non-image files (by content sniff) are skipped and reported.
 */
export async function extractImages(
  job: ImageJobSpec,
  encoder: Encoder,
): Promise<ImageExtraction> {
  const numKnown = job.classes.length;
  if (numKnown < 1) throw new ExtractError("need at least one known class");
  if (new Set(job.classes).size !== numKnown) {
    throw new ExtractError("duplicate names in the known class list");
  }
  if (job.unlabeled && job.domain === "source") {
    throw new ExtractError("--unlabeled applies only to target extractions");
  }
  const rootStat = statSync(job.root, { throwIfNoEntry: false });
  if (!rootStat || !rootStat.isDirectory()) {
    const err: NodeJS.ErrnoException = new Error(`image root is not a directory: ${job.root}`);
    err.code = "ENOTDIR";
    throw err;
  }

  const candidates: Candidate[] = [];
  walkFiles(job.root, job.root, candidates);
  candidates.sort((a, b) => (a.rel < b.rel ? -1 : a.rel > b.rel ? 1 : 0));

  const knownIndex = new Map(job.classes.map((name, i) => [name, i]));
  const unknownNames = new Set<string>();
  const skipped: string[] = [];
  const kept: Candidate[] = [];
  for (const cand of candidates) {
    if (cand.folder === cand.rel) {
      console.error(`skip (not inside a class folder): ${cand.rel}`);
      skipped.push(cand.rel);
      continue;
    }
    if (!looksLikeImage(cand.abs)) {
      console.error(`skip (not a decodable image): ${cand.rel}`);
      skipped.push(cand.rel);
      continue;
    }
    if (!knownIndex.has(cand.folder)) {
      if (job.domain === "source") {
        throw new ExtractError(
          `source folder "${cand.folder}" is not in the known class list`,
        );
      }
      unknownNames.add(cand.folder);
    }
    kept.push(cand);
  }

  const unknownFolders = [...unknownNames].sort();
  const unknownLabel = new Map(unknownFolders.map((name, i) => [name, numKnown + i]));

  let maxLabel = numKnown - 1;
  const labels = kept.map((cand) => {
    if (job.unlabeled) return -1;
    const label = knownIndex.get(cand.folder) ?? unknownLabel.get(cand.folder)!;
    if (label > maxLabel) maxLabel = label;
    return label;
  });

  // The header needs strictly more total classes than known ones even when
  // the tree showed none, so floor at numKnown + 1.
  const floor = Math.max(numKnown + 1, maxLabel + 1);
  const numTotal = job.totalOverride ?? floor;
  if (job.totalOverride !== undefined && job.totalOverride < floor) {
    throw new ExtractError(
      `--total ${job.totalOverride} is below the minimum ${floor} implied by the tree`,
    );
  }

  const domainTag = job.domain === "source" ? SOURCE : TARGET;
  const vectors = await encoder.embedImages(kept.map((c) => c.abs));
  if (vectors.length !== kept.length) {
    throw new ExtractError(
      `encoder returned ${vectors.length} vectors for ${kept.length} images`,
    );
  }
  const records: EmbeddingRecord[] = kept.map((cand, i) => ({
    id: i,
    domain: domainTag,
    label: labels[i],
    vector: toF32Unit(vectors[i], encoder.dim, cand.rel),
  }));
  console.error(
    `embedded ${records.length} image(s), skipped ${skipped.length} non-image file(s)`,
  );

  return {
    file: { dim: encoder.dim, numKnown, numTotal, records },
    skipped,
    unknownFolders,
  };
}

/**
 * Embed one prompt per class name, in the given order (duplicates kept).
 * The template must contain "{label}", which is replaced by each name.
 */
export async function extractPrototypes(
  classes: string[],
  template: string,
  encoder: Encoder,
): Promise<PrototypeFile> {
  if (classes.length < 1) throw new ExtractError("need at least one class name");
  if (!template.includes("{label}")) {
    throw new ExtractError(`template must contain "{label}", got: ${template}`);
  }
  const prompts = classes.map((name) => template.replaceAll("{label}", name));
  const vectors = await encoder.embedTexts(prompts);
  return {
    dim: encoder.dim,
    classNames: [...classes],
    vectors: vectors.map((v, i) => toF32Unit(v, encoder.dim, classes[i])),
  };
}
