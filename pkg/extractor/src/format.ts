/**
 * Binary writers/readers for the embedding and prototype container formats
 * consumed by the odakit pipeline. Everything is little-endian and written
 * without padding, so identical inputs give byte-identical files.
 *
 * Embeddings ("ODAE"): header = magic, u32 version, u32 dim, u32 numKnown,
 * u32 numTotal, u64 record count; each record = u64 id, u8 domain
 * (0 source / 1 target), i32 label (-1 unlabeled), dim x f32.
 *
 * Prototypes ("ODAP"): header = magic, u32 version, u32 dim, u32 class
 * count; each class = u16 name byte length, UTF-8 name, dim x f32.
 */

export const EMBEDDING_MAGIC = "ODAE";
export const PROTOTYPE_MAGIC = "ODAP";
export const FORMAT_VERSION = 1;

export const SOURCE = 0;
export const TARGET = 1;

export interface EmbeddingRecord {
  id: number;
  domain: typeof SOURCE | typeof TARGET;
  label: number;
  vector: Float32Array;
}

export interface EmbeddingFile {
  dim: number;
  numKnown: number;
  numTotal: number;
  records: EmbeddingRecord[];
}

export interface PrototypeFile {
  dim: number;
  classNames: string[];
  vectors: Float32Array[];
}

/** Raised for inputs that would produce a file the pipeline rejects. */
export class FormatError extends Error {}

const EMB_HEADER_SIZE = 4 + 4 + 4 + 4 + 4 + 8;
const EMB_RECORD_FIXED = 8 + 1 + 4;
const PROTO_HEADER_SIZE = 4 + 4 + 4 + 4;

function checkVector(vector: Float32Array, dim: number, what: string): void {
  if (vector.length !== dim) {
    throw new FormatError(`${what}: vector length ${vector.length} != dim ${dim}`);
  }
  for (const v of vector) {
    if (!Number.isFinite(v)) throw new FormatError(`${what}: non-finite component`);
  }
}

function writeF32(buf: Buffer, offset: number, vector: Float32Array): number {
  for (const v of vector) {
    buf.writeFloatLE(v, offset);
    offset += 4;
  }
  return offset;
}

export function encodeEmbeddings(file: EmbeddingFile): Buffer {
  const { dim, numKnown, numTotal, records } = file;
  if (dim < 1) throw new FormatError(`dim must be positive, got ${dim}`);
  if (numKnown < 1) throw new FormatError("need at least one known class");
  if (numKnown >= numTotal) {
    throw new FormatError(
      `open-set data needs numKnown < numTotal, got ${numKnown} >= ${numTotal}`,
    );
  }
  const seen = new Set<number>();
  for (const rec of records) {
    if (!Number.isInteger(rec.id) || rec.id < 0) {
      throw new FormatError(`record id must be a non-negative integer, got ${rec.id}`);
    }
    if (seen.has(rec.id)) throw new FormatError(`duplicate record id ${rec.id}`);
    seen.add(rec.id);
    checkVector(rec.vector, dim, `record ${rec.id}`);
    if (rec.domain === SOURCE) {
      if (rec.label < 0 || rec.label >= numKnown) {
        throw new FormatError(
          `source record ${rec.id}: label ${rec.label} outside [0, ${numKnown})`,
        );
      }
    } else if (rec.label !== -1 && (rec.label < 0 || rec.label >= numTotal)) {
      throw new FormatError(
        `target record ${rec.id}: label ${rec.label} outside [0, ${numTotal}) and not -1`,
      );
    }
  }

  const recordSize = EMB_RECORD_FIXED + 4 * dim;
  const buf = Buffer.alloc(EMB_HEADER_SIZE + records.length * recordSize);
  buf.write(EMBEDDING_MAGIC, 0, "ascii");
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(dim, 8);
  buf.writeUInt32LE(numKnown, 12);
  buf.writeUInt32LE(numTotal, 16);
  buf.writeBigUInt64LE(BigInt(records.length), 20);
  let offset = EMB_HEADER_SIZE;
  for (const rec of records) {
    buf.writeBigUInt64LE(BigInt(rec.id), offset);
    buf.writeUInt8(rec.domain, offset + 8);
    buf.writeInt32LE(rec.label, offset + 9);
    offset = writeF32(buf, offset + EMB_RECORD_FIXED, rec.vector);
  }
  return buf;
}

export function decodeEmbeddings(buf: Buffer): EmbeddingFile {
  if (buf.length < EMB_HEADER_SIZE) throw new FormatError("truncated header");
  if (buf.toString("ascii", 0, 4) !== EMBEDDING_MAGIC) {
    throw new FormatError("bad magic");
  }
  const version = buf.readUInt32LE(4);
  if (version !== FORMAT_VERSION) throw new FormatError(`unsupported version ${version}`);
  const dim = buf.readUInt32LE(8);
  const numKnown = buf.readUInt32LE(12);
  const numTotal = buf.readUInt32LE(16);
  const count = Number(buf.readBigUInt64LE(20));
  const recordSize = EMB_RECORD_FIXED + 4 * dim;
  if (buf.length !== EMB_HEADER_SIZE + count * recordSize) {
    throw new FormatError(`expected ${EMB_HEADER_SIZE + count * recordSize} bytes, got ${buf.length}`);
  }
  const records: EmbeddingRecord[] = [];
  let offset = EMB_HEADER_SIZE;
  for (let i = 0; i < count; i++) {
    const id = Number(buf.readBigUInt64LE(offset));
    const domain = buf.readUInt8(offset + 8) as typeof SOURCE | typeof TARGET;
    const label = buf.readInt32LE(offset + 9);
    offset += EMB_RECORD_FIXED;
    const vector = new Float32Array(dim);
    for (let d = 0; d < dim; d++) vector[d] = buf.readFloatLE(offset + 4 * d);
    offset += 4 * dim;
    records.push({ id, domain, label, vector });
  }
  return { dim, numKnown, numTotal, records };
}

export function encodePrototypes(file: PrototypeFile): Buffer {
  const { dim, classNames, vectors } = file;
  if (dim < 1) throw new FormatError(`dim must be positive, got ${dim}`);
  if (classNames.length !== vectors.length) {
    throw new FormatError(
      `${classNames.length} names but ${vectors.length} vectors`,
    );
  }
  const encodedNames = classNames.map((name) => {
    const bytes = Buffer.from(name, "utf-8");
    if (bytes.length > 0xffff) {
      throw new FormatError(`class name too long: ${name.slice(0, 32)}...`);
    }
    return bytes;
  });
  vectors.forEach((v, i) => checkVector(v, dim, `class ${classNames[i]}`));

  let size = PROTO_HEADER_SIZE;
  for (const name of encodedNames) size += 2 + name.length + 4 * dim;
  const buf = Buffer.alloc(size);
  buf.write(PROTOTYPE_MAGIC, 0, "ascii");
  buf.writeUInt32LE(FORMAT_VERSION, 4);
  buf.writeUInt32LE(dim, 8);
  buf.writeUInt32LE(classNames.length, 12);
  let offset = PROTO_HEADER_SIZE;
  for (let i = 0; i < encodedNames.length; i++) {
    buf.writeUInt16LE(encodedNames[i].length, offset);
    offset += 2;
    encodedNames[i].copy(buf, offset);
    offset += encodedNames[i].length;
    offset = writeF32(buf, offset, vectors[i]);
  }
  return buf;
}

export function decodePrototypes(buf: Buffer): PrototypeFile {
  if (buf.length < PROTO_HEADER_SIZE) throw new FormatError("truncated header");
  if (buf.toString("ascii", 0, 4) !== PROTOTYPE_MAGIC) {
    throw new FormatError("bad magic");
  }
  const version = buf.readUInt32LE(4);
  if (version !== FORMAT_VERSION) throw new FormatError(`unsupported version ${version}`);
  const dim = buf.readUInt32LE(8);
  const count = buf.readUInt32LE(12);
  const classNames: string[] = [];
  const vectors: Float32Array[] = [];
  let offset = PROTO_HEADER_SIZE;
  for (let i = 0; i < count; i++) {
    if (offset + 2 > buf.length) throw new FormatError("truncated class entry");
    const nameLen = buf.readUInt16LE(offset);
    offset += 2;
    if (offset + nameLen + 4 * dim > buf.length) {
      throw new FormatError("truncated class entry");
    }
    classNames.push(buf.toString("utf-8", offset, offset + nameLen));
    offset += nameLen;
    const vector = new Float32Array(dim);
    for (let d = 0; d < dim; d++) vector[d] = buf.readFloatLE(offset + 4 * d);
    offset += 4 * dim;
    vectors.push(vector);
  }
  if (offset !== buf.length) throw new FormatError("trailing bytes after last class");
  return { dim, classNames, vectors };
}
