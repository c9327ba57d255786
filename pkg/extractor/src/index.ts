export {
  EMBEDDING_MAGIC,
  PROTOTYPE_MAGIC,
  FORMAT_VERSION,
  SOURCE,
  TARGET,
  FormatError,
  encodeEmbeddings,
  decodeEmbeddings,
  encodePrototypes,
  decodePrototypes,
} from "./format.js";
export type { EmbeddingRecord, EmbeddingFile, PrototypeFile } from "./format.js";

export { EncoderError, hashEncoder, clipEncoder, resolveEncoder, unitVector } from "./encoder.js";
export type { Encoder } from "./encoder.js";

export { ExtractError, extractImages, extractPrototypes } from "./extract.js";
export type { ImageJobSpec, ImageExtraction } from "./extract.js";

export { main, parseClasses, DEFAULT_TEMPLATE, DEFAULT_MODEL } from "./cli.js";
