import { existsSync, readFileSync, realpathSync, statSync, writeFileSync } from "node:fs";
import { pathToFileURL } from "node:url";

import yargs from "yargs";

import { EncoderError, resolveEncoder } from "./encoder.js";
import { ExtractError, extractImages, extractPrototypes } from "./extract.js";
import { encodeEmbeddings, encodePrototypes, FormatError } from "./format.js";

export const DEFAULT_TEMPLATE = "A photo of a {label}";
export const DEFAULT_MODEL = "Xenova/clip-vit-base-patch32";

class UsageError extends Error {}

/**
 * --classes accepts either a comma-separated list or a path to a text file
 * with one class name per line (blank lines ignored).
 */
export function parseClasses(value: string): string[] {
  let names: string[];
  const st = statSync(value, { throwIfNoEntry: false });
  if (st && st.isFile()) {
    names = readFileSync(value, "utf-8")
      .split(/\r?\n/)
      .map((line) => line.trim())
      .filter((line) => line.length > 0);
  } else {
    names = value.split(",").map((name) => name.trim());
  }
  if (names.length === 0 || names.some((name) => name.length === 0)) {
    throw new UsageError(`--classes has empty entries: ${value}`);
  }
  return names;
}

const modelOptions = {
  model: {
    type: "string" as const,
    default: DEFAULT_MODEL,
    describe: 'CLIP checkpoint name, or "hash" for the offline content-hash stand-in',
  },
  dim: {
    type: "number" as const,
    default: 512,
    describe: "embedding width for the hash stand-in (CLIP models fix their own)",
  },
  template: {
    type: "string" as const,
    default: DEFAULT_TEMPLATE,
    describe: "prompt template for class names; must contain {label} (prototypes)",
  },
};

interface ImagesArgs {
  root: string;
  domain: "source" | "target";
  classes: string;
  out: string;
  unlabeled: boolean;
  total?: number;
  model: string;
  dim: number;
}

interface ProtoArgs {
  classes: string;
  out: string;
  template: string;
  model: string;
  dim: number;
}

async function runImages(argv: ImagesArgs): Promise<void> {
  const encoder = await resolveEncoder(argv.model, argv.dim);
  const result = await extractImages(
    {
      root: argv.root,
      domain: argv.domain,
      classes: parseClasses(argv.classes),
      unlabeled: argv.unlabeled,
      totalOverride: argv.total,
    },
    encoder,
  );
  writeFileSync(argv.out, encodeEmbeddings(result.file));
  console.error(
    `wrote ${result.file.records.length} record(s) to ${argv.out} ` +
      `(dim ${result.file.dim}, ${result.file.numKnown}/${result.file.numTotal} classes)`,
  );
}

async function runPrototypes(argv: ProtoArgs): Promise<void> {
  const encoder = await resolveEncoder(argv.model, argv.dim);
  const protos = await extractPrototypes(parseClasses(argv.classes), argv.template, encoder);
  writeFileSync(argv.out, encodePrototypes(protos));
  console.error(
    `wrote ${protos.classNames.length} prototype(s) to ${argv.out} (dim ${protos.dim})`,
  );
}

export async function main(args: string[]): Promise<number> {
  try {
    const parser = yargs(args)
      .scriptName("extract")
      .usage("$0 <command>")
      .command(
        "images",
        "embed an image tree (one subfolder per class) into an embedding file",
        (y) =>
          y.options({
            root: { type: "string", demandOption: true, describe: "image root directory" },
            domain: {
              type: "string",
              demandOption: true,
              choices: ["source", "target"] as const,
              describe: "domain tag stamped on every record",
            },
            classes: {
              type: "string",
              demandOption: true,
              describe: "known class names: comma-separated, or a file with one per line",
            },
            out: { type: "string", demandOption: true, describe: "output embedding file" },
            unlabeled: {
              type: "boolean",
              default: false,
              describe: "write label -1 on every record (target only)",
            },
            total: {
              type: "number",
              describe: "total-class count for the header (default: inferred from the tree)",
            },
            ...modelOptions,
          }),
        async (argv) => runImages(argv as unknown as ImagesArgs),
      )
      .command(
        "prototypes",
        "embed one prompt per class name into a prototype file",
        (y) =>
          y.options({
            classes: {
              type: "string",
              demandOption: true,
              describe: "class names: comma-separated, or a file with one per line",
            },
            out: { type: "string", demandOption: true, describe: "output prototype file" },
            ...modelOptions,
          }),
        async (argv) => runPrototypes(argv as unknown as ProtoArgs),
      )
      .demandCommand(1, "pick a command: images or prototypes")
      .strict()
      .fail((msg, err) => {
        if (err) throw err;
        throw new UsageError(msg);
      })
      .exitProcess(false)
      .help();
    await parser.parseAsync();
    return 0;
  } catch (err) {
    if (err instanceof UsageError || err instanceof ExtractError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    if (err instanceof FormatError || err instanceof EncoderError) {
      console.error(`error: ${err.message}`);
      return 3;
    }
    const code = (err as NodeJS.ErrnoException).code;
    if (typeof code === "string") {
      console.error(`error: ${(err as Error).message}`);
      return 3;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  existsSync(process.argv[1]) &&
  import.meta.url === pathToFileURL(realpathSync(process.argv[1])).href;

if (invokedDirectly) {
  main(process.argv.slice(2)).then(
    (code) => process.exit(code),
    (err) => {
      console.error(err);
      process.exit(1);
    },
  );
}
