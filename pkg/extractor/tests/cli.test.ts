import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import * as path from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { main, parseClasses } from "../src/cli.js";
import { decodeEmbeddings, decodePrototypes } from "../src/format.js";
import { makeTree } from "./helpers.js";

let base: string;
beforeAll(() => {
  base = mkdtempSync(path.join(tmpdir(), "cli-test-"));
});
afterAll(() => {
  rmSync(base, { recursive: true, force: true });
});

describe("argument handling", () => {
  it("needs a command", async () => {
    expect(await main([])).toBe(2);
  });

  it("rejects unknown commands and missing flags", async () => {
    expect(await main(["bogus"])).toBe(2);
    expect(await main(["images"])).toBe(2);
    expect(await main(["prototypes"])).toBe(2);
  });

  it("rejects a bad domain value", async () => {
    const out = path.join(base, "never.bin");
    expect(
      await main([
        "images", "--root", base, "--domain", "upward",
        "--classes", "a", "--out", out, "--model", "hash",
      ]),
    ).toBe(2);
  });

  it("prints help with exit 0", async () => {
    expect(await main(["--help"])).toBe(0);
  });

  it("maps a missing root to an I/O failure", async () => {
    expect(
      await main([
        "images", "--root", path.join(base, "absent"), "--domain", "target",
        "--classes", "a", "--out", path.join(base, "x.bin"), "--model", "hash",
      ]),
    ).toBe(3);
  });

  it("maps semantic extraction misuse to a usage failure", async () => {
    const root = path.join(base, "srcbad");
    makeTree(root, { apple: 1, rogue: 1 });
    expect(
      await main([
        "images", "--root", root, "--domain", "source",
        "--classes", "apple", "--out", path.join(base, "y.bin"), "--model", "hash",
      ]),
    ).toBe(2);
    expect(
      await main([
        "prototypes", "--classes", "apple", "--template", "no placeholder",
        "--out", path.join(base, "z.bin"), "--model", "hash",
      ]),
    ).toBe(2);
  });

  it("maps an unwritable output path to an I/O failure", async () => {
    const root = path.join(base, "okroot");
    makeTree(root, { apple: 1 });
    expect(
      await main([
        "images", "--root", root, "--domain", "target", "--classes", "apple",
        "--out", path.join(base, "no-such-dir", "out.bin"), "--model", "hash",
      ]),
    ).toBe(3);
  });

  it("rejects a hash dim that is too small", async () => {
    expect(
      await main([
        "prototypes", "--classes", "a", "--out", path.join(base, "p.bin"),
        "--model", "hash", "--dim", "2",
      ]),
    ).toBe(3);
  });
});

describe("class list parsing", () => {
  it("splits comma lists and reads files one name per line", () => {
    expect(parseClasses("a, b ,c")).toEqual(["a", "b", "c"]);
    const file = path.join(base, "classes.txt");
    writeFileSync(file, "back_pack\nbike\n\nmonitor\n");
    expect(parseClasses(file)).toEqual(["back_pack", "bike", "monitor"]);
    expect(() => parseClasses("a,,b")).toThrow();
  });
});

describe("file emission", () => {
  it("writes a loadable embedding file from a tree", async () => {
    const root = path.join(base, "tree");
    makeTree(root, { apple: 2, widget: 1 });
    const out = path.join(base, "emb.bin");
    const code = await main([
      "images", "--root", root, "--domain", "target",
      "--classes", "apple", "--out", out, "--model", "hash", "--dim", "16",
    ]);
    expect(code).toBe(0);
    const file = decodeEmbeddings(readFileSync(out));
    expect(file.dim).toBe(16);
    expect(file.numKnown).toBe(1);
    expect(file.numTotal).toBe(2);
    expect(file.records.map((r) => r.label)).toEqual([0, 0, 1]);
  });

  it("writes a loadable prototype file from a class file", async () => {
    const classes = path.join(base, "protoclasses.txt");
    writeFileSync(classes, "apple\nbanana\n");
    const out = path.join(base, "protos.bin");
    const code = await main([
      "prototypes", "--classes", classes, "--out", out, "--model", "hash", "--dim", "16",
    ]);
    expect(code).toBe(0);
    const file = decodePrototypes(readFileSync(out));
    expect(file.dim).toBe(16);
    expect(file.classNames).toEqual(["apple", "banana"]);
  });

  it("emits byte-identical files on repeat runs", async () => {
    const root = path.join(base, "repeat");
    makeTree(root, { apple: 2, banana: 2 });
    const args = (out: string) => [
      "images", "--root", root, "--domain", "source",
      "--classes", "apple,banana", "--out", out, "--model", "hash", "--dim", "16",
    ];
    const out1 = path.join(base, "rep1.bin");
    const out2 = path.join(base, "rep2.bin");
    expect(await main(args(out1))).toBe(0);
    expect(await main(args(out2))).toBe(0);
    expect(readFileSync(out1).equals(readFileSync(out2))).toBe(true);
  });
});
