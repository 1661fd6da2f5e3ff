/**
 * Byte-equality of the client-side canonical JSON encoder against
 * fixtures produced by the server runtime. The float fixture carries
 * IEEE-754 bit patterns so the exact doubles cross the JSON boundary.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { MANIFEST_FLOAT_PATHS, canonicalStringify, pyFloatRepr } from "../src/canonical.js";

const fixture = (name: string): string =>
  readFileSync(new URL(`./fixtures/${name}`, import.meta.url), "utf8");

function doubleFromBits(hex: string): number {
  const buffer = new DataView(new ArrayBuffer(8));
  buffer.setBigUint64(0, BigInt(`0x${hex}`));
  return buffer.getFloat64(0);
}

describe("pyFloatRepr", () => {
  const cases = JSON.parse(fixture("float_reprs.json")) as { bits: string; repr: string }[];

  it("matches the server's repr on every fixture double", () => {
    for (const { bits, repr } of cases) {
      expect(pyFloatRepr(doubleFromBits(bits)), `bits ${bits}`).toBe(repr);
    }
  });

  it("rejects non-finite values", () => {
    expect(() => pyFloatRepr(Number.NaN)).toThrow(/non-finite/);
    expect(() => pyFloatRepr(Number.POSITIVE_INFINITY)).toThrow(/non-finite/);
  });
});

describe("canonicalStringify", () => {
  it("re-encodes a recorded manifest byte-for-byte", () => {
    const text = fixture("manifest_tiny.json");
    expect(canonicalStringify(JSON.parse(text))).toBe(text);
  });

  it("re-encodes integral and exponent-formatted weights byte-for-byte", () => {
    const text = fixture("manifest_weights.json");
    expect(canonicalStringify(JSON.parse(text))).toBe(text);
  });

  it("keeps key order sorted and indents two spaces", () => {
    const out = canonicalStringify({ b: 1, a: [true, null] }, new Set<string>());
    expect(out).toBe('{\n  "a": [\n    true,\n    null\n  ],\n  "b": 1\n}\n');
  });

  it("renders empty containers inline", () => {
    expect(canonicalStringify({ steps: [], grid: {} }, new Set<string>())).toBe(
      '{\n  "grid": {},\n  "steps": []\n}\n',
    );
  });

  it("formats floats only at declared float paths", () => {
    const out = canonicalStringify(
      { lr: 1.0, seed: 3 },
      new Set(["lr"]),
    );
    expect(out).toContain('"lr": 1.0');
    expect(out).toContain('"seed": 3');
  });

  it("rejects non-integers at integer paths", () => {
    expect(() => canonicalStringify({ seed: 1.5 }, new Set<string>())).toThrow(
      /non-integer 1.5/,
    );
  });

  it("declares float paths for every float field of the manifest", () => {
    expect([...MANIFEST_FLOAT_PATHS].sort()).toEqual([
      "lr",
      "steps.*.candidate_mse.*",
      "steps.*.objective",
      "weights.div",
      "weights.ms",
      "weights.mse",
      "weights.percept",
      "weights.prior",
    ]);
  });
});
