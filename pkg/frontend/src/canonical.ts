/**
 * Byte-exact re-implementation of the service's canonical JSON encoding
 * (sorted keys, two-space indent, trailing newline) so a manifest
 * assembled in the browser downloads byte-equal to one written by the
 * server's replay tooling.
 *
 * The one real gap between the two runtimes is number formatting:
 * JSON.stringify writes 1.0 as "1" and 1e-5 as "0.00001", while the
 * server writes "1.0" and "1e-05". Both runtimes pick the same shortest
 * round-trip digits, so it is purely a formatting transform; but JSON
 * itself cannot say which numbers were floats, so the caller supplies
 * the set of paths that hold floats and everything else must be an
 * integer.
 */

/** Format a finite double exactly like the server runtime prints it. */
export function pyFloatRepr(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`cannot encode non-finite float ${x}`);
  }
  if (x === 0) {
    return Object.is(x, -0) ? "-0.0" : "0.0";
  }
  const neg = x < 0;
  // toExponential() without an argument yields the shortest digit string
  // that round-trips, the same digits the server's repr picks
  const [mantissa, expPart] = Math.abs(x).toExponential().split("e") as [string, string];
  const digits = mantissa.replace(".", "");
  const e = parseInt(expPart, 10);
  let out: string;
  if (e < -4 || e >= 16) {
    const mant = digits.length > 1 ? `${digits[0]}.${digits.slice(1)}` : digits;
    const sign = e < 0 ? "-" : "+";
    out = `${mant}e${sign}${String(Math.abs(e)).padStart(2, "0")}`;
  } else if (e >= 0) {
    const intPart = digits.padEnd(e + 1, "0").slice(0, e + 1);
    out = `${intPart}.${digits.slice(e + 1) || "0"}`;
  } else {
    out = `0.${"0".repeat(-e - 1)}${digits}`;
  }
  return neg ? `-${out}` : out;
}

/** Paths inside a panorama manifest whose values are floats. */
export const MANIFEST_FLOAT_PATHS: ReadonlySet<string> = new Set([
  "lr",
  "weights.div",
  "weights.ms",
  "weights.mse",
  "weights.percept",
  "weights.prior",
  "steps.*.objective",
  "steps.*.candidate_mse.*",
]);

function renderValue(
  value: unknown,
  path: string,
  indent: string,
  floatPaths: ReadonlySet<string>,
): string {
  if (value === null) return "null";
  switch (typeof value) {
    case "boolean":
      return value ? "true" : "false";
    case "string":
      // JSON.stringify's escape set matches the server's encoder
      return JSON.stringify(value);
    case "number": {
      if (floatPaths.has(path)) return pyFloatRepr(value);
      if (!Number.isInteger(value)) {
        throw new Error(`non-integer ${value} at non-float path "${path}"`);
      }
      return String(value);
    }
    case "object":
      break;
    default:
      throw new Error(`cannot canonicalize ${typeof value} at path ${path}`);
  }
  const inner = indent + "  ";
  if (Array.isArray(value)) {
    if (value.length === 0) return "[]";
    const childPath = path ? `${path}.*` : "*";
    const items = value.map(
      (item) => inner + renderValue(item, childPath, inner, floatPaths),
    );
    return `[\n${items.join(",\n")}\n${indent}]`;
  }
  const record = value as Record<string, unknown>;
  const keys = Object.keys(record).sort();
  if (keys.length === 0) return "{}";
  const entries = keys.map((key) => {
    const childPath = path ? `${path}.${key}` : key;
    return `${inner}${JSON.stringify(key)}: ${renderValue(record[key], childPath, inner, floatPaths)}`;
  });
  return `{\n${entries.join(",\n")}\n${indent}}`;
}

/**
 * Serialize to the service's canonical JSON: sorted keys, two-space
 * indent, trailing newline. Numbers at `floatPaths` print as floats;
 * all other numbers must be integers.
 */
export function canonicalStringify(
  value: unknown,
  floatPaths: ReadonlySet<string> = MANIFEST_FLOAT_PATHS,
): string {
  return renderValue(value, "", "", floatPaths) + "\n";
}
