/**
 * Key layout shared with the store's writers.
 *
 * Chunks live at `<sim>/<step>/<rank>/<variable>/<kind>` with kind "data"
 * or "meta".  Control records: `<sim>/<step>/done/<rank>` marks a rank's
 * step as written, `<sim>/info` describes the run, `<sim>/done` holds the
 * last step.  Data chunks are spread over servers by rank; meta, done, and
 * info records always sit on server 0.
 */

import { ConfigError } from "./errors.js";

export const KIND_DATA = "data";
export const KIND_META = "meta";

const RESERVED = new Set(["done", "info"]);

export function checkName(name: string, what: string): string {
  if (typeof name !== "string" || name.length === 0) {
    throw new ConfigError(`${what} must be a non-empty string, got ${JSON.stringify(name)}`);
  }
  if (name.includes("/")) {
    throw new ConfigError(`${what} ${JSON.stringify(name)} must not contain '/'`);
  }
  for (const ch of name) {
    if (ch.charCodeAt(0) > 0x7f) {
      throw new ConfigError(`${what} ${JSON.stringify(name)} must be ASCII`);
    }
    if (/\s/.test(ch)) {
      throw new ConfigError(
        `${what} ${JSON.stringify(name)} must not contain whitespace`,
      );
    }
  }
  return name;
}

function checkIndex(value: number, what: string): number {
  if (!Number.isInteger(value) || value < 0) {
    throw new ConfigError(`${what} must be a non-negative integer, got ${value}`);
  }
  return value;
}

export function chunkKey(
  sim: string,
  step: number,
  rank: number,
  variable: string,
  kind: string,
): Buffer {
  if (kind !== KIND_DATA && kind !== KIND_META) {
    throw new ConfigError(`chunk kind must be data or meta, got ${JSON.stringify(kind)}`);
  }
  if (RESERVED.has(variable)) {
    throw new ConfigError(`variable name ${JSON.stringify(variable)} is reserved`);
  }
  return Buffer.from(
    `${checkName(sim, "sim id")}/${checkIndex(step, "step")}/` +
      `${checkIndex(rank, "rank")}/${checkName(variable, "variable")}/${kind}`,
    "ascii",
  );
}

export function infoKey(sim: string): Buffer {
  return Buffer.from(`${checkName(sim, "sim id")}/info`, "ascii");
}

export function simDoneKey(sim: string): Buffer {
  return Buffer.from(`${checkName(sim, "sim id")}/done`, "ascii");
}

export function simPrefix(sim: string): Buffer {
  return Buffer.from(`${checkName(sim, "sim id")}/`, "ascii");
}

const DONE_RE = /^(\d+)\/done\/(\d+)$/;

/** Return [step, rank] if key is one of sim's done markers, else null. */
export function parseDoneMarker(key: Buffer, sim: string): [number, number] | null {
  const prefix = simPrefix(sim);
  if (
    key.length <= prefix.length ||
    !key.subarray(0, prefix.length).equals(prefix)
  ) {
    return null;
  }
  const m = DONE_RE.exec(key.subarray(prefix.length).toString("latin1"));
  if (m === null) {
    return null;
  }
  return [Number(m[1]), Number(m[2])];
}
