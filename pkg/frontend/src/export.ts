/**
 * Self-describing columnar export file for post-hoc analysis.
 *
 * Layout (little-endian):
 *
 *     magic     4 bytes, ASCII "SXA1"
 *     n_vars    u32
 *     per variable, in file order:
 *         name_len  u16
 *         name      name_len bytes, UTF-8
 *         dtype     u8 (1=f32, 2=f64, 3=i32, 4=i64, 5=u8)
 *         count     u64
 *     arrays    each variable's raw little-endian elements, concatenated
 *               in the same order as the directory above
 *
 * The file size is therefore exactly
 * 8 + sum(11 + name_len) + sum(count * itemsize).
 */

import * as fs from "node:fs";
import { DtypeInfo, dtypeByCode } from "./container.js";
import { IntegrityError, NotReadyError } from "./errors.js";
import { ReadyState, Session } from "./client.js";

export const EXPORT_MAGIC = Buffer.from("SXA1", "ascii");

export interface ExportVariable {
  name: string;
  dtype: DtypeInfo;
  count: number;
  /** count * dtype.itemsize raw little-endian bytes. */
  bytes: Buffer;
}

export interface ExportSummary {
  path: string;
  size: number;
  step: number;
  variables: { name: string; dtype: string; count: number }[];
}

/** Serialize variables into the export layout. */
export function encodeExport(variables: ExportVariable[]): Buffer {
  const parts: Buffer[] = [];
  const head = Buffer.alloc(8);
  EXPORT_MAGIC.copy(head, 0);
  head.writeUInt32LE(variables.length, 4);
  parts.push(head);
  for (const v of variables) {
    const name = Buffer.from(v.name, "utf8");
    if (name.length > 0xffff) {
      throw new IntegrityError(`variable name of ${name.length} bytes is too long`);
    }
    if (v.bytes.length !== v.count * v.dtype.itemsize) {
      throw new IntegrityError(
        `variable ${JSON.stringify(v.name)} carries ${v.bytes.length} bytes, ` +
          `expected ${v.count} x ${v.dtype.itemsize}`,
      );
    }
    const entry = Buffer.alloc(2 + name.length + 1 + 8);
    entry.writeUInt16LE(name.length, 0);
    name.copy(entry, 2);
    entry.writeUInt8(v.dtype.code, 2 + name.length);
    entry.writeBigUInt64LE(BigInt(v.count), 3 + name.length);
    parts.push(entry);
  }
  for (const v of variables) {
    parts.push(v.bytes);
  }
  return Buffer.concat(parts);
}

/** Parse an export buffer back into its variables. */
export function decodeExport(data: Buffer): ExportVariable[] {
  if (data.length < 8) {
    throw new IntegrityError(`export of ${data.length} bytes is shorter than a header`);
  }
  if (!data.subarray(0, 4).equals(EXPORT_MAGIC)) {
    throw new IntegrityError(
      `bad export magic ${JSON.stringify(data.subarray(0, 4).toString("latin1"))}`,
    );
  }
  const nVars = data.readUInt32LE(4);
  let pos = 8;
  const heads: { name: string; dtype: DtypeInfo; count: number }[] = [];
  for (let i = 0; i < nVars; i++) {
    if (data.length - pos < 2) {
      throw new IntegrityError("export directory is truncated");
    }
    const nameLen = data.readUInt16LE(pos);
    pos += 2;
    if (data.length - pos < nameLen + 9) {
      throw new IntegrityError("export directory is truncated");
    }
    const name = data.subarray(pos, pos + nameLen).toString("utf8");
    pos += nameLen;
    const dtypeCode = data.readUInt8(pos);
    pos += 1;
    const dtype = dtypeByCode(dtypeCode);
    if (dtype === undefined) {
      throw new IntegrityError(`unknown dtype id ${dtypeCode}`);
    }
    const countBig = data.readBigUInt64LE(pos);
    pos += 8;
    if (countBig > BigInt(Number.MAX_SAFE_INTEGER)) {
      throw new IntegrityError(`element count ${countBig} is implausibly large`);
    }
    heads.push({ name, dtype, count: Number(countBig) });
  }
  const out: ExportVariable[] = [];
  for (const head of heads) {
    const nBytes = head.count * head.dtype.itemsize;
    if (data.length - pos < nBytes) {
      throw new IntegrityError(
        `export arrays are truncated: variable ${JSON.stringify(head.name)} ` +
          `needs ${nBytes} bytes, ${data.length - pos} remain`,
      );
    }
    out.push({ ...head, bytes: Buffer.from(data.subarray(pos, pos + nBytes)) });
    pos += nBytes;
  }
  if (pos !== data.length) {
    throw new IntegrityError(`${data.length - pos} trailing bytes after export arrays`);
  }
  return out;
}

export function readExportFile(path: string): ExportVariable[] {
  return decodeExport(fs.readFileSync(path));
}

/**
 * Write all of a step's variables to one file.  Refuses steps whose done
 * markers are not all in yet.
 */
export async function exportStep(
  session: Session,
  step: number,
  outPath: string,
): Promise<ExportSummary> {
  const state: ReadyState = await session.readySteps();
  if (!state.steps.includes(step)) {
    throw new NotReadyError(step, session.simId);
  }
  const variables: ExportVariable[] = [];
  for (const name of session.variables) {
    const result = await session.fetch(step, name);
    variables.push({
      name,
      dtype: result.dtype,
      count: result.count,
      bytes: result.bytes,
    });
  }
  const encoded = encodeExport(variables);
  fs.writeFileSync(outPath, encoded);
  return {
    path: outPath,
    size: encoded.length,
    step,
    variables: variables.map((v) => ({
      name: v.name,
      dtype: v.dtype.name,
      count: v.count,
    })),
  };
}
