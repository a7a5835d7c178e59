/**
 * Independent decoder for self-describing array containers.
 *
 * Layout (little-endian):
 *
 *     header (42 bytes)
 *         magic          4 bytes  "SXC1"
 *         codec          u8       0=NONE, 1=LOSSLESS, 2=LOSSY
 *         dtype          u8       1=f32, 2=f64, 3=i32, 4=i64, 5=u8
 *         count          u64      number of elements
 *         bound          f64      absolute error bound enforced (0 if exact)
 *         originalSize   u64      uncompressed payload bytes
 *         bodySize       u64      bytes following the header, exactly
 *         checksum       u32      CRC-32 of the body
 *     body           bodySize bytes
 *
 * LOSSLESS bodies are deflate(byteShuffle(data)).  LOSSY bodies hold a
 * deflated token stream: a little-bit-order literal bitmap, byte-shuffled
 * i32 delta codes for the grid indices, then raw literal elements.
 *
 * Decoding is bit-exact with the producer: grid reconstruction runs in
 * f64 (`anchor + step * k`) and narrows with Math.fround for f32 arrays,
 * int64 index arithmetic wraps exactly via BigInt.asIntN, and literals are
 * placed by raw byte copy so non-finite payload bits survive untouched.
 */

import * as zlib from "node:zlib";
import { IntegrityError } from "./errors.js";

export const CONTAINER_MAGIC = Buffer.from("SXC1", "latin1");
export const HEADER_SIZE = 42;

export enum Codec {
  NONE = 0,
  LOSSLESS = 1,
  LOSSY = 2,
}

export type DtypeName = "f32" | "f64" | "i32" | "i64" | "u8";

export interface DtypeInfo {
  readonly code: number;
  readonly name: DtypeName;
  readonly itemsize: number;
}

const DTYPES: ReadonlyMap<number, DtypeInfo> = new Map(
  (
    [
      [1, "f32", 4],
      [2, "f64", 8],
      [3, "i32", 4],
      [4, "i64", 8],
      [5, "u8", 1],
    ] as const
  ).map(([code, name, itemsize]) => [code, { code, name, itemsize }]),
);

const DTYPE_BY_NAME: ReadonlyMap<DtypeName, DtypeInfo> = new Map(
  [...DTYPES.values()].map((d) => [d.name, d]),
);

export function dtypeByCode(code: number): DtypeInfo | undefined {
  return DTYPES.get(code);
}

export function dtypeByName(name: string): DtypeInfo | undefined {
  return DTYPE_BY_NAME.get(name as DtypeName);
}

export interface ContainerHeader {
  readonly codec: Codec;
  readonly dtype: DtypeInfo;
  readonly count: number;
  readonly bound: number;
  readonly originalSize: number;
  readonly bodySize: number;
  readonly checksum: number;
}

export type ElementArray =
  | Float32Array
  | Float64Array
  | Int32Array
  | BigInt64Array
  | Uint8Array;

/** A decoded array: raw little-endian element bytes plus its header. */
export class DecodedArray {
  constructor(
    readonly header: ContainerHeader,
    /** count * itemsize raw little-endian bytes. */
    readonly bytes: Buffer,
  ) {}

  get count(): number {
    return this.header.count;
  }

  get dtype(): DtypeInfo {
    return this.header.dtype;
  }

  /** Typed view of the elements (copies so alignment is guaranteed). */
  values(): ElementArray {
    const copy = new Uint8Array(this.bytes).buffer;
    switch (this.header.dtype.name) {
      case "f32":
        return new Float32Array(copy);
      case "f64":
        return new Float64Array(copy);
      case "i32":
        return new Int32Array(copy);
      case "i64":
        return new BigInt64Array(copy);
      case "u8":
        return new Uint8Array(copy);
    }
  }

  /** Elements as plain numbers (i64 loses no bits below 2^53). */
  numbers(): number[] {
    const vals = this.values();
    const out = new Array<number>(vals.length);
    for (let i = 0; i < vals.length; i++) out[i] = Number(vals[i]);
    return out;
  }
}

function u64ToLength(value: bigint, what: string): number {
  if (value > BigInt(Number.MAX_SAFE_INTEGER)) {
    throw new IntegrityError(`${what} ${value} is implausibly large`);
  }
  return Number(value);
}

export function parseHeader(container: Buffer): ContainerHeader {
  if (container.length < HEADER_SIZE) {
    throw new IntegrityError(
      `container of ${container.length} bytes is shorter than a header`,
    );
  }
  const magic = container.subarray(0, 4);
  if (!magic.equals(CONTAINER_MAGIC)) {
    throw new IntegrityError(
      `bad container magic ${JSON.stringify(magic.toString("latin1"))}`,
    );
  }
  const codec = container[4];
  if (codec !== 0 && codec !== 1 && codec !== 2) {
    throw new IntegrityError(`unknown codec id ${codec}`);
  }
  const dtypeCode = container[5];
  const dtype = DTYPES.get(dtypeCode);
  if (dtype === undefined) {
    throw new IntegrityError(`unknown dtype id ${dtypeCode}`);
  }
  return {
    codec: codec as Codec,
    dtype,
    count: u64ToLength(container.readBigUInt64LE(6), "element count"),
    bound: container.readDoubleLE(14),
    originalSize: u64ToLength(container.readBigUInt64LE(22), "original size"),
    bodySize: u64ToLength(container.readBigUInt64LE(30), "body size"),
    checksum: container.readUInt32LE(38),
  };
}

/**
 * Undo the element-byte transpose: shuffled data holds all first bytes,
 * then all second bytes, ...  Identity for 1-byte elements or empty input.
 */
export function byteUnshuffle(data: Buffer, elementSize: number): Buffer {
  if (elementSize !== 1 && elementSize !== 4 && elementSize !== 8) {
    throw new IntegrityError(
      `element_size must be 1, 4, or 8, got ${elementSize}`,
    );
  }
  if (data.length % elementSize) {
    throw new IntegrityError(
      `${data.length} bytes is not a whole number of ${elementSize}-byte elements`,
    );
  }
  if (elementSize === 1 || data.length === 0) {
    return Buffer.from(data);
  }
  const n = data.length / elementSize;
  const out = Buffer.allocUnsafe(data.length);
  for (let bytePlane = 0; bytePlane < elementSize; bytePlane++) {
    const planeStart = bytePlane * n;
    for (let elem = 0; elem < n; elem++) {
      out[elem * elementSize + bytePlane] = data[planeStart + elem];
    }
  }
  return out;
}

function inflate(body: Buffer, what: "lossless" | "lossy"): Buffer {
  try {
    return zlib.inflateSync(body);
  } catch (exc) {
    const msg = exc instanceof Error ? exc.message : String(exc);
    throw new IntegrityError(`${what} body does not inflate: ${msg}`);
  }
}

function decompressLossless(body: Buffer, elementSize: number): Buffer {
  if (body.length === 0) {
    return Buffer.alloc(0);
  }
  return byteUnshuffle(inflate(body, "lossless"), elementSize);
}

/** Write one f64 value into the output at element i, narrowing to dtype. */
function writeElement(
  out: Buffer,
  dtype: DtypeInfo,
  i: number,
  value: number,
): void {
  // Integer targets only arise from hand-crafted containers (the encoder
  // never quantizes them); truncate with wraparound and map non-finite to 0.
  const asInt = () => BigInt(Number.isFinite(value) ? Math.trunc(value) : 0);
  switch (dtype.name) {
    case "f32":
      out.writeFloatLE(Math.fround(value), i * 4);
      break;
    case "f64":
      out.writeDoubleLE(value, i * 8);
      break;
    case "i32":
      out.writeInt32LE(Number(BigInt.asIntN(32, asInt())), i * 4);
      break;
    case "i64":
      out.writeBigInt64LE(BigInt.asIntN(64, asInt()), i * 8);
      break;
    case "u8":
      out.writeUInt8(Number(BigInt.asUintN(8, asInt())), i);
      break;
  }
}

/** Read literal element j as an f64 anchor value. */
function literalAsF64(literals: Buffer, dtype: DtypeInfo, j: number): number {
  switch (dtype.name) {
    case "f32":
      return literals.readFloatLE(j * 4);
    case "f64":
      return literals.readDoubleLE(j * 8);
    case "i32":
      return literals.readInt32LE(j * 4);
    case "i64":
      // Number() rounds the same way an int64 -> f64 hardware cast does.
      return Number(literals.readBigInt64LE(j * 8));
    case "u8":
      return literals[j];
  }
}

/**
 * Rebuild elements from the token stream.  Each element's grid index is the
 * cumulative sum of the delta codes (int64, wrapping); its value is
 * anchor + step * (index - indexAtAnchor) computed in f64, where the anchor
 * is the most recent literal (0 before any).  Literal elements are then
 * placed by verbatim byte copy.
 */
function dequantize(
  codes: Buffer,
  mask: Uint8Array,
  literals: Buffer,
  bound: number,
  dtype: DtypeInfo,
): Buffer {
  const n = mask.length;
  const es = dtype.itemsize;
  const out = Buffer.allocUnsafe(n * es);
  const step = 2.0 * bound;

  let index = 0n; // running grid index (int64, wraps)
  let anchor = 0.0; // f64 value of the most recent literal
  let base = 0n; // grid index at that literal
  let codeIdx = 0;
  let litIdx = 0;
  for (let i = 0; i < n; i++) {
    if (mask[i]) {
      literals.copy(out, i * es, litIdx * es, (litIdx + 1) * es);
      anchor = literalAsF64(literals, dtype, litIdx);
      base = index; // the literal's own delta is zero
      litIdx++;
    } else {
      index = BigInt.asIntN(
        64,
        index + BigInt(codes.readInt32LE(codeIdx * 4)),
      );
      codeIdx++;
      const k = Number(BigInt.asIntN(64, index - base));
      writeElement(out, dtype, i, anchor + step * k);
    }
  }
  return out;
}

function unpackLossy(body: Buffer, header: ContainerHeader): Buffer {
  const n = header.count;
  if (n === 0) {
    return Buffer.alloc(0);
  }
  const payload = inflate(body, "lossy");
  const bitmapLen = (n + 7) >> 3;
  if (payload.length < bitmapLen) {
    throw new IntegrityError("lossy body shorter than its escape bitmap");
  }
  const mask = new Uint8Array(n);
  let nLit = 0;
  for (let i = 0; i < n; i++) {
    const bit = (payload[i >> 3] >> (i & 7)) & 1;
    mask[i] = bit;
    nLit += bit;
  }
  const codesLen = (n - nLit) * 4;
  const litLen = nLit * header.dtype.itemsize;
  if (payload.length !== bitmapLen + codesLen + litLen) {
    throw new IntegrityError(
      `lossy body length ${payload.length} does not match ` +
        `${bitmapLen}+${codesLen}+${litLen}`,
    );
  }
  const codes = byteUnshuffle(
    payload.subarray(bitmapLen, bitmapLen + codesLen),
    4,
  );
  const literals = payload.subarray(bitmapLen + codesLen);
  return dequantize(codes, mask, literals, header.bound, header.dtype);
}

/** Decode a container; lossy data comes back within header.bound. */
export function decompress(container: Buffer): DecodedArray {
  const header = parseHeader(container);
  const body = container.subarray(HEADER_SIZE);
  if (body.length !== header.bodySize) {
    throw new IntegrityError(
      `container body is ${body.length} bytes, header says ${header.bodySize}`,
    );
  }
  if (zlib.crc32(body) !== header.checksum) {
    throw new IntegrityError("body checksum mismatch");
  }

  let raw: Buffer;
  if (header.codec === Codec.NONE) {
    raw = Buffer.from(body);
  } else if (header.codec === Codec.LOSSLESS) {
    raw = decompressLossless(body, header.dtype.itemsize);
  } else {
    return new DecodedArray(header, unpackLossy(body, header));
  }

  const expected = header.count * header.dtype.itemsize;
  if (raw.length !== header.originalSize || raw.length !== expected) {
    throw new IntegrityError(
      `decoded ${raw.length} bytes, header says ${header.originalSize} ` +
        `(${header.count} x ${header.dtype.itemsize})`,
    );
  }
  return new DecodedArray(header, raw);
}
