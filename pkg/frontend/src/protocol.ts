/**
 * Framed request/response protocol spoken over TCP by the store servers.
 *
 * Wire layout, little-endian throughout:
 *
 *     magic        4 bytes, ASCII "SRX1"
 *     op/status    unsigned 8-bit
 *     key_len      unsigned 32-bit
 *     key          key_len bytes
 *     val_len      unsigned 64-bit
 *     value        val_len bytes
 *
 * Responses reuse the layout with key_len = 0.  Frames are self-delimiting;
 * the total length is always 17 + key_len + val_len.
 */

import { ProtocolError } from "./errors.js";

export const MAGIC = Buffer.from("SRX1", "ascii");
export const MAX_KEY_LEN = 64 * 1024;
export const MAX_VAL_LEN = 4 * 1024 ** 3;
export const HEADER_LEN = 9; // magic + op + key_len, enough to learn key_len

export enum Opcode {
  PUT = 1,
  GET = 2,
  EXISTS = 3,
  LIST = 4,
  DELETE = 5,
  STATUS = 6,
  PING = 7,
}

export enum Status {
  OK = 0,
  NOT_FOUND = 1,
  MALFORMED = 2,
  SERVER_ERROR = 3,
}

export interface Frame {
  op: number;
  key: Buffer;
  value: Buffer;
  end: number;
}

export function encodeRequest(op: Opcode, key: Buffer, value: Buffer = Buffer.alloc(0)): Buffer {
  if (key.length > MAX_KEY_LEN) {
    throw new ProtocolError(`key length ${key.length} exceeds ${MAX_KEY_LEN}`);
  }
  if (value.length > MAX_VAL_LEN) {
    throw new ProtocolError(`value length ${value.length} exceeds ${MAX_VAL_LEN}`);
  }
  const head = Buffer.alloc(HEADER_LEN);
  MAGIC.copy(head, 0);
  head.writeUInt8(op, 4);
  head.writeUInt32LE(key.length, 5);
  const vlen = Buffer.alloc(8);
  vlen.writeBigUInt64LE(BigInt(value.length), 0);
  return Buffer.concat([head, key, vlen, value]);
}

/**
 * Parse one raw frame starting at `offset`.  Throws ProtocolError on bad
 * magic, truncation, or length fields beyond the protocol limits; never
 * returns a partially decoded frame.
 */
export function parseFrame(data: Buffer, offset = 0): Frame {
  if (data.length - offset < HEADER_LEN) {
    throw new ProtocolError("truncated frame: header incomplete");
  }
  if (!data.subarray(offset, offset + 4).equals(MAGIC)) {
    throw new ProtocolError(`bad magic ${JSON.stringify(data.subarray(offset, offset + 4).toString("latin1"))}`);
  }
  const op = data.readUInt8(offset + 4);
  const keyLen = data.readUInt32LE(offset + 5);
  if (keyLen > MAX_KEY_LEN) {
    throw new ProtocolError(`key length ${keyLen} exceeds ${MAX_KEY_LEN}`);
  }
  let pos = offset + HEADER_LEN;
  if (data.length - pos < keyLen + 8) {
    throw new ProtocolError("truncated frame: key or length missing");
  }
  const key = Buffer.from(data.subarray(pos, pos + keyLen));
  pos += keyLen;
  const valLenBig = data.readBigUInt64LE(pos);
  if (valLenBig > BigInt(MAX_VAL_LEN)) {
    throw new ProtocolError(`value length ${valLenBig} exceeds ${MAX_VAL_LEN}`);
  }
  const valLen = Number(valLenBig);
  pos += 8;
  if (data.length - pos < valLen) {
    throw new ProtocolError("truncated frame: value incomplete");
  }
  const value = Buffer.from(data.subarray(pos, pos + valLen));
  return { op, key, value, end: pos + valLen };
}

/**
 * Total length of the frame starting at `offset`, or null when not enough
 * bytes have arrived to know it yet.  Validates magic and the length limits
 * eagerly so a garbage stream fails fast instead of stalling a reader.
 */
export function frameLength(data: Buffer, offset = 0): number | null {
  if (data.length - offset < HEADER_LEN) {
    return null;
  }
  if (!data.subarray(offset, offset + 4).equals(MAGIC)) {
    throw new ProtocolError(
      `bad magic ${JSON.stringify(data.subarray(offset, offset + 4).toString("latin1"))}`,
    );
  }
  const keyLen = data.readUInt32LE(offset + 5);
  if (keyLen > MAX_KEY_LEN) {
    throw new ProtocolError(`key length ${keyLen} exceeds ${MAX_KEY_LEN}`);
  }
  if (data.length - offset < HEADER_LEN + keyLen + 8) {
    return null;
  }
  const valLenBig = data.readBigUInt64LE(offset + HEADER_LEN + keyLen);
  if (valLenBig > BigInt(MAX_VAL_LEN)) {
    throw new ProtocolError(`value length ${valLenBig} exceeds ${MAX_VAL_LEN}`);
  }
  return HEADER_LEN + keyLen + 8 + Number(valLenBig);
}

export interface Request {
  opcode: Opcode;
  key: Buffer;
  value: Buffer;
}

export interface Response {
  status: Status;
  value: Buffer;
}

/** Decode exactly one request frame; trailing bytes are an error. */
export function decodeRequest(data: Buffer): Request {
  const { op, key, value, end } = parseFrame(data);
  if (end !== data.length) {
    throw new ProtocolError(`${data.length - end} trailing bytes after frame`);
  }
  if (!(op in Opcode)) {
    throw new ProtocolError(`unknown opcode ${op}`);
  }
  return { opcode: op as Opcode, key, value };
}

/** Decode a concatenation of request frames (e.g. a store dump). */
export function decodeRequests(data: Buffer): Request[] {
  const out: Request[] = [];
  let offset = 0;
  while (offset < data.length) {
    const { op, key, value, end } = parseFrame(data, offset);
    if (!(op in Opcode)) {
      throw new ProtocolError(`unknown opcode ${op}`);
    }
    out.push({ opcode: op as Opcode, key, value });
    offset = end;
  }
  return out;
}

/** Decode exactly one response frame; trailing bytes are an error. */
export function decodeResponse(data: Buffer): Response {
  const { op, key, value, end } = parseFrame(data);
  if (end !== data.length) {
    throw new ProtocolError(`${data.length - end} trailing bytes after frame`);
  }
  if (!(op in Status)) {
    throw new ProtocolError(`unknown status ${op}`);
  }
  if (key.length !== 0) {
    throw new ProtocolError("response frames must have key_len = 0");
  }
  return { status: op as Status, value };
}
