/**
 * Read-only analysis session against a running staging store.
 *
 * A session bootstraps from server 0, reads the run's info record, and from
 * then on knows the rank count and the full server list.  Readiness is
 * polled: a step is ready once all ranks have written their done markers.
 * Fetches decode containers with this package's own decoder; results are
 * byte-identical to the store-side producer's arrays (within the recorded
 * error bound for lossy chunks, which the producer already verified).
 */

import * as container from "./container.js";
import * as keyspace from "./keyspace.js";
import {
  ConfigError,
  IntegrityError,
  MissingChunkError,
  UnknownSimulationError,
} from "./errors.js";
import { Connection } from "./transport.js";

/** JSON record stored next to every data chunk (on server 0). */
export interface ChunkMeta {
  dtype: string;
  count: number;
  compressor: string;
  mode: string | null;
  eps: number;
  original: number;
  stored: number;
  shard: number;
}

export interface RunInfo {
  numRanks: number;
  variables: string[];
  databases: string[];
  createdAt: string | null;
}

export interface ReadyState {
  steps: number[];
  finished: boolean;
  lastStep: number | null;
}

export type WaitResult = "ready" | "timed-out" | "finished-without-step";

export interface FieldResult {
  values: container.DecodedArray;
  meta: ChunkMeta;
}

export interface FetchResult {
  /** All ranks' elements, concatenated in rank order. */
  values: container.ElementArray;
  /** The same elements as raw little-endian bytes. */
  bytes: Buffer;
  dtype: container.DtypeInfo;
  count: number;
  metas: ChunkMeta[];
}

export function parseChunkMeta(raw: Buffer): ChunkMeta {
  let obj: Record<string, unknown>;
  try {
    obj = JSON.parse(raw.toString("utf8"));
  } catch (exc) {
    const msg = exc instanceof Error ? exc.message : String(exc);
    throw new ConfigError(`malformed chunk metadata: ${msg}`);
  }
  const need = (field: string): unknown => {
    if (!(field in obj)) {
      throw new ConfigError(`malformed chunk metadata: missing ${field}`);
    }
    return obj[field];
  };
  const asInt = (field: string): number => {
    const v = Number(need(field));
    if (!Number.isInteger(v)) {
      throw new ConfigError(`malformed chunk metadata: ${field} is not an integer`);
    }
    return v;
  };
  return {
    dtype: String(need("dtype")),
    count: asInt("count"),
    compressor: String(need("compressor")),
    mode: obj.mode === null ? null : String(need("mode")),
    eps: Number(need("eps")),
    original: asInt("original"),
    stored: asInt("stored"),
    shard: asInt("shard"),
  };
}

export class Session {
  private readonly conns: (Connection | null)[];
  private closed = false;

  private constructor(
    readonly simId: string,
    readonly info: RunInfo,
    readonly endpoints: string[],
    private readonly timeoutMs: number,
  ) {
    this.conns = endpoints.map(() => null);
  }

  get numRanks(): number {
    return this.info.numRanks;
  }

  get variables(): string[] {
    return this.info.variables;
  }

  /**
   * Open a session: read `<simId>/info` from the given server (server 0)
   * and adopt the server list registered there.
   */
  static async connect(
    endpoint: string,
    simId: string,
    timeoutMs = 30000,
  ): Promise<Session> {
    keyspace.checkName(simId, "sim id");
    const boot = await Connection.open(endpoint, timeoutMs);
    let raw: Buffer | null;
    try {
      raw = await boot.get(keyspace.infoKey(simId));
    } finally {
      boot.close();
    }
    if (raw === null) {
      throw new UnknownSimulationError(simId, endpoint);
    }
    let info: RunInfo;
    try {
      const obj = JSON.parse(raw.toString("utf8"));
      const numRanks = Number(obj.num_ranks);
      if (!Number.isInteger(numRanks)) {
        throw new TypeError("num_ranks is not an integer");
      }
      info = {
        numRanks,
        variables: Array.isArray(obj.variables) ? obj.variables.map(String) : [],
        databases: Array.isArray(obj.databases) ? obj.databases.map(String) : [],
        createdAt: typeof obj.created_at === "string" ? obj.created_at : null,
      };
    } catch {
      throw new ConfigError(
        `sim ${JSON.stringify(simId)} has a malformed info record`,
      );
    }
    const databases = info.databases.length ? info.databases : [endpoint];
    return new Session(simId, { ...info, databases }, databases, timeoutMs);
  }

  private async conn(shard: number): Promise<Connection> {
    const existing = this.conns[shard];
    if (existing !== null) {
      return existing;
    }
    const opened = await Connection.open(this.endpoints[shard], this.timeoutMs);
    this.conns[shard] = opened;
    return opened;
  }

  close(): void {
    this.closed = true;
    for (let i = 0; i < this.conns.length; i++) {
      this.conns[i]?.close();
      this.conns[i] = null;
    }
  }

  // -- readiness -----------------------------------------------------------

  /** Steps whose markers are all in, ascending, plus the finished flag. */
  async readySteps(): Promise<ReadyState> {
    const conn = await this.conn(0);
    const seen = new Map<number, Set<number>>();
    for (const key of await conn.listPrefix(keyspace.simPrefix(this.simId))) {
      const parsed = keyspace.parseDoneMarker(key, this.simId);
      if (parsed !== null) {
        const [step, rank] = parsed;
        let ranks = seen.get(step);
        if (ranks === undefined) {
          ranks = new Set();
          seen.set(step, ranks);
        }
        ranks.add(rank);
      }
    }
    const steps = [...seen.entries()]
      .filter(([, ranks]) => ranks.size >= this.info.numRanks)
      .map(([step]) => step)
      .sort((a, b) => a - b);
    const lastRaw = await conn.get(keyspace.simDoneKey(this.simId));
    const finished = lastRaw !== null;
    let lastStep: number | null = null;
    if (lastRaw !== null) {
      const text = lastRaw.toString("ascii");
      lastStep = /^-?\d+$/.test(text.trim()) ? Number(text.trim()) : null;
    }
    return { steps, finished, lastStep };
  }

  /** Poll until the step is ready, the run ends before it, or time runs out. */
  async waitForStep(
    step: number,
    timeoutMs: number,
    pollMs = 200,
  ): Promise<WaitResult> {
    const deadline = Date.now() + Math.max(0, timeoutMs);
    for (;;) {
      const state = await this.readySteps();
      if (state.steps.includes(step)) {
        return "ready";
      }
      if (state.finished && (state.lastStep === null || state.lastStep < step)) {
        return "finished-without-step";
      }
      const remaining = deadline - Date.now();
      if (remaining <= 0) {
        return "timed-out";
      }
      await new Promise((r) => setTimeout(r, Math.min(pollMs, remaining)));
    }
  }

  // -- data ----------------------------------------------------------------

  /** Fetch and decode one rank's chunk; values honor meta.eps. */
  async getData(step: number, rank: number, variable: string): Promise<FieldResult> {
    const metaKey = keyspace.chunkKey(this.simId, step, rank, variable, keyspace.KIND_META);
    const conn0 = await this.conn(0);
    const rawMeta = await conn0.get(metaKey);
    if (rawMeta === null) {
      throw new MissingChunkError(metaKey.toString(), "meta");
    }
    const meta = parseChunkMeta(rawMeta);
    if (!(meta.shard >= 0 && meta.shard < this.endpoints.length)) {
      throw new ConfigError(
        `chunk ${metaKey.toString()} names shard ${meta.shard}, but this ` +
          `run has ${this.endpoints.length} servers`,
      );
    }
    const dataKey = keyspace.chunkKey(this.simId, step, rank, variable, keyspace.KIND_DATA);
    const shardConn = await this.conn(meta.shard);
    const raw = await shardConn.get(dataKey);
    if (raw === null) {
      throw new MissingChunkError(dataKey.toString(), "data");
    }
    const values = container.decompress(raw);
    if (values.count !== meta.count || values.dtype.name !== meta.dtype) {
      throw new IntegrityError(
        `chunk ${dataKey.toString()} decodes to ${values.count} x ` +
          `${values.dtype.name}, metadata says ${meta.count} x ${meta.dtype}`,
      );
    }
    return { values, meta };
  }

  /** All ranks' chunks for one variable, concatenated in rank order. */
  async fetch(step: number, variable: string): Promise<FetchResult> {
    const parts: container.DecodedArray[] = [];
    const metas: ChunkMeta[] = [];
    for (let rank = 0; rank < this.info.numRanks; rank++) {
      const result = await this.getData(step, rank, variable);
      parts.push(result.values);
      metas.push(result.meta);
    }
    if (parts.length === 0) {
      throw new ConfigError(
        `sim ${JSON.stringify(this.simId)} has no ranks to fetch from`,
      );
    }
    const dtype = parts[0].dtype;
    for (const part of parts) {
      if (part.dtype.code !== dtype.code) {
        throw new IntegrityError(
          `ranks disagree on dtype for ${JSON.stringify(variable)}: ` +
            `${dtype.name} vs ${part.dtype.name}`,
        );
      }
    }
    const bytes = Buffer.concat(parts.map((p) => p.bytes));
    const count = parts.reduce((acc, p) => acc + p.count, 0);
    const merged = new container.DecodedArray(
      { ...parts[0].header, count, originalSize: count * dtype.itemsize },
      bytes,
    );
    return { values: merged.values(), bytes, dtype, count, metas };
  }
}
