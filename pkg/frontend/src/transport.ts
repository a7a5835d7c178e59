/**
 * One TCP connection to a store server.
 *
 * The client is single-threaded and strictly sequential: requests are
 * queued internally and each waits for the previous response, so a
 * Connection never has more than one frame in flight.
 */

import * as net from "node:net";
import {
  ConfigError,
  ProtocolError,
  ServerRejectedError,
  TransportError,
} from "./errors.js";
import {
  Opcode,
  Response,
  Status,
  decodeResponse,
  encodeRequest,
  frameLength,
} from "./protocol.js";

/** Split "host:port" (optionally "[v6addr]:port") into parts. */
export function parseEndpoint(addr: string): { host: string; port: number } {
  const sep = addr.lastIndexOf(":");
  if (sep <= 0) {
    throw new ConfigError(`endpoint ${JSON.stringify(addr)} is not host:port`);
  }
  let host = addr.slice(0, sep);
  if (host.startsWith("[") && host.endsWith("]")) {
    host = host.slice(1, -1);
  }
  const portText = addr.slice(sep + 1);
  const port = Number(portText);
  if (!/^\d+$/.test(portText) || !Number.isInteger(port) || port > 65535) {
    throw new ConfigError(
      `endpoint ${JSON.stringify(addr)} has a non-numeric port`,
    );
  }
  return { host, port };
}

export class Connection {
  private sock: net.Socket;
  private recv: Buffer = Buffer.alloc(0);
  private waiter: {
    resolve: (resp: Response) => void;
    reject: (err: Error) => void;
  } | null = null;
  private queue: Promise<unknown> = Promise.resolve();
  private closed = false;

  private constructor(
    readonly endpoint: string,
    sock: net.Socket,
    private readonly timeoutMs: number,
  ) {
    this.sock = sock;
    sock.on("data", (chunk: Buffer) => this.onData(chunk));
    sock.on("error", (err) =>
      this.fail(new TransportError(this.endpoint, `request failed: ${err.message}`)),
    );
    sock.on("close", () => {
      if (!this.closed) {
        this.fail(new TransportError(this.endpoint, "server closed the connection"));
      }
    });
  }

  static open(endpoint: string, timeoutMs = 30000): Promise<Connection> {
    const { host, port } = parseEndpoint(endpoint);
    return new Promise((resolve, reject) => {
      const sock = net.createConnection({ host, port, noDelay: true });
      const onError = (err: Error) =>
        reject(new TransportError(endpoint, `connect failed: ${err.message}`));
      sock.once("error", onError);
      sock.once("connect", () => {
        sock.removeListener("error", onError);
        resolve(new Connection(endpoint, sock, timeoutMs));
      });
    });
  }

  private onData(chunk: Buffer): void {
    this.recv = this.recv.length ? Buffer.concat([this.recv, chunk]) : chunk;
    while (this.recv.length > 0) {
      let total: number | null;
      try {
        total = frameLength(this.recv);
      } catch (exc) {
        const msg = exc instanceof Error ? exc.message : String(exc);
        this.fail(new TransportError(this.endpoint, `garbled response: ${msg}`));
        return;
      }
      if (total === null || this.recv.length < total) {
        return; // wait for more bytes
      }
      const frame = this.recv.subarray(0, total);
      this.recv = Buffer.from(this.recv.subarray(total));
      let resp: Response;
      try {
        resp = decodeResponse(frame);
      } catch (exc) {
        const msg = exc instanceof Error ? exc.message : String(exc);
        this.fail(new TransportError(this.endpoint, `garbled response: ${msg}`));
        return;
      }
      const waiter = this.waiter;
      if (waiter === null) {
        this.fail(new TransportError(this.endpoint, "unsolicited response frame"));
        return;
      }
      this.waiter = null;
      waiter.resolve(resp);
    }
  }

  private fail(err: Error): void {
    const waiter = this.waiter;
    this.waiter = null;
    if (waiter !== null) {
      waiter.reject(err);
    }
    this.sock.destroy();
  }

  /** Send one request and resolve with its response (queued sequentially). */
  request(op: Opcode, key: Buffer, value?: Buffer): Promise<Response> {
    const run = this.queue.then(() => this.exchange(op, key, value));
    // keep the queue alive past rejections; callers see them via `run`
    this.queue = run.catch(() => undefined);
    return run;
  }

  private exchange(op: Opcode, key: Buffer, value?: Buffer): Promise<Response> {
    if (this.closed || this.sock.destroyed) {
      return Promise.reject(
        new TransportError(this.endpoint, "connection is closed"),
      );
    }
    let frame: Buffer;
    try {
      frame = encodeRequest(op, key, value);
    } catch (exc) {
      return Promise.reject(exc);
    }
    return new Promise<Response>((resolve, reject) => {
      const timer = setTimeout(() => {
        this.fail(new TransportError(this.endpoint, "request timed out"));
      }, this.timeoutMs);
      this.waiter = {
        resolve: (resp) => {
          clearTimeout(timer);
          resolve(resp);
        },
        reject: (err) => {
          clearTimeout(timer);
          reject(err);
        },
      };
      this.sock.write(frame);
    });
  }

  close(): void {
    this.closed = true;
    this.sock.destroy();
  }

  // Convenience wrappers for the read-side opcodes this client uses.

  async get(key: Buffer): Promise<Buffer | null> {
    const resp = await this.request(Opcode.GET, key);
    if (resp.status === Status.NOT_FOUND) {
      return null;
    }
    if (resp.status !== Status.OK) {
      throw new ServerRejectedError(this.endpoint, key.toString(), resp.status);
    }
    return resp.value;
  }

  async listPrefix(prefix: Buffer): Promise<Buffer[]> {
    const resp = await this.request(Opcode.LIST, prefix);
    if (resp.status !== Status.OK) {
      throw new ServerRejectedError(this.endpoint, prefix.toString(), resp.status);
    }
    if (resp.value.length === 0) {
      return [];
    }
    return resp.value
      .toString("latin1")
      .split("\n")
      .map((k) => Buffer.from(k, "latin1"));
  }

  async ping(): Promise<void> {
    const resp = await this.request(Opcode.PING, Buffer.alloc(0));
    if (resp.status !== Status.OK) {
      throw new ServerRejectedError(this.endpoint, "", resp.status);
    }
  }
}
