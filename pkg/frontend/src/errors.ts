/** Typed errors so callers can tell transport, format, and data problems apart. */

export class ProtocolError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ProtocolError";
  }
}

export class TransportError extends Error {
  constructor(endpoint: string, message: string) {
    super(`${endpoint}: ${message}`);
    this.name = "TransportError";
  }
}

export class IntegrityError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "IntegrityError";
  }
}

export class ConfigError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ConfigError";
  }
}

export class ServerRejectedError extends Error {
  readonly status: number;

  constructor(endpoint: string, key: string, status: number, detail = "") {
    super(
      `${endpoint}: server rejected ${JSON.stringify(key)} with status ${status}` +
        (detail ? `: ${detail}` : ""),
    );
    this.name = "ServerRejectedError";
    this.status = status;
  }
}

export class UnknownSimulationError extends Error {
  constructor(simId: string, endpoint: string) {
    super(`no info record for sim ${JSON.stringify(simId)} at ${endpoint}`);
    this.name = "UnknownSimulationError";
  }
}

export class MissingChunkError extends Error {
  readonly key: string;
  readonly which: "meta" | "data";

  constructor(key: string, which: "meta" | "data") {
    super(`missing ${which} chunk ${JSON.stringify(key)}`);
    this.name = "MissingChunkError";
    this.key = key;
    this.which = which;
  }
}

export class NotReadyError extends Error {
  constructor(step: number, simId: string) {
    super(`step ${step} of sim ${JSON.stringify(simId)} is not ready yet`);
    this.name = "NotReadyError";
  }
}
