/** Public surface of the analysis client. */

export {
  ConfigError,
  IntegrityError,
  MissingChunkError,
  NotReadyError,
  ProtocolError,
  ServerRejectedError,
  TransportError,
  UnknownSimulationError,
} from "./errors.js";
export {
  Frame,
  HEADER_LEN,
  MAGIC,
  MAX_KEY_LEN,
  MAX_VAL_LEN,
  Opcode,
  Request,
  Response,
  Status,
  decodeRequest,
  decodeRequests,
  decodeResponse,
  encodeRequest,
  frameLength,
  parseFrame,
} from "./protocol.js";
export {
  CONTAINER_MAGIC,
  Codec,
  ContainerHeader,
  DecodedArray,
  DtypeInfo,
  DtypeName,
  ElementArray,
  HEADER_SIZE,
  byteUnshuffle,
  decompress,
  dtypeByCode,
  dtypeByName,
  parseHeader,
} from "./container.js";
export {
  chunkKey,
  infoKey,
  parseDoneMarker,
  simDoneKey,
  simPrefix,
} from "./keyspace.js";
export { Connection, parseEndpoint } from "./transport.js";
export {
  ChunkMeta,
  FetchResult,
  FieldResult,
  ReadyState,
  RunInfo,
  Session,
  WaitResult,
  parseChunkMeta,
} from "./client.js";
export {
  EXPORT_MAGIC,
  ExportSummary,
  ExportVariable,
  decodeExport,
  encodeExport,
  exportStep,
  readExportFile,
} from "./export.js";
