"""Simulation-side client: compress, shard, and publish field chunks.

Each rank creates its own client from the shared config file; ranks never
talk to each other.  Data chunks go to the server picked by rank, metadata
and progress markers go to server 0, and a rank announces a finished step
by writing its done marker last.
"""

from __future__ import annotations

import json
import logging
import operator
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from . import codec, keyspace
from .codec import Codec, CompressionSpec
from .config import SimConfig, load_config
from .errors import ConfigError, TransportError
from .transport import Connection

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChunkMeta:
    """JSON record stored next to every data chunk (on server 0)."""

    dtype: str
    count: int
    compressor: str
    mode: str | None
    eps: float
    original: int
    stored: int
    shard: int

    def to_json(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True).encode("ascii")

    @classmethod
    def from_json(cls, raw: bytes) -> "ChunkMeta":
        try:
            obj = json.loads(raw.decode("utf-8"))
            return cls(
                dtype=obj["dtype"],
                count=int(obj["count"]),
                compressor=obj["compressor"],
                mode=obj["mode"],
                eps=float(obj["eps"]),
                original=int(obj["original"]),
                stored=int(obj["stored"]),
                shard=int(obj["shard"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"malformed chunk metadata: {exc}") from exc


def _info_record(num_ranks: int, config: SimConfig) -> dict:
    return {
        "num_ranks": num_ranks,
        "variables": config.variables,
        "databases": list(config.endpoints),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }


class SimClient:
    """Handle for one simulation run; typically one per rank process.

    Not thread-safe: a handle belongs to a single logical rank.  Distinct
    handles (in distinct processes or threads) need no coordination because
    every key they write embeds their own rank.
    """

    def __init__(self, num_ranks: int, config: SimConfig):
        if not isinstance(num_ranks, int) or num_ranks < 1:
            raise ConfigError(f"num_ranks must be a positive integer, got {num_ranks!r}")
        self.num_ranks = num_ranks
        self.config = config
        self._conns: dict[int, Connection] = {}
        self._warned_vars: set[str] = set()
        self._lock = threading.Lock()
        self._check_servers()
        self._publish_info()

    # -- lifecycle -----------------------------------------------------

    def _check_servers(self) -> None:
        # every listed server must answer before any data moves
        for shard, endpoint in enumerate(self.config.endpoints):
            try:
                self._conn(shard).ping()
            except TransportError as exc:
                raise TransportError(
                    endpoint, f"server {shard} at {endpoint} is unreachable: {exc}"
                ) from exc

    def _publish_info(self) -> None:
        key = keyspace.info_key(self.config.sim_id)
        record = _info_record(self.num_ranks, self.config)
        conn = self._conn(0)
        existing = conn.get(key)
        if existing is None:
            conn.put(key, json.dumps(record, sort_keys=True).encode("ascii"))
            return
        try:
            current = json.loads(existing.decode("utf-8"))
        except (ValueError, UnicodeDecodeError) as exc:
            raise ConfigError(
                f"sim {self.config.sim_id!r} has an unreadable info record"
            ) from exc
        # re-init of the same run is fine; a different shape is not
        if current.get("num_ranks") != record["num_ranks"]:
            raise ConfigError(
                f"sim {self.config.sim_id!r} already registered with "
                f"num_ranks={current.get('num_ranks')}, not {record['num_ranks']}"
            )
        if current.get("databases") != record["databases"]:
            raise ConfigError(
                f"sim {self.config.sim_id!r} already registered with a different "
                f"database list {current.get('databases')!r}"
            )

    def _conn(self, shard: int) -> Connection:
        with self._lock:
            conn = self._conns.get(shard)
            if conn is None:
                conn = Connection(self.config.endpoints[shard])
                self._conns[shard] = conn
            return conn

    def close(self) -> None:
        with self._lock:
            for conn in self._conns.values():
                conn.close()
            self._conns.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- data path -----------------------------------------------------

    def _spec_for(self, variable: str) -> CompressionSpec:
        spec = self.config.spec_for(variable)
        if spec is None:
            if variable not in self._warned_vars:
                self._warned_vars.add(variable)
                log.warning(
                    "variable %r has no compression entry; storing uncompressed",
                    variable,
                )
            spec = CompressionSpec(variable, Codec.NONE)
        return spec

    def _check_rank(self, rank: int) -> int:
        try:
            rank = operator.index(rank)
        except TypeError:
            raise ConfigError(f"rank must be an integer, got {rank!r}") from None
        if not 0 <= rank < self.num_ranks:
            raise ConfigError(f"rank must be in [0, {self.num_ranks}), got {rank}")
        return rank

    def send_data(
        self,
        rank: int,
        step: int,
        variable: str,
        values,
        *,
        kind: str = keyspace.KIND_DATA,
        dtype: str | None = None,
        count: int | None = None,
    ) -> ChunkMeta:
        """Compress one chunk and store it; returns the stored metadata.

        Synchronous: when this returns, both the data chunk (on this rank's
        shard) and its metadata (on server 0) are durable in the stores.
        """
        self._check_rank(rank)
        if dtype is not None:
            values = np.asarray(values, dtype=codec.numpy_dtype(dtype))
        else:
            values = np.asarray(values)
        if count is not None and count != values.size:
            raise ConfigError(
                f"count {count} does not match the {values.size} values given"
            )
        spec = self._spec_for(variable)
        container = codec.compress(values, spec)
        header = codec.parse_header(container)
        shard = keyspace.shard_for(rank, len(self.config.endpoints))
        meta = ChunkMeta(
            dtype=header.dtype_name,
            count=header.count,
            compressor=spec.compressor_name,
            mode=spec.mode.value if spec.mode else None,
            eps=header.bound,
            original=header.original_size,
            stored=len(container),
            shard=shard,
        )
        sim = self.config.sim_id
        self._conn(shard).put(keyspace.chunk_key(sim, step, rank, variable, kind), container)
        self._conn(0).put(
            keyspace.chunk_key(sim, step, rank, variable, keyspace.KIND_META),
            meta.to_json(),
        )
        return meta

    def ts_done(self, rank: int, step: int) -> None:
        """Publish this rank's done marker; call after the step's sends."""
        self._check_rank(rank)
        self._conn(0).put(keyspace.done_marker(self.config.sim_id, step, rank), b"1")

    def sim_done(self, rank: int, last_step: int) -> None:
        """Mark the whole run finished; any rank may write this."""
        self._check_rank(rank)
        self._conn(0).put(
            keyspace.sim_done_key(self.config.sim_id), str(last_step).encode("ascii")
        )


def init(num_ranks: int, config_path) -> SimClient:
    """Load the shared config file and open a client for one rank."""
    return SimClient(num_ranks, load_config(config_path))
