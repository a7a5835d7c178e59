"""Analysis-side session: discover runs, track step readiness, fetch fields.

A session bootstraps from server 0 (either given directly or as the first
database in a config file), reads the run's info record, and from then on
knows the rank count and the full server list.  Readiness is polled: a step
is ready once all ranks have written their done markers.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import codec, keyspace
from .client import ChunkMeta
from .config import load_config
from .errors import ConfigError, IntegrityError, MissingChunk, UnknownSimulation
from .transport import Connection


@dataclass(frozen=True)
class ReadyState:
    """Snapshot of step readiness: which steps have all markers in."""

    steps: tuple[int, ...]
    finished: bool
    last_step: int | None


class WaitResult(Enum):
    READY = "ready"
    TIMED_OUT = "timed-out"
    FINISHED_WITHOUT_STEP = "finished-without-step"


@dataclass(frozen=True)
class FieldResult:
    values: np.ndarray
    meta: ChunkMeta


class AnalysisSession:
    """Read-only view of one simulation's staged data.

    Immutable after attach; each thread gets its own connections, so
    concurrent fetches from several threads are fine.
    """

    def __init__(self, sim_id: str, num_ranks: int, variables: list[str],
                 endpoints: tuple[str, ...]):
        self.sim_id = sim_id
        self.num_ranks = num_ranks
        self.variables = variables
        self.endpoints = endpoints
        self._local = threading.local()

    # -- wiring ----------------------------------------------------------

    def _conn(self, shard: int) -> Connection:
        pool = getattr(self._local, "pool", None)
        if pool is None:
            pool = self._local.pool = {}
        conn = pool.get(shard)
        if conn is None:
            conn = pool[shard] = Connection(self.endpoints[shard])
        return conn

    def close(self) -> None:
        pool = getattr(self._local, "pool", None)
        if pool:
            for conn in pool.values():
                conn.close()
            pool.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- readiness ---------------------------------------------------------

    def ready_steps(self) -> ReadyState:
        """Steps whose markers are all in, ascending, plus the finished flag."""
        conn = self._conn(0)
        seen: dict[int, set[int]] = {}
        for key in conn.list_prefix(keyspace.sim_prefix(self.sim_id)):
            parsed = keyspace.parse_done_marker(key, self.sim_id)
            if parsed is not None:
                step, rank = parsed
                seen.setdefault(step, set()).add(rank)
        ready = tuple(
            sorted(step for step, ranks in seen.items() if len(ranks) >= self.num_ranks)
        )
        last_raw = conn.get(keyspace.sim_done_key(self.sim_id))
        finished = last_raw is not None
        last_step = None
        if finished:
            try:
                last_step = int(last_raw.decode("ascii"))
            except ValueError:
                last_step = None
        return ReadyState(steps=ready, finished=finished, last_step=last_step)

    def wait_for_step(self, step: int, timeout: float, poll: float = 0.2) -> WaitResult:
        """Poll until the step is ready, the run ends before it, or time runs out."""
        deadline = time.monotonic() + max(0.0, timeout)
        while True:
            state = self.ready_steps()
            if step in state.steps:
                return WaitResult.READY
            if state.finished and (state.last_step is None or state.last_step < step):
                return WaitResult.FINISHED_WITHOUT_STEP
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return WaitResult.TIMED_OUT
            time.sleep(min(poll, remaining))

    # -- data --------------------------------------------------------------

    def get_data(self, step: int, rank: int, variable: str) -> FieldResult:
        """Fetch and decode one rank's chunk; values honor meta.eps."""
        sim = self.sim_id
        meta_key = keyspace.chunk_key(sim, step, rank, variable, keyspace.KIND_META)
        raw_meta = self._conn(0).get(meta_key)
        if raw_meta is None:
            raise MissingChunk(meta_key, "meta")
        meta = ChunkMeta.from_json(raw_meta)
        if not 0 <= meta.shard < len(self.endpoints):
            raise ConfigError(
                f"chunk {meta_key.decode()} names shard {meta.shard}, but this "
                f"run has {len(self.endpoints)} servers"
            )
        data_key = keyspace.chunk_key(sim, step, rank, variable, keyspace.KIND_DATA)
        container = self._conn(meta.shard).get(data_key)
        if container is None:
            raise MissingChunk(data_key, "data")
        values, header = codec.decompress(container)
        if header.count != meta.count or header.dtype_name != meta.dtype:
            raise IntegrityError(
                f"chunk {data_key.decode()} decodes to {header.count} x "
                f"{header.dtype_name}, metadata says {meta.count} x {meta.dtype}"
            )
        return FieldResult(values=values, meta=meta)

    def get_variable_all_ranks(self, step: int, variable: str) -> np.ndarray:
        """All ranks' chunks for one variable, concatenated in rank order."""
        parts = [
            self.get_data(step, rank, variable).values
            for rank in range(self.num_ranks)
        ]
        return np.concatenate(parts)


def _attach_endpoint(endpoint: str, sim_id: str) -> AnalysisSession:
    with Connection(endpoint) as conn:
        raw = conn.get(keyspace.info_key(sim_id))
        if raw is None:
            raise UnknownSimulation(
                f"no info record for sim {sim_id!r} on {endpoint}"
            )
        try:
            info = json.loads(raw.decode("utf-8"))
            num_ranks = int(info["num_ranks"])
            variables = list(info.get("variables", []))
            databases = list(info.get("databases", []))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"sim {sim_id!r} has a malformed info record") from exc
    if not databases:
        databases = [endpoint]
    return AnalysisSession(
        sim_id=sim_id,
        num_ranks=num_ranks,
        variables=variables,
        endpoints=tuple(databases),
    )


def attach(target, sim_id: str) -> AnalysisSession:
    """Open a session from a config file path or server 0's host:port."""
    keyspace.check_name(sim_id, "sim id")
    target = os.fspath(target) if not isinstance(target, str) else target
    if os.path.exists(target) or target.endswith(".json"):
        cfg = load_config(target)
        session = _attach_endpoint(cfg.endpoints[0], sim_id)
        # the config's view of the server list must agree with the run's
        if tuple(cfg.endpoints) != session.endpoints:
            raise ConfigError(
                f"config lists servers {list(cfg.endpoints)}, but sim "
                f"{sim_id!r} was registered with {list(session.endpoints)}"
            )
        return session
    return _attach_endpoint(target, sim_id)
