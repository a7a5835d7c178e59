"""Key layout shared by the simulation and analysis sides.

Chunks live at `<sim>/<step>/<rank>/<variable>/<kind>` with kind "data" or
"meta".  Control records: `<sim>/<step>/done/<rank>` marks a rank's step as
written, `<sim>/info` describes the run, `<sim>/done` holds the last step.
Data chunks are spread over servers by rank; meta, done, and info records
always sit on server 0 so one endpoint suffices to discover everything.
"""

from __future__ import annotations

import operator
import re

from .errors import ConfigError

KIND_DATA = "data"
KIND_META = "meta"

# reserved path segments that cannot be variable names
_RESERVED = {"done", "info"}


def check_name(name: str, what: str) -> str:
    """Validate a sim id or variable name for use as a key segment."""
    if not isinstance(name, str) or not name:
        raise ConfigError(f"{what} must be a non-empty string, got {name!r}")
    if "/" in name:
        raise ConfigError(f"{what} {name!r} must not contain '/'")
    try:
        name.encode("ascii")
    except UnicodeEncodeError:
        raise ConfigError(f"{what} {name!r} must be ASCII") from None
    if any(c.isspace() for c in name):
        raise ConfigError(f"{what} {name!r} must not contain whitespace")
    return name


def _check_index(value: int, what: str) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{what} must be a non-negative integer, got {value!r}")
    try:
        value = operator.index(value)
    except TypeError:
        raise ConfigError(f"{what} must be a non-negative integer, got {value!r}") from None
    if value < 0:
        raise ConfigError(f"{what} must be a non-negative integer, got {value!r}")
    return value


def chunk_key(sim: str, step: int, rank: int, variable: str, kind: str) -> bytes:
    if kind not in (KIND_DATA, KIND_META):
        raise ConfigError(f"chunk kind must be data or meta, got {kind!r}")
    if variable in _RESERVED:
        raise ConfigError(f"variable name {variable!r} is reserved")
    return (
        f"{check_name(sim, 'sim id')}/{_check_index(step, 'step')}/"
        f"{_check_index(rank, 'rank')}/{check_name(variable, 'variable')}/{kind}"
    ).encode("ascii")


def done_marker(sim: str, step: int, rank: int) -> bytes:
    return (
        f"{check_name(sim, 'sim id')}/{_check_index(step, 'step')}/done/"
        f"{_check_index(rank, 'rank')}"
    ).encode("ascii")


def info_key(sim: str) -> bytes:
    return f"{check_name(sim, 'sim id')}/info".encode("ascii")


def sim_done_key(sim: str) -> bytes:
    return f"{check_name(sim, 'sim id')}/done".encode("ascii")


def sim_prefix(sim: str) -> bytes:
    return f"{check_name(sim, 'sim id')}/".encode("ascii")


def step_done_prefix(sim: str, step: int) -> bytes:
    return f"{check_name(sim, 'sim id')}/{_check_index(step, 'step')}/done/".encode("ascii")


_DONE_RE = re.compile(rb"\A(\d+)/done/(\d+)\Z")


def parse_done_marker(key: bytes, sim: str) -> tuple[int, int] | None:
    """Return (step, rank) if key is one of sim's done markers, else None."""
    prefix = sim_prefix(sim)
    if not key.startswith(prefix):
        return None
    m = _DONE_RE.match(key[len(prefix):])
    if not m:
        return None
    return int(m.group(1)), int(m.group(2))


def shard_for(rank: int, n_databases: int) -> int:
    """Data chunks rotate over servers by rank; counts per shard differ by
    at most one.  Control records ignore this and use server 0."""
    if n_databases < 1:
        raise ConfigError(f"need at least one database, got {n_databases}")
    return _check_index(rank, "rank") % n_databases
