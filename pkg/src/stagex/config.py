"""Simulation config file: sim id, server endpoints, per-variable codecs.

The file is JSON shaped like the staging configs simulations already ship:

    {
      "sim-id": "mysim",
      "libraries": {...},                  ignored
      "providers": [...],                  ignored
      "databases": [
        {"address": "127.0.0.1:7001", "protocol": "ofi+tcp"},
        {"address": "127.0.0.1:7002", "protocol": "ofi+tcp"}
      ],
      "data": [
        {"name": "x", "compressor": "SZ3", "mode": "abs", "value": 0.003},
        {"name": "id", "compressor": "BLOSC"}
      ]
    }

Database order defines shard indices and must match across every process of
one run.  Protocol strings keep the "<fabric>+<transport>" shape; only the
transport half matters here and it has to be tcp.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from .codec import CompressionSpec, parse_compression_entry
from .errors import ConfigError
from .keyspace import check_name
from .server import parse_endpoint

log = logging.getLogger(__name__)

_KNOWN_KEYS = {"sim-id", "libraries", "providers", "databases", "data"}


@dataclass(frozen=True)
class SimConfig:
    sim_id: str
    endpoints: tuple[str, ...]
    specs: dict[str, CompressionSpec] = field(default_factory=dict)

    @property
    def variables(self) -> list[str]:
        return list(self.specs)

    def spec_for(self, variable: str) -> CompressionSpec | None:
        return self.specs.get(variable)


def parse_config(obj, source: str = "<config>") -> SimConfig:
    if not isinstance(obj, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    for key in obj:
        if key not in _KNOWN_KEYS:
            log.warning("%s: ignoring unknown field %r", source, key)

    if "sim-id" not in obj:
        raise ConfigError(f"{source}: missing sim-id")
    sim_id = check_name(obj["sim-id"], "sim-id")

    databases = obj.get("databases")
    if not isinstance(databases, list) or not databases:
        raise ConfigError(f"{source}: databases must be a non-empty list")
    endpoints = []
    for i, db in enumerate(databases):
        if not isinstance(db, dict) or "address" not in db:
            raise ConfigError(f"{source}: databases[{i}] needs an address")
        address = db["address"]
        try:
            parse_endpoint(address)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}: databases[{i}]: {exc}") from None
        protocol = db.get("protocol", "tcp")
        transport = str(protocol).rsplit("+", 1)[-1].lower()
        if transport != "tcp":
            log.warning(
                "%s: databases[%d] asks for protocol %r; this build only speaks tcp",
                source, i, protocol,
            )
        endpoints.append(address)

    specs: dict[str, CompressionSpec] = {}
    for i, entry in enumerate(obj.get("data", []) or []):
        spec = parse_compression_entry(entry)
        check_name(spec.name, "variable name")
        if spec.name in specs:
            raise ConfigError(f"{source}: duplicate variable {spec.name!r} in data")
        specs[spec.name] = spec

    return SimConfig(sim_id=sim_id, endpoints=tuple(endpoints), specs=specs)


def load_config(path) -> SimConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(obj, source=str(path))
