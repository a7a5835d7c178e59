"""In-memory key-value map with the request semantics served over the wire.

One instance backs one server process.  All operations take the store lock,
so each request is atomic and per-key reads/writes are linearizable.
"""

from __future__ import annotations

import threading
import time

from .protocol import Buffer, Opcode, Request, Response, Status


class MemoryStore:
    """Byte-keyed map enforcing an optional total-memory cap.

    ``max_memory`` counts the sum of stored key and value lengths;
    0 means unlimited.  PUT overwrites atomically.
    """

    def __init__(self, max_memory: int = 0):
        self.max_memory = max_memory
        self._lock = threading.Lock()
        self._data: dict[bytes, tuple[Buffer, float]] = {}
        self._bytes = 0

    def handle(self, req: Request) -> Response:
        op = req.opcode
        if op is Opcode.PING:
            return Response(Status.OK)
        if op is Opcode.STATUS:
            with self._lock:
                text = f"keys={len(self._data)} bytes={self._bytes}"
            return Response(Status.OK, text.encode("ascii"))
        if op is Opcode.PUT:
            return self._put(req.key, req.value)
        if op is Opcode.GET:
            with self._lock:
                entry = self._data.get(req.key)
            if entry is None:
                return Response(Status.NOT_FOUND)
            return Response(Status.OK, entry[0])
        if op is Opcode.EXISTS:
            with self._lock:
                present = req.key in self._data
            if present:
                return Response(Status.OK, b"\x01")
            return Response(Status.NOT_FOUND)
        if op is Opcode.DELETE:
            with self._lock:
                entry = self._data.pop(req.key, None)
                if entry is not None:
                    self._bytes -= len(req.key) + len(entry[0])
            if entry is None:
                return Response(Status.NOT_FOUND)
            return Response(Status.OK)
        if op is Opcode.LIST:
            with self._lock:
                matches = sorted(k for k in self._data if k.startswith(req.key))
            return Response(Status.OK, b"\n".join(matches))
        return Response(Status.SERVER_ERROR, b"unhandled opcode")

    def _put(self, key: bytes, value: Buffer) -> Response:
        pair = len(key) + len(value)
        with self._lock:
            old = self._data.get(key)
            old_pair = len(key) + len(old[0]) if old is not None else 0
            if self.max_memory and self._bytes - old_pair + pair > self.max_memory:
                return Response(Status.SERVER_ERROR, b"memory cap exceeded")
            self._data[key] = (value, time.monotonic())
            self._bytes += pair - old_pair
        return Response(Status.OK)

    def snapshot_keys(self) -> list[bytes]:
        with self._lock:
            return sorted(self._data)
