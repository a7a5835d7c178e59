"""Client-side connection to a store server.

A Connection carries one request/response exchange at a time; callers that
want parallelism open more connections.  Not thread-safe: one logical user
per connection.
"""

from __future__ import annotations

import socket
import struct

from . import protocol
from .errors import ProtocolError, ServerRejected, TransportError
from .protocol import Buffer, Opcode, Request, Response, Status
from .server import parse_endpoint, read_frame


class Connection:
    def __init__(self, endpoint: str, timeout: float | None = 30.0):
        self.endpoint = endpoint
        host, port = parse_endpoint(endpoint)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(endpoint, f"connect failed: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def request(self, req: Request) -> Response:
        """Send one request and block for its response."""
        header = struct.pack(
            "<4sBI", protocol.MAGIC, req.opcode, len(req.key)
        ) + req.key + struct.pack("<Q", len(req.value))
        try:
            self._sock.sendall(header)
            if req.value:
                self._sock.sendall(req.value)
            frame = read_frame(self._sock)
        except ProtocolError as exc:
            raise TransportError(self.endpoint, f"garbled response: {exc}") from exc
        except OSError as exc:
            raise TransportError(self.endpoint, f"request failed: {exc}") from exc
        if frame is None:
            raise TransportError(self.endpoint, "server closed the connection")
        op, key, value = frame
        try:
            status = Status(op)
        except ValueError:
            raise TransportError(self.endpoint, f"unknown status byte {op}") from None
        if key:
            raise TransportError(self.endpoint, "response carried a key")
        return Response(status, value)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # Convenience wrappers used throughout the clients.  Each raises
    # ServerRejected on statuses the caller did not ask to tolerate.

    def put(self, key: bytes, value: Buffer) -> None:
        resp = self.request(Request(Opcode.PUT, key, value))
        if resp.status is not Status.OK:
            raise ServerRejected(self.endpoint, key, resp.status, resp.value.decode("ascii", "replace"))

    def get(self, key: bytes) -> Buffer | None:
        resp = self.request(Request(Opcode.GET, key))
        if resp.status is Status.NOT_FOUND:
            return None
        if resp.status is not Status.OK:
            raise ServerRejected(self.endpoint, key, resp.status)
        return resp.value

    def exists(self, key: bytes) -> bool:
        resp = self.request(Request(Opcode.EXISTS, key))
        if resp.status is Status.OK:
            return True
        if resp.status is Status.NOT_FOUND:
            return False
        raise ServerRejected(self.endpoint, key, resp.status)

    def delete(self, key: bytes) -> bool:
        resp = self.request(Request(Opcode.DELETE, key))
        if resp.status is Status.OK:
            return True
        if resp.status is Status.NOT_FOUND:
            return False
        raise ServerRejected(self.endpoint, key, resp.status)

    def list_prefix(self, prefix: bytes) -> list[bytes]:
        resp = self.request(Request(Opcode.LIST, prefix))
        if resp.status is not Status.OK:
            raise ServerRejected(self.endpoint, prefix, resp.status)
        return bytes(resp.value).split(b"\n") if resp.value else []

    def status_line(self) -> str:
        resp = self.request(Request(Opcode.STATUS))
        if resp.status is not Status.OK:
            raise ServerRejected(self.endpoint, b"", resp.status)
        return resp.value.decode("ascii")

    def ping(self) -> None:
        resp = self.request(Request(Opcode.PING))
        if resp.status is not Status.OK:
            raise ServerRejected(self.endpoint, b"", resp.status)
