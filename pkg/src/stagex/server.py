"""Standalone TCP store server.

Each server process owns one MemoryStore and answers wire-protocol frames.
Connections are handled concurrently (one thread each); requests on a single
connection are served strictly in order, one in flight at a time.
"""

from __future__ import annotations

import ctypes
import logging
import signal
import socket
import socketserver
import struct
import sys
import threading
from dataclasses import dataclass

from . import protocol
from .errors import ProtocolError
from .protocol import Response, Status
from .store import MemoryStore

log = logging.getLogger(__name__)

_RECV_CHUNK = 1 << 20


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 0
    max_memory: int = 0
    provider_id: int = 0  # accepted for config compatibility, unused

    @classmethod
    def from_bind(cls, bind: str, max_memory: int = 0) -> "ServerConfig":
        host, port = parse_endpoint(bind)
        return cls(host=host, port=port, max_memory=max_memory)


def parse_endpoint(addr: str) -> tuple[str, int]:
    """Split ``host:port`` (optionally ``[v6addr]:port``) into parts."""
    host, sep, port = addr.rpartition(":")
    if not sep or not host:
        raise ValueError(f"endpoint {addr!r} is not host:port")
    if host.startswith("[") and host.endswith("]"):
        host = host[1:-1]
    try:
        return host, int(port)
    except ValueError:
        raise ValueError(f"endpoint {addr!r} has a non-numeric port") from None


def tune_malloc_for_large_values(single_arena: bool = False) -> bool:
    """Keep multi-MiB value buffers recyclable instead of mmap-churned.

    glibc sends allocations above its mmap threshold (dynamic, capped at
    32 MiB) straight to mmap and unmaps them on free, so every large
    request pays page faults plus zero-fill.  Raising the threshold and
    the trim floor lets freed blocks stay hot in the heap.  single_arena
    additionally funnels worker-thread allocations into the main heap,
    the only arena that can recycle blocks past the per-thread heap size;
    malloc then serializes across threads, a fine trade for a process
    whose requests are large memcpys.  Returns False (no-op) off glibc.
    """
    try:
        libc = ctypes.CDLL("libc.so.6", use_errno=True)
        ok = libc.mallopt(-3, 512 * 2**20) == 1  # M_MMAP_THRESHOLD
        ok &= libc.mallopt(-1, 2**30) == 1  # M_TRIM_THRESHOLD
        if single_arena:
            ok &= libc.mallopt(-8, 1) == 1  # M_ARENA_MAX
        return bool(ok)
    except (OSError, AttributeError):
        return False


def recv_exact(sock: socket.socket, n: int) -> bytearray:
    """Read exactly n bytes or raise ConnectionError on EOF.

    Returns the receive buffer itself rather than an immutable copy; the
    caller owns it.  Skipping that copy halves the allocator traffic for
    large values, which dominates wall time past the L3 boundary.
    """
    buf = bytearray(n)
    view = memoryview(buf)
    pos = 0
    while pos < n:
        got = sock.recv_into(view[pos : pos + min(_RECV_CHUNK, n - pos)])
        if got == 0:
            raise ConnectionError(f"peer closed mid-frame ({pos}/{n} bytes)")
        pos += got
    return buf


def read_frame(sock: socket.socket) -> tuple[int, bytes, protocol.Buffer] | None:
    """Read one frame from a socket; None on clean EOF at a frame boundary."""
    first = sock.recv(protocol.HEADER_LEN)
    if not first:
        return None
    while len(first) < protocol.HEADER_LEN:
        more = sock.recv(protocol.HEADER_LEN - len(first))
        if not more:
            raise ConnectionError("peer closed mid-frame (header)")
        first += more
    magic, op, key_len = struct.unpack("<4sBI", first)
    if magic != protocol.MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if key_len > protocol.MAX_KEY_LEN:
        raise ProtocolError(f"key length {key_len} exceeds {protocol.MAX_KEY_LEN}")
    # keys become dict keys, so they must be immutable; values stay as the
    # receive buffer
    key = bytes(recv_exact(sock, key_len)) if key_len else b""
    (val_len,) = struct.unpack("<Q", recv_exact(sock, 8))
    if val_len > protocol.MAX_VAL_LEN:
        raise ProtocolError(f"value length {val_len} exceeds {protocol.MAX_VAL_LEN}")
    value = recv_exact(sock, val_len) if val_len else b""
    return op, key, value


def send_response(sock: socket.socket, resp: Response) -> None:
    # Header and payload sent separately so big values are never re-copied.
    sock.sendall(struct.pack("<4sBIQ", protocol.MAGIC, resp.status, 0, len(resp.value)))
    if resp.value:
        sock.sendall(resp.value)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        store: MemoryStore = self.server.store
        while True:
            try:
                frame = read_frame(sock)
            except ProtocolError as exc:
                send_response(sock, Response(Status.MALFORMED, str(exc).encode()))
                return  # close the connection after a malformed frame
            except (ConnectionError, OSError):
                return
            if frame is None:
                return
            op, key, value = frame
            try:
                req = protocol._request_from_parts(op, key, value)
            except ProtocolError as exc:
                send_response(sock, Response(Status.MALFORMED, str(exc).encode()))
                return
            try:
                resp = store.handle(req)
            except Exception as exc:  # never kill the connection thread silently
                log.exception("request handling failed")
                resp = Response(Status.SERVER_ERROR, str(exc).encode())
            try:
                send_response(sock, resp)
            except (ConnectionError, OSError):
                return


class StoreServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server around a MemoryStore.

    Usable in-process (`start_background()` / `shutdown()`) or as the
    blocking body of the ``stagex serve`` command.
    """

    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 64

    def __init__(self, config: ServerConfig):
        self.config = config
        self.store = MemoryStore(max_memory=config.max_memory)
        self._conns: set[socket.socket] = set()
        self._conns_lock = threading.Lock()
        super().__init__((config.host, config.port), _Handler)
        self._thread: threading.Thread | None = None

    # track live connections so stop() can sever them; a stopped server
    # must go quiet even for clients that connected earlier
    def process_request(self, request, client_address):
        with self._conns_lock:
            self._conns.add(request)
        super().process_request(request, client_address)

    def shutdown_request(self, request):
        with self._conns_lock:
            self._conns.discard(request)
        super().shutdown_request(request)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> str:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()
        return self.endpoint

    def stop(self) -> None:
        self.shutdown()
        self.server_close()
        with self._conns_lock:
            victims = list(self._conns)
        for sock in victims:
            try:
                sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        if self._thread is not None:
            self._thread.join(timeout=5)


def serve(config: ServerConfig) -> int:
    """Run a server until SIGTERM/SIGINT; prints READY once listening.

    The READY line carries the actual bound endpoint so launch scripts can
    harvest it even when port 0 (ephemeral) was requested.
    """
    tune_malloc_for_large_values(single_arena=True)
    try:
        server = StoreServer(config)
    except OSError as exc:
        print(f"ERROR cannot bind {config.host}:{config.port}: {exc}", file=sys.stderr)
        return 1
    stop = threading.Event()

    def _on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, _on_signal)
    signal.signal(signal.SIGINT, _on_signal)

    server.start_background()
    print(f"READY {server.endpoint}", flush=True)
    try:
        stop.wait()
    finally:
        server.stop()
    return 0
