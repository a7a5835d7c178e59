import subprocess
import sys

import pytest

from stagex.server import ServerConfig, StoreServer


@pytest.fixture
def local_server():
    """In-process store server on an ephemeral port; yields the endpoint."""
    server = StoreServer(ServerConfig(host="127.0.0.1", port=0))
    endpoint = server.start_background()
    yield endpoint
    server.stop()


@pytest.fixture
def local_servers():
    """Factory for any number of in-process servers."""
    started = []

    def spawn(n=1, max_memory=0):
        eps = []
        for _ in range(n):
            server = StoreServer(
                ServerConfig(host="127.0.0.1", port=0, max_memory=max_memory)
            )
            started.append(server)
            eps.append(server.start_background())
        return eps

    yield spawn
    for server in started:
        server.stop()


def spawn_server_process(*extra_args):
    """Launch `stagex serve` as a real OS process; returns (proc, endpoint)."""
    proc = subprocess.Popen(
        [sys.executable, "-m", "stagex.cli", "serve", "--bind", "127.0.0.1:0", *extra_args],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    line = proc.stdout.readline().strip()
    if not line.startswith("READY "):
        proc.kill()
        raise RuntimeError(f"server did not report READY: {line!r}")
    return proc, line.split(" ", 1)[1]
