"""Length-prefixed JSON over TCP.

``WorkerServer`` answers ``eval`` messages for one worker object.
``MasterServer`` accepts ``register`` and ``heartbeat`` messages from remote
workers and registers a ``SocketEndpoint`` pointing back at them.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from typing import Optional, Tuple

from .master import Endpoint, Master
from .protocol import EvalRequest, EvalResult, ProtocolError, WorkerDescriptor, recv_msg, send_msg

logger = logging.getLogger(__name__)


def parse_address(text: str, default_host: str = "127.0.0.1") -> Tuple[str, int]:
    host, _, port = text.rpartition(":")
    return (host or default_host), int(port)


def request(addr: Tuple[str, int], msg_type: str, body: dict, timeout: Optional[float] = None) -> Tuple[str, dict]:
    with socket.create_connection(addr, timeout=timeout) as sock:
        send_msg(sock, msg_type, body)
        return recv_msg(sock)


class SocketEndpoint(Endpoint):
    def __init__(self, host: str, port: int, timeout: Optional[float] = None):
        self.addr = (host, port)
        self.timeout = timeout

    def call(self, req: EvalRequest) -> EvalResult:
        typ, body = request(self.addr, "eval", req.to_dict(), self.timeout)
        if typ == "error":
            raise RuntimeError(body.get("reason", "worker error"))
        if typ != "result":
            raise ProtocolError(f"unexpected reply {typ!r}")
        return EvalResult.from_dict(body)


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class _ThreadedServer:
    handler_cls = None

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                try:
                    typ, body = recv_msg(self.request)
                    rtyp, rbody = outer.on_message(typ, body)
                except (ConnectionError, ProtocolError) as e:
                    logger.warning("dropping connection: %s", e)
                    return
                except Exception as e:  # report handler failures to the caller
                    rtyp, rbody = "error", {"reason": f"{type(e).__name__}: {e}"}
                send_msg(self.request, rtyp, rbody)

        self._server = _Server((host, port), Handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self._server.server_address[:2]

    def on_message(self, typ: str, body: dict) -> Tuple[str, dict]:
        raise NotImplementedError

    def start(self) -> "_ThreadedServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self):
        self._server.serve_forever()

    def close(self):
        self._server.shutdown()
        self._server.server_close()


class WorkerServer(_ThreadedServer):
    def __init__(self, worker, host: str = "127.0.0.1", port: int = 0):
        super().__init__(host, port)
        self.worker = worker

    def on_message(self, typ, body):
        if typ == "eval":
            return "result", self.worker.handle(EvalRequest.from_dict(body)).to_dict()
        if typ == "ping":
            return "pong", self.worker.descriptor.to_dict()
        return "error", {"reason": f"unknown message type {typ!r}"}


class MasterServer(_ThreadedServer):
    def __init__(self, master: Master, host: str = "127.0.0.1", port: int = 0):
        super().__init__(host, port)
        self.master = master

    def on_message(self, typ, body):
        if typ == "register":
            desc = WorkerDescriptor.from_dict(body["descriptor"])
            host, port = body["endpoint"]
            lease = self.master.register(desc, SocketEndpoint(host, int(port)))
            return "lease", {"worker_id": lease.worker_id, "lease_timeout_s": self.master.lease_timeout_s,
                             "heartbeat_s": self.master.heartbeat_s}
        if typ == "heartbeat":
            self.master.heartbeat(body["worker_id"])
            return "ok", {}
        return "error", {"reason": f"unknown message type {typ!r}"}


def run_worker(worker, master_addr: Tuple[str, int], listen: Tuple[str, int] = ("127.0.0.1", 0),
               stop: Optional[threading.Event] = None) -> WorkerServer:
    """Serve ``worker``, register it with the master and keep its lease alive until ``stop`` is set."""
    server = WorkerServer(worker, *listen).start()
    host, port = server.address
    try:
        typ, body = request(master_addr, "register",
                            {"descriptor": worker.descriptor.to_dict(), "endpoint": [host, port]})
    except OSError:
        server.close()
        raise
    if typ != "lease":
        server.close()
        raise RuntimeError(f"registration refused: {body.get('reason', body)}")
    interval = float(body["heartbeat_s"])
    stop = stop or threading.Event()

    def beat():
        while not stop.wait(interval):
            try:
                request(master_addr, "heartbeat", {"worker_id": worker.worker_id}, timeout=interval)
            except OSError as e:
                logger.warning("heartbeat failed: %s", e)
        server.close()

    threading.Thread(target=beat, daemon=True, name=f"heartbeat-{worker.worker_id}").start()
    return server
