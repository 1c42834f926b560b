"""Messages exchanged between the master and workers, and their wire framing.

A frame is a 4-byte big-endian length followed by one UTF-8 JSON document
with sorted keys. Every document carries ``protocol_version``.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import asdict, dataclass, field
from typing import Dict, Tuple

PROTOCOL_VERSION = 1
MAX_FRAME = 64 * 1024 * 1024

SIMULATION = "simulation"
HARDWARE_DB = "hardware_db"
PHYSICAL = "physical"
WORKER_KINDS = (SIMULATION, HARDWARE_DB, PHYSICAL)

# objective -> worker kind that can measure it
OBJECTIVE_ROUTES: Dict[str, str] = {
    "accuracy": SIMULATION,
    "outputs_per_s": HARDWARE_DB,
    "latency_s": HARDWARE_DB,
    "effective_gops": HARDWARE_DB,
    "potential_gops": HARDWARE_DB,
    "efficiency": HARDWARE_DB,
    "total_time_s": HARDWARE_DB,
    "flops": HARDWARE_DB,
    "alm": PHYSICAL,
    "m20k": PHYSICAL,
    "dsp": PHYSICAL,
    "fmax": PHYSICAL,
}
PHYSICAL_FIELDS = ("alm", "m20k", "dsp", "fmax")


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvalRequest:
    job_id: str
    candidate: dict
    objectives: Tuple[str, ...]
    dataset: str = ""
    split: dict = field(default_factory=lambda: {"mode": "split", "test_fraction": 0.2, "seed": 0})
    target: str = ""
    target_overrides: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    total_inputs: int = 10000

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objectives"] = list(self.objectives)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRequest":
        d = dict(d)
        d["objectives"] = tuple(d["objectives"])
        return cls(**d)

    def for_kind(self, kind: str) -> "EvalRequest":
        objs = tuple(o for o in self.objectives if OBJECTIVE_ROUTES.get(o) == kind)
        return EvalRequest(**{**self.to_dict(), "job_id": f"{self.job_id}/{kind}", "objectives": objs})


@dataclass(frozen=True)
class EvalResult:
    job_id: str
    status: str
    objectives: Dict[str, float] = field(default_factory=dict)
    reason: str = ""
    timings: Dict[str, float] = field(default_factory=dict)
    worker_id: str = ""
    worker_kind: str = ""
    payload: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalResult":
        return cls(**d)


@dataclass(frozen=True)
class WorkerDescriptor:
    worker_id: str
    kind: str
    datasets: Tuple[str, ...] = ()
    targets: Tuple[str, ...] = ()
    slots: int = 1
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self):
        if self.kind not in WORKER_KINDS:
            raise ValueError(f"unknown worker kind {self.kind!r}")
        if self.slots < 0:
            raise ValueError("slots must be >= 0")
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "targets", tuple(self.targets))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["datasets"], d["targets"] = list(self.datasets), list(self.targets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorkerDescriptor":
        return cls(**d)

    def can_serve(self, req: EvalRequest) -> bool:
        if self.kind == SIMULATION:
            return req.dataset in self.datasets
        if self.kind == HARDWARE_DB:
            return req.target in self.targets
        return True


def encode(msg_type: str, body: dict) -> bytes:
    doc = {"protocol_version": PROTOCOL_VERSION, "type": msg_type, "body": body}
    data = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(data)) + data


def decode(frame: bytes) -> Tuple[str, dict]:
    if len(frame) < 4:
        raise ProtocolError("short frame")
    (n,) = struct.unpack(">I", frame[:4])
    if len(frame) - 4 != n:
        raise ProtocolError(f"frame length {len(frame) - 4} != declared {n}")
    return _parse(frame[4:])


def _parse(data: bytes) -> Tuple[str, dict]:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as e:
        raise ProtocolError(f"malformed frame: {e}") from None
    if not isinstance(doc, dict) or "type" not in doc or "body" not in doc:
        raise ProtocolError("frame is not a typed message")
    if doc.get("protocol_version") != PROTOCOL_VERSION:
        raise ProtocolError(f"protocol version {doc.get('protocol_version')} != {PROTOCOL_VERSION}")
    return doc["type"], doc["body"]


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def send_msg(sock: socket.socket, msg_type: str, body: dict):
    sock.sendall(encode(msg_type, body))


def recv_msg(sock: socket.socket) -> Tuple[str, dict]:
    (n,) = struct.unpack(">I", _recv_exact(sock, 4))
    if n > MAX_FRAME:
        raise ProtocolError(f"frame of {n} bytes exceeds limit")
    return _parse(_recv_exact(sock, n))
