"""In-process transports. Delivery is synchronous and strictly serial."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .messages import FedMessage, decode, encode, payload_shapes


class ProtocolError(RuntimeError):
    pass


class PartyUnavailable(ProtocolError):
    pass


@dataclass(frozen=True)
class PartyId:
    role: str
    index: int = 0

    ROLES = ("ad_platform", "user_server", "behavior_platform")

    def __post_init__(self):
        if self.role not in self.ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "behavior_platform" and self.index < 1:
            raise ValueError("behavior platform indices start at 1")

    def __str__(self) -> str:
        return f"{self.role}[{self.index}]" if self.role == "behavior_platform" else self.role


AD_PLATFORM = PartyId("ad_platform")
USER_SERVER = PartyId("user_server")


def platform_id(i: int) -> PartyId:
    return PartyId("behavior_platform", i)


@dataclass(frozen=True)
class Receipt:
    seq: int
    nbytes: int
    reply: FedMessage | None = None


@dataclass(frozen=True)
class LogEntry:
    seq: int
    src: PartyId
    dst: PartyId
    kind: str
    request_id: bytes
    shape: tuple
    nbytes: int
    frame: bytes = field(repr=False)


class InProcessTransport:
    """Delivers every message as a freshly decoded copy of its wire frame."""

    def __init__(self):
        self.parties: dict[PartyId, object] = {}
        self.offline: set[PartyId] = set()
        self.seq = 0
        self.taps: list[Callable[[PartyId, PartyId, FedMessage], None]] = []

    def register(self, pid: PartyId, party) -> None:
        if pid in self.parties:
            raise ValueError(f"{pid} already registered")
        self.parties[pid] = party

    def _deliver(self, src: PartyId, dst: PartyId, msg: FedMessage) -> tuple[FedMessage, int]:
        frame = encode(msg)
        delivered = decode(frame)
        self.seq += 1
        self._record(src, dst, delivered, frame)
        for tap in self.taps:
            tap(src, dst, delivered)
        return delivered, len(frame)

    def _record(self, src, dst, msg, frame) -> None:
        pass

    def send(self, src: PartyId, dst: PartyId, msg: FedMessage) -> Receipt:
        for pid in (src, dst):
            if pid not in self.parties:
                raise ProtocolError(f"unknown party {pid}")
        if dst in self.offline:
            raise PartyUnavailable(f"{dst} did not respond")
        delivered, nbytes = self._deliver(src, dst, msg)
        seq = self.seq
        reply = self.parties[dst].receive(src, delivered)
        if reply is not None:
            reply, _ = self._deliver(dst, src, reply)
        return Receipt(seq, nbytes, reply)


class RecordingTransport(InProcessTransport):
    """Also keeps a log entry (kind, shape, byte count, raw frame) for every message."""

    def __init__(self):
        super().__init__()
        self.log: list[LogEntry] = []

    def _record(self, src, dst, msg, frame) -> None:
        self.log.append(LogEntry(self.seq, src, dst, type(msg).__name__, msg.request_id, payload_shapes(msg), len(frame), frame))

    def clear(self) -> None:
        self.log.clear()
