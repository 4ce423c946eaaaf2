from __future__ import annotations

from collections import OrderedDict

from .transport import ProtocolError


class TapeCache:
    """Forward tapes awaiting a gradient message, keyed by request id (LRU, bounded)."""

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._entries: OrderedDict[bytes, object] = OrderedDict()
        self.evicted = 0

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, request_id: bytes) -> bool:
        return request_id in self._entries

    def put(self, request_id: bytes, entry) -> None:
        if request_id in self._entries:
            raise ProtocolError(f"duplicate request id {request_id.hex()}")
        self._entries[request_id] = entry
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)
            self.evicted += 1

    def take(self, request_id: bytes):
        try:
            return self._entries.pop(request_id)
        except KeyError:
            raise ProtocolError(f"no pending forward pass for request id {request_id.hex()}") from None
