"""Forward tape: the ordered record of cached activations used by backward passes."""

from __future__ import annotations

from typing import Any


class TapeError(RuntimeError):
    pass


class ForwardTape:
    """Stack of ``(owner, cache)`` records written during a forward pass.

    Backward passes walk the records in reverse order. Each record is handed
    out exactly once; asking for a record that belongs to a different owner,
    or walking past the start, raises :class:`TapeError`.
    """

    def __init__(self, seed: int | None = None):
        self.seed = seed
        self._records: list[tuple[Any, Any]] = []
        self._cursor: int | None = None
        self.sealed = False

    def __len__(self) -> int:
        return len(self._records)

    def push(self, owner: Any, cache: Any) -> None:
        if self.sealed:
            raise TapeError("tape is sealed; forward pass already completed")
        self._records.append((owner, cache))

    def seal(self) -> "ForwardTape":
        self.sealed = True
        return self

    def pop(self, owner: Any) -> Any:
        if self._cursor is None:
            self.sealed = True
            self._cursor = len(self._records)
        if self._cursor == 0:
            raise TapeError(f"tape exhausted while looking for a record of {owner!r}")
        rec_owner, cache = self._records[self._cursor - 1]
        if rec_owner is not owner:
            raise TapeError(
                f"tape/params mismatch: expected a record of {owner!r}, found {rec_owner!r}"
            )
        self._cursor -= 1
        return cache

    def peek(self, owner: Any) -> Any:
        """Most recent record written by ``owner`` without consuming anything."""
        end = len(self._records) if self._cursor is None else self._cursor
        for rec_owner, cache in reversed(self._records[:end]):
            if rec_owner is owner:
                return cache
        raise TapeError(f"no record of {owner!r} on tape")

    @property
    def consumed(self) -> bool:
        return self._cursor == 0

    def records(self) -> list[tuple[Any, Any]]:
        return list(self._records)
