from __future__ import annotations

import re
from collections import Counter
from pathlib import Path
from typing import Iterable

PAD, OOV = 0, 1
PAD_TOKEN, OOV_TOKEN = "<pad>", "<oov>"

_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return [t for t in _SPLIT.split(text.lower()) if t]


def detokenize(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


class Vocab:
    """Token <-> id map with 0 = padding and 1 = out-of-vocabulary."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = [PAD_TOKEN, OOV_TOKEN]
        self.stoi: dict[str, int] = {PAD_TOKEN: PAD, OOV_TOKEN: OOV}
        for tok in tokens:
            if tok in self.stoi:
                raise ValueError(f"duplicate token {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    @classmethod
    def build(cls, counts: Counter | Iterable[Iterable[str]], max_size: int | None = None) -> "Vocab":
        """Most frequent tokens first, ties broken lexicographically; ``max_size`` includes the reserved ids."""
        if not isinstance(counts, Counter):
            c: Counter = Counter()
            for seq in counts:
                c.update(seq)
            counts = c
        ordered = sorted((t for t in counts if t not in (PAD_TOKEN, OOV_TOKEN)), key=lambda t: (-counts[t], t))
        if max_size is not None:
            ordered = ordered[: max(0, max_size - 2)]
        return cls(ordered)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.stoi.get(t, OOV) for t in tokens)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def encode_text(self, text: str) -> tuple[int, ...]:
        return self.encode(tokenize(text))

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if lines[:2] != [PAD_TOKEN, OOV_TOKEN]:
            raise ValueError(f"{path}: first two lines must be {PAD_TOKEN} and {OOV_TOKEN}")
        return cls(lines[2:])
