from __future__ import annotations

from pathlib import Path

import numpy as np

from .vocab import Vocab


def load_pretrained_embeddings(path, vocab: Vocab, table: np.ndarray) -> float:
    """Copy vectors for vocabulary tokens from a GloVe-style text file into ``table`` in place.

    Each line is a token followed by its vector components. Returns the
    fraction of (non-reserved) vocabulary tokens that were covered.
    """
    dim = table.shape[1]
    covered = set()
    with open(Path(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ValueError(f"{path}:{lineno}: vector has {len(values)} dims, table has {dim}")
            idx = vocab.stoi.get(token)
            if idx is None or idx < 2:
                continue
            table[idx] = np.array(values, dtype=np.float64)
            covered.add(idx)
    n = len(vocab) - 2
    return len(covered) / n if n else 0.0
