"""Mechanical privacy audit of a recorded transport log."""

from __future__ import annotations

import re

import numpy as np

from ..dataio.records import Dataset
from .messages import EmbeddingRequest, decode

_WORDISH = re.compile(rb"[0-9a-z]{4,}")


def audit_log(log, dataset: Dataset) -> list[str]:
    """Return a list of violations (empty when the log is clean).

    Checks, per frame: it decodes to one of the protocol message kinds (none of
    which has a token or text field); integer payloads are user ids within
    range; and no vocabulary word occurs as a byte string anywhere in it.
    """
    # words shorter than 4 bytes are indistinguishable from float noise and are not scanned
    words = {w.encode() for w in dataset.vocab.itos[2:] if len(w) >= 4}
    problems = []
    for entry in log:
        msg = decode(entry.frame)
        if isinstance(msg, EmbeddingRequest):
            ids = np.asarray(msg.user_ids)
            if ids.size and (ids.min() < 0 or ids.max() >= dataset.n_users):
                problems.append(f"message {entry.seq}: integer payload outside the user id range")
        for run in _WORDISH.findall(entry.frame):
            if run in words:
                problems.append(f"message {entry.seq}: contains vocabulary word {run.decode()!r}")
    return problems
