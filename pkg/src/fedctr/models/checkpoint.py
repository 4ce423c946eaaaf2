"""Checkpoints: one ``.npz`` archive of named parameter blocks plus a format version."""

from __future__ import annotations

from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_VERSION_KEY = "__format_version__"


def save_blocks(path, blocks: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    if _VERSION_KEY in blocks:
        raise KeyError(f"{_VERSION_KEY} is reserved")
    with open(path, "wb") as fh:
        np.savez(fh, **{_VERSION_KEY: np.array(FORMAT_VERSION)}, **blocks)
    return path


def load_blocks(path) -> dict[str, np.ndarray]:
    with np.load(Path(path), allow_pickle=False) as z:
        version = int(z[_VERSION_KEY])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {version}")
        return {k: z[k].copy() for k in z.files if k != _VERSION_KEY}


def save_module(path, module) -> Path:
    return save_blocks(path, module.named_blocks())


def load_module(path, module) -> None:
    """Copy stored blocks into ``module`` in place; names and shapes must match exactly."""
    stored = load_blocks(path)
    current = module.named_blocks()
    if set(stored) != set(current):
        missing = sorted(set(current) - set(stored))
        extra = sorted(set(stored) - set(current))
        raise KeyError(f"checkpoint mismatch: missing={missing[:5]} unexpected={extra[:5]}")
    for name, arr in current.items():
        if stored[name].shape != arr.shape:
            raise ValueError(f"shape mismatch for {name}: {stored[name].shape} vs {arr.shape}")
        arr[...] = stored[name]
