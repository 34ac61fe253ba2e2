"""Versioned ``.npz`` container shared by model and dataset checkpoints.

Layout: one JSON header array ``__header__`` holding ``{"format", "version",
"kind", "meta"}`` plus any number of named numpy arrays.  Arrays are stored
verbatim, so a save/load round trip is bit-exact.
"""
from __future__ import annotations

import json
import os

import numpy as np

FORMAT = "convtran-container"
VERSION = 1
_HEADER = "__header__"


def save_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    if _HEADER in arrays:
        raise ValueError(f"array name {_HEADER!r} is reserved")
    header = json.dumps({"format": FORMAT, "version": VERSION, "kind": kind, "meta": meta})
    path = os.fspath(path)
    with open(path, "wb") as fh:
        np.savez(fh, **{_HEADER: np.array(header)}, **arrays)


def load_container(path, kind: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Return ``(meta, arrays)``; checks format, version and (optionally) kind."""
    with np.load(os.fspath(path), allow_pickle=False) as npz:
        if _HEADER not in npz.files:
            raise ValueError(f"{path}: not a {FORMAT} file")
        header = json.loads(str(npz[_HEADER]))
        arrays = {name: npz[name] for name in npz.files if name != _HEADER}
    if header.get("format") != FORMAT:
        raise ValueError(f"{path}: unexpected format {header.get('format')!r}")
    if header.get("version") != VERSION:
        raise ValueError(f"{path}: unsupported container version {header.get('version')}")
    if kind is not None and header.get("kind") != kind:
        raise ValueError(f"{path}: expected a {kind!r} container, found {header.get('kind')!r}")
    return header["meta"], arrays
