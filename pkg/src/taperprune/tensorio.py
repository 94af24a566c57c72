"""Versioned container of named tensors.

Stored as an ``.npz`` archive: each array keeps its own ``.npy`` header
(dtype including byte order, shape) and a ``__meta__`` entry carries a JSON
document with the container format name and version plus free-form metadata.
"""

from __future__ import annotations

import io
import json
import os
import sys
from pathlib import Path

import numpy as np

FORMAT = "taperprune-tensors"
VERSION = 1


class ContainerError(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    header = {
        "format": FORMAT,
        "version": VERSION,
        "byteorder": sys.byteorder,
        "dtypes": {k: np.asarray(v).dtype.str for k, v in tensors.items()},
        "meta": meta or {},
    }
    arrays = {f"t/{k}": np.asarray(v) for k, v in tensors.items()}
    arrays["__meta__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)
    return path


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(Path(path), allow_pickle=False) as z:
        if "__meta__" not in z:
            raise ContainerError(f"{path}: missing container header")
        header = json.loads(z["__meta__"].tobytes().decode())
        if header.get("format") != FORMAT:
            raise ContainerError(f"{path}: not a {FORMAT} container")
        if header.get("version", 0) > VERSION:
            raise ContainerError(f"{path}: container version {header['version']} is newer than supported {VERSION}")
        tensors = {k[2:]: z[k] for k in z.files if k.startswith("t/")}
    return tensors, header.get("meta", {})
