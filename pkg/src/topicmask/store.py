"""Byte-deterministic artifact storage: JSON metadata plus .npy arrays.

.npy files carry no timestamps, so repeated saves of identical data are
byte-identical (zip-based formats are not).
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def canonical_json(obj) -> str:
    """JSON with sorted keys and fixed separators; stable across runs."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_json(path: Path | str, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_json(path: Path | str):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path | str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_tree(path: Path | str) -> str:
    """Hash of a file, or of a directory's files (names + contents)."""
    p = Path(path)
    if p.is_file():
        return sha256_file(p)
    h = hashlib.sha256()
    for sub in sorted(p.rglob("*")):
        if sub.is_file():
            h.update(sub.relative_to(p).as_posix().encode())
            h.update(bytes.fromhex(sha256_file(sub)))
    return h.hexdigest()


def save_arrays(dirpath: Path | str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write meta.json plus one .npy file per named array."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_json(d / "meta.json", meta)
    for name, arr in arrays.items():
        np.save(d / f"{name}.npy", np.ascontiguousarray(arr))


def load_arrays(dirpath: Path | str) -> tuple[dict, dict[str, np.ndarray]]:
    d = Path(dirpath)
    meta = read_json(d / "meta.json")
    arrays = {p.stem: np.load(p) for p in sorted(d.glob("*.npy"))}
    return meta, arrays
