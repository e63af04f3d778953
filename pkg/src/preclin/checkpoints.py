"""Self-describing binary checkpoints for trained models.

Layout: 8-byte magic, little-endian uint32 header length, UTF-8 JSON
header, then every parameter tensor as little-endian float32 in the
order listed under ``params`` in the header.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .errors import VolumeFormatError

MAGIC = b"PRECLIN1"


def save_checkpoint(path, model: torch.nn.Module, header: dict) -> None:
    """Write ``model``'s parameters plus a JSON header to ``path``.

    ``header`` must carry at least ``kind`` and ``config``; the parameter
    name/shape table is appended here so loading never depends on module
    import order.
    """
    state = model.state_dict()
    names = sorted(state)
    meta = dict(header)
    meta["params"] = [{"name": n, "shape": list(state[n].shape)} for n in names]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        for n in names:
            fh.write(state[n].detach().cpu().numpy().astype("<f4").tobytes())


def load_checkpoint(path) -> tuple[dict, dict]:
    """Read a checkpoint, returning (header, state_dict of float32 tensors)."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise VolumeFormatError(f"{path} is not a checkpoint (bad magic)")
    off = len(MAGIC)
    (hlen,) = np.frombuffer(raw[off:off + 4], dtype="<u4")
    off += 4
    if off + int(hlen) > len(raw):
        raise VolumeFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + int(hlen)].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VolumeFormatError(f"{path}: corrupt header: {exc}") from exc
    off += int(hlen)
    if "params" not in header or not isinstance(header["params"], list):
        raise VolumeFormatError(f"{path}: header missing params table")
    state = {}
    for entry in header["params"]:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 4 * count
        if off + nbytes > len(raw):
            raise VolumeFormatError(f"{path}: truncated parameter blob")
        arr = np.frombuffer(raw[off:off + nbytes], dtype="<f4").reshape(shape)
        state[entry["name"]] = torch.from_numpy(arr.copy())
        off += nbytes
    if off != len(raw):
        raise VolumeFormatError(f"{path}: {len(raw) - off} trailing bytes")
    return header, state
