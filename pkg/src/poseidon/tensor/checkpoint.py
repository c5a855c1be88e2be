"""Versioned single-file model container.

Layout::

    MAGIC (8 bytes) | version u32 LE | header length u64 LE | header JSON (utf-8)
    | raw tensor payload (float64 LE, row-major, in header order)

The header carries the network specs, tensor table (name, shape, offset),
epoch counter and free-form metadata. JSON is dumped with sorted keys so the
same model always serializes to the same bytes.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .network import ModelState, NetworkSpec

MAGIC = b"POSDNCKP"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def _flatten_state(prefix, state: ModelState, table, chunks, offset):
    for name in sorted(state.params):
        offset = _add(f"{prefix}param/{name}", state.params[name], table, chunks, offset)
    for name in sorted(state.slots):
        for slot in sorted(state.slots[name]):
            offset = _add(f"{prefix}slot/{name}/{slot}", state.slots[name][slot], table, chunks, offset)
    return offset


def _add(key, arr, table, chunks, offset):
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    table.append({"name": key, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(data)})
    chunks.append(data)
    return offset + len(data)


def save_checkpoint(path, models: dict, epoch: int = 0, metadata: dict | None = None) -> None:
    """Write `models` ({name: (NetworkSpec | None, ModelState)}) to one file."""
    table, chunks, offset = [], [], 0
    specs = {}
    for mname in sorted(models):
        spec, state = models[mname]
        specs[mname] = spec.to_dict() if spec is not None else None
        offset = _flatten_state(f"{mname}/", state, table, chunks, offset)
    header = {"specs": specs, "tensors": table, "epoch": int(epoch), "metadata": metadata or {}}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(hbytes)))
        f.write(hbytes)
        for c in chunks:
            f.write(c)


def load_checkpoint(path):
    """Return (models, epoch, metadata) as written by save_checkpoint."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = 8 + 12
    header = json.loads(raw[start:start + hlen].decode("utf-8"))
    payload = memoryview(raw)[start + hlen:]
    models = {}
    for mname, sd in header["specs"].items():
        models[mname] = (NetworkSpec.from_dict(sd) if sd is not None else None, ModelState({}, {}))
    for entry in header["tensors"]:
        mname, kind, rest = entry["name"].split("/", 2)
        buf = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(entry["shape"])
        state = models[mname][1]
        if kind == "param":
            state.params[rest] = arr
        else:
            pname, slot = rest.rsplit("/", 1)
            state.slots.setdefault(pname, {})[slot] = arr
    for mname, (spec, state) in models.items():
        if spec is not None and set(spec.param_shapes()) != set(state.params):
            raise CheckpointError(f"{path}: parameters of {mname!r} do not match its spec")
    return models, header["epoch"], header["metadata"]
