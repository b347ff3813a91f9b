"""SCNN model checkpoints.

Layout (little-endian)::

    "SCNN" | version u16 | header length u32 | header (UTF-8 JSON)
    | for each layer, for each tensor in declaration order:
      element count u64 | f64 values

The JSON header holds the network spec plus free-form metadata (leakage
model, target byte, standardization statistics).
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..tracestore import BadMagicError, FormatError, TruncatedError, VersionError
from .network import Model, NetworkSpec

MAGIC = b"SCNN"
VERSION = 1
PARAM_ORDER = ("W", "b")


def save_model(model: Model, path) -> None:
    header = {"spec": model.spec.to_dict(), "meta": model.meta}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for p in model.params:
            for name in PARAM_ORDER:
                if name in p:
                    arr = np.ascontiguousarray(p[name], dtype="<f8")
                    fh.write(struct.pack("<Q", arr.size))
                    fh.write(arr.tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        head = fh.read(10)
        if head[:4] != MAGIC:
            raise BadMagicError(f"bad magic {head[:4]!r}, expected {MAGIC!r}")
        if len(head) != 10:
            raise TruncatedError("truncated checkpoint header")
        version, hlen = struct.unpack("<HI", head[4:])
        if version != VERSION:
            raise VersionError(f"unsupported SCNN version {version}")
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise TruncatedError("truncated checkpoint header text")
        header = json.loads(blob.decode("utf-8"))
        spec = NetworkSpec.from_dict(header["spec"])
        # shapes come from a throwaway init; values are overwritten from the file
        template = spec.init_params(np.random.default_rng(0))
        params = []
        for p in template:
            loaded = {}
            for name in PARAM_ORDER:
                if name not in p:
                    continue
                raw = fh.read(8)
                if len(raw) != 8:
                    raise TruncatedError("truncated tensor header")
                (count,) = struct.unpack("<Q", raw)
                if count != p[name].size:
                    raise FormatError(f"tensor {name} has {count} elements, spec needs {p[name].size}")
                data = fh.read(8 * count)
                if len(data) != 8 * count:
                    raise TruncatedError("truncated tensor data")
                loaded[name] = np.frombuffer(data, dtype="<f8").reshape(p[name].shape).copy()
            params.append(loaded)
        if fh.read(1):
            raise FormatError("trailing bytes after the last tensor")
    return Model(spec, params, header.get("meta", {}))
