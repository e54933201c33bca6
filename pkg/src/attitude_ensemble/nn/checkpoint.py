"""Checkpoint files: a UTF-8 JSON header followed by a raw little-endian float32 blob.

File layout::

    ATTENS-CHECKPOINT\n
    <JSON header, UTF-8>\n
    END-HEADER\n
    <blob>

The header lists every tensor with its name, shape, byte offset into the
blob and byte length, so offsets never depend on anything but the header.
Tensors are stored layer by layer; within a layer the order is

* conv: weight (out_ch, in_ch, k, k), bias (out_ch)
* batchnorm: gamma, beta, running_mean, running_var (each n_features)
* dense: weight (in_dim, out_dim), bias (out_dim)

all in C order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ParseError
from .network import Network, NetworkSpec

MAGIC = b"ATTENS-CHECKPOINT\n"
END = b"\nEND-HEADER\n"
FORMAT_VERSION = 1
_BLOB_DTYPE = np.dtype("<f4")


def _tensors(net: Network):
    for i, layer in enumerate(net.layers):
        for key in layer.params:
            yield f"{i}.{layer.kind}.{key}", layer.params, key
        for key in layer.buffers:
            yield f"{i}.{layer.kind}.{key}", layer.buffers, key


def to_bytes(net: Network, metadata: dict | None = None) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, store, key in _tensors(net):
        data = np.ascontiguousarray(store[key], dtype=_BLOB_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(store[key].shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {
        "format_version": FORMAT_VERSION,
        "dtype": "float32-le",
        "network": net.spec.to_text(),
        "network_layers": net.spec.to_dict(),
        "seed": net.seed,
        "metadata": metadata if metadata is not None else dict(net.meta),
        "tensors": entries,
        "blob_bytes": offset,
    }
    text = json.dumps(header, indent=1, sort_keys=True).encode("utf-8")
    return MAGIC + text + END + b"".join(chunks)


def save(net: Network, path, metadata: dict | None = None) -> None:
    Path(path).write_bytes(to_bytes(net, metadata))


def read_header(path) -> tuple[dict, int]:
    """Return (header, blob start offset)."""
    data = Path(path).read_bytes()
    return _split(data, path)[:2]


def _split(data: bytes, path):
    if not data.startswith(MAGIC):
        raise ParseError("not a checkpoint file (bad magic)", path=path, line=1)
    end = data.find(END, len(MAGIC))
    if end < 0:
        raise ParseError("checkpoint header is not terminated", path=path)
    try:
        header = json.loads(data[len(MAGIC) : end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad checkpoint header: {exc}", path=path) from exc
    start = end + len(END)
    return header, start, data


def load(path, dtype=np.float32) -> Network:
    header, start, data = _split(Path(path).read_bytes(), path)
    if header.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported checkpoint version {header.get('format_version')}", path=path)
    blob = data[start:]
    expected = sum(e["nbytes"] for e in header["tensors"])
    if expected != header["blob_bytes"] or len(blob) != expected:
        raise ParseError(f"blob is {len(blob)} bytes, header accounts for {expected}", path=path)
    spec = NetworkSpec.from_text(header["network"])
    net = Network(spec, seed=header.get("seed", 0), dtype=dtype)
    stores = {name: (store, key) for name, store, key in _tensors(net)}
    if set(stores) != {e["name"] for e in header["tensors"]}:
        raise ParseError("tensor list does not match the network spec", path=path)
    for e in header["tensors"]:
        store, key = stores[e["name"]]
        shape = tuple(e["shape"])
        if shape != store[key].shape or e["nbytes"] != int(np.prod(shape)) * _BLOB_DTYPE.itemsize:
            raise ParseError(f"tensor {e['name']} has shape {shape}, expected {store[key].shape}", path=path)
        arr = np.frombuffer(blob, dtype=_BLOB_DTYPE, count=int(np.prod(shape)), offset=e["offset"])
        store[key] = arr.reshape(shape).astype(dtype)
    net.meta = dict(header.get("metadata", {}))
    return net
