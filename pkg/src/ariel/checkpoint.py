"""Encoder + projection-head checkpoints.

Layout: a magic line ``ARIEL-CHECKPOINT 1``, one line of JSON metadata
listing every tensor as ``[name, shape]`` in storage order, then the tensors
back to back as little-endian float64. The writer is deterministic, so two
identical runs give byte-identical files.
"""

from __future__ import annotations

import json

import numpy as np

from .encoders import GcnEncoder, GinEncoder, GinStats, gin_layer_count
from .errors import ParseError
from .graphio import atomic_write_bytes
from .numkit import BatchNormState

MAGIC = b"ARIEL-CHECKPOINT 1\n"


class CheckpointError(ParseError):
    pass


def _tensors(encoder, head) -> list[tuple[str, np.ndarray]]:
    items = [("enc." + k, v) for k, v in encoder.params.items()]
    items += [("head." + k, v) for k, v in head.items()]
    if isinstance(encoder, GinEncoder):
        for i, s in enumerate(encoder.stats.layers):
            items.append((f"stats.L{i}.mean", s.running_mean))
            items.append((f"stats.L{i}.var", s.running_var))
    return items


def dump_checkpoint(encoder, head, meta: dict | None = None) -> bytes:
    items = _tensors(encoder, head)
    header = {
        "kind": encoder.kind,
        "activation": encoder.activation,
        "meta": meta or {},
        "tensors": [[name, list(arr.shape)] for name, arr in items],
    }
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in items)
    return MAGIC + json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + blob


def save_checkpoint(path, encoder, head, meta: dict | None = None) -> None:
    atomic_write_bytes(path, dump_checkpoint(encoder, head, meta))


def parse_checkpoint(data: bytes):
    if not data.startswith(MAGIC):
        raise CheckpointError("not an ARIEL checkpoint (bad magic line)")
    rest = data[len(MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(rest[:nl].decode("utf-8"))
        kind, activation = header["kind"], header["activation"]
        specs = [(str(n), tuple(int(s) for s in shape)) for n, shape in header["tensors"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed checkpoint header: {exc}") from None
    blob = rest[nl + 1:]
    expected = sum(int(np.prod(shape)) for _, shape in specs) * 8
    if len(blob) != expected:
        raise CheckpointError(f"checkpoint body has {len(blob)} bytes, expected {expected}")
    tensors, pos = {}, 0
    for name, shape in specs:
        size = int(np.prod(shape))
        tensors[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += size * 8
    enc = {k[4:]: v for k, v in tensors.items() if k.startswith("enc.")}
    head = {k[5:]: v for k, v in tensors.items() if k.startswith("head.")}
    if kind == "gcn":
        if set(enc) != {"W1", "W2"}:
            raise CheckpointError("GCN checkpoint must hold W1 and W2")
        encoder = GcnEncoder(enc, activation)
    elif kind == "gin":
        layers = gin_layer_count(enc)
        try:
            stats = GinStats(
                [BatchNormState(tensors[f"stats.L{i}.mean"], tensors[f"stats.L{i}.var"]) for i in range(layers)]
            )
        except KeyError as exc:
            raise CheckpointError(f"missing batch-norm statistics {exc}") from None
        encoder = GinEncoder(enc, stats, activation)
    else:
        raise CheckpointError(f"unknown encoder kind {kind!r}")
    if set(head) != {"W1", "b1", "W2", "b2"}:
        raise CheckpointError("projection head tensors missing")
    return encoder, head, header.get("meta", {})


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
