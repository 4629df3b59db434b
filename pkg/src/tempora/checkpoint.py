"""Binary checkpoint format.

Layout::

    8 bytes   magic b"TEMPORA1"
    uint32le  format version
    uint32le  header length in bytes
    header    UTF-8 text, one ``key=value`` per line
    payload   tensors as little-endian float64, C order, in header order

The header lists model fields, free-form ``meta.*`` entries (sorted) and one
``tensor=NAME:d0,d1,...`` line per tensor. Saving the same model twice
produces identical bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rbm import RbmParams, UnitKind
from .temporal import CrbmParams, TrbmParams

MAGIC = b"TEMPORA1"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint."""


@dataclass
class Checkpoint:
    model: object
    meta: dict[str, str] = field(default_factory=dict)
    extra: dict[str, np.ndarray] = field(default_factory=dict)


def _model_fields(model):
    if isinstance(model, TrbmParams):
        kind, base, phase, order = "trbm", model.base, model.phase, model.order
    elif isinstance(model, CrbmParams):
        kind, base, phase, order = "crbm", model.base, model.phase, model.order
    elif isinstance(model, RbmParams):
        kind, base, phase, order = "rbm", model, "static", 0
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    tensors = dict(model.tensors())
    tensors["VAR"] = base.visible_variance
    fields = {
        "kind": kind,
        "phase": phase,
        "visible_kind": base.visible_kind.value,
        "n_visible": str(base.n_visible),
        "n_hidden": str(base.n_hidden),
        "order": str(order),
    }
    return fields, tensors


def _clean(text) -> str:
    s = str(text)
    if "\n" in s or "\r" in s:
        raise CheckpointError("header values may not contain newlines")
    return s


def to_bytes(model, meta: dict | None = None, extra: dict | None = None) -> bytes:
    fields, tensors = _model_fields(model)
    for name, arr in (extra or {}).items():
        if name in tensors:
            raise CheckpointError(f"extra tensor {name!r} clashes with a model tensor")
        tensors[name] = arr
    lines = [f"{k}={_clean(v)}" for k, v in fields.items()]
    lines += [f"meta.{k}={_clean(v)}" for k, v in sorted((meta or {}).items())]
    payload = []
    for name, arr in tensors.items():
        a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
        lines.append(f"tensor={name}:{','.join(str(d) for d in a.shape)}")
        payload.append(a.tobytes(order="C"))
    header = ("\n".join(lines) + "\n").encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + b"".join(payload)


def save_checkpoint(path, model, meta: dict | None = None, extra: dict | None = None):
    Path(path).write_bytes(to_bytes(model, meta, extra))


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise CheckpointError("not a tempora checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if 16 + hlen > len(blob):
        raise CheckpointError("truncated header")
    header = blob[16:16 + hlen].decode("utf-8")
    fields, meta, order_of_tensors = {}, {}, []
    for line in header.splitlines():
        if not line:
            continue
        key, _, value = line.partition("=")
        if key == "tensor":
            name, _, dims = value.partition(":")
            shape = tuple(int(d) for d in dims.split(",") if d != "")
            order_of_tensors.append((name, shape))
        elif key.startswith("meta."):
            meta[key[5:]] = value
        else:
            fields[key] = value
    tensors = {}
    offset = 16 + hlen
    for name, shape in order_of_tensors:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointError(f"truncated payload in tensor {name}")
        tensors[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(blob):
        raise CheckpointError("trailing bytes after payload")
    return Checkpoint(_build_model(fields, tensors), meta,
                      {k: v for k, v in tensors.items() if k not in _model_tensor_names(fields)})


def _model_tensor_names(fields) -> set[str]:
    names = {"W", "BV", "BH", "VAR"}
    order = int(fields.get("order", 0))
    names |= {f"W_DELAY_{d}" for d in range(1, order + 1)}
    if fields.get("kind") == "crbm":
        names |= {f"P_DELAY_{d}" for d in range(1, order + 1)}
    return names


def _build_model(fields, tensors):
    try:
        kind = fields["kind"]
        base = RbmParams(tensors["W"], tensors["BV"], tensors["BH"],
                         UnitKind.parse(fields["visible_kind"]), tensors["VAR"])
        if (base.n_visible, base.n_hidden) != (int(fields["n_visible"]), int(fields["n_hidden"])):
            raise CheckpointError("header sizes disagree with tensor shapes")
        order = int(fields["order"])
        if kind == "rbm":
            return base
        delayed = np.stack([tensors[f"W_DELAY_{d}"] for d in range(1, order + 1)])
        if kind == "trbm":
            return TrbmParams(base, delayed, fields.get("phase", "fresh"))
        if kind == "crbm":
            vv = np.stack([tensors[f"P_DELAY_{d}"] for d in range(1, order + 1)])
            return CrbmParams(base, delayed, vv, fields.get("phase", "fresh"))
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing {exc.args[0]!r}") from None
    raise CheckpointError(f"unknown model kind {fields.get('kind')!r}")


def load_checkpoint(path) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    return from_bytes(blob)


def describe(path) -> str:
    """Human-readable header summary."""
    blob = Path(path).read_bytes()
    ck = from_bytes(blob)
    version, hlen = struct.unpack("<II", blob[8:16])
    header = blob[16:16 + hlen].decode("utf-8")
    lines = [f"file: {path}", f"format: TEMPORA1 v{version}", f"bytes: {len(blob)}"]
    lines += ["  " + ln for ln in header.splitlines() if ln]
    lines.append(f"model: {type(ck.model).__name__}")
    return "\n".join(lines) + "\n"
