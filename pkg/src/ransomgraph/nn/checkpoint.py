"""Versioned binary checkpoints.

Layout (little endian)::

    magic  b"RGCKPT\\0\\0"
    u32    format version
    u64    header length, then UTF-8 JSON header (sorted keys)
    u32    tensor count
    per tensor: u16 name length, name, u8 ndim, ndim x u64 dims, f64 payload

The header carries the model config and any run metadata. Loading a model
against an expected config refuses on mismatch.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import torch

from .model import AlertGraphModel, ModelConfig

MAGIC = b"RGCKPT\0\0"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ConfigMismatchError(CheckpointError):
    pass


def write_checkpoint(path: str | Path, header: Mapping[str, Any], tensors: Mapping[str, torch.Tensor]) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    head = json.dumps(dict(header), sort_keys=True, separators=(",", ":")).encode()
    buf.write(struct.pack("<Q", len(head)))
    buf.write(head)
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = tensors[name].detach().to(torch.float64).contiguous().numpy()
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.astype("<f8").tobytes())
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)


def read_checkpoint(path: str | Path) -> tuple[dict[str, Any], dict[str, torch.Tensor]]:
    data = Path(path).read_bytes()
    view = memoryview(data)
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    pos = 8
    (version,) = struct.unpack_from("<I", data, pos)
    pos += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(bytes(view[pos:pos + hlen]))
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = bytes(view[pos:pos + nlen]).decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
        tensors[name] = torch.from_numpy(arr)
    if pos != len(data):
        raise CheckpointError(f"{path}: trailing bytes")
    return header, tensors


def model_tensors(model: AlertGraphModel) -> dict[str, torch.Tensor]:
    return {f"model/{k}": v for k, v in model.state_dict().items()}


def save_model(path: str | Path, model: AlertGraphModel, meta: Mapping[str, Any] | None = None,
               extra: Mapping[str, torch.Tensor] | None = None) -> None:
    header = {"model_config": model.config.to_dict(), "meta": dict(meta or {})}
    tensors = model_tensors(model)
    if extra:
        tensors.update(extra)
    write_checkpoint(path, header, tensors)


def restore_model(model: AlertGraphModel, tensors: Mapping[str, torch.Tensor]) -> None:
    state = {k[len("model/"):]: v for k, v in tensors.items() if k.startswith("model/")}
    missing, unexpected = model.load_state_dict(state, strict=False)
    if missing or unexpected:
        raise CheckpointError(f"parameter mismatch (missing={missing}, unexpected={unexpected})")


def load_model(path: str | Path, expected: ModelConfig | None = None) -> tuple[AlertGraphModel, dict[str, Any]]:
    header, tensors = read_checkpoint(path)
    config = ModelConfig.from_dict(header["model_config"])
    if expected is not None and expected != config:
        mine, theirs = expected.to_dict(), config.to_dict()
        diff = sorted(k for k in mine if mine[k] != theirs.get(k))
        raise ConfigMismatchError(f"checkpoint model config differs in: {', '.join(diff)}")
    model = AlertGraphModel(config)
    restore_model(model, tensors)
    return model, header
