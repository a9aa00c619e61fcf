from __future__ import annotations

import struct
from dataclasses import replace

import pytest
import torch

from ransomgraph.nn.checkpoint import (
    MAGIC,
    CheckpointError,
    ConfigMismatchError,
    load_model,
    read_checkpoint,
    save_model,
    write_checkpoint,
)
from ransomgraph.nn.model import AlertGraphModel, ModelConfig, parameter_digest

from conftest import SMALL_MODEL


def test_roundtrip_bitwise(tmp_path):
    model = AlertGraphModel(replace(SMALL_MODEL, num_campaign_classes=3), seed=4)
    path = tmp_path / "m.bin"
    save_model(path, model, meta={"note": "x"})
    loaded, header = load_model(path)
    assert header["meta"] == {"note": "x"}
    assert parameter_digest(list(loaded.named_parameters())) == parameter_digest(list(model.named_parameters()))


def test_layout(tmp_path):
    path = tmp_path / "t.bin"
    write_checkpoint(path, {"a": 1}, {"w": torch.tensor([[1.5, -2.0]], dtype=torch.float64)})
    data = path.read_bytes()
    assert data[:8] == MAGIC and struct.unpack_from("<I", data, 8) == (1,)
    (hlen,) = struct.unpack_from("<Q", data, 12)
    assert data[20:20 + hlen] == b'{"a":1}'
    assert data.endswith(struct.pack("<2d", 1.5, -2.0))
    header, tensors = read_checkpoint(path)
    assert header == {"a": 1} and tensors["w"].tolist() == [[1.5, -2.0]]


def test_byte_reproducible(tmp_path):
    for name in ("a.bin", "b.bin"):
        save_model(tmp_path / name, AlertGraphModel(SMALL_MODEL, seed=1), meta={"k": [1, 2]})
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_config_mismatch(tmp_path):
    path = tmp_path / "m.bin"
    save_model(path, AlertGraphModel(SMALL_MODEL))
    with pytest.raises(ConfigMismatchError, match="hidden_dim"):
        load_model(path, expected=ModelConfig())
    load_model(path, expected=SMALL_MODEL)


@pytest.mark.parametrize("mutate", ["magic", "version", "truncate", "trailing"])
def test_corrupt_files(tmp_path, mutate):
    path = tmp_path / "m.bin"
    save_model(path, AlertGraphModel(SMALL_MODEL))
    data = bytearray(path.read_bytes())
    if mutate == "magic":
        data[0] ^= 0xFF
    elif mutate == "version":
        data[8:12] = struct.pack("<I", 99)
    elif mutate == "truncate":
        data = data[:-5]
    else:
        data += b"\0"
    path.write_bytes(bytes(data))
    with pytest.raises((CheckpointError, struct.error, ValueError)):
        read_checkpoint(path)
