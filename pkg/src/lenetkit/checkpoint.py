"""Bit-exact model checkpoints (``.lnck``).

Binary layout, all integers little-endian:

    "LNCK"                     4 bytes magic
    version                    u32
    num_classes                u32
    param_count                u32
    per parameter:
        name_len               u32
        name                   UTF-8 bytes
        rank                   u32
        dims                   u32 each
        values                 f64 IEEE-754, row-major
    crc                        u64, CRC-64 over all preceding bytes

The CRC is CRC-64/XZ (reflected ECMA-182 polynomial). Loading verifies
magic, CRC, then structure; a truncated or tampered file never yields a
partial model.

Run metadata that is not part of the binary contract (class names, the
training config echo, the final epoch record) travels in an optional JSON
sidecar ``<path>.json`` written only when such metadata is present.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpoint, IoError, UnsupportedVersion
from .nn import LeNetModel, Param, param_shapes

MAGIC = b"LNCK"
VERSION = 1

_CRC64_POLY = 0xC96C5795D7870F42  # ECMA-182, reflected


def _make_crc64_table():
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        table.append(crc)
    return tuple(table)


_CRC64_TABLE = _make_crc64_table()


def crc64(data: bytes) -> int:
    crc = 0xFFFFFFFFFFFFFFFF
    for b in data:
        crc = _CRC64_TABLE[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


@dataclass
class Checkpoint:
    num_classes: int
    params: dict[str, np.ndarray]
    version: int = VERSION
    class_names: list[str] | None = None
    train_config: dict | None = None
    final_record: dict | None = None


def model_to_checkpoint(model: LeNetModel, class_names=None, train_config=None,
                        final_record=None) -> Checkpoint:
    return Checkpoint(
        num_classes=model.num_classes,
        params={p.name: p.value.copy() for p in model.param_list()},
        class_names=list(class_names) if class_names else None,
        train_config=train_config,
        final_record=final_record,
    )


def checkpoint_to_model(ckpt: Checkpoint) -> LeNetModel:
    """Rebuild a model, validating every declared name and shape."""
    params: dict[str, Param] = {}
    for name, shape in param_shapes(ckpt.num_classes):
        if name not in ckpt.params:
            raise CorruptCheckpoint(f"checkpoint is missing parameter {name!r}")
        value = ckpt.params[name]
        if value.shape != shape:
            raise CorruptCheckpoint(
                f"checkpoint parameter {name!r} has shape {value.shape},"
                f" expected {shape}"
            )
        params[name] = Param(name, value.copy(), np.zeros(shape))
    return LeNetModel(params, ckpt.num_classes)


def _sidecar_path(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Write the binary checkpoint (and metadata sidecar when present)."""
    path = Path(path)
    buf = bytearray()
    buf += MAGIC
    buf += struct.pack("<I", ckpt.version)
    buf += struct.pack("<I", ckpt.num_classes)
    buf += struct.pack("<I", len(ckpt.params))
    for name, value in ckpt.params.items():
        encoded = name.encode("utf-8")
        buf += struct.pack("<I", len(encoded))
        buf += encoded
        buf += struct.pack("<I", value.ndim)
        buf += struct.pack(f"<{value.ndim}I", *value.shape)
        buf += np.ascontiguousarray(value, dtype="<f8").tobytes()
    buf += struct.pack("<Q", crc64(bytes(buf)))
    try:
        path.write_bytes(bytes(buf))
        meta = {
            key: getattr(ckpt, key)
            for key in ("class_names", "train_config", "final_record")
            if getattr(ckpt, key) is not None
        }
        if meta:
            _sidecar_path(path).write_text(
                json.dumps(meta, indent=2, sort_keys=True) + "\n"
            )
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint("checkpoint truncated mid-record")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 4 + 4 + 4 + 8:
        raise CorruptCheckpoint(f"checkpoint {path} too short")
    if raw[:4] != MAGIC:
        raise CorruptCheckpoint(
            f"checkpoint {path} has bad magic {raw[:4]!r}, expected {MAGIC!r}"
        )
    body, stored = raw[:-8], struct.unpack("<Q", raw[-8:])[0]
    if crc64(body) != stored:
        raise CorruptCheckpoint(f"checkpoint {path} failed CRC verification")

    r = _Reader(body)
    r.take(4)  # magic, already checked
    version = r.u32()
    if version != VERSION:
        raise UnsupportedVersion(
            f"checkpoint version {version} not supported (expected {VERSION})"
        )
    num_classes = r.u32()
    param_count = r.u32()
    params: dict[str, np.ndarray] = {}
    for _ in range(param_count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        if rank < 1 or rank > 8:
            raise CorruptCheckpoint(f"parameter {name!r} has absurd rank {rank}")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        count = int(np.prod(dims))
        values = np.frombuffer(r.take(8 * count), dtype="<f8")
        params[name] = values.reshape(dims).astype(np.float64)
    if r.pos != len(body):
        raise CorruptCheckpoint("trailing bytes after parameter table")

    ckpt = Checkpoint(num_classes=num_classes, params=params, version=version)
    sidecar = _sidecar_path(path)
    if sidecar.is_file():
        try:
            meta = json.loads(sidecar.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CorruptCheckpoint(
                f"checkpoint sidecar {sidecar} unreadable: {exc}"
            ) from exc
        ckpt.class_names = meta.get("class_names")
        ckpt.train_config = meta.get("train_config")
        ckpt.final_record = meta.get("final_record")
    return ckpt
