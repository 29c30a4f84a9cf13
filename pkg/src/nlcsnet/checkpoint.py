"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"NLCS"  u32 version
    u32 meta_len  meta_len bytes of UTF-8 JSON (sorted keys)
    u32 record_count
    record_count x (u16 name_len, name, u8 rank, rank x u32 dim, float32 payload)

Records hold model parameters (``model/<name>``) and the Adam moments
(``adam.m/<name>``, ``adam.v/<name>``). Everything that is not a tensor
(config echo, epoch, step count, patch-stream RNG state) lives in the JSON
block.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"NLCS"
FORMAT_VERSION = 1

_MODEL = "model/"
_FIRST = "adam.m/"
_SECOND = "adam.v/"


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: dict
    params: dict
    epoch: int = 0
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)
    rng_state: dict = None
    format_version: int = FORMAT_VERSION

    def metadata(self):
        return {
            "format_version": self.format_version,
            "config": self.config,
            "epoch": self.epoch,
            "step_count": self.step_count,
            "rng_state": self.rng_state,
        }


def _records(ckpt):
    for prefix, table in ((_MODEL, ckpt.params), (_FIRST, ckpt.first_moment), (_SECOND, ckpt.second_moment)):
        for name in sorted(table):
            yield prefix + name, table[name]


def encode_checkpoint(ckpt):
    meta = json.dumps(ckpt.metadata(), sort_keys=True, separators=(",", ":")).encode()
    records = list(_records(ckpt))
    parts = [MAGIC, struct.pack("<I", ckpt.format_version), struct.pack("<I", len(meta)), meta]
    parts.append(struct.pack("<I", len(records)))
    for name, value in records:
        raw_name = name.encode()
        arr = np.ascontiguousarray(value, dtype="<f4")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise CheckpointCorruptError(f"checkpoint truncated while reading {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf):
    rd = _Reader(buf)
    if rd.take(4, "magic") != MAGIC:
        raise CheckpointCorruptError("not a checkpoint file (bad magic)")
    (version,) = rd.unpack("<I", "version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} is not supported (this build reads version {FORMAT_VERSION})"
        )
    (meta_len,) = rd.unpack("<I", "metadata length")
    try:
        meta = json.loads(rd.take(meta_len, "metadata").decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointCorruptError(f"unreadable checkpoint metadata: {exc}") from exc
    (count,) = rd.unpack("<I", "record count")
    tables = {_MODEL: {}, _FIRST: {}, _SECOND: {}}
    for _ in range(count):
        (name_len,) = rd.unpack("<H", "record name length")
        name = rd.take(name_len, "record name").decode()
        (rank,) = rd.unpack("<B", f"rank of {name}")
        shape = rd.unpack(f"<{rank}I", f"shape of {name}")
        size = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(rd.take(4 * size, f"payload of {name}"), dtype="<f4")
        prefix = next((p for p in tables if name.startswith(p)), None)
        if prefix is None:
            raise CheckpointCorruptError(f"unknown record {name!r}")
        tables[prefix][name[len(prefix) :]] = data.astype(np.float32).reshape(shape)
    if rd.pos != len(buf):
        raise CheckpointCorruptError(f"{len(buf) - rd.pos} trailing bytes after the last record")
    return Checkpoint(
        config=meta["config"],
        params=tables[_MODEL],
        epoch=meta["epoch"],
        step_count=meta["step_count"],
        first_moment=tables[_FIRST],
        second_moment=tables[_SECOND],
        rng_state=meta["rng_state"],
        format_version=version,
    )


def save_checkpoint(ckpt, path):
    path = Path(path)
    data = encode_checkpoint(ckpt)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def load_checkpoint(path):
    return decode_checkpoint(Path(path).read_bytes())
