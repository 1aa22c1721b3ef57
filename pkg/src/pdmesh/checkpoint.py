"""Binary checkpoint format for named parameter tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"DMDN"
    version u16      currently 1
    count   u32      number of tensors
    then per tensor, sorted by name:
        name_len u16, name UTF-8 bytes
        rank     u8
        dims     u32 * rank
        data     float32 little-endian, C order

Values are stored at single precision regardless of the precision used
in memory; save -> load -> save is byte-identical.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"DMDN"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(params: dict) -> bytes:
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(params))]
    for name in sorted(params):
        array = np.ascontiguousarray(params[name], dtype=np.float32)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.astype("<f4").tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint: needed {n} bytes for {what} "
                f"at offset {self.pos}, have {len(self.data) - self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out


def load_checkpoint(data: bytes) -> dict:
    """Parse a checkpoint buffer into {name: float64 array}."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version, count = struct.unpack("<HI", r.take(6, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    params: dict = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", r.take(2, "name length"))
        name = r.take(name_len, "name").decode("utf-8")
        if name in params:
            raise CheckpointError(f"duplicate tensor name {name!r}")
        (rank,) = struct.unpack("<B", r.take(1, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I",
                             r.take(4 * rank, f"dims of {name!r}"))
        size = int(np.prod(dims)) if rank else 1
        raw = r.take(4 * size, f"data of {name!r}")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(
            np.float64).reshape(dims)
    if r.pos != len(data):
        raise CheckpointError(
            f"{len(data) - r.pos} trailing bytes after the last tensor")
    return params


def save_checkpoint_file(path, params: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(save_checkpoint(params))


def load_checkpoint_file(path) -> dict:
    with open(path, "rb") as fh:
        return load_checkpoint(fh.read())
