"""Model checkpoints: architecture text, hyperparameter text, and every
parameter tensor, in one little-endian container.

    magic   4 bytes  b"VSCK"
    version u16      currently 1
    u32 + bytes      architecture config text (utf-8)
    u32 + bytes      hyperparameter config text (utf-8)
    u32              tensor count
    per tensor:
        u16 + bytes  name ("network/param")
        u8           dtype (0 = float32, 2 = float64)
        u8           rank
        u32 * rank   extents
        payload      row-major bytes

Parameters round-trip bit-exactly. Optimizer moments are not stored;
resuming restarts Adam fresh.
"""

from __future__ import annotations

import struct

import numpy as np

from .config import ArchConfig, HyperParams, config_from_text, config_to_text
from .errors import FormatError
from .networks import ModelSet, build_models

MAGIC = b"VSCK"
VERSION = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 2: np.dtype("<f8")}
_CODE_FOR_DTYPE = {np.dtype(np.float32): 0, np.dtype(np.float64): 2}


def save_checkpoint(path, models: ModelSet, hyper: HyperParams) -> None:
    arch_text = config_to_text(models.cfg).encode()
    hyper_text = config_to_text(hyper).encode()
    entries = []
    for net_name, params in models.named().items():
        for pname, tensor in params.items():
            entries.append((f"{net_name}/{pname}", tensor.data))
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(arch_text)) + arch_text)
        fh.write(struct.pack("<I", len(hyper_text)) + hyper_text)
        fh.write(struct.pack("<I", len(entries)))
        for name, data in entries:
            name_b = name.encode()
            fh.write(struct.pack("<H", len(name_b)) + name_b)
            fh.write(struct.pack("<BB", _CODE_FOR_DTYPE[data.dtype], data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data).tobytes())


def _take(buf: bytes, off: int, n: int, what: str) -> tuple[bytes, int]:
    if off + n > len(buf):
        raise FormatError(f"checkpoint truncated while reading {what}")
    return buf[off : off + n], off + n


def load_checkpoint(path) -> tuple[ModelSet, HyperParams]:
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, off = _take(buf, 0, 4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad checkpoint magic {magic!r}")
    raw, off = _take(buf, off, 2, "version")
    (version,) = struct.unpack("<H", raw)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")

    def take_block(off: int, what: str) -> tuple[bytes, int]:
        raw, off = _take(buf, off, 4, f"{what} length")
        (n,) = struct.unpack("<I", raw)
        return _take(buf, off, n, what)

    arch_text, off = take_block(off, "architecture text")
    hyper_text, off = take_block(off, "hyperparameter text")
    arch = config_from_text(ArchConfig, arch_text.decode())
    hyper = config_from_text(HyperParams, hyper_text.decode())

    raw, off = _take(buf, off, 4, "tensor count")
    (count,) = struct.unpack("<I", raw)
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        raw, off = _take(buf, off, 2, "name length")
        (name_len,) = struct.unpack("<H", raw)
        name_b, off = _take(buf, off, name_len, "name")
        raw, off = _take(buf, off, 2, "dtype/rank")
        dtype_code, rank = struct.unpack("<BB", raw)
        if dtype_code not in _DTYPE_CODES:
            raise FormatError(f"unknown dtype code {dtype_code}")
        raw, off = _take(buf, off, 4 * rank, "extents")
        shape = struct.unpack(f"<{rank}I", raw)
        dtype = _DTYPE_CODES[dtype_code]
        n_bytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        payload, off = _take(buf, off, n_bytes, f"tensor {name_b.decode()!r}")
        tensors[name_b.decode()] = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if off != len(buf):
        raise FormatError(f"{len(buf) - off} trailing bytes after the last tensor")

    dtype = np.float64 if hyper.dtype == "float64" else np.float32
    models = build_models(arch, seed=0, dtype=dtype)
    for net_name, params in models.named().items():
        prefix = f"{net_name}/"
        subset = {
            name[len(prefix):]: value
            for name, value in tensors.items()
            if name.startswith(prefix)
        }
        try:
            params.load(subset)
        except Exception as exc:
            raise FormatError(f"checkpoint does not match {net_name}: {exc}") from exc
    return models, hyper
