"""The VSEM binary container for depth images and label volumes.

Layout, all little-endian:

    magic   4 bytes  b"VSEM"
    version u16      currently 1
    kind    u8       0 = depth image, 1 = label volume
    rank    u8       2 for depth, 3 for volumes
    extents u32 * rank
    dtype   u8       0 = float32, 1 = uint8
    payload row-major array bytes

Depth payloads are float32 with NaN marking invalid pixels; volume
payloads are uint8 labels. Readers validate magic, version, kind/rank
consistency, extent sanity, and that the file length matches the
header exactly, so truncation and trailing garbage are both errors.

A dataset on disk is a directory holding ``meta.json`` plus one depth
and one volume file per sample.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import FormatError
from .scenes import DepthImage, SemanticVolume, default_names

MAGIC = b"VSEM"
VERSION = 1
KIND_DEPTH = 0
KIND_VOLUME = 1
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("u1")}
_RANK_FOR_KIND = {KIND_DEPTH: 2, KIND_VOLUME: 3}
_MAX_ELEMENTS = 1 << 33


def _pack_record(kind: int, array: np.ndarray, dtype_code: int) -> bytes:
    rank = array.ndim
    header = MAGIC + struct.pack("<HBB", VERSION, kind, rank)
    header += struct.pack(f"<{rank}I", *array.shape)
    header += struct.pack("<B", dtype_code)
    return header + np.ascontiguousarray(array).tobytes()


def _read_exact(buf: bytes, offset: int, n: int, what: str) -> tuple[bytes, int]:
    if offset + n > len(buf):
        raise FormatError(f"file truncated while reading {what}")
    return buf[offset : offset + n], offset + n


def read_record(path) -> tuple[int, np.ndarray]:
    """Parse one container; returns (kind, array)."""
    with open(path, "rb") as fh:
        buf = fh.read()
    magic, off = _read_exact(buf, 0, 4, "magic")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    head, off = _read_exact(buf, off, 4, "header")
    version, kind, rank = struct.unpack("<HBB", head)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if kind not in _RANK_FOR_KIND:
        raise FormatError(f"unknown record kind {kind}")
    if rank != _RANK_FOR_KIND[kind]:
        raise FormatError(f"kind {kind} requires rank {_RANK_FOR_KIND[kind]}, got {rank}")
    raw, off = _read_exact(buf, off, 4 * rank, "extents")
    extents = struct.unpack(f"<{rank}I", raw)
    if any(e < 1 for e in extents):
        raise FormatError(f"non-positive extent in {extents}")
    elements = 1
    for e in extents:
        elements *= e
    if elements > _MAX_ELEMENTS:
        raise FormatError(f"extents {extents} overflow the element budget")
    raw, off = _read_exact(buf, off, 1, "dtype")
    (dtype_code,) = struct.unpack("<B", raw)
    if dtype_code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {dtype_code}")
    dtype = _DTYPE_CODES[dtype_code]
    expected = off + elements * dtype.itemsize
    if len(buf) != expected:
        raise FormatError(
            f"file length {len(buf)} != {expected} implied by the header"
        )
    array = np.frombuffer(buf[off:], dtype=dtype).reshape(extents)
    return kind, array.copy()


def save_depth(path, image: DepthImage) -> None:
    with open(path, "wb") as fh:
        fh.write(_pack_record(KIND_DEPTH, image.values.astype("<f4"), 0))


def load_depth(path) -> DepthImage:
    kind, array = read_record(path)
    if kind != KIND_DEPTH:
        raise FormatError(f"expected a depth record, found kind {kind}")
    return DepthImage(array)


def save_volume(path, volume: SemanticVolume) -> None:
    with open(path, "wb") as fh:
        fh.write(_pack_record(KIND_VOLUME, volume.labels, 1))


def load_volume(path, num_categories: int = 12, names: tuple[str, ...] = ()) -> SemanticVolume:
    kind, array = read_record(path)
    if kind != KIND_VOLUME:
        raise FormatError(f"expected a volume record, found kind {kind}")
    try:
        return SemanticVolume(array, num_categories, names or default_names(num_categories))
    except Exception as exc:
        raise FormatError(f"volume payload invalid: {exc}") from exc


class Dataset:
    """In-memory list of (DepthImage, SemanticVolume) pairs plus provenance."""

    def __init__(self, samples, meta: dict | None = None):
        self.samples = list(samples)
        self.meta = dict(meta or {})

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    def __iter__(self):
        return iter(self.samples)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[int(i)] for i in indices], self.meta)

    @property
    def num_categories(self) -> int:
        return self.samples[0][1].num_categories if self.samples else 0

    @property
    def category_names(self) -> tuple[str, ...]:
        return self.samples[0][1].names if self.samples else ()


def save_dataset(directory, dataset: Dataset) -> None:
    os.makedirs(directory, exist_ok=True)
    meta = {
        "count": len(dataset),
        "num_categories": dataset.num_categories,
        "category_names": list(dataset.category_names),
        **dataset.meta,
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for i, (depth, volume) in enumerate(dataset):
        save_depth(os.path.join(directory, f"{i:05d}.depth.vsem"), depth)
        save_volume(os.path.join(directory, f"{i:05d}.volume.vsem"), volume)


def load_dataset(directory) -> Dataset:
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.exists(meta_path):
        raise FormatError(f"{directory} has no meta.json; not a dataset directory")
    with open(meta_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"meta.json is not valid JSON: {exc}") from exc
    for key in ("count", "num_categories", "category_names"):
        if key not in meta:
            raise FormatError(f"meta.json is missing {key!r}")
    count = int(meta["count"])
    nc = int(meta["num_categories"])
    names = tuple(meta["category_names"])
    samples = []
    for i in range(count):
        depth = load_depth(os.path.join(directory, f"{i:05d}.depth.vsem"))
        volume = load_volume(os.path.join(directory, f"{i:05d}.volume.vsem"), nc, names)
        samples.append((depth, volume))
    extra = {k: v for k, v in meta.items() if k not in ("count", "num_categories", "category_names")}
    return Dataset(samples, extra)
