"""Compact binary container for parameter tensors and masks.

Layout (all integers little-endian):

    magic   4 bytes  b"LTHT"
    u32     format version (currently 1)
    u32     tensor count
    per tensor:
        u16     id length, then that many UTF-8 bytes
        u8      rank, then rank x u32 dims
        u8      storage mode: 0 dense, 1 sparse
        dense:  size x f32 values, row-major
        sparse: u32 nnz, nnz x u32 flat indices (strictly increasing),
                nnz x f32 values
    u32     mask entry count (0 when no mask is stored)
    per mask entry (id must also appear as a tensor):
        u16     id length + UTF-8 bytes
        u8      1 if the id is maskable else 0
        u32     bit count (== tensor size)
        ceil(n/8) bytes of packed keep-bits, row-major, MSB first

Each tensor independently picks dense or sparse storage: sparse when
strictly less than half its elements are nonzero. "Nonzero" means a
nonzero bit pattern, so a stored -0.0 survives the round trip bitwise;
masked positions are exact +0.0 and drop out of the sparse encoding.
predicted_size() accounts for every byte, and store() verifies the
actual file size against it.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np

from ticketlab.errors import FormatError
from ticketlab.masking import PruneMask
from ticketlab.nn.network import ParameterSet

MAGIC = b"LTHT"
VERSION = 1

_HEADER = struct.Struct("<4sII")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U8 = struct.Struct("<B")


def nonzero_count(tensor: np.ndarray) -> int:
    """Elements with a nonzero bit pattern (so -0.0 counts as nonzero)."""
    flat = np.ascontiguousarray(tensor, dtype=np.float32).reshape(-1)
    return int(np.count_nonzero(flat.view(np.uint32)))


def choose_storage(tensor: np.ndarray, mask_bits: np.ndarray | None = None) -> str:
    """'sparse' iff the nonzero fraction is strictly below one half.

    Mask bits, when given, are a documentation of intent: dropped
    positions are exact +0.0 under the masking contract, so they are
    already zero bit patterns and the count needs no correction.
    """
    del mask_bits
    n = tensor.size
    if n == 0:
        return "dense"
    return "sparse" if nonzero_count(tensor) / n < 0.5 else "dense"


def _tensor_payload_bytes(tensor: np.ndarray, mode: str) -> int:
    if mode == "dense":
        return 4 * tensor.size
    return 4 + 8 * nonzero_count(tensor)


def _entry_overhead(pid: str, rank: int) -> int:
    return 2 + len(pid.encode("utf-8")) + 1 + 4 * rank + 1


def predicted_size(params: Mapping[str, np.ndarray], mask: PruneMask | None = None) -> int:
    """Exact byte count store() will produce for these tensors."""
    total = _HEADER.size + 4  # header + mask count
    for pid, arr in params.items():
        mode = choose_storage(arr)
        total += _entry_overhead(pid, arr.ndim) + _tensor_payload_bytes(arr, mode)
    if mask is not None:
        for pid, bits in mask.bits.items():
            total += 2 + len(pid.encode("utf-8")) + 1 + 4 + (bits.size + 7) // 8
    return total


def _write_tensor(fh: BinaryIO, pid: str, arr: np.ndarray, mode: str):
    raw_id = pid.encode("utf-8")
    fh.write(_U16.pack(len(raw_id)))
    fh.write(raw_id)
    fh.write(_U8.pack(arr.ndim))
    for d in arr.shape:
        fh.write(_U32.pack(d))
    flat = np.ascontiguousarray(arr, dtype=np.float32).reshape(-1)
    if mode == "dense":
        fh.write(_U8.pack(0))
        fh.write(flat.tobytes())
    else:
        idx = np.flatnonzero(flat.view(np.uint32)).astype(np.uint32)
        fh.write(_U8.pack(1))
        fh.write(_U32.pack(len(idx)))
        fh.write(idx.tobytes())
        fh.write(flat[idx].tobytes())


def store(
    params: Mapping[str, np.ndarray],
    dest: str | Path | BinaryIO,
    mask: PruneMask | None = None,
) -> int:
    """Serialize tensors (and optionally a mask) to `dest`.

    Returns the byte count written, which always equals
    predicted_size(params, mask); a mismatch raises FormatError.
    """
    for pid, arr in params.items():
        if arr.size >= 2**32:
            raise FormatError(f"{pid}: tensor too large for u32 indexing")
        if arr.ndim > 255:
            raise FormatError(f"{pid}: rank above 255")
    if mask is not None:
        unknown = set(mask.bits) - set(params.keys())
        if unknown:
            raise FormatError(f"mask entries without tensors: {sorted(unknown)}")

    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, len(params)))
    for pid, arr in params.items():
        mode = choose_storage(arr)
        _write_tensor(buf, pid, arr, mode)
    if mask is None:
        buf.write(_U32.pack(0))
    else:
        buf.write(_U32.pack(len(mask.bits)))
        for pid, bits in mask.bits.items():
            raw_id = pid.encode("utf-8")
            buf.write(_U16.pack(len(raw_id)))
            buf.write(raw_id)
            buf.write(_U8.pack(1 if pid in mask.maskable else 0))
            buf.write(_U32.pack(bits.size))
            buf.write(np.packbits(bits.reshape(-1)).tobytes())

    blob = buf.getvalue()
    expect = predicted_size(params, mask)
    if len(blob) != expect:
        raise FormatError(f"size accounting bug: wrote {len(blob)}, predicted {expect}")
    if hasattr(dest, "write"):
        dest.write(blob)
    else:
        Path(dest).write_bytes(blob)
    return len(blob)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(f"truncated file while reading {what}")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return _U8.unpack(self.take(1, what))[0]

    def u16(self, what: str) -> int:
        return _U16.unpack(self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def ident(self, what: str) -> str:
        n = self.u16(f"{what} id length")
        try:
            return self.take(n, f"{what} id").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"bad UTF-8 in {what} id") from e


@dataclass
class LoadedCheckpoint:
    tensors: dict[str, np.ndarray]
    mask: PruneMask | None

    def parameter_set(self) -> ParameterSet:
        return ParameterSet(self.tensors)


def load(src: str | Path | BinaryIO) -> LoadedCheckpoint:
    """Parse a container produced by store(). Every structural violation
    (bad magic, truncation, non-monotonic indices, trailing bytes)
    raises FormatError."""
    if hasattr(src, "read"):
        blob = src.read()
    else:
        blob = Path(src).read_bytes()
    r = _Reader(blob)

    magic, version, count = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        pid = r.ident("tensor")
        if pid in tensors:
            raise FormatError(f"duplicate tensor id {pid!r}")
        rank = r.u8(f"{pid} rank")
        dims = tuple(r.u32(f"{pid} dim") for _ in range(rank))
        size = 1
        for d in dims:
            size *= d
        mode = r.u8(f"{pid} mode")
        if mode == 0:
            raw = r.take(4 * size, f"{pid} dense values")
            flat = np.frombuffer(raw, dtype="<f4").astype(np.float32)
        elif mode == 1:
            nnz = r.u32(f"{pid} nnz")
            if nnz > size:
                raise FormatError(f"{pid}: nnz {nnz} exceeds size {size}")
            idx = np.frombuffer(r.take(4 * nnz, f"{pid} indices"), dtype="<u4")
            vals = np.frombuffer(r.take(4 * nnz, f"{pid} sparse values"), dtype="<f4")
            if nnz:
                if idx[-1] >= size:
                    raise FormatError(f"{pid}: index {int(idx[-1])} out of range")
                if nnz > 1 and not (idx[1:] > idx[:-1]).all():
                    raise FormatError(f"{pid}: sparse indices not strictly increasing")
            flat = np.zeros(size, dtype=np.float32)
            flat[idx] = vals
        else:
            raise FormatError(f"{pid}: unknown storage mode {mode}")
        tensors[pid] = flat.reshape(dims)

    mask_count = r.u32("mask count")
    mask = None
    if mask_count:
        bits: dict[str, np.ndarray] = {}
        maskable: set[str] = set()
        for _ in range(mask_count):
            pid = r.ident("mask")
            if pid not in tensors:
                raise FormatError(f"mask entry {pid!r} has no tensor")
            if pid in bits:
                raise FormatError(f"duplicate mask entry {pid!r}")
            flag = r.u8(f"{pid} maskable flag")
            n = r.u32(f"{pid} bit count")
            if n != tensors[pid].size:
                raise FormatError(
                    f"{pid}: mask bit count {n} != tensor size {tensors[pid].size}"
                )
            raw = r.take((n + 7) // 8, f"{pid} mask bits")
            arr = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), count=n)
            bits[pid] = arr.astype(bool).reshape(tensors[pid].shape)
            if flag:
                maskable.add(pid)
        mask = PruneMask(bits, maskable)

    if r.pos != len(blob):
        raise FormatError(f"{len(blob) - r.pos} trailing bytes after mask section")
    return LoadedCheckpoint(tensors=tensors, mask=mask)


def save_with_sidecar(
    params: Mapping[str, np.ndarray],
    path: str | Path,
    provenance: dict,
    mask: PruneMask | None = None,
) -> int:
    """store() plus a JSON sidecar at <path>.json describing origin."""
    path = Path(path)
    n = store(params, path, mask)
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
    return n


def load_sidecar(path: str | Path) -> dict:
    sidecar = Path(path).with_name(Path(path).name + ".json")
    if not sidecar.exists():
        raise FormatError(f"missing provenance sidecar {sidecar}")
    return json.loads(sidecar.read_text())
