"""Named tensor sets, the ``UDTC`` binary container, delta extraction and
weight reconstruction.

Container layout (little-endian)::

    b"UDTC" | u16 version | u32 entry count
    per entry: u32 name length | name (UTF-8) | u8 dtype | u8 rank
               | u64 dim * rank | u64 byte offset into the payload section
    payload section (raw row-major tensor bytes)
    u64 checksum (blake2b-64 over everything before it)
"""

import fnmatch
import hashlib
import io
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .exceptions import (
    ChecksumMismatchError,
    FingerprintMismatchError,
    MalformedHeaderError,
    MissingLayerError,
    ShapeMismatchError,
    ShapeOverflowError,
    UsageError,
)

MAGIC = b"UDTC"
VERSION = 1

DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f2")}
_TAG_OF = {np.dtype("float32"): 0, np.dtype("float16"): 1}


def _checksum(data):
    return hashlib.blake2b(data, digest_size=8).digest()


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


class NamedTensorSet(Mapping):
    """Ordered, immutable map from layer name to a dense float32/float16 array.

    Values keep their stored dtype; use :meth:`widened` for arithmetic.
    """

    def __init__(self, entries=()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        self._data = {}
        for name, arr in items:
            if not isinstance(name, str) or not name:
                raise UsageError("tensor names must be non-empty strings")
            if name in self._data:
                raise UsageError(f"duplicate tensor name {name!r}")
            arr = np.asarray(arr)
            if arr.dtype not in _TAG_OF:
                if arr.dtype.kind not in "fiu":
                    raise UsageError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
                arr = arr.astype(np.float32)
            if arr.ndim > 255:
                raise UsageError(f"tensor {name!r} has too many dimensions")
            self._data[name] = _freeze(arr)

    def __getitem__(self, name):
        return self._data[name]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def __repr__(self):
        inner = ", ".join(f"{k}: {v.dtype}{list(v.shape)}" for k, v in self._data.items())
        return f"{type(self).__name__}({inner})"

    def widened(self, name):
        """Float64 copy of tensor ``name``."""
        return self._data[name].astype(np.float64)

    def equals(self, other):
        """Bit-exact equality of names, order, dtypes, shapes and data."""
        if list(self) != list(other):
            return False
        for name in self:
            a, b = self[name], other[name]
            if a.dtype != b.dtype or a.shape != b.shape or a.tobytes() != b.tobytes():
                return False
        return True

    def fingerprint(self):
        """64-bit content hash of the serialized tensor table, as hex."""
        return hashlib.blake2b(serialize(self), digest_size=8).hexdigest()


class DeltaSet(NamedTensorSet):
    """Float64 delta tensors plus the fingerprint of the pretrained set they
    were taken against and the list of layers left uncompressed."""

    def __init__(self, entries=(), base_fingerprint="", pass_through=()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        self._data = {}
        for name, arr in items:
            if not isinstance(name, str) or not name:
                raise UsageError("tensor names must be non-empty strings")
            if name in self._data:
                raise UsageError(f"duplicate tensor name {name!r}")
            self._data[name] = _freeze(np.asarray(arr, dtype=np.float64))
        self.base_fingerprint = base_fingerprint
        self.pass_through = list(pass_through)

    def widened(self, name):
        return self._data[name].copy()


def serialize(tensors):
    """Serialize a :class:`NamedTensorSet` to container bytes."""
    header = io.BytesIO()
    payload = io.BytesIO()
    header.write(MAGIC)
    header.write(struct.pack("<HI", VERSION, len(tensors)))
    for name, arr in tensors.items():
        if arr.dtype not in _TAG_OF:
            raise UsageError(f"tensor {name!r} must be float32 or float16 to be stored")
        raw_name = name.encode("utf-8")
        header.write(struct.pack("<I", len(raw_name)))
        header.write(raw_name)
        header.write(struct.pack("<BB", _TAG_OF[arr.dtype], arr.ndim))
        header.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        header.write(struct.pack("<Q", payload.tell()))
        payload.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    body = header.getvalue() + payload.getvalue()
    return body + _checksum(body)


def deserialize(data):
    """Parse container bytes into a :class:`NamedTensorSet`."""
    data = bytes(data)
    if len(data) < 18 or data[:4] != MAGIC:
        raise MalformedHeaderError("missing UDTC magic")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise MalformedHeaderError(f"unsupported container version {version}")
    body, stored = data[:-8], data[-8:]
    pos = 10
    table = []
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", body, pos)
            pos += 4
            if pos + name_len > len(body):
                raise MalformedHeaderError("name runs past end of header")
            name = body[pos:pos + name_len].decode("utf-8")
            pos += name_len
            tag, rank = struct.unpack_from("<BB", body, pos)
            pos += 2
            if tag not in DTYPE_TAGS:
                raise MalformedHeaderError(f"unknown dtype tag {tag}")
            dims = struct.unpack_from(f"<{rank}Q", body, pos)
            pos += 8 * rank
            (offset,) = struct.unpack_from("<Q", body, pos)
            pos += 8
            table.append((name, DTYPE_TAGS[tag], dims, offset))
    except struct.error as exc:
        raise MalformedHeaderError(f"truncated header: {exc}") from None
    except UnicodeDecodeError:
        raise MalformedHeaderError("tensor name is not valid UTF-8") from None
    payload = body[pos:]
    entries = []
    for name, dtype, dims, offset in table:
        n = 1
        for d in dims:
            n *= d
        end = offset + n * dtype.itemsize
        if end > len(payload):
            raise ShapeOverflowError(
                f"tensor {name!r} needs bytes [{offset}, {end}) but payload has {len(payload)}"
            )
        arr = np.frombuffer(payload, dtype=dtype, count=n, offset=offset)
        entries.append((name, arr.astype(dtype.newbyteorder("="), copy=True).reshape(dims)))
    if _checksum(body) != stored:
        raise ChecksumMismatchError("container checksum mismatch")
    try:
        return NamedTensorSet(entries)
    except UsageError as exc:
        raise MalformedHeaderError(str(exc)) from None


def save_container(tensors, path):
    Path(path).write_bytes(serialize(tensors))


def load_container(path):
    return deserialize(Path(path).read_bytes())


def select_layers(tensors, selector=None):
    """Names chosen for compression.

    ``selector`` is a list of glob patterns; a leading ``!`` excludes. When no
    positive pattern is given, every rank-2 tensor is a candidate.
    """
    selector = list(selector or [])
    include = [p for p in selector if not p.startswith("!")]
    exclude = [p[1:] for p in selector if p.startswith("!")]
    chosen = []
    for name, arr in tensors.items():
        if include:
            hit = any(fnmatch.fnmatchcase(name, p) for p in include)
        else:
            hit = arr.ndim == 2
        if hit and not any(fnmatch.fnmatchcase(name, p) for p in exclude):
            chosen.append(name)
    return chosen


def extract_delta(finetuned, pretrained, selector=None):
    """Element-wise ``finetuned - pretrained`` over the selected layers.

    Layers present in ``finetuned`` but not selected are listed in
    ``pass_through`` of the returned :class:`DeltaSet`.
    """
    names = select_layers(finetuned, selector)
    entries = []
    for name in names:
        if name not in pretrained:
            raise MissingLayerError(f"layer {name!r} missing from pretrained set")
        if finetuned[name].shape != pretrained[name].shape:
            raise ShapeMismatchError(
                f"layer {name!r}: finetuned {finetuned[name].shape} vs "
                f"pretrained {pretrained[name].shape}"
            )
        entries.append((name, finetuned.widened(name) - pretrained.widened(name)))
    chosen = set(names)
    pass_through = [n for n in finetuned if n not in chosen]
    return DeltaSet(entries, base_fingerprint=pretrained.fingerprint(), pass_through=pass_through)


def reconstruct(pretrained, compressed, override_fingerprint=False):
    """Rebuild fine-tuned weights from the base set and a compressed delta.

    Each compressed layer becomes ``pretrained + scale * decoded_delta`` where
    ``scale = gamma / (1 - s)``; with ``compressed.per_layer_denominator`` the
    layer's own sparsity replaces the overall one. Pass-through tensors are
    copied verbatim from the archive.
    """
    if not override_fingerprint and compressed.base_fingerprint != pretrained.fingerprint():
        raise FingerprintMismatchError(
            f"archive was built against base {compressed.base_fingerprint}, "
            f"got {pretrained.fingerprint()}"
        )
    decoded = compressed.decode_deltas()
    out = []
    for name, arr in pretrained.items():
        if name in decoded:
            scale = compressed.scale_for(name)
            value = arr.astype(np.float64) + scale * decoded[name]
            out.append((name, value.astype(arr.dtype)))
        elif name in compressed.pass_through:
            out.append((name, compressed.pass_through[name]))
        else:
            out.append((name, arr))
    for name, arr in compressed.pass_through.items():
        if name not in pretrained:
            out.append((name, arr))
    missing = [n for n in decoded if n not in pretrained]
    if missing:
        raise MissingLayerError(f"compressed layers absent from base: {missing}")
    return NamedTensorSet(out)
