"""Wire layout of a single encoded layer.

::

    u8 scheme tag | u8 bit_width | u64 n_elements | u64 n_kept
    | scheme params | u64 bitstream length | bitstream | u32 crc32

Scheme params: golomb ``u32 M``; csr ``u8 ptr_width, u8 idx_width, u32 rows,
u32 cols``; bcsr ``u32 rows, u32 cols, u16 block_r, u16 block_c, u8
ptr_width, u8 idx_width``; index_free none. All little-endian.
"""

import struct
import zlib
from dataclasses import dataclass, field

from ..exceptions import ChecksumMismatchError, MalformedHeaderError, TruncatedStreamError

SCHEME_TAGS = {"golomb": 1, "csr": 2, "bcsr": 3, "index_free": 4}
_SCHEME_OF = {v: k for k, v in SCHEME_TAGS.items()}
_PARAM_LAYOUT = {
    "golomb": ("<I", ("M",)),
    "csr": ("<BBII", ("ptr_width", "idx_width", "rows", "cols")),
    "bcsr": ("<IIHHBB", ("rows", "cols", "block_r", "block_c", "ptr_width", "idx_width")),
    "index_free": ("<", ()),
}
_HEAD = struct.Struct("<BBQQ")


@dataclass
class SparseLayerPayload:
    scheme: str
    bit_width: int
    n_elements: int
    n_kept: int
    params: dict = field(default_factory=dict)
    bitstream: bytes = b""

    def to_bytes(self):
        fmt, names = _PARAM_LAYOUT[self.scheme]
        body = (
            _HEAD.pack(SCHEME_TAGS[self.scheme], self.bit_width, self.n_elements, self.n_kept)
            + struct.pack(fmt, *(self.params[k] for k in names))
            + struct.pack("<Q", len(self.bitstream))
            + self.bitstream
        )
        return body + struct.pack("<I", zlib.crc32(body))

    @property
    def total_bits(self):
        """Size on the wire, header and checksum included."""
        fmt, _ = _PARAM_LAYOUT[self.scheme]
        return 8 * (_HEAD.size + struct.calcsize(fmt) + 8 + len(self.bitstream) + 4)

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < _HEAD.size:
            raise TruncatedStreamError("payload shorter than its header")
        tag, bit_width, n, n_kept = _HEAD.unpack_from(data, 0)
        if tag not in _SCHEME_OF:
            raise MalformedHeaderError(f"unknown scheme tag {tag}")
        scheme = _SCHEME_OF[tag]
        fmt, names = _PARAM_LAYOUT[scheme]
        pos = _HEAD.size
        try:
            values = struct.unpack_from(fmt, data, pos)
            pos += struct.calcsize(fmt)
            (length,) = struct.unpack_from("<Q", data, pos)
        except struct.error:
            raise TruncatedStreamError("payload header truncated") from None
        pos += 8
        if pos + length + 4 > len(data):
            raise TruncatedStreamError(
                f"bitstream length {length} exceeds the {len(data) - pos - 4} bytes present"
            )
        if pos + length + 4 < len(data):
            raise MalformedHeaderError("trailing bytes after payload")
        stream = data[pos:pos + length]
        (crc,) = struct.unpack_from("<I", data, pos + length)
        if zlib.crc32(data[:pos + length]) != crc:
            raise ChecksumMismatchError("payload checksum mismatch")
        return cls(scheme, bit_width, n, n_kept, dict(zip(names, values)), stream)
