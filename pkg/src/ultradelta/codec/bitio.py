"""MSB-first bit packing.

Writers work on whole arrays of fields at once; the reader is a cursor used
by the sequential Golomb decoder.
"""

import numpy as np

from ..exceptions import TruncatedStreamError


def field_bits(values, widths):
    """Bits (uint8, 0/1) of each value written MSB-first in its width.

    ``widths`` may be a scalar or an array; each width must be <= 64.
    """
    values = np.asarray(values, dtype=np.uint64).ravel()
    widths = np.broadcast_to(np.asarray(widths, dtype=np.int64), values.shape)
    total = int(widths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.uint8)
    owner = np.repeat(np.arange(values.size), widths)
    starts = np.cumsum(widths) - widths
    j = np.arange(total) - starts[owner]
    shift = (widths[owner] - 1 - j).astype(np.uint64)
    return ((values[owner] >> shift) & np.uint64(1)).astype(np.uint8)


def pack_bits(bits):
    """Pack a 0/1 array into bytes, zero-padding the final byte."""
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def unpack_bits(data, nbits=None):
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    if nbits is not None:
        if nbits > bits.size:
            raise TruncatedStreamError(f"need {nbits} bits, stream has {bits.size}")
        bits = bits[:nbits]
    return bits


def read_fields(bits, offset, count, width):
    """Read ``count`` fixed-width unsigned fields starting at bit ``offset``."""
    end = offset + count * width
    if end > bits.size:
        raise TruncatedStreamError(f"need {end} bits, stream has {bits.size}")
    if count == 0 or width == 0:
        return np.zeros(count, dtype=np.uint64), end
    chunk = bits[offset:end].reshape(count, width).astype(np.uint64)
    weights = np.uint64(1) << np.arange(width - 1, -1, -1, dtype=np.uint64)
    return (chunk * weights).sum(axis=1, dtype=np.uint64), end


class BitReader:
    """Sequential MSB-first reader over a byte string."""

    def __init__(self, data):
        self._n = len(data) * 8
        self._buf = bytes(data) + b"\x00" * 8
        self.pos = 0

    @property
    def remaining(self):
        return self._n - self.pos

    def read(self, width):
        """Read an unsigned field of ``width <= 32`` bits."""
        if width == 0:
            return 0
        if self.pos + width > self._n:
            raise TruncatedStreamError("read past end of stream")
        i, r = divmod(self.pos, 8)
        chunk = int.from_bytes(self._buf[i:i + 5], "big")
        self.pos += width
        return (chunk >> (40 - r - width)) & ((1 << width) - 1)

    def read_unary(self):
        """Count 1-bits up to and including the terminating 0."""
        q = 0
        while True:
            avail = min(32, self._n - self.pos)
            if avail <= 0:
                raise TruncatedStreamError("unterminated unary code")
            i, r = divmod(self.pos, 8)
            window = (int.from_bytes(self._buf[i:i + 5], "big") >> (8 - r)) & 0xFFFFFFFF
            ones = 32 - ((~window) & 0xFFFFFFFF).bit_length()
            if ones < avail:
                self.pos += ones + 1
                return q + ones
            q += avail
            self.pos += avail
