"""Golomb coding of zero-run lengths between kept positions.

Each kept element contributes ``golomb(run) || symbol`` where ``run`` is the
number of pruned positions since the previous kept one. A run ``r`` is split
into quotient ``r // M`` (unary, 1s terminated by a 0) and remainder (truncated
binary).
"""

import math

import numpy as np

from ..exceptions import DecodeError, RunOverflowError, TruncatedStreamError, UsageError
from .bitio import BitReader, field_bits, pack_bits
from .layout import SparseLayerPayload


def golomb_parameter(p):
    """Optimal divisor for geometric runs with keep probability ``p``.

    Smallest ``M >= 1`` with ``q**M + q**(M+1) <= 1`` where ``q = 1 - p``.
    """
    q = 1.0 - p
    if q <= 0.0 or p <= 0.0:
        return 1
    m = max(1, math.ceil(-math.log1p(q) / math.log(q)))
    # guard the closed form against round-off at the boundary
    while m > 1 and q ** (m - 1) + q**m <= 1.0:
        m -= 1
    while q**m + q ** (m + 1) > 1.0:
        m += 1
    return m


def _remainder_fields(rem, M):
    """Truncated-binary values and widths for remainders in ``[0, M)``."""
    if M == 1:
        return np.zeros_like(rem), np.zeros(rem.shape, dtype=np.int64)
    k = (M - 1).bit_length()
    cutoff = (1 << k) - M
    short = rem < cutoff
    values = np.where(short, rem, rem + cutoff)
    widths = np.where(short, k - 1, k)
    return values, widths


def validate_sparse(positions, codes, n, b):
    positions = np.asarray(positions, dtype=np.int64).ravel()
    codes = np.asarray(codes, dtype=np.int64).ravel()
    if positions.size != codes.size:
        raise UsageError("positions and codes differ in length")
    if positions.size:
        if np.any(np.diff(positions) <= 0):
            raise UsageError("positions must be strictly increasing")
        if positions[0] < 0 or positions[-1] >= n:
            raise UsageError("position outside [0, n)")
        if codes.min() < 0 or codes.max() >= (1 << b):
            raise UsageError(f"symbol does not fit in {b} bits")
    return positions, codes


def golomb_encode(positions, codes, n, b, M=None):
    positions, codes = validate_sparse(positions, codes, n, b)
    k = positions.size
    if M is None:
        M = golomb_parameter(k / n if n else 0.0)
    if k == 0:
        return SparseLayerPayload("golomb", b, n, 0, {"M": M}, b"")
    runs = np.diff(positions, prepend=-1) - 1
    quot, rem = np.divmod(runs, M)
    rvals, rwidths = _remainder_fields(rem, M)
    # per kept element: unary (quot + 1 bits), remainder, symbol
    unary_len = quot + 1
    per = unary_len + rwidths + b
    starts = np.cumsum(per) - per
    total = int(per.sum())
    bits = np.zeros(total, dtype=np.uint8)
    ones = int(quot.sum())
    if ones:
        owner = np.repeat(np.arange(k), quot)
        offs = np.arange(ones) - np.repeat(np.cumsum(quot) - quot, quot)
        bits[starts[owner] + offs] = 1
    tail = np.stack([rvals, codes], axis=1).ravel()
    tail_w = np.stack([rwidths, np.full(k, b)], axis=1).ravel()
    tail_bits = field_bits(tail, tail_w)
    mask = np.ones(total, dtype=bool)
    mask[np.repeat(starts, unary_len) + (np.arange(int(unary_len.sum()))
         - np.repeat(np.cumsum(unary_len) - unary_len, unary_len))] = False
    bits[mask] = tail_bits
    return SparseLayerPayload("golomb", b, n, k, {"M": M}, pack_bits(bits))


def golomb_decode(payload):
    """Inverse of :func:`golomb_encode`; returns ``(positions, codes)``."""
    if payload.scheme != "golomb":
        raise DecodeError(f"not a golomb payload: {payload.scheme}")
    n, k, b, M = payload.n_elements, payload.n_kept, payload.bit_width, payload.params["M"]
    if M < 1:
        raise DecodeError("golomb divisor must be positive")
    if k > n:
        raise RunOverflowError(f"n_kept {k} exceeds n_elements {n}")
    reader = BitReader(payload.bitstream)
    kbits = (M - 1).bit_length()
    cutoff = (1 << kbits) - M
    positions = np.empty(k, dtype=np.int64)
    codes = np.empty(k, dtype=np.int64)
    pos = -1
    for i in range(k):
        q = reader.read_unary()
        if M == 1:
            rem = 0
        else:
            rem = reader.read(kbits - 1)
            if rem >= cutoff:
                rem = ((rem << 1) | reader.read(1)) - cutoff
        pos += q * M + rem + 1
        if pos >= n:
            raise RunOverflowError(f"decoded position {pos} >= n_elements {n}")
        positions[i] = pos
        codes[i] = reader.read(b)
    if reader.remaining >= 8:
        raise TruncatedStreamError("bitstream longer than the declared content")
    return positions, codes
