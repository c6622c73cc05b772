"""Compressed sparse row layout.

Bitstream: ``rows + 1`` row pointers (``ptr_width`` bits each, the smallest of
16/32/64 holding ``n_kept``), then one column index per kept element
(``idx_width`` bits, the minimal width holding ``cols - 1``), then the kept
symbols (``bit_width`` bits each).
"""

import numpy as np

from ..exceptions import DecodeError, UsageError
from .bitio import field_bits, pack_bits, read_fields, unpack_bits
from .golomb import validate_sparse
from .layout import SparseLayerPayload


def pointer_width(max_value):
    for w in (16, 32, 64):
        if max_value < (1 << w):
            return w
    raise UsageError(f"pointer value {max_value} does not fit in 64 bits")


def index_width(max_index):
    return max(1, int(max_index).bit_length())


def csr_arrays(rows, cols, positions):
    """Row-pointer and column-index arrays for flat row-major positions."""
    positions = np.asarray(positions, dtype=np.int64)
    r, c = np.divmod(positions, cols) if cols else (positions, positions)
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    np.add.at(row_ptr, r + 1, 1)
    return np.cumsum(row_ptr), c


def csr_encode(rows, cols, positions, codes, b):
    n = rows * cols
    positions, codes = validate_sparse(positions, codes, n, b)
    k = positions.size
    row_ptr, col = csr_arrays(rows, cols, positions)
    pw, iw = pointer_width(k), index_width(max(cols - 1, 0))
    bits = np.concatenate([
        field_bits(row_ptr, pw),
        field_bits(col, iw),
        field_bits(codes, b),
    ])
    params = {"ptr_width": pw, "idx_width": iw, "rows": rows, "cols": cols}
    return SparseLayerPayload("csr", b, n, k, params, pack_bits(bits))


def csr_decode(payload):
    """Return ``(positions, codes)``; rejects inconsistent pointers/indices."""
    if payload.scheme != "csr":
        raise DecodeError(f"not a csr payload: {payload.scheme}")
    p = payload.params
    rows, cols, pw, iw = p["rows"], p["cols"], p["ptr_width"], p["idx_width"]
    k, b = payload.n_kept, payload.bit_width
    if rows * cols != payload.n_elements:
        raise DecodeError("rows * cols disagrees with n_elements")
    if k > payload.n_elements:
        raise DecodeError("n_kept exceeds n_elements")
    bits = unpack_bits(payload.bitstream)
    row_ptr, off = read_fields(bits, 0, rows + 1, pw)
    col, off = read_fields(bits, off, k, iw)
    codes, off = read_fields(bits, off, k, b)
    if bits.size - off >= 8:
        raise DecodeError("bitstream longer than the declared content")
    row_ptr = row_ptr.astype(np.int64)
    col = col.astype(np.int64)
    if row_ptr[0] != 0 or row_ptr[-1] != k or np.any(np.diff(row_ptr) < 0):
        raise DecodeError("row pointers are not a valid prefix sum")
    if k and col.max() >= cols:
        raise DecodeError("column index out of range")
    row_of = np.repeat(np.arange(rows), np.diff(row_ptr))
    positions = row_of * cols + col
    if np.any(np.diff(positions) <= 0):
        raise DecodeError("column indices not strictly increasing within rows")
    return positions, codes.astype(np.int64)
