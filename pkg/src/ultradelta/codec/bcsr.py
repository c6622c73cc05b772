"""Block compressed sparse row layout.

The matrix is padded up to whole ``block_r x block_c`` tiles. Every tile with
at least one kept element is stored dense: a validity bitmap (one bit per
cell) followed by one ``bit_width`` symbol per cell, pruned cells holding 0.
Bitstream: block-row pointers, block-column indices, then the tiles in
row-major block order.
"""

import numpy as np

from ..exceptions import DecodeError, UsageError
from .bitio import field_bits, pack_bits, read_fields, unpack_bits
from .csr import index_width, pointer_width
from .golomb import validate_sparse
from .layout import SparseLayerPayload


def _grid(rows, cols, br, bc):
    if br < 1 or bc < 1 or br >= 1 << 16 or bc >= 1 << 16:
        raise UsageError(f"invalid block dims {br}x{bc}")
    return -(-rows // br), -(-cols // bc)


def bcsr_encode(rows, cols, positions, codes, b, block_r=4, block_c=4):
    n = rows * cols
    positions, codes = validate_sparse(positions, codes, n, b)
    nbr, nbc = _grid(rows, cols, block_r, block_c)
    k = positions.size
    r, c = np.divmod(positions, cols) if cols else (positions, positions)
    block = (r // block_r) * nbc + (c // block_c)
    cell = (r % block_r) * block_c + (c % block_c)
    occupied = np.unique(block)
    nb = occupied.size
    slot = np.searchsorted(occupied, block)
    cells = block_r * block_c
    valid = np.zeros((nb, cells), dtype=np.uint8)
    symbols = np.zeros((nb, cells), dtype=np.int64)
    valid[slot, cell] = 1
    symbols[slot, cell] = codes
    brow_ptr = np.zeros(nbr + 1, dtype=np.int64)
    np.add.at(brow_ptr, occupied // nbc + 1, 1)
    brow_ptr = np.cumsum(brow_ptr)
    pw, iw = pointer_width(nb), index_width(max(nbc - 1, 0))
    tiles = np.concatenate(
        [valid, field_bits(symbols, b).reshape(nb, cells * b)], axis=1
    ).ravel()
    bits = np.concatenate([field_bits(brow_ptr, pw), field_bits(occupied % nbc, iw), tiles])
    params = {"rows": rows, "cols": cols, "block_r": block_r, "block_c": block_c,
              "ptr_width": pw, "idx_width": iw}
    return SparseLayerPayload("bcsr", b, n, k, params, pack_bits(bits))


def bcsr_decode(payload):
    if payload.scheme != "bcsr":
        raise DecodeError(f"not a bcsr payload: {payload.scheme}")
    p = payload.params
    rows, cols, br, bc = p["rows"], p["cols"], p["block_r"], p["block_c"]
    pw, iw, b = p["ptr_width"], p["idx_width"], payload.bit_width
    if rows * cols != payload.n_elements:
        raise DecodeError("rows * cols disagrees with n_elements")
    try:
        nbr, nbc = _grid(rows, cols, br, bc)
    except UsageError as exc:
        raise DecodeError(str(exc)) from None
    bits = unpack_bits(payload.bitstream)
    brow_ptr, off = read_fields(bits, 0, nbr + 1, pw)
    brow_ptr = brow_ptr.astype(np.int64)
    nb = int(brow_ptr[-1])
    if brow_ptr[0] != 0 or np.any(np.diff(brow_ptr) < 0) or nb > nbr * nbc:
        raise DecodeError("block row pointers are not a valid prefix sum")
    bcol, off = read_fields(bits, off, nb, iw)
    bcol = bcol.astype(np.int64)
    cells = br * bc
    end = off + nb * cells * (1 + b)
    if end > bits.size or bits.size - end >= 8:
        raise DecodeError("bitstream length disagrees with the block count")
    if nb and bcol.max() >= nbc:
        raise DecodeError("block column index out of range")
    block = np.repeat(np.arange(nbr), np.diff(brow_ptr)) * nbc + bcol
    if np.any(np.diff(block) <= 0):
        raise DecodeError("block columns not strictly increasing within rows")
    tiles = bits[off:end].reshape(nb, cells * (1 + b))
    valid = tiles[:, :cells].astype(bool)
    sym, _ = read_fields(tiles[:, cells:].ravel(), 0, nb * cells, b)
    sym = sym.reshape(nb, cells).astype(np.int64)
    if np.any(sym[~valid] != 0):
        raise DecodeError("pruned cell carries a nonzero symbol")
    slot, cell = np.nonzero(valid)
    r = (block[slot] // nbc) * br + cell // bc
    c = (block[slot] % nbc) * bc + cell % bc
    if np.any(r >= rows) or np.any(c >= cols):
        raise DecodeError("kept cell lies in block padding")
    positions = r * cols + c
    order = np.argsort(positions, kind="stable")
    if positions.size != payload.n_kept:
        raise DecodeError(f"decoded {positions.size} kept cells, header says {payload.n_kept}")
    if nb and not valid.any(axis=1).all():
        raise DecodeError("stored block has no kept cell")
    return positions[order], sym[slot, cell][order]
