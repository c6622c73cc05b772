"""Scheme dispatch and size accounting for encoded layers."""

import numpy as np

from ..exceptions import DecodeError, UsageError
from .bcsr import bcsr_decode, bcsr_encode
from .bitio import field_bits, pack_bits
from .csr import csr_decode, csr_encode
from .golomb import golomb_decode, golomb_encode, validate_sparse
from .layout import SCHEME_TAGS, SparseLayerPayload

SCHEMES = ("golomb", "csr", "bcsr")


def matrix_dims(shape):
    """Rows and columns a tensor is viewed as: first axis by the rest."""
    shape = tuple(int(d) for d in shape)
    if not shape:
        return 1, 1
    rows = shape[0]
    cols = int(np.prod(shape[1:], dtype=np.int64)) if len(shape) > 1 else rows
    return (1, rows) if len(shape) == 1 else (rows, cols)


def index_free_encode(positions, codes, n, b):
    """Accounting-only payload holding the kept symbols but no positions."""
    positions, codes = validate_sparse(positions, codes, n, b)
    return SparseLayerPayload(
        "index_free", b, n, positions.size, {}, pack_bits(field_bits(codes, b))
    )


def encode_payload(scheme, shape, positions, codes, b, block=(4, 4)):
    n = int(np.prod(shape, dtype=np.int64))
    if scheme == "golomb":
        return golomb_encode(positions, codes, n, b)
    rows, cols = matrix_dims(shape)
    if scheme == "csr":
        return csr_encode(rows, cols, positions, codes, b)
    if scheme == "bcsr":
        return bcsr_encode(rows, cols, positions, codes, b, *block)
    if scheme == "index_free":
        return index_free_encode(positions, codes, n, b)
    raise UsageError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEME_TAGS)}")


def decode_payload(payload):
    """Return ``(positions, codes)`` for a decodable payload."""
    if payload.scheme == "golomb":
        return golomb_decode(payload)
    if payload.scheme == "csr":
        return csr_decode(payload)
    if payload.scheme == "bcsr":
        return bcsr_decode(payload)
    raise DecodeError(f"scheme {payload.scheme!r} is not decodable")


def measure_payload(payload, n=None):
    """Realized bits per parameter, header and checksum included."""
    n = payload.n_elements if n is None else n
    if n == 0:
        return 0.0
    return payload.total_bits / n
