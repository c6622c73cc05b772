"""Sparse layer codecs and compression-ratio accounting."""

from .bcsr import bcsr_decode, bcsr_encode
from .csr import csr_arrays, csr_decode, csr_encode
from .golomb import golomb_decode, golomb_encode, golomb_parameter
from .payload import (
    SCHEMES,
    SparseLayerPayload,
    decode_payload,
    encode_payload,
    index_free_encode,
    measure_payload,
)
from .ratio import RatioReport, entropy_ratio, h_comp, h_geo

__all__ = [
    "SCHEMES",
    "RatioReport",
    "SparseLayerPayload",
    "bcsr_decode",
    "bcsr_encode",
    "csr_arrays",
    "csr_decode",
    "csr_encode",
    "decode_payload",
    "encode_payload",
    "entropy_ratio",
    "golomb_decode",
    "golomb_encode",
    "golomb_parameter",
    "h_comp",
    "h_geo",
    "index_free_encode",
    "measure_payload",
]
