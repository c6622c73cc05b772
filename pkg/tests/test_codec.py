import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ultradelta.codec import (
    RatioReport,
    bcsr_decode,
    bcsr_encode,
    csr_arrays,
    csr_decode,
    csr_encode,
    decode_payload,
    encode_payload,
    entropy_ratio,
    golomb_decode,
    golomb_encode,
    golomb_parameter,
    h_comp,
    h_geo,
)
from ultradelta.codec.bitio import BitReader, field_bits, pack_bits, read_fields, unpack_bits
from ultradelta.codec.layout import SparseLayerPayload
from ultradelta.codec.payload import matrix_dims, measure_payload
from ultradelta.exceptions import (
    ChecksumMismatchError,
    DecodeError,
    FormatError,
    MalformedHeaderError,
    RunOverflowError,
    TruncatedStreamError,
    UsageError,
)


@st.composite
def sparse_layers(draw):
    rank1 = draw(st.booleans())
    shape = (draw(st.integers(1, 300)),) if rank1 else (draw(st.integers(1, 40)), draw(st.integers(1, 40)))
    n = math.prod(shape)
    b = draw(st.sampled_from([2, 3, 4, 5, 8, 12, 16, 32]))
    density = draw(st.sampled_from([0.0, 0.01, 0.1, 0.5, 1.0]))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    positions = np.flatnonzero(rng.random(n) < density)
    codes = rng.integers(0, 1 << b, positions.size, dtype=np.int64)
    return shape, positions, codes, b


@pytest.mark.parametrize("scheme", ["golomb", "csr", "bcsr"])
@settings(max_examples=200, deadline=None)
@given(layer=sparse_layers())
def test_round_trip_property(scheme, layer):
    shape, positions, codes, b = layer
    payload = encode_payload(scheme, shape, positions, codes, b, block=(3, 5))
    back = SparseLayerPayload.from_bytes(payload.to_bytes())
    assert back == payload
    pos2, codes2 = decode_payload(back)
    np.testing.assert_array_equal(pos2, positions)
    np.testing.assert_array_equal(codes2, codes)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2**40), st.integers(1, 41)), max_size=50))
def test_field_bits_round_trip(fields):
    values = [v & ((1 << w) - 1) for v, w in fields]
    widths = [w for _, w in fields]
    blob = pack_bits(field_bits(values, widths))
    reader = BitReader(blob)
    bits = unpack_bits(blob)
    off = 0
    for v, w in zip(values, widths):
        if w <= 32:
            assert reader.read(w) == v
        else:
            reader.pos += w
        got, off = read_fields(bits, off, 1, w)
        assert int(got[0]) == v


def test_bit_order_is_msb_first():
    assert pack_bits(field_bits([0b101], 3)) == bytes([0b10100000])
    r = BitReader(bytes([0b11101000]))
    assert r.read_unary() == 3 and r.read(2) == 0b10
    with pytest.raises(TruncatedStreamError):
        BitReader(b"\xff").read_unary()


def test_golomb_parameter_condition():
    for p in (0.5, 0.1, 0.05, 0.03, 0.01, 0.001):
        M, q = golomb_parameter(p), 1 - p
        assert q**M + q ** (M + 1) <= 1 < q ** (M - 1) + q**M or M == 1
    assert golomb_parameter(1.0) == 1 and golomb_parameter(0.0) == 1


def test_golomb_empty_payload():
    p = golomb_encode([], [], 1000, 4)
    assert p.bitstream == b"" and p.n_kept == 0
    pos, codes = golomb_decode(p)
    assert pos.size == 0


def test_golomb_single_position_hand_trace():
    p = golomb_encode([0], [7], 1, 4)
    assert p.params["M"] == 1
    # run 0 with M = 1: unary "0", no remainder, then symbol 0111
    assert p.bitstream == bytes([0b00111000])


def test_golomb_all_kept():
    n = 1000
    p = golomb_encode(np.arange(n), np.arange(n) % 16, n, 4)
    assert p.params["M"] == 1
    assert len(p.bitstream) * 8 == n * (4 + 1)
    pos, codes = golomb_decode(p)
    assert np.array_equal(pos, np.arange(n))


def test_golomb_corrupted_length_fields():
    p = golomb_encode([3, 40, 99], [1, 2, 3], 100, 4)
    short = SparseLayerPayload("golomb", 4, 100, 3, p.params, p.bitstream[:-1])
    with pytest.raises(TruncatedStreamError):
        golomb_decode(short)
    more = SparseLayerPayload("golomb", 4, 100, 5, p.params, p.bitstream)
    with pytest.raises(FormatError):
        golomb_decode(more)
    long = SparseLayerPayload("golomb", 4, 100, 3, p.params, p.bitstream + b"\x00\x00")
    with pytest.raises(TruncatedStreamError):
        golomb_decode(long)
    over = SparseLayerPayload("golomb", 4, 50, 3, p.params, p.bitstream)
    with pytest.raises(RunOverflowError):
        golomb_decode(over)


def test_wire_checks():
    raw = bytearray(golomb_encode([1, 2], [3, 4], 10, 4).to_bytes())
    with pytest.raises(TruncatedStreamError):
        SparseLayerPayload.from_bytes(bytes(raw[:-6]))
    with pytest.raises(MalformedHeaderError):
        SparseLayerPayload.from_bytes(bytes(raw) + b"\x00")
    bad = bytearray(raw)
    bad[-5] ^= 1
    with pytest.raises(ChecksumMismatchError):
        SparseLayerPayload.from_bytes(bytes(bad))
    bad = bytearray(raw)
    bad[0] = 99
    with pytest.raises(MalformedHeaderError):
        SparseLayerPayload.from_bytes(bytes(bad))


def test_encoder_input_validation():
    with pytest.raises(UsageError):
        golomb_encode([2, 1], [0, 0], 5, 4)
    with pytest.raises(UsageError):
        golomb_encode([5], [0], 5, 4)
    with pytest.raises(UsageError):
        csr_encode(2, 2, [0], [16], 4)
    with pytest.raises(UsageError):
        encode_payload("zip", (2, 2), [0], [0], 4)


def test_csr_hand_example():
    row_ptr, col = csr_arrays(2, 2, [2])
    assert row_ptr.tolist() == [0, 0, 1] and col.tolist() == [0]
    empty_ptr, _ = csr_arrays(3, 4, [])
    assert empty_ptr.tolist() == [0, 0, 0, 0]
    p = csr_encode(2, 2, [2], [5], 4)
    assert p.params["ptr_width"] == 16 and p.params["idx_width"] == 1


def test_csr_rejects_inconsistent_pointers():
    p = csr_encode(3, 3, [0, 4, 8], [1, 2, 3], 4)
    tampered = SparseLayerPayload("csr", 4, 9, 3, dict(p.params, rows=1, cols=9), p.bitstream)
    with pytest.raises(FormatError):
        csr_decode(tampered)


def test_bcsr_dense_block_and_padding():
    p = bcsr_encode(4, 4, np.arange(16), np.arange(16), 4)
    pos, codes = bcsr_decode(p)
    assert np.array_equal(pos, np.arange(16)) and np.array_equal(codes, np.arange(16))
    # odd shape padded to whole blocks
    p = bcsr_encode(5, 7, [0, 34], [1, 2], 4, 4, 4)
    assert bcsr_decode(p)[0].tolist() == [0, 34]
    with pytest.raises(UsageError):
        bcsr_encode(4, 4, [0], [0], 4, 0, 4)


def test_matrix_dims():
    assert matrix_dims((7,)) == (1, 7)
    assert matrix_dims((3, 4, 5)) == (3, 20)
    assert matrix_dims(()) == (1, 1)


def test_scheme_ordering_on_random_masks():
    rng = np.random.default_rng(0)
    shape = (512, 512)
    n = shape[0] * shape[1]
    positions = np.flatnonzero(rng.random(n) >= 0.97)
    codes = rng.integers(0, 16, positions.size)
    sizes = {s: measure_payload(encode_payload(s, shape, positions, codes, 4))
             for s in ("golomb", "csr", "bcsr")}
    assert sizes["golomb"] < sizes["csr"] < sizes["bcsr"]
    assert sizes["golomb"] <= 1.05 * h_comp(0.97, 16)
    free = measure_payload(encode_payload("index_free", shape, positions, codes, 4))
    header_bits = encode_payload("index_free", shape, [], [], 4).total_bits
    assert free * n == pytest.approx(positions.size * 4 + header_bits, abs=8)


def test_golomb_efficiency_at_95():
    rng = np.random.default_rng(1)
    n = 10**6
    positions = np.flatnonzero(rng.random(n) >= 0.95)
    p = golomb_encode(positions, rng.integers(0, 16, positions.size), n, 4)
    assert h_comp(0.95, 16) == pytest.approx(0.4864, abs=1e-4)
    assert measure_payload(p) <= 1.05 * 0.4864


def test_entropy_ratio_values():
    assert entropy_ratio(0.95, 4).entropy_ratio == pytest.approx(32.9, abs=0.05)
    assert entropy_ratio(0.97, 4).entropy_ratio == pytest.approx(50.9, abs=0.05)
    assert entropy_ratio(0.95, 16).entropy_ratio == pytest.approx(14.7, abs=0.05)
    assert entropy_ratio(0.90, 4).entropy_ratio == pytest.approx(18.4, abs=0.05)
    assert entropy_ratio(0.95, 4).index_free_ratio == pytest.approx(80.0)
    assert h_geo(0.5) == pytest.approx(1.0)
    with pytest.raises(UsageError):
        entropy_ratio(1.0, 4)


def test_ratio_report_dict_round_trip():
    r = entropy_ratio(0.99, 4)
    r.bits_per_parameter["golomb"] = 0.12
    assert RatioReport.from_dict(r.to_dict()) == r


def test_decode_rejects_index_free():
    with pytest.raises(DecodeError):
        decode_payload(encode_payload("index_free", (4,), [1], [1], 4))
