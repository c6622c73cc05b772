import numpy as np
import pytest

from ultradelta.exceptions import DecodeError, UsageError
from ultradelta.quantization import (
    GroupPruner,
    PrunedQuantLayer,
    QuantGrid,
    UniformQuantizer,
    dequantize,
    group_prune,
    interval_group_mask,
    interval_group_prune,
    interval_indices,
    quantize_uniform,
    random_prune,
)
from ultradelta.stats import binomial_within


def test_hand_example_two_bits():
    grid, codes = quantize_uniform([-1.0, 0.0, 1.0], 2)
    assert grid.step == pytest.approx(2 / 3)
    # (0 - -1) / (2/3) = 1.5 rounds half-to-even to 2
    np.testing.assert_array_equal(codes, [0, 2, 3])
    layer = group_prune(codes, 0.0, 0, grid=grid)
    np.testing.assert_allclose(dequantize(layer), [-1, 1 / 3, 1])


def test_constant_layer():
    x = np.full((4, 4), 0.25)
    grid, codes = quantize_uniform(x, 4)
    assert grid.step == 0.0 and not codes.any()
    np.testing.assert_array_equal(dequantize(group_prune(codes, 0.0, 1, grid=grid)), x)


def test_grid_points_are_fixed():
    grid = QuantGrid.from_range(-0.5, 1.0, 4)
    x = grid.values(np.arange(16))
    g2, codes = quantize_uniform(x, 4)
    assert g2 == grid
    np.testing.assert_array_equal(codes, np.arange(16))


@pytest.mark.parametrize("b", [2, 3, 4, 8, 16])
def test_error_within_half_step(b):
    x = np.random.default_rng(b).standard_normal(5000)
    grid, codes = quantize_uniform(x, b)
    assert codes.min() == 0 and codes.max() == (1 << b) - 1
    assert np.max(np.abs(grid.values(codes) - x)) <= grid.step / 2 * (1 + 1e-12)


def test_bit_width_validation():
    with pytest.raises(UsageError):
        quantize_uniform([0.0, 1.0], 1)
    with pytest.raises(UsageError):
        quantize_uniform([0.0, 1.0], 17)
    with pytest.raises(UsageError):
        quantize_uniform([0.0, np.nan], 4)


def test_zero_sparsity_keeps_all():
    codes = np.random.default_rng(0).integers(0, 16, (10, 10))
    layer = group_prune(codes, 0.0, 3)
    assert layer.n_kept == 100


def test_single_code_kept_count_binomial():
    n = 10**6
    layer = group_prune(np.zeros(n, dtype=np.int64), 0.95, 42)
    assert binomial_within(layer.n_kept, n, 0.05)
    assert abs(layer.n_kept - 50_000) <= 4 * np.sqrt(n * 0.95 * 0.05)


def test_two_codes_proportions_preserved():
    n = 10**6
    codes = np.zeros(n, dtype=np.int64)
    codes[: int(0.3 * n)] = 1
    np.random.default_rng(5).shuffle(codes)
    kept = codes[group_prune(codes, 0.9, 9).positions]
    frac1 = kept.mean()
    assert abs(frac1 - 0.3) / 0.3 < 0.02
    assert abs((1 - frac1) - 0.7) / 0.7 < 0.02


def test_pruning_deterministic_and_seed_sensitive():
    codes = np.random.default_rng(1).integers(0, 16, 4096)
    a = group_prune(codes, 0.9, 123).positions
    b = group_prune(codes, 0.9, 123).positions
    c = group_prune(codes, 0.9, 124).positions
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_group_decisions_independent_of_other_groups():
    # the keep pattern within one code depends only on that code's positions
    rng = np.random.default_rng(2)
    codes = rng.integers(0, 4, 2000)
    other = codes.copy()
    other[codes == 3] = 2
    keep_a = np.zeros(2000, bool)
    keep_a[group_prune(codes, 0.7, 5).positions] = True
    keep_b = np.zeros(2000, bool)
    keep_b[group_prune(other, 0.7, 5).positions] = True
    for c in (0, 1):
        assert np.array_equal(keep_a[codes == c], keep_b[codes == c])


def test_random_prune_is_single_group():
    codes = np.zeros((30, 40), dtype=np.int64)
    assert np.array_equal(random_prune(codes.shape, 0.8, 7), group_prune(codes, 0.8, 7).positions)


def test_interval_indices_hand_example():
    x = np.array([0.0, 7.3, 10.0, 5.99])
    np.testing.assert_array_equal(interval_indices(x, 5), [0, 3, 4, 2])


def test_interval_variant_identity_and_single_interval():
    x = np.random.default_rng(4).standard_normal((16, 16))
    np.testing.assert_array_equal(interval_group_prune(x, 16, 0.0, 1), x)
    mask = interval_group_mask(x, 1, 0.9, 8)
    assert np.array_equal(np.flatnonzero(mask), random_prune(x.shape, 0.9, 8))


def test_interval_variant_matches_group_prune_on_grid_input():
    b = 4
    grid = QuantGrid.from_range(-1.0, 1.0, b)
    codes = np.random.default_rng(6).integers(0, 16, 3000)
    codes[:2] = [0, 15]
    x = grid.values(codes)
    mask = interval_group_mask(x, 1 << b, 0.9, 11)
    # grid points sit at interval centres only approximately; compare groups
    idx = interval_indices(x, 1 << b)
    expected = group_prune(idx, 0.9, 11).positions
    assert np.array_equal(np.flatnonzero(mask), expected)


def test_dequantize_rejects_bad_layers():
    grid = QuantGrid.from_range(0.0, 1.0, 2)
    with pytest.raises(DecodeError):
        dequantize(PrunedQuantLayer(grid, (4,), np.array([5]), np.array([0]), 0.5, 0))
    with pytest.raises(DecodeError):
        dequantize(PrunedQuantLayer(grid, (4,), np.array([1]), np.array([4]), 0.5, 0))


def test_all_pruned_layer_is_zero():
    grid = QuantGrid.from_range(0.0, 1.0, 2)
    empty = np.array([], dtype=np.int64)
    assert not dequantize(PrunedQuantLayer(grid, (3, 3), empty, empty, 1.0, 0)).any()


def test_one_kept_value():
    grid = QuantGrid.from_range(-2.0, 1.0, 2)
    out = dequantize(PrunedQuantLayer(grid, (2, 3), np.array([4]), np.array([3]), 0.5, 0))
    assert out[1, 1] == -2.0 + 3 * 1.0 and np.count_nonzero(out) == 1


def test_estimators():
    x = np.linspace(-1, 1, 50)
    q = UniformQuantizer(bit_width=3).fit(x)
    assert np.max(np.abs(q.inverse_transform(q.transform(x)) - x)) <= q.grid_.step / 2 + 1e-12
    dense = GroupPruner(sparsity=0.0, bit_width=None).fit_transform(x)
    np.testing.assert_array_equal(dense, x)
    pruned = GroupPruner(sparsity=0.5, bit_width=4, seed=3).fit_transform(x.reshape(5, 10))
    assert pruned.shape == (5, 10)
