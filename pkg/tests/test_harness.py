import dataclasses

import numpy as np
import pytest

from ultradelta.allocation import partition_by_variance
from ultradelta.exceptions import UltraDeltaError
from ultradelta.harness import (
    LayerSpec,
    SyntheticDeltaSpec,
    ToyTask,
    accuracy,
    accuracy_retention_test,
    gen_synthetic_delta,
    magnitude_prune_codes,
    synthetic_checkpoints,
    train_toy_model,
)

SMALL = ToyTask(input_dim=64, n_train=4000, n_test=1000, separation=0.5, shift=0.5,
                pretrain_steps=100, finetune_steps=100)


def test_zero_sigma_layer_is_constant():
    d = gen_synthetic_delta(SyntheticDeltaSpec((LayerSpec("c", (10, 10), mu=0.3, sigma=0.0),)))
    assert np.all(d["c"] == 0.3) and d.variances["c"] == 0.0
    with pytest.raises(UltraDeltaError):
        gen_synthetic_delta(SyntheticDeltaSpec((LayerSpec("x", (2,), sigma=-1.0),)))


def test_variance_ordering_drives_groups():
    spec = SyntheticDeltaSpec(tuple(
        LayerSpec(f"l{i}", (400, 250), sigma=s) for i, s in enumerate((0.01, 0.02, 0.03))))
    d = gen_synthetic_delta(spec)
    groups = partition_by_variance([(n, d[n].size, d.variances[n]) for n in d])
    assert groups == {"l0": "low", "l1": "mid", "l2": "high"}


def test_empirical_variance_sampling_band():
    n, sigma = 10**6, 0.02
    d = gen_synthetic_delta(SyntheticDeltaSpec((LayerSpec("w", (1000, 1000), sigma=sigma),), seed=3))
    sd_of_var = sigma**2 * np.sqrt(2 / (n - 1))
    assert abs(d.variances["w"] - sigma**2) <= 4 * sd_of_var


def test_synthetic_checkpoints_difference_is_the_delta():
    spec = SyntheticDeltaSpec((LayerSpec("w", (8, 8), sigma=0.01),), seed=1)
    pre, ft = synthetic_checkpoints(spec)
    diff = ft.widened("w") - pre.widened("w")
    np.testing.assert_allclose(diff, gen_synthetic_delta(spec)["w"], atol=1e-7)


def test_magnitude_counterexample_drops_whole_groups():
    codes = np.repeat(np.arange(16), 100)
    kept = magnitude_prune_codes(codes, 7.5, 0.5)
    assert kept.size <= 800
    assert set(np.unique(kept)) <= set(range(16)) - {7, 8}


@pytest.fixture(scope="module")
def small_models():
    return train_toy_model(SMALL)


def test_toy_training_learns_target(small_models):
    pre, ft = small_models
    X, y = SMALL.sample("target", "test")
    assert accuracy(ft, X, y) >= 0.95
    assert accuracy(ft, X, y) > accuracy(pre, X, y)


def test_toy_training_deterministic(small_models):
    again = train_toy_model(SMALL)
    assert all(again[k].equals(small_models[k]) for k in range(2))


def test_zero_finetune_steps_zero_delta():
    pre, ft = train_toy_model(dataclasses.replace(SMALL, finetune_steps=0, pretrain_steps=5))
    assert ft.equals(pre)


def test_lossless_grid_point_has_no_gap(small_models):
    grid = [dict(s_mid=0.0, s_step=0.0, use_quantization=False, intervals=1 << 16, gamma=1.0)]
    (s, bits, acc_ft, acc_c), = accuracy_retention_test(SMALL, grid, models=small_models)
    assert bits is None and abs(acc_ft - acc_c) <= 1e-3


def test_retention_rows(small_models):
    grid = [dict(s_mid=0.9, bit_width=4), dict(s_mid=0.9, use_quantization=False)]
    rows = accuracy_retention_test(SMALL, grid, models=small_models)
    assert [r[:2] for r in rows] == [(0.9, 4), (0.9, None)]
    assert all(0.0 <= r[3] <= 1.0 for r in rows)


def test_bad_learning_rate():
    with pytest.raises(UltraDeltaError):
        train_toy_model(dataclasses.replace(SMALL, learning_rate=0.0))
