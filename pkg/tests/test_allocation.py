import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ultradelta.allocation import (
    CompressionPlan,
    VarianceSparsityAllocator,
    assign_sparsity,
    gaussian_layer_entropy,
    layer_variance,
    partition_by_variance,
    rate_distortion,
)
from ultradelta.exceptions import UsageError


def test_layer_variance_cases():
    assert layer_variance(np.full((3, 3), 2.5)) == 0.0
    assert layer_variance([-1.0, 1.0]) == 1.0
    assert layer_variance([0, 0, 0, 4]) == 3.0


def _groups(assignment, layers):
    return {g: [n for n, _, _ in layers if assignment[n] == g] for g in ("low", "mid", "high")}


def test_three_layers_forced():
    layers = [("a", 10, 1.0), ("b", 10, 2.0), ("c", 10, 3.0)]
    assert _groups(partition_by_variance(layers), layers) == {"low": ["a"], "mid": ["b"], "high": ["c"]}


def test_six_equal_layers_two_per_group():
    layers = [(f"l{i}", 7, float(i)) for i in range(6)]
    g = _groups(partition_by_variance(layers), layers)
    assert [len(v) for v in g.values()] == [2, 2, 2]


def test_sizes_5_5_5_15():
    layers = [("a", 5, 1.0), ("b", 5, 2.0), ("c", 5, 3.0), ("d", 15, 4.0)]
    g = _groups(partition_by_variance(layers), layers)
    assert g == {"low": ["a", "b"], "mid": ["c"], "high": ["d"]}


def _enumerate_best(counts):
    """Oracle: all contiguous non-empty 3-splits by minimal max deviation."""
    total = sum(counts)
    best, arg = math.inf, []
    for b1, b2 in itertools.combinations(range(1, len(counts)), 2):
        masses = [sum(counts[:b1]), sum(counts[b1:b2]), sum(counts[b2:])]
        dev = max(abs(3 * m - total) for m in masses)
        if dev < best:
            best, arg = dev, [(b1, b2)]
        elif dev == best:
            arg.append((b1, b2))
    return best, arg


def test_enumeration_oracle_tie_on_5_5_5_15():
    best, arg = _enumerate_best([5, 5, 5, 15])
    # the greedy split (2, 3) is one of the optimal enumerated splits
    assert (2, 3) in arg and best == 15


def test_variance_ties_broken_by_name():
    layers = [("b", 1, 1.0), ("a", 1, 1.0), ("c", 1, 1.0)]
    g = _groups(partition_by_variance(layers), layers)
    assert g == {"low": ["a"], "mid": ["b"], "high": ["c"]}


def test_fewer_than_three_layers_warns():
    with pytest.warns(RuntimeWarning):
        g = partition_by_variance([("a", 4, 1.0), ("b", 4, 2.0)])
    assert set(g.values()) == {"mid"}
    with pytest.raises(UsageError):
        partition_by_variance([])


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(1, 10_000), min_size=3, max_size=60))
def test_greedy_mass_deviation_bounded(counts):
    layers = [(f"l{i:02d}", c, float(i)) for i, c in enumerate(counts)]
    a = partition_by_variance(layers)
    total = sum(counts)
    for g in ("low", "mid", "high"):
        mass = sum(c for n, c, _ in layers if a[n] == g)
        assert mass > 0
        assert abs(mass - total / 3) <= max(counts)


def test_assign_equal_masses():
    layers = [("a", 10, 1.0), ("b", 10, 2.0), ("c", 10, 3.0)]
    plan = assign_sparsity(layers, partition_by_variance(layers), 0.97, 0.02)
    assert [r.sparsity for r in plan.layers] == pytest.approx([0.99, 0.97, 0.95])
    assert plan.overall_sparsity() == pytest.approx(0.97, abs=1e-12)


def test_zero_step_uniform():
    layers = [(f"l{i}", i + 1, float(i)) for i in range(5)]
    plan = assign_sparsity(layers, partition_by_variance(layers), 0.9, 0.0)
    assert all(r.sparsity == 0.9 for r in plan.layers)


def test_unequal_masses_linear_solve():
    layers = [("a", 4, 1.0), ("b", 4, 2.0), ("c", 2, 3.0)]
    assignment = {"a": "low", "b": "mid", "c": "high"}
    plan = assign_sparsity(layers, assignment, 0.9, 0.05)
    # oracle: 0.4 * 0.95 + 0.4 * x + 0.2 * 0.85 = 0.9
    x = (0.9 - 0.4 * 0.95 - 0.2 * 0.85) / 0.4
    assert plan["b"].sparsity == pytest.approx(x, abs=1e-12)
    assert plan.overall_sparsity() == pytest.approx(0.9, abs=1e-12)


def test_infeasible_steps_rejected():
    layers = [("a", 1, 1.0), ("b", 1, 2.0), ("c", 1, 3.0)]
    a = partition_by_variance(layers)
    with pytest.raises(UsageError):
        assign_sparsity(layers, a, 0.99, 0.02)
    with pytest.raises(UsageError):
        assign_sparsity(layers, a, 0.01, 0.02)
    heavy = [("a", 1, 1.0), ("b", 1, 2.0), ("c", 100, 3.0)]
    with pytest.raises(UsageError):
        assign_sparsity(heavy, partition_by_variance(heavy), 0.97, 0.02)


def test_plan_dict_round_trip():
    layers = [(f"l{i}", 10 * (i + 1), float(i)) for i in range(4)]
    plan = assign_sparsity(layers, partition_by_variance(layers), 0.9, 0.02, 4, 7)
    assert CompressionPlan.from_dict(plan.to_dict()) == plan


def test_entropy_and_rate_distortion():
    assert gaussian_layer_entropy(1.0) == pytest.approx(1.418939, abs=1e-6)
    assert gaussian_layer_entropy(math.e * 0.3) == pytest.approx(gaussian_layer_entropy(0.3) + 1)
    assert gaussian_layer_entropy(0.6) - gaussian_layer_entropy(0.3) == pytest.approx(math.log(2))
    assert rate_distortion(4.0, 4.0) == 0.0
    assert rate_distortion(4.0, 1.0) == 1.0
    assert rate_distortion(1.0, 2.0) == 0.0
    with pytest.raises(UsageError):
        gaussian_layer_entropy(0.0)
    with pytest.raises(UsageError):
        rate_distortion(1.0, 0.0)


def test_allocator_estimator():
    rng = np.random.default_rng(0)
    X = {f"l{i}": rng.normal(0, 0.01 * (i + 1), (20, 20)) for i in range(3)}
    est = VarianceSparsityAllocator(s_mid=0.9, s_step=0.05).fit(X)
    assert [est.plan_[f"l{i}"].group for i in range(3)] == ["low", "mid", "high"]
    assert est.get_params()["s_mid"] == 0.9
