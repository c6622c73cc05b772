"""Uniform quantization followed by value-grouped Bernoulli pruning, and the
interval-grouped variant for unquantized deltas.

Group ``g`` of a layer (a quantization code, or an interval index) draws its
keep decisions from the substream ``(layer_seed, g)`` in ascending position
order, so the two variants produce identical masks when their groups
coincide.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DecodeError, UsageError
from .rng import substream
from .validation import check_array, check_bit_width, check_positive_int, check_seed, check_sparsity


@dataclass(frozen=True)
class QuantGrid:
    min: float
    max: float
    step: float
    bit_width: int

    @property
    def code_count(self):
        return 1 << self.bit_width

    @classmethod
    def from_range(cls, lo, hi, bit_width):
        lo, hi = float(lo), float(hi)
        step = 0.0 if hi == lo else (hi - lo) / ((1 << bit_width) - 1)
        return cls(lo, hi, step, bit_width)

    def values(self, codes):
        return np.asarray(codes, dtype=np.float64) * self.step + self.min


@dataclass
class PrunedQuantLayer:
    """Kept positions (flat, ascending) and their codes for one layer."""

    grid: QuantGrid
    shape: tuple
    positions: np.ndarray
    codes: np.ndarray
    sparsity: float
    seed: int

    @property
    def n_elements(self):
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def n_kept(self):
        return int(self.positions.size)


def quantize_uniform(delta_layer, b=4):
    """Quantize a layer onto ``2**b`` evenly spaced levels between its extrema.

    Returns ``(grid, codes)``. Rounding is half-to-even. A constant layer gets
    a zero step and all-zero codes.
    """
    b = check_bit_width(b)
    x = check_array(delta_layer, "delta layer")
    grid = QuantGrid.from_range(x.min(), x.max(), b)
    if grid.step == 0.0:
        return grid, np.zeros(x.shape, dtype=np.int64)
    codes = np.rint((x - grid.min) / grid.step)
    codes = np.clip(codes, 0, grid.code_count - 1).astype(np.int64)
    return grid, codes


def _group_keep_mask(groups, s_l, seed):
    """Bernoulli(1 - s_l) keep mask, one substream per distinct group label."""
    flat = np.asarray(groups).ravel()
    keep = np.zeros(flat.size, dtype=bool)
    if s_l == 0.0:
        keep[:] = True
        return keep
    order = np.argsort(flat, kind="stable")
    labels, starts = np.unique(flat[order], return_index=True)
    bounds = np.append(starts, flat.size)
    for label, lo, hi in zip(labels, bounds[:-1], bounds[1:]):
        idx = order[lo:hi]
        draws = substream(seed, int(label)).random(idx.size)
        keep[idx] = draws >= s_l
    return keep


def group_prune(codes, s_l, seed, grid=None):
    """Prune a code tensor with independent per-code Bernoulli masks.

    Each position survives with probability ``1 - s_l``; positions with equal
    code share one random substream. Returns a :class:`PrunedQuantLayer`.
    """
    s_l = check_sparsity(s_l, "layer sparsity")
    seed = check_seed(seed)
    codes = np.asarray(codes)
    if codes.dtype.kind not in "iu":
        raise UsageError("codes must be an integer array")
    keep = _group_keep_mask(codes, s_l, seed)
    positions = np.flatnonzero(keep)
    if grid is None:
        top = int(codes.max()) if codes.size else 1
        bits = max(2, int(top).bit_length())
        grid = QuantGrid(0.0, float((1 << bits) - 1), 1.0, bits)
    return PrunedQuantLayer(
        grid, tuple(codes.shape), positions, codes.ravel()[positions].astype(np.int64), s_l, seed
    )


def random_prune(shape, s_l, seed):
    """Single-group Bernoulli pruning; returns kept flat positions."""
    s_l = check_sparsity(s_l, "layer sparsity")
    seed = check_seed(seed)
    n = int(np.prod(shape, dtype=np.int64))
    return np.flatnonzero(_group_keep_mask(np.zeros(n, dtype=np.int64), s_l, seed))


def interval_indices(x, n_intervals):
    """Interval index of each element over ``n_intervals`` equal-width bins
    spanning ``[min, max]``; the maximum falls in the last bin."""
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        return np.zeros(x.shape, dtype=np.int64)
    width = (hi - lo) / n_intervals
    idx = np.floor((x - lo) / width).astype(np.int64)
    return np.clip(idx, 0, n_intervals - 1)


def interval_group_mask(delta_layer, n_intervals, s_l, seed):
    n_intervals = check_positive_int(n_intervals, "interval count")
    s_l = check_sparsity(s_l, "layer sparsity")
    seed = check_seed(seed)
    x = check_array(delta_layer, "delta layer")
    return _group_keep_mask(interval_indices(x, n_intervals), s_l, seed).reshape(x.shape)


def interval_group_prune(delta_layer, n_intervals=16, s_l=0.9, seed=0):
    """Unquantized variant: group by value interval, prune within each group,
    keep surviving values at full precision."""
    x = check_array(delta_layer, "delta layer")
    mask = interval_group_mask(x, n_intervals, s_l, seed)
    return np.where(mask, x, 0.0)


def dequantize(layer):
    """Dense delta: kept positions get ``min + code * step``, others exact 0."""
    n = layer.n_elements
    if layer.positions.size and (layer.positions[-1] >= n or layer.positions[0] < 0):
        raise DecodeError("kept position outside layer")
    if layer.codes.size and (layer.codes.min() < 0 or layer.codes.max() >= layer.grid.code_count):
        raise DecodeError("code outside the quantization grid")
    out = np.zeros(n, dtype=np.float64)
    out[layer.positions] = layer.grid.values(layer.codes)
    return out.reshape(layer.shape)


class UniformQuantizer(BaseEstimator, TransformerMixin):
    """Fit the grid on a layer, map values to codes and back.

    Attributes
    ----------
    grid_ : QuantGrid
    """

    def __init__(self, bit_width=4):
        self.bit_width = bit_width

    def fit(self, X, y=None):
        self.grid_, _ = quantize_uniform(X, self.bit_width)
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        x = check_array(X, "X")
        if self.grid_.step == 0.0:
            return np.zeros(x.shape, dtype=np.int64)
        codes = np.rint((x - self.grid_.min) / self.grid_.step)
        return np.clip(codes, 0, self.grid_.code_count - 1).astype(np.int64)

    def inverse_transform(self, X):
        check_is_fitted(self, "grid_")
        return self.grid_.values(X)


class GroupPruner(BaseEstimator, TransformerMixin):
    """Quantize then prune one layer; ``transform`` returns the dense result.

    With ``bit_width=None`` the interval-grouped unquantized variant is used.
    """

    def __init__(self, sparsity=0.9, bit_width=4, n_intervals=16, seed=0):
        self.sparsity = sparsity
        self.bit_width = bit_width
        self.n_intervals = n_intervals
        self.seed = seed

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        if self.bit_width is None:
            return interval_group_prune(X, self.n_intervals, self.sparsity, self.seed)
        grid, codes = quantize_uniform(X, self.bit_width)
        return dequantize(group_prune(codes, self.sparsity, self.seed, grid=grid))
