"""Variance-based mixed sparsity allocation and its analytics.

Layers are sorted by delta variance and cut into three contiguous groups of
roughly equal parameter mass. The low-variance group is pruned hardest.
"""

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import UsageError
from .validation import check_array, check_bit_width, check_seed, check_sparsity

GROUPS = ("low", "mid", "high")


@dataclass
class LayerPlan:
    name: str
    parameter_count: int
    variance: float
    group: str
    sparsity: float


@dataclass
class CompressionPlan:
    layers: list
    s_mid: float
    s_step: float
    bit_width: int = 4
    master_seed: int = 0
    group_sparsity: dict = field(default_factory=dict)

    def __getitem__(self, name):
        for rec in self.layers:
            if rec.name == name:
                return rec
        raise KeyError(name)

    @property
    def names(self):
        return [rec.name for rec in self.layers]

    def overall_sparsity(self):
        """Parameter-weighted mean sparsity."""
        total = sum(r.parameter_count for r in self.layers)
        if total == 0:
            return self.s_mid
        return sum(r.parameter_count * r.sparsity for r in self.layers) / total

    def to_dict(self):
        d = asdict(self)
        d["layers"] = [asdict(r) for r in self.layers]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["layers"] = [LayerPlan(**r) for r in d["layers"]]
        return cls(**d)


def layer_variance(delta_layer):
    """Population variance of all elements of a layer."""
    x = check_array(delta_layer, "delta layer").ravel()
    return float(np.var(x))


def partition_by_variance(layers):
    """Assign ``(name, count, variance)`` records to low/mid/high groups.

    Layers are sorted by ascending variance (name breaks ties). The first
    boundary is placed where the cumulative count is nearest ``total/3``, the
    second nearest ``2*total/3``; ties go to the earlier boundary and every
    group keeps at least one layer. With fewer than three layers everything
    lands in ``mid`` and a warning is emitted.
    """
    layers = list(layers)
    if not layers:
        raise UsageError("no layers to partition")
    if len(layers) < 3:
        warnings.warn(
            "fewer than three layers; all layers assigned to the mid group",
            RuntimeWarning,
            stacklevel=2,
        )
        return {name: "mid" for name, _, _ in layers}

    order = sorted(layers, key=lambda r: (r[2], r[0]))
    counts = np.array([int(r[1]) for r in order], dtype=np.int64)
    cum = np.concatenate([[0], np.cumsum(counts)])
    total = cum[-1]
    n = len(order)

    def nearest(target, lo, hi):
        # boundary index k means layers [0, k) precede it; lo <= k <= hi
        ks = np.arange(lo, hi + 1)
        dev = np.abs(3 * cum[ks] - target)
        return int(ks[np.argmin(dev)])

    # compare 3*cum against multiples of total to stay in integers
    b1 = nearest(total, 1, n - 2)
    b2 = nearest(2 * total, b1 + 1, n - 1)
    groups = {}
    for i, (name, _, _) in enumerate(order):
        groups[name] = "low" if i < b1 else ("mid" if i < b2 else "high")
    return groups


def assign_sparsity(layers, assignment, s_mid, s_step, bit_width=4, master_seed=0):
    """Build a :class:`CompressionPlan` from a group assignment.

    Low and high groups get ``s_mid + s_step`` and ``s_mid - s_step``. The mid
    group's sparsity is corrected so that the parameter-weighted mean equals
    ``s_mid`` exactly when group masses differ.
    """
    s_mid = check_sparsity(s_mid, "s_mid")
    if not np.isfinite(s_step) or s_step < 0:
        raise UsageError(f"s_step must be >= 0, got {s_step}")
    s_step = float(s_step)
    if s_mid + s_step >= 1.0:
        raise UsageError(f"infeasible step: s_mid + s_step = {s_mid + s_step} >= 1")
    if s_mid - s_step < 0.0:
        raise UsageError(f"infeasible step: s_mid - s_step = {s_mid - s_step} < 0")
    bit_width = check_bit_width(bit_width)
    master_seed = check_seed(master_seed)

    layers = list(layers)
    mass = {g: 0 for g in GROUPS}
    for name, count, _ in layers:
        mass[assignment[name]] += int(count)
    total = sum(mass.values())
    group_s = {"low": s_mid + s_step, "mid": s_mid, "high": s_mid - s_step}
    if total > 0 and mass["mid"] > 0:
        imbalance = (mass["low"] - mass["high"]) / mass["mid"]
        group_s["mid"] = s_mid - s_step * imbalance
        if not 0.0 <= group_s["mid"] < 1.0:
            raise UsageError(
                f"mid-group correction to {group_s['mid']:.6f} leaves [0, 1); "
                "reduce s_step"
            )
    records = [
        LayerPlan(name, int(count), float(var), assignment[name], group_s[assignment[name]])
        for name, count, var in layers
    ]
    return CompressionPlan(
        records, s_mid, s_step, bit_width, master_seed,
        {g: group_s[g] for g in GROUPS if mass[g] > 0},
    )


def gaussian_layer_entropy(sigma):
    """Differential entropy in nats of ``N(mu, sigma^2)``."""
    if not sigma > 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    return math.log(sigma) + 0.5 * math.log(2 * math.pi) + 0.5


def rate_distortion(sigma2, D):
    """Gaussian rate-distortion function in bits per sample."""
    if not D > 0:
        raise UsageError(f"distortion must be positive, got {D}")
    if sigma2 < 0:
        raise UsageError(f"variance must be non-negative, got {sigma2}")
    if D >= sigma2:
        return 0.0
    return 0.5 * math.log2(sigma2 / D)


class VarianceSparsityAllocator(BaseEstimator):
    """Estimator wrapper around the allocation functions.

    Parameters
    ----------
    s_mid : float
        Target overall sparsity.
    s_step : float
        Sparsity offset between adjacent variance groups.
    bit_width : int
        Recorded in the plan for the downstream quantizer.
    master_seed : int
        Recorded in the plan; per-layer seeds derive from it.

    Attributes
    ----------
    plan_ : CompressionPlan
    """

    def __init__(self, s_mid=0.97, s_step=0.02, bit_width=4, master_seed=0):
        self.s_mid = s_mid
        self.s_step = s_step
        self.bit_width = bit_width
        self.master_seed = master_seed

    def fit(self, X, y=None):
        """``X`` is a mapping of layer name to delta tensor."""
        stats = [(name, int(np.size(arr)), layer_variance(arr)) for name, arr in X.items()]
        assignment = partition_by_variance(stats)
        self.plan_ = assign_sparsity(
            stats, assignment, self.s_mid, self.s_step, self.bit_width, self.master_seed
        )
        return self
