"""Desk-scale experiment generators: Gaussian synthetic deltas, a toy linear
softmax task with a pretrain/fine-tune split, and accuracy-retention sweeps.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .container import DeltaSet, NamedTensorSet, reconstruct
from .exceptions import UltraDeltaError
from .pipeline import compress_tasks
from .rng import substream
from .stats import distribution_preservation_stat

__all__ = [
    "LayerSpec",
    "SyntheticDeltaSpec",
    "ToyTask",
    "accuracy_retention_test",
    "distribution_preservation_stat",
    "gen_synthetic_delta",
    "magnitude_prune_codes",
    "synthetic_checkpoints",
    "train_toy_model",
]


@dataclass(frozen=True)
class LayerSpec:
    name: str
    shape: tuple
    mu: float = 0.0
    sigma: float = 0.01


@dataclass(frozen=True)
class SyntheticDeltaSpec:
    layers: tuple
    seed: int = 0


def gen_synthetic_delta(spec):
    """Gaussian delta tensors, one substream per layer name. The empirical
    variance of each layer is recorded in ``variances``."""
    entries = []
    for layer in spec.layers:
        if layer.sigma < 0:
            raise UltraDeltaError(f"layer {layer.name!r}: sigma must be >= 0")
        rng = substream(spec.seed, "synthetic", layer.name)
        x = layer.mu + layer.sigma * rng.standard_normal(layer.shape)
        entries.append((layer.name, x))
    delta = DeltaSet(entries)
    delta.variances = {name: float(np.var(arr)) for name, arr in delta.items()}
    return delta


def synthetic_checkpoints(spec, base_sigma=0.05, extra=()):
    """``(pretrained, finetuned)`` float32 sets whose difference is the
    synthetic delta of ``spec``.

    ``extra`` names rank-1 tensors added to both sets, shifted by 0.01 in the
    fine-tuned one; they exercise pass-through handling.
    """
    delta = gen_synthetic_delta(spec)
    pre, ft = [], []
    for name, d in delta.items():
        base = base_sigma * substream(spec.seed, "base", name).standard_normal(d.shape)
        base32 = base.astype(np.float32)
        pre.append((name, base32))
        ft.append((name, (base32.astype(np.float64) + d).astype(np.float32)))
    for name in extra:
        v = substream(spec.seed, "extra", name).standard_normal(16).astype(np.float32)
        pre.append((name, v))
        ft.append((name, v + np.float32(0.01)))
    return NamedTensorSet(pre), NamedTensorSet(ft)


def magnitude_prune_codes(codes, grid_center, s):
    """Counterexample pruner: drop whole code groups nearest the grid centre
    until at least a fraction ``s`` of elements is gone."""
    codes = np.asarray(codes).ravel()
    labels, counts = np.unique(codes, return_counts=True)
    order = np.argsort(np.abs(labels - grid_center), kind="stable")
    dropped = set()
    removed = 0
    for i in order:
        if removed >= s * codes.size:
            break
        dropped.add(labels[i])
        removed += counts[i]
    return codes[~np.isin(codes, list(dropped))]


@dataclass(frozen=True)
class ToyTask:
    """Gaussian-cluster classification with a domain shift between the
    pretraining and fine-tuning distributions."""

    input_dim: int = 256
    n_classes: int = 10
    n_train: int = 40000
    n_test: int = 2000
    separation: float = 0.25
    shift: float = 0.5
    pretrain_steps: int = 300
    finetune_steps: int = 200
    learning_rate: float = 0.5
    seed: int = 0

    def _means(self, which):
        rng = substream(self.seed, "means")
        base = self.separation * rng.standard_normal((self.n_classes, self.input_dim))
        if which == "source":
            return base
        return base + self.shift * rng.standard_normal(base.shape)

    def sample(self, which, split):
        """``(X, y)`` for ``which`` in {source, target}, ``split`` in {train, test}."""
        n = self.n_train if split == "train" else self.n_test
        rng = substream(self.seed, "data", which, split)
        y = rng.integers(0, self.n_classes, n)
        X = self._means(which)[y] + rng.standard_normal((n, self.input_dim))
        return X, y


def _softmax_gd(X, y, W, b, steps, lr):
    n = X.shape[0]
    onehot = np.eye(W.shape[0])[y]
    for _ in range(steps):
        logits = X @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        W = W - lr * g.T @ X
        b = b - lr * g.sum(axis=0)
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise UltraDeltaError("toy training diverged; lower the learning rate")
    return W, b


def _as_set(W, b):
    return NamedTensorSet([
        ("classifier.weight", W.astype(np.float32)),
        ("classifier.bias", b.astype(np.float32)),
    ])


def train_toy_model(task):
    """Pretrain on the source distribution, then fine-tune on the target.

    Returns ``(pretrained, finetuned)`` tensor sets with a rank-2 weight and
    a bias vector.
    """
    if task.learning_rate <= 0 or task.learning_rate > 10:
        raise UltraDeltaError(f"learning rate {task.learning_rate} outside (0, 10]")
    W = np.zeros((task.n_classes, task.input_dim))
    b = np.zeros(task.n_classes)
    W, b = _softmax_gd(*task.sample("source", "train"), W, b, task.pretrain_steps,
                       task.learning_rate)
    pre = _as_set(W, b)
    W2, b2 = _softmax_gd(*task.sample("target", "train"), W.astype(np.float32).astype(np.float64),
                         b.astype(np.float32).astype(np.float64), task.finetune_steps,
                         task.learning_rate)
    ft = _as_set(W2, b2) if task.finetune_steps else pre
    return pre, ft


def accuracy(model, X, y):
    W = model["classifier.weight"].astype(np.float64)
    b = model["classifier.bias"].astype(np.float64)
    return float(np.mean(np.argmax(X @ W.T + b, axis=1) == y))


def accuracy_retention_test(task, grid, models=None):
    """Compress the toy delta at every grid point and evaluate on the target
    test split.

    Each grid entry is a dict of :class:`PipelineConfig` fields (``s_mid`` and
    friends). Returns rows of ``(sparsity, bits, accuracy_original,
    accuracy_compressed)``; ``bits`` is ``None`` for the unquantized variant.
    """
    pre, ft = models or train_toy_model(task)
    X, y = task.sample("target", "test")
    acc_ft = accuracy(ft, X, y)
    rows = []
    for point in grid:
        config = PipelineConfig(**point)
        with warnings.catch_warnings():
            # one rank-2 layer: the variance grouping falls back to mid
            warnings.simplefilter("ignore", RuntimeWarning)
            archive = compress_tasks(pre, {"toy": ft}, config)["toy"]
        rebuilt = reconstruct(pre, archive)
        bits = config.bit_width if config.use_quantization else None
        rows.append((config.s_mid, bits, acc_ft, accuracy(rebuilt, X, y)))
    return rows
