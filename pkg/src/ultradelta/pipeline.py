"""End-to-end compression: extract, allocate, quantize and prune, rescale,
encode; plus decompression, ratio reports and archive verification."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .allocation import CompressionPlan, assign_sparsity, layer_variance, partition_by_variance
from .archive import RAW_BITS, CompressedDelta, LayerRecord
from .codec.payload import SCHEMES, decode_payload, encode_payload, measure_payload
from .codec.ratio import RatioReport, entropy_ratio
from .config import PipelineConfig
from .container import NamedTensorSet, extract_delta, reconstruct
from .exceptions import UltraDeltaError, UsageError
from .quantization import (
    QuantGrid,
    group_prune,
    interval_group_mask,
    interval_indices,
    quantize_uniform,
    random_prune,
)
from .rescale import assign_gamma, summarize_trace_norms
from .rng import derive_seed
from .stats import binomial_within, distribution_preservation_stat


def plan_for(delta, config):
    stats = [(name, int(arr.size), layer_variance(arr)) for name, arr in delta.items() if arr.size]
    if not stats:
        return CompressionPlan([], config.s_mid, config.s_step, config.bit_width, config.master_seed)
    assignment = partition_by_variance(stats)
    return assign_sparsity(
        stats, assignment, config.s_mid, config.s_step, config.bit_width, config.master_seed
    )


def compress_layer(name, delta, sparsity, seed, config):
    """Compress one delta layer into a :class:`LayerRecord`."""
    block = (config.block_r, config.block_c)
    if config.use_quantization:
        grid, codes = quantize_uniform(delta, config.bit_width)
        if config.grouped:
            positions = group_prune(codes, sparsity, seed, grid=grid).positions
        else:
            positions = random_prune(delta.shape, sparsity, seed)
        payload = encode_payload(
            config.scheme, delta.shape, positions, codes.ravel()[positions], config.bit_width, block
        )
        return LayerRecord(
            name, tuple(delta.shape), "quant", sparsity, seed, payload, grid,
            grouped=config.grouped,
        )
    intervals = config.intervals if config.grouped else 1
    mask = interval_group_mask(delta, intervals, sparsity, seed)
    positions = np.flatnonzero(mask)
    symbols = delta.ravel()[positions].astype(np.float32).view(np.uint32)
    payload = encode_payload(config.scheme, delta.shape, positions, symbols, RAW_BITS, block)
    return LayerRecord(
        name, tuple(delta.shape), "raw", sparsity, seed, payload, intervals=intervals,
        grouped=config.grouped,
    )


@dataclass
class PreparedTask:
    name: str
    delta: object
    plan: CompressionPlan
    trace_norms: object
    pass_through: NamedTensorSet
    gamma: float = None


def prepare_tasks(pretrained, finetuned, config):
    """Deltas, sparsity plans, trace norms and gammas for a batch of tasks.

    ``finetuned`` maps task name to tensor set. Gammas are assigned across
    the whole batch.
    """
    if not finetuned:
        raise UsageError("no fine-tuned models given")
    tasks = []
    for name, ft in finetuned.items():
        try:
            delta = extract_delta(ft, pretrained, config.selector)
        except UltraDeltaError as exc:
            raise type(exc)(f"task {name!r}: {exc}") from None
        summary = summarize_trace_norms(
            delta, config.trace_norm_method, seed=derive_seed(config.master_seed, name, "tn")
        )
        pass_through = NamedTensorSet((p, ft[p]) for p in delta.pass_through)
        tasks.append(PreparedTask(name, delta, plan_for(delta, config), summary, pass_through))
    gammas = assign_gamma([t.trace_norms for t in tasks], config.policy())
    for task, g in zip(tasks, gammas):
        task.gamma = g
    return tasks


def encode_tasks(tasks, config):
    jobs = [
        (t.name, rec.name, t.delta[rec.name], rec.sparsity,
         derive_seed(config.master_seed, t.name, rec.name))
        for t in tasks for rec in t.plan.layers
    ]

    def run(job):
        task, layer, delta, s, seed = job
        try:
            return compress_layer(layer, delta, s, seed, config)
        except UltraDeltaError as exc:
            raise type(exc)(f"task {task!r}, layer {layer!r}: {exc}") from None

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(j) for j in jobs]
    by_task = {t.name: {} for t in tasks}
    for (task, layer, *_), rec in zip(jobs, records):
        by_task[task][layer] = rec
    out = {}
    # thread count affects scheduling only, so it stays out of the archive
    cfg = {k: v for k, v in config.to_dict().items() if k != "threads"}
    for t in tasks:
        out[t.name] = CompressedDelta(
            t.name, t.delta.base_fingerprint, t.gamma, t.plan.overall_sparsity(), t.plan,
            t.trace_norms, by_task[t.name], t.pass_through, config.per_layer_denominator, cfg,
        )
    return out


def compress_tasks(pretrained, finetuned, config=None):
    """Compress every fine-tuned set against ``pretrained``; returns a dict of
    task name to :class:`CompressedDelta`."""
    config = config or PipelineConfig()
    return encode_tasks(prepare_tasks(pretrained, finetuned, config), config)


def decompress(pretrained, compressed, override_fingerprint=False):
    return reconstruct(pretrained, compressed, override_fingerprint)


def ratio_report(compressed):
    """Theoretical and realized bits per parameter for an archive.

    Realized sizes are measured by re-encoding every layer under each scheme.
    """
    recs = list(compressed.layers.values())
    n_total = sum(r.payload.n_elements for r in recs)
    kept = sum(r.payload.n_kept for r in recs)
    b = recs[0].payload.bit_width if recs else compressed.plan.bit_width
    s = compressed.overall_sparsity
    if 0.0 < s < 1.0:
        report = entropy_ratio(s, b)
    else:
        free = (1 - s) * b
        report = RatioReport(s, b, math.nan, math.nan, math.nan, free,
                             16 / free if free else math.inf)
    decoded = [(r, decode_payload(r.payload)) for r in recs]
    for scheme in SCHEMES + ("index_free",):
        bits = 0
        for rec, (pos, sym) in decoded:
            if scheme == rec.payload.scheme:
                bits += rec.payload.total_bits
            else:
                bits += encode_payload(scheme, rec.shape, pos, sym, rec.payload.bit_width,
                                       (4, 4)).total_bits
        report.bits_per_parameter[scheme] = bits / n_total if n_total else 0.0
    report.bits_per_parameter["stored"] = (
        sum(measure_payload(r.payload) * r.payload.n_elements for r in recs) / n_total
        if n_total else 0.0
    )
    realized_s = 1.0 - kept / n_total if n_total else 0.0
    rows = [
        {
            "name": r.name,
            "shape": list(r.shape),
            "group": compressed.plan[r.name].group,
            "variance": compressed.plan[r.name].variance,
            "sparsity": r.sparsity,
            "realized_sparsity": 1.0 - r.payload.n_kept / max(r.payload.n_elements, 1),
            "bits_per_parameter": measure_payload(r.payload),
        }
        for r in recs
    ]
    summary = {
        "task": compressed.task,
        "gamma": compressed.gamma,
        "overall_sparsity": s,
        "realized_sparsity": realized_s,
        "scheme": recs[0].payload.scheme if recs else None,
    }
    return report, rows, summary


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    def add(self, name, passed, detail=""):
        self.checks.append({"check": name, "passed": bool(passed), "detail": detail})

    @property
    def passed(self):
        return all(c["passed"] for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c["passed"]]


def quantization_tolerance(grid):
    """``step / 2`` plus float64 round-off of the dequantization arithmetic."""
    scale = max(abs(grid.min), abs(grid.max))
    return grid.step / 2 + 8 * np.finfo(np.float64).eps * scale


def verify_archive(compressed, pretrained, finetuned):
    """Re-derive every layer from the original weights and compare."""
    report = VerificationReport()
    fp = pretrained.fingerprint()
    report.add("fingerprint", fp == compressed.base_fingerprint,
               f"archive {compressed.base_fingerprint}, base {fp}")
    for name, arr in compressed.pass_through.items():
        same = name in finetuned and finetuned[name].tobytes() == arr.tobytes()
        report.add(f"{name}:pass_through", same)
    for name, rec in compressed.layers.items():
        if name not in finetuned or name not in pretrained:
            report.add(f"{name}:present", False, "layer missing from inputs")
            continue
        delta = finetuned.widened(name) - pretrained.widened(name)
        try:
            positions, symbols = decode_payload(rec.payload)
            again = encode_payload(
                rec.payload.scheme, rec.shape, positions, symbols, rec.payload.bit_width,
                (rec.payload.params.get("block_r", 4), rec.payload.params.get("block_c", 4)),
            )
            report.add(f"{name}:round_trip", again.to_bytes() == rec.payload.to_bytes())
            values = rec.decode().ravel()[positions]
        except UltraDeltaError as exc:
            report.add(f"{name}:round_trip", False, str(exc))
            continue
        n = delta.size
        report.add(
            f"{name}:density",
            binomial_within(positions.size, n, 1.0 - rec.sparsity),
            f"kept {positions.size} of {n} at s={rec.sparsity:.6f}",
        )
        flat = delta.ravel()
        if rec.mode == "quant":
            grid, codes = quantize_uniform(delta, rec.grid.bit_width)
            report.add(f"{name}:grid", grid == rec.grid)
            err = np.abs(values - flat[positions])
            tol = quantization_tolerance(rec.grid)
            worst = float(err.max()) if err.size else 0.0
            report.add(f"{name}:quant_bound", worst <= tol, f"max err {worst:.3e} <= {tol:.3e}")
            groups = codes.ravel()
            if rec.grouped:
                expected = group_prune(codes, rec.sparsity, rec.seed, grid=grid).positions
            else:
                expected = random_prune(rec.shape, rec.sparsity, rec.seed)
        else:
            f32 = flat[positions].astype(np.float32)
            ok = np.all(values == f32.astype(np.float64))
            report.add(f"{name}:raw_values", ok)
            groups = interval_indices(delta, rec.intervals).ravel()
            expected = np.flatnonzero(interval_group_mask(delta, rec.intervals, rec.sparsity, rec.seed))
        report.add(f"{name}:mask", np.array_equal(expected, positions))
        stat, p, ok = distribution_preservation_stat(groups, groups[positions])
        report.add(f"{name}:distribution", ok, f"chi2={stat:.3f} p={p:.4g}")
    return report


class UltraDeltaCompressor(BaseEstimator, TransformerMixin):
    """Estimator front-end for the compression pipeline.

    ``fit(X, base=...)`` takes a mapping of task name to fine-tuned tensor set
    (a list gets names ``task0, task1, ...``) and learns the per-task sparsity
    plans and rescaling factors. ``transform`` encodes the tasks into
    :class:`CompressedDelta` archives; ``inverse_transform`` rebuilds weights.

    Parameters mirror :class:`PipelineConfig`.
    """

    def __init__(self, s_mid=0.97, s_step=0.02, bit_width=4, use_quantization=True,
                 grouped=True, intervals=16, gamma_min=0.5, gamma_max=1.0, gamma=None, scheme="golomb",
                 selector=None, master_seed=0, threads=1, trace_norm_method="exact_svd",
                 per_layer_denominator=False):
        self.s_mid = s_mid
        self.s_step = s_step
        self.bit_width = bit_width
        self.use_quantization = use_quantization
        self.grouped = grouped
        self.intervals = intervals
        self.gamma_min = gamma_min
        self.gamma_max = gamma_max
        self.gamma = gamma
        self.scheme = scheme
        self.selector = selector
        self.master_seed = master_seed
        self.threads = threads
        self.trace_norm_method = trace_norm_method
        self.per_layer_denominator = per_layer_denominator

    def _config(self):
        params = self.get_params()
        params["selector"] = list(params["selector"] or [])
        return PipelineConfig(**params)

    @staticmethod
    def _as_tasks(X):
        if isinstance(X, NamedTensorSet):
            return {"task0": X}
        if hasattr(X, "items"):
            return dict(X)
        return {f"task{i}": x for i, x in enumerate(X)}

    def fit(self, X, y=None, base=None):
        if base is None:
            raise UsageError("fit requires the pretrained tensor set via base=")
        self.config_ = self._config()
        self.base_ = base
        self.tasks_ = prepare_tasks(base, self._as_tasks(X), self.config_)
        self.plans_ = {t.name: t.plan for t in self.tasks_}
        self.gammas_ = {t.name: t.gamma for t in self.tasks_}
        self.trace_norms_ = {t.name: t.trace_norms for t in self.tasks_}
        return self

    def transform(self, X=None):
        """Encode the fitted tasks. ``X`` must name the same tasks as ``fit``."""
        check_is_fitted(self, "tasks_")
        if X is not None and set(self._as_tasks(X)) != set(self.gammas_):
            raise UsageError("transform must be given the tasks seen in fit")
        return encode_tasks(self.tasks_, self.config_)

    def fit_transform(self, X, y=None, base=None):
        return self.fit(X, base=base).transform(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "base_")
        return {name: reconstruct(self.base_, c) for name, c in X.items()}
