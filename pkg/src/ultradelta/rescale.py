"""Trace-norm-guided rescaling.

One scalar ``gamma`` per task, mapped linearly from the task's delta trace
norm between the batch extremes: the largest norm gets ``gamma_min``, the
smallest ``gamma_max``.
"""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from sklearn.base import BaseEstimator

from .exceptions import UsageError
from .rng import substream
from .validation import check_array, check_seed, check_sparsity

EXACT = "exact_svd"
RANDOMIZED = "randomized_approx"


@dataclass
class TraceNormSummary:
    layer_norms: dict
    model_trace_norm: float
    method: str = EXACT
    approx_rank: int = None
    approx_seed: int = None

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class RescalePolicy:
    gamma_min: float = 0.5
    gamma_max: float = 1.0
    mapping: str = "rank_linear_across_tasks"
    override: float = None

    def __post_init__(self):
        if not 0.0 < self.gamma_min <= self.gamma_max <= 1.0:
            raise UsageError(
                f"need 0 < gamma_min <= gamma_max <= 1, got [{self.gamma_min}, {self.gamma_max}]"
            )
        if self.mapping not in ("rank_linear_across_tasks", "single_task_constant"):
            raise UsageError(f"unknown gamma mapping {self.mapping!r}")


def _lanczos_sqrt_quadrature(matvec, dim, probes, steps, rng):
    """Estimate ``tr(sqrt(M))`` for PSD ``M`` by stochastic Lanczos quadrature
    with Rademacher probes."""
    total = 0.0
    for _ in range(probes):
        q = rng.choice([-1.0, 1.0], size=dim) / np.sqrt(dim)
        basis = [q]
        alphas, betas = [], []
        q_prev, beta = np.zeros(dim), 0.0
        for j in range(min(steps, dim)):
            w = matvec(q) - beta * q_prev
            alpha = q @ w
            alphas.append(alpha)
            # full reorthogonalisation; steps is small
            w = w - np.array(basis).T @ (np.array(basis) @ w)
            beta = np.linalg.norm(w)
            if beta < 1e-12 or j == min(steps, dim) - 1:
                break
            betas.append(beta)
            q_prev, q = q, w / beta
            basis.append(q)
        theta, vecs = eigh_tridiagonal(np.array(alphas), np.array(betas[: len(alphas) - 1]))
        total += dim * np.sum(vecs[0] ** 2 * np.sqrt(np.clip(theta, 0.0, None)))
    return total / probes


def randomized_trace_norm(matrix, rank=64, oversample=8, power_iters=2, probes=8,
                          lanczos_steps=40, seed=0):
    """Randomized nuclear-norm estimate.

    The top ``rank`` singular values come from a subspace-iteration sketch
    (``rank + oversample`` columns, ``power_iters`` power iterations). The
    remaining spectrum is estimated as ``tr(sqrt(R^T R))`` for the deflated
    residual ``R`` by Lanczos quadrature. When ``rank`` covers the smaller
    dimension the result is exact up to round-off.
    """
    A = check_array(matrix, "matrix", ndim=2, allow_empty=True)
    if A.size == 0:
        return 0.0
    if A.shape[0] < A.shape[1]:
        A = A.T
    rng = substream(seed, "trace_norm")
    n = A.shape[1]
    r = min(rank, n)
    k = min(r + oversample, n)
    Q = np.linalg.qr(A @ rng.standard_normal((n, k)))[0]
    for _ in range(power_iters):
        Q = np.linalg.qr(A.T @ Q)[0]
        Q = np.linalg.qr(A @ Q)[0]
    U, s, _ = np.linalg.svd(Q.T @ A, full_matrices=False)
    head = float(np.sum(s[:r]))
    if r == n:
        return head
    P = Q @ U[:, :r]

    def residual_gram(v):
        Av = A @ v
        return A.T @ (Av - P @ (P.T @ Av))

    tail = _lanczos_sqrt_quadrature(residual_gram, n, probes, lanczos_steps, rng)
    return head + max(tail, 0.0)


def trace_norm(matrix, method=EXACT, **kwargs):
    """Sum of singular values of a rank-2 tensor."""
    arr = np.asarray(matrix)
    if arr.ndim != 2:
        raise UsageError(f"trace norm needs a matrix, got rank {arr.ndim}")
    if method == EXACT:
        A = check_array(arr, "matrix", ndim=2, allow_empty=True)
        if A.size == 0:
            return 0.0
        return float(np.sum(np.linalg.svd(A, compute_uv=False)))
    if method == RANDOMIZED:
        return randomized_trace_norm(arr, **kwargs)
    raise UsageError(f"unknown trace-norm method {method!r}")


def summarize_trace_norms(deltas, method=EXACT, rank=64, seed=0):
    """Per-layer trace norms of the rank-2 layers of a delta set; the model
    norm is their sum."""
    norms = {}
    for name, arr in deltas.items():
        if np.ndim(arr) != 2:
            continue
        if method == RANDOMIZED:
            norms[name] = trace_norm(arr, RANDOMIZED, rank=rank, seed=seed)
        else:
            norms[name] = trace_norm(arr)
    return TraceNormSummary(
        norms, float(sum(norms.values())), method,
        rank if method == RANDOMIZED else None,
        seed if method == RANDOMIZED else None,
    )


def assign_gamma(summaries, policy=None):
    """Per-task rescaling factors from their model trace norms."""
    policy = policy or RescalePolicy()
    summaries = list(summaries)
    if not summaries:
        raise UsageError("assign_gamma needs at least one task")
    if policy.override is not None:
        g = float(policy.override)
        if not 0.0 < g <= 1.0:
            raise UsageError(f"gamma override must lie in (0, 1], got {g}")
        return [g] * len(summaries)
    norms = np.array([s.model_trace_norm for s in summaries], dtype=np.float64)
    if np.any(norms < 0) or not np.all(np.isfinite(norms)):
        raise UsageError("trace norms must be finite and non-negative")
    mid = 0.5 * (policy.gamma_min + policy.gamma_max)
    lo, hi = norms.min(), norms.max()
    if policy.mapping == "single_task_constant" or len(norms) == 1 or hi == lo:
        return [mid] * len(norms)
    span = policy.gamma_max - policy.gamma_min
    return [float(policy.gamma_max - span * (t - lo) / (hi - lo)) for t in norms]


def activation_error_variance(a, gamma, s):
    """Variance of the activation error under Bernoulli pruning with rescale
    ``gamma / (1 - s)``."""
    s = check_sparsity(s)
    return gamma**2 * s / (1.0 - s) * a**2


def activation_error_mean(a, gamma):
    return a * (1.0 - gamma)


def monte_carlo_error_check(a, gamma, s, trials=10**6, seed=0):
    """Sample ``eps = a * (1 - B * gamma / (1 - s))`` with ``B ~ Bernoulli(1 - s)``.

    Returns ``(mean, variance)``; the variance is the unbiased sample variance.
    """
    s = check_sparsity(s)
    if trials < 10**4:
        raise UsageError(f"need at least 10^4 trials, got {trials}")
    seed = check_seed(seed)
    kept = substream(seed, "activation_error").random(trials) >= s
    k = int(np.count_nonzero(kept))
    # eps takes two values; exact statistics from the kept count
    e_kept = a * (1.0 - gamma / (1.0 - s))
    e_pruned = float(a)
    frac = k / trials
    if k == trials:
        return e_kept, 0.0
    if k == 0:
        return e_pruned, 0.0
    mean = frac * e_kept + (1.0 - frac) * e_pruned
    var = frac * (1.0 - frac) * (e_kept - e_pruned) ** 2 * trials / (trials - 1)
    return mean, var


def error_standard_errors(a, gamma, s, trials):
    """Standard errors of the sample mean and the unbiased sample variance of
    ``eps`` at the closed-form moments.

    The variance term keeps the finite-sample correction: its leading
    ``(mu4 - var**2) / N`` part vanishes at ``s = 0.5``.
    """
    p = 1.0 - s
    d = a * gamma / p  # e_pruned - e_kept
    var = p * (1 - p) * d**2
    # fourth central moment of a two-point distribution
    mu4 = p * (1 - p) * (p**3 + (1 - p) ** 3) * d**4
    n = trials
    var_of_var = mu4 / n - var**2 * (n - 3) / (n * (n - 1))
    return np.sqrt(var / n), np.sqrt(max(var_of_var, 0.0))


class TraceNormRescaler(BaseEstimator):
    """Fit on a list of task delta sets; ``gammas_`` holds one factor per task.

    Parameters
    ----------
    gamma_min, gamma_max : float
        Range of the linear map.
    gamma : float or None
        Fixed factor for every task, bypassing the map.
    method : {"exact_svd", "randomized_approx"}
    """

    def __init__(self, gamma_min=0.5, gamma_max=1.0, gamma=None, method=EXACT, seed=0):
        self.gamma_min = gamma_min
        self.gamma_max = gamma_max
        self.gamma = gamma
        self.method = method
        self.seed = seed

    def fit(self, X, y=None):
        policy = RescalePolicy(self.gamma_min, self.gamma_max, override=self.gamma)
        self.summaries_ = [summarize_trace_norms(d, self.method, seed=self.seed) for d in X]
        self.gammas_ = assign_gamma(self.summaries_, policy)
        return self
