"""Pipeline configuration and its flat ``key = value`` text form."""

import os
from dataclasses import asdict, dataclass, field, fields

from .codec.payload import SCHEMES
from .exceptions import UsageError
from .rescale import EXACT, RANDOMIZED, RescalePolicy
from .validation import check_bit_width, check_positive_int, check_seed, check_sparsity

ENV_PREFIX = "ULTRADELTA_"


@dataclass
class PipelineConfig:
    s_mid: float = 0.97
    s_step: float = 0.02
    bit_width: int = 4
    use_quantization: bool = True
    grouped: bool = True
    intervals: int = 16
    gamma_min: float = 0.5
    gamma_max: float = 1.0
    gamma: float = None
    scheme: str = "golomb"
    selector: list = field(default_factory=list)
    master_seed: int = 0
    threads: int = 1
    trace_norm_method: str = EXACT
    per_layer_denominator: bool = False
    block_r: int = 4
    block_c: int = 4

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.s_mid = check_sparsity(self.s_mid, "s_mid")
        if not 0.0 <= self.s_step or self.s_mid + self.s_step >= 1.0 or self.s_mid - self.s_step < 0:
            raise UsageError(
                f"s_step {self.s_step} infeasible around s_mid {self.s_mid}"
            )
        self.bit_width = check_bit_width(self.bit_width)
        self.intervals = check_positive_int(self.intervals, "intervals")
        RescalePolicy(self.gamma_min, self.gamma_max)
        if self.gamma is not None and not 0.0 < self.gamma <= 1.0:
            raise UsageError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.scheme not in SCHEMES:
            raise UsageError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        self.master_seed = check_seed(self.master_seed)
        self.threads = check_positive_int(self.threads, "threads")
        if self.trace_norm_method not in (EXACT, RANDOMIZED):
            raise UsageError(f"unknown trace-norm method {self.trace_norm_method!r}")
        self.block_r = check_positive_int(self.block_r, "block_r")
        self.block_c = check_positive_int(self.block_c, "block_c")
        self.selector = list(self.selector)

    def policy(self):
        return RescalePolicy(self.gamma_min, self.gamma_max, override=self.gamma)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_text(self):
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        return cls(**parse_text(text))

    def with_overrides(self, **changes):
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return type(self).from_dict(d)


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(value)
    return repr(value) if isinstance(value, float) else str(value)


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def coerce(key, raw):
    """Convert a text value for ``key`` to its typed form."""
    if key not in _TYPES:
        raise UsageError(f"unknown config key {key!r}")
    raw = raw.strip()
    kind = _TYPES[key]
    if key == "gamma" and raw.lower() in ("none", ""):
        return None
    try:
        if kind is bool or kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int or kind == "int":
            return int(raw, 0)
        if kind is float or kind == "float":
            return float(raw)
        if kind is list or kind == "list":
            return [p.strip() for p in raw.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key in values:
            raise UsageError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = coerce(key, raw)
    return values


def env_overrides(environ=None):
    """Config values from ``ULTRADELTA_<KEY>`` environment variables."""
    environ = os.environ if environ is None else environ
    out = {}
    for key in _TYPES:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = coerce(key, environ[name])
    return out
