"""Entropy-based compression ratios against a 16-bit baseline."""

import math
from dataclasses import asdict, dataclass, field

from ..exceptions import UsageError

BASELINE_BITS = 16


def h_geo(s):
    """Binary entropy of the keep/prune pattern, bits per parameter."""
    return -(1 - s) * math.log2(1 - s) - s * math.log2(s)


def h_comp(s, m):
    """Bits per parameter for positions plus ``log2(m)``-bit kept symbols."""
    return -(s * math.log2(s) + (1 - s) * math.log2((1 - s) / m))


@dataclass
class RatioReport:
    sparsity: float
    bit_width: int
    h_geo: float
    h_comp: float
    entropy_ratio: float
    index_free_bits: float
    index_free_ratio: float
    bits_per_parameter: dict = field(default_factory=dict)

    def compression_ratio(self, scheme):
        return BASELINE_BITS / self.bits_per_parameter[scheme]

    def to_dict(self):
        d = asdict(self)
        d["compression_ratio"] = {k: self.compression_ratio(k) for k in self.bits_per_parameter}
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "compression_ratio"}
        return cls(**d)


def entropy_ratio(s, b):
    """Theoretical ratios at sparsity ``s`` with ``b``-bit kept values
    (alphabet ``m = 2**b``)."""
    if not 0.0 < s < 1.0:
        raise UsageError(f"sparsity must lie strictly inside (0, 1), got {s}")
    if b < 1:
        raise UsageError(f"bit width must be positive, got {b}")
    hc = h_comp(s, 2.0**b)
    free = (1 - s) * b
    return RatioReport(
        float(s), int(b), h_geo(s), hc, BASELINE_BITS / hc, free, BASELINE_BITS / free
    )
