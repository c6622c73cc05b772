"""Counter-based random substreams.

Every random decision is drawn from a Philox stream whose key is a hash of
``(seed, *labels)``. Streams therefore do not depend on the order in which
layers or groups are visited, which keeps parallel compression deterministic.
"""

import hashlib
import struct

import numpy as np


def _encode_label(label):
    if isinstance(label, str):
        raw = label.encode("utf-8")
        return b"s" + struct.pack("<I", len(raw)) + raw
    if isinstance(label, (int, np.integer)):
        return b"i" + int(label).to_bytes(16, "little", signed=True)
    raise TypeError(f"unsupported substream label {label!r}")


def substream_key(seed, *labels):
    """128-bit Philox key for the substream named by ``labels``."""
    h = hashlib.blake2b(digest_size=16, person=b"ultradelta-rng")
    h.update(int(seed).to_bytes(8, "little"))
    for label in labels:
        h.update(_encode_label(label))
    return int.from_bytes(h.digest(), "little")


def substream(seed, *labels):
    """Return a ``numpy.random.Generator`` for the given substream."""
    return np.random.Generator(np.random.Philox(key=substream_key(seed, *labels)))


def derive_seed(seed, *labels):
    """Derive a child 64-bit seed, e.g. a per-layer seed from the master seed."""
    return substream_key(seed, "derive", *labels) & (2**64 - 1)
