"""Compressed-delta archive: a JSON manifest plus concatenated layer payloads.

File layout (little-endian)::

    b"UDAR" | u16 version | u64 manifest length | manifest (UTF-8 JSON)
    | blob (layer payloads, then the pass-through container) | u64 checksum

Manifest offsets are relative to the start of the blob.
"""

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .allocation import CompressionPlan
from .codec.layout import SparseLayerPayload
from .codec.payload import decode_payload
from .container import NamedTensorSet, deserialize, serialize
from .exceptions import ChecksumMismatchError, DecodeError, MalformedHeaderError
from .quantization import QuantGrid
from .rescale import TraceNormSummary

MAGIC = b"UDAR"
VERSION = 1
RAW_BITS = 32


@dataclass
class LayerRecord:
    """Everything needed to decode one compressed layer."""

    name: str
    shape: tuple
    mode: str  # "quant" or "raw"
    sparsity: float
    seed: int
    payload: SparseLayerPayload
    grid: QuantGrid = None
    intervals: int = None
    grouped: bool = True

    def decode(self):
        """Dense float64 delta before rescaling."""
        positions, symbols = decode_payload(self.payload)
        n = int(np.prod(self.shape, dtype=np.int64))
        if n != self.payload.n_elements:
            raise DecodeError(f"layer {self.name!r}: shape and payload disagree")
        out = np.zeros(n, dtype=np.float64)
        if self.mode == "quant":
            if symbols.size and symbols.max() >= self.grid.code_count:
                raise DecodeError(f"layer {self.name!r}: code outside grid")
            out[positions] = self.grid.values(symbols)
        else:
            out[positions] = symbols.astype(np.uint32).view(np.float32).astype(np.float64)
        return out.reshape(self.shape)


@dataclass
class CompressedDelta:
    task: str
    base_fingerprint: str
    gamma: float
    overall_sparsity: float
    plan: CompressionPlan
    trace_norms: TraceNormSummary
    layers: dict
    pass_through: NamedTensorSet = field(default_factory=NamedTensorSet)
    per_layer_denominator: bool = False
    config: dict = field(default_factory=dict)

    def scale_for(self, name):
        s = self.layers[name].sparsity if self.per_layer_denominator else self.overall_sparsity
        return self.gamma / (1.0 - s)

    def decode_deltas(self):
        return {name: rec.decode() for name, rec in self.layers.items()}

    def manifest(self, offsets=None):
        layer_rows = []
        for name, rec in self.layers.items():
            plan_rec = self.plan[name]
            row = {
                "name": name,
                "shape": list(rec.shape),
                "parameter_count": plan_rec.parameter_count,
                "variance": plan_rec.variance,
                "group": plan_rec.group,
                "sparsity": rec.sparsity,
                "mode": rec.mode,
                "seed": rec.seed,
                "scheme": rec.payload.scheme,
                "n_kept": rec.payload.n_kept,
                "grid": asdict(rec.grid) if rec.grid is not None else None,
                "intervals": rec.intervals,
                "grouped": rec.grouped,
            }
            if offsets is not None:
                row["offset"], row["length"] = offsets[name]
            layer_rows.append(row)
        return {
            "format_version": VERSION,
            "base_fingerprint": self.base_fingerprint,
            "task": {
                "name": self.task,
                "gamma": self.gamma,
                "overall_sparsity": self.overall_sparsity,
                "trace_norms": self.trace_norms.to_dict(),
                "per_layer_denominator": self.per_layer_denominator,
            },
            "plan": {k: v for k, v in self.plan.to_dict().items() if k != "layers"},
            "layers": layer_rows,
            "pass_through": list(self.pass_through),
            "config": self.config,
        }

    def to_bytes(self):
        blob = bytearray()
        offsets = {}
        for name, rec in self.layers.items():
            raw = rec.payload.to_bytes()
            offsets[name] = (len(blob), len(raw))
            blob += raw
        pt_raw = serialize(self.pass_through)
        manifest = self.manifest(offsets)
        manifest["pass_through_blob"] = [len(blob), len(pt_raw)]
        blob += pt_raw
        text = json.dumps(manifest, separators=(",", ":")).encode("utf-8")
        body = MAGIC + struct.pack("<HQ", VERSION, len(text)) + text + bytes(blob)
        return body + hashlib.blake2b(body, digest_size=8).digest()

    @classmethod
    def from_bytes(cls, data):
        data = bytes(data)
        if len(data) < 22 or data[:4] != MAGIC:
            raise MalformedHeaderError("missing UDAR magic")
        version, mlen = struct.unpack_from("<HQ", data, 4)
        if version != VERSION:
            raise MalformedHeaderError(f"unsupported archive version {version}")
        body, stored = data[:-8], data[-8:]
        if hashlib.blake2b(body, digest_size=8).digest() != stored:
            raise ChecksumMismatchError("archive checksum mismatch")
        start = 14
        try:
            manifest = json.loads(body[start:start + mlen].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedHeaderError(f"bad manifest: {exc}") from None
        blob = body[start + mlen:]
        try:
            return cls.from_manifest(manifest, blob)
        except MalformedHeaderError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedHeaderError(f"bad manifest: {exc!r}") from None

    @classmethod
    def from_manifest(cls, manifest, blob):
        task = manifest["task"]
        plan_rows = []
        layers = {}
        spans = []
        for row in manifest["layers"]:
            off, length = row["offset"], row["length"]
            spans.append((off, off + length))
            if off + length > len(blob):
                raise MalformedHeaderError(f"layer {row['name']!r} runs past the blob")
            payload = SparseLayerPayload.from_bytes(blob[off:off + length])
            grid = QuantGrid(**row["grid"]) if row["grid"] is not None else None
            layers[row["name"]] = LayerRecord(
                row["name"], tuple(row["shape"]), row["mode"], row["sparsity"],
                row["seed"], payload, grid, row["intervals"], row.get("grouped", True),
            )
            plan_rows.append({
                "name": row["name"], "parameter_count": row["parameter_count"],
                "variance": row["variance"], "group": row["group"],
                "sparsity": row["sparsity"],
            })
        pt_off, pt_len = manifest["pass_through_blob"]
        spans.append((pt_off, pt_off + pt_len))
        spans.sort()
        for (a0, a1), (b0, _) in zip(spans, spans[1:]):
            if b0 < a1:
                raise MalformedHeaderError("overlapping payload spans")
        pass_through = deserialize(blob[pt_off:pt_off + pt_len])
        plan = CompressionPlan.from_dict({**manifest["plan"], "layers": plan_rows})
        return cls(
            task["name"], manifest["base_fingerprint"], task["gamma"],
            task["overall_sparsity"], plan, TraceNormSummary.from_dict(task["trace_norms"]),
            layers, pass_through, task["per_layer_denominator"], manifest.get("config", {}),
        )

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())
