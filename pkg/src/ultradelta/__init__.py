"""Delta compression for fine-tuned model weights.

Pipeline: extract the delta against a shared base, assign per-layer sparsity
by variance, quantize and prune each layer group-wise, rescale by a trace-norm
guided factor, and entropy-code the survivors.
"""

__version__ = "0.1.0"

from .allocation import CompressionPlan, LayerPlan, VarianceSparsityAllocator, assign_sparsity, partition_by_variance
from .archive import CompressedDelta, LayerRecord
from .codec import entropy_ratio, RatioReport, SparseLayerPayload, decode_payload, encode_payload
from .config import PipelineConfig
from .container import (DeltaSet, NamedTensorSet, extract_delta, load_container, reconstruct,
                        save_container, select_layers)
from .exceptions import (FingerprintMismatchError, FormatError, UltraDeltaError, UsageError,
                         VerificationError)
from .pipeline import UltraDeltaCompressor, compress_tasks, decompress, ratio_report, verify_archive
from .quantization import GroupPruner, QuantGrid, UniformQuantizer, group_prune, quantize_uniform
from .rescale import RescalePolicy, TraceNormRescaler, assign_gamma, trace_norm

__all__ = [
    "CompressedDelta", "CompressionPlan", "DeltaSet", "FingerprintMismatchError", "FormatError",
    "GroupPruner", "LayerPlan", "LayerRecord", "NamedTensorSet", "PipelineConfig", "QuantGrid",
    "RatioReport", "RescalePolicy", "SparseLayerPayload", "TraceNormRescaler",
    "UltraDeltaCompressor", "UltraDeltaError", "UniformQuantizer", "UsageError",
    "VarianceSparsityAllocator", "VerificationError", "assign_gamma", "assign_sparsity",
    "compress_tasks", "decode_payload", "decompress", "encode_payload", "entropy_ratio",
    "extract_delta", "group_prune", "load_container", "partition_by_variance",
    "quantize_uniform", "ratio_report", "reconstruct", "save_container", "select_layers",
    "trace_norm", "verify_archive",
]
