"""Dual-stream no-reference video quality engine.

The native engine lives in ``dsvqa._core``; ``dsvqa.interop`` holds the
pure-Python side of the shared file formats used by feature extractors.
"""

from . import interop
from ._core import (
    ConfigError,
    DataError,
    FormatError,
    ManifestError,
    MetricError,
    assign_splits,
    evaluate,
    fragment_offsets,
    plcc,
    read_tensor,
    sample_fragments,
    sample_frames,
    srocc,
    synth,
    train,
    validate_manifest,
    write_tensor,
)

__all__ = [
    "ConfigError",
    "DataError",
    "FormatError",
    "ManifestError",
    "MetricError",
    "assign_splits",
    "evaluate",
    "fragment_offsets",
    "interop",
    "plcc",
    "read_tensor",
    "sample_fragments",
    "sample_frames",
    "srocc",
    "synth",
    "train",
    "validate_manifest",
    "write_tensor",
]
