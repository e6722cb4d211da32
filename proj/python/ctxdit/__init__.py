"""Reference-conditioned video diffusion on synthetic sprites.

The heavy lifting is in the C++ extension ``ctxdit._core``; this package
re-exports it.
"""

from ._core import (
    ConfigError,
    Dataset,
    Error,
    ExtractionError,
    FormatError,
    Model,
    ShapeError,
    Trainer,
    VocabError,
    check_names,
    evaluate,
    extract_attributes,
    parse_prompt,
    read_ppm,
    temporal_consistency,
    verify,
    write_ppm,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "Error",
    "ExtractionError",
    "FormatError",
    "Model",
    "ShapeError",
    "Trainer",
    "VocabError",
    "check_names",
    "evaluate",
    "extract_attributes",
    "parse_prompt",
    "read_ppm",
    "temporal_consistency",
    "verify",
    "write_ppm",
]
