"""
Utility functions and helpers.
"""

from .log_utils import configure_logging, get_logger
from .utils import (
    atomic_write_text,
    canonical_json,
    derive_seed,
    is_strictly_monotone,
    rng_for,
    seed_sequence,
    sha256_file,
    sha256_text,
)

__all__ = [
    "configure_logging",
    "get_logger",
    "atomic_write_text",
    "canonical_json",
    "derive_seed",
    "is_strictly_monotone",
    "rng_for",
    "seed_sequence",
    "sha256_file",
    "sha256_text",
]
