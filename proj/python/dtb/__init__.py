"""Framewise transcription experiment toolkit (python surface).

Thin re-export of the native module: dataset synthesis, feature extraction,
architecture tables, NMF, evaluation, and checkpoint inference.
"""

from ._dtb import (
    DtbError,
    TranscriptionModel,
    architecture_table,
    combination_stats,
    count_combinations,
    extract_features,
    framewise_prf,
    nmf_factorize,
    render_combination,
    total_params,
    version,
)

__all__ = [
    "DtbError",
    "TranscriptionModel",
    "architecture_table",
    "combination_stats",
    "count_combinations",
    "extract_features",
    "framewise_prf",
    "nmf_factorize",
    "render_combination",
    "total_params",
    "version",
]
