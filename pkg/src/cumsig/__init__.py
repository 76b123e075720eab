"""Modulation classification from higher-order cumulant waveform signatures."""

__version__ = "0.1.0"

from .modem import ALL_SCHEMES, ModulationScheme, constellation, generate_symbols, parse_scheme, pulse_shape
from .channel import add_awgn, apply_channel, draw_channel, draw_doppler_track, draw_flat_block, draw_turin_taps
from .cumulants import estimate_moments, normalized_cumulants, partition_coefficients, theoretical_ws
from .signature import (
    ClassifierModel,
    ReductionMatrix,
    SignatureDatabase,
    build_database,
    centroid,
    classify_l1,
    classify_reduced,
    compute_ws,
    pca_fit,
    reduce,
)
from .baseline import classify_od, modified_k63
from .harness import ExperimentConfig, run_sweep

__all__ = [
    "ALL_SCHEMES",
    "ModulationScheme",
    "constellation",
    "generate_symbols",
    "parse_scheme",
    "pulse_shape",
    "add_awgn",
    "apply_channel",
    "draw_channel",
    "draw_doppler_track",
    "draw_flat_block",
    "draw_turin_taps",
    "estimate_moments",
    "normalized_cumulants",
    "partition_coefficients",
    "theoretical_ws",
    "ClassifierModel",
    "ReductionMatrix",
    "SignatureDatabase",
    "build_database",
    "centroid",
    "classify_l1",
    "classify_reduced",
    "compute_ws",
    "pca_fit",
    "reduce",
    "classify_od",
    "modified_k63",
    "ExperimentConfig",
    "run_sweep",
]
