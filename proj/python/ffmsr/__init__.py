"""Federated cross-domain sequential recommendation."""

from ._core import (
    SynthOptions,
    config_keys,
    five_core,
    irfft,
    kmeans,
    metrics_from_ranks,
    rfft,
    run_cli,
    run_synthetic_pipeline,
    synth,
)

__all__ = [
    "SynthOptions",
    "config_keys",
    "five_core",
    "irfft",
    "kmeans",
    "metrics_from_ranks",
    "rfft",
    "run_cli",
    "run_synthetic_pipeline",
    "synth",
]
