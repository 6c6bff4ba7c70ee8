"""Bayesian principal stratification for trials with one-sided treatment
switching and right-censored survival outcomes."""

from .data import (AugmentedUnit, Dataset, GeneratorConfig, NON_SWITCHER, ObservedPattern,
                   PatientRecord, SwitchStatus, classify, generate, parse_dataset,
                   serialize_dataset)
from .model import THETA_REFERENCE, PriorSpec, Theta
from .sampler import McmcConfig, run_chains
from .weibull import WeibullParams

__version__ = "0.1.0"

__all__ = [
    "AugmentedUnit", "Dataset", "GeneratorConfig", "NON_SWITCHER", "ObservedPattern",
    "PatientRecord", "SwitchStatus", "classify", "generate", "parse_dataset",
    "serialize_dataset", "THETA_REFERENCE", "PriorSpec", "Theta", "McmcConfig",
    "run_chains", "WeibullParams",
]
