"""Coalescent point processes with infinite-sites mutations.

Simulation of samples and mutation overlays, site and allele frequency
spectra, analytic large-sample predictions, and a Monte Carlo harness that
compares the two.
"""
from .analytics import (
    INFINITE,
    AnalyticPrediction,
    allele_spectrum_series,
    brownian_growth_constant,
    clt_variance,
    expected_site_count_exact,
    limit_allele_fraction,
    limit_allele_spectrum,
    limit_site_spectrum,
    limit_sites_rate,
    phi,
    stable_laplace_transform,
)
from .experiments import ExperimentConfig, SummaryReport, derive_substream, run_experiment
from .genealogy import CoalescentSample, DefectiveLawError, simulate, subtending_measures
from .mutation import (
    MutationOverlay,
    allele_spectrum,
    brute_force_check,
    haplotype_keys,
    overlay,
    site_spectrum,
    theta_scan,
)
from .scale_model import BirthDeath, CriticalBD, ScaleModel, Stable, Yule, format_model, parse_model

__version__ = "0.1.0"
