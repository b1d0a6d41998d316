"""Numerical verification toolkit for quantitative unique continuation of evolution equations."""

__version__ = "0.1.0"

from .continuation import (ContinuationReport, ObservabilityEstimate, TransferResult,
                           estimate_observability, fit_o4, spectral_transfer,
                           splitting_check, verify_mt1, verify_mt2, verify_mt3)
from .energy import EnergyReport, heat_audit, schrodinger_audit, wave_audit
from .evolution import (Trajectory, boundary_flux, heat_propagate, region_norm,
                        schrodinger_propagate, wave_propagate)
from .geometry import (Grid, MetricField, ObservationRegion, WeightFunction, build_grid,
                       build_region, sample_field, sample_metric, sample_weight)
from .operator import DiscreteOperator, apply, assemble
from .pseudoconvex import PseudoconvexReport, check_pseudoconvex, lambda_tensor, theta_tensor
from .spectral import SpectralBasis, coeffs, eigendecompose, interpolation_ratio, project, snorm

__all__ = [name for name in dir() if not name.startswith("_")]
