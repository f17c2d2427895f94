"""Numerical checks of the pluripotential estimates; every check returns an InequalityReport."""

from .capacity import (
    ball,
    capacity_comparability,
    capacity_estimate,
    capacity_family,
    volume_capacity_diagnostic,
)
from .concentration import ConcentrationConfig, continuum_mass, gamma_density, mass_concentration
from .inequalities import (
    cauchy_schwarz_family,
    check_cauchy_schwarz,
    check_cln,
    check_energy_inequality,
    check_mass_estimate,
    check_mixed_type,
    check_sup_bounds,
    check_trace_inequality,
    cln_family,
    constant_bound_family,
    energy_family,
    mixed_type_family,
)
from .principles import (
    comparison_family,
    growth_diagnostic,
    metric_monotonicity_family,
    sup_bound_family,
    uniqueness_check,
)
from .report import InequalityReport

__all__ = [
    "InequalityReport", "ConcentrationConfig",
    "check_cln", "cln_family", "check_cauchy_schwarz", "cauchy_schwarz_family",
    "check_mass_estimate", "check_energy_inequality", "energy_family",
    "check_mixed_type", "mixed_type_family", "check_trace_inequality",
    "constant_bound_family", "check_sup_bounds", "sup_bound_family",
    "capacity_estimate", "capacity_family", "capacity_comparability", "ball",
    "volume_capacity_diagnostic", "mass_concentration", "gamma_density", "continuum_mass",
    "comparison_family", "metric_monotonicity_family", "uniqueness_check", "growth_diagnostic",
]
