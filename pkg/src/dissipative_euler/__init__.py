"""Vanishing-viscosity solver and defect-measure diagnostics for isentropic Euler flow."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    DENSITY_FLOOR,
    ConservedField,
    DomainError,
    EosParams,
    TorusGrid,
    Trajectory,
    kinetic_extended,
    pressure,
    pressure_potential,
    total_energy,
    total_energy_density,
    velocity_from_conservative,
)
from .defects import BlockPartition, DefectField  # noqa: E402
from .solver import EnergyLedger, SolverConfig, ViscosityModel, run  # noqa: E402
from .testfunctions import TestFunctionBank  # noqa: E402

__all__ = [
    "DENSITY_FLOOR",
    "BlockPartition",
    "ConservedField",
    "DefectField",
    "DomainError",
    "EnergyLedger",
    "EosParams",
    "SolverConfig",
    "TestFunctionBank",
    "TorusGrid",
    "Trajectory",
    "ViscosityModel",
    "kinetic_extended",
    "pressure",
    "pressure_potential",
    "run",
    "total_energy",
    "total_energy_density",
    "velocity_from_conservative",
]
