"""Simulation and analysis of particle transport between two coupled
Bose-Hubbard ladder baths."""

__version__ = "0.1.0"

from .basis import SectorBasis, build_sector, sector_dimension
from .lattice import ConfigError, LatticeSpec, TuningDirective, apply_tuning, default_device, device_for_size
from .operators import Observables, StateVector, build_hamiltonian, current_operator
from .propagation import NoiseSpec, TimeGrid, TimeSeries, evolve_exact, evolve_lindblad, evolve_pure

__all__ = ["ConfigError", "LatticeSpec", "NoiseSpec", "Observables", "SectorBasis", "StateVector",
           "TimeGrid", "TimeSeries", "TuningDirective", "apply_tuning", "build_hamiltonian",
           "build_sector", "current_operator", "default_device", "device_for_size", "evolve_exact",
           "evolve_lindblad", "evolve_pure", "sector_dimension"]
