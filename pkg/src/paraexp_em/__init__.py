"""Parallel-in-time (ParaExp) integration of Maxwell's equations on FIT grids.

Modules
-------
fitgrid      staggered grid, curl/divergence incidence, material matrices
system       semi-discrete system, normalized skew form, sources
leapfrog     staggered explicit time stepping, CFL, discrete energy
expm         exp(tA) b by Taylor and Leja polynomials, Krylov reference
paraexp      interval partition, parallel workers, reconstruction
diagnostics  SMVP ledgers, energy traces, spectra, cost sweeps
cli          ``paraexp-em`` command-line driver
"""
from .expm import (ExpmPlan, estimate_norm, expm_action, krylov_reference, leja_points,
                   optimal_tolerance, select_parameters)
from .fitgrid import (StaggeredGrid, SparseOperator, build_curl_operators,
                      build_divergence_operators, build_material_matrices)
from .leapfrog import FieldState, cfl_timestep, energy, integrate, step
from .ledger import CostLedger
from .paraexp import HomogeneousTrack, Partition, make_partition, reconstruct, run, serial_leapfrog
from .system import DiscreteSystem, SourceSignal, assemble, center_line_source, evaluate_source

__version__ = "0.1.0"

__all__ = [
    "ExpmPlan", "estimate_norm", "expm_action", "krylov_reference", "leja_points",
    "optimal_tolerance", "select_parameters", "StaggeredGrid", "SparseOperator",
    "build_curl_operators", "build_divergence_operators", "build_material_matrices",
    "FieldState", "cfl_timestep", "energy", "integrate", "step", "CostLedger",
    "HomogeneousTrack", "Partition", "make_partition", "reconstruct", "run", "serial_leapfrog",
    "DiscreteSystem", "SourceSignal", "assemble", "center_line_source", "evaluate_source",
]
