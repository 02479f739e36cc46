"""Numerical study of QAOA with linear-ramp schedules: performance diagrams,
eigenvalue wrap-around of the QAOA unitary, perturbative gaps and
discrete Landau-Zener estimates."""

__version__ = "0.1.0"

from .errors import BudgetError, InapplicableError, QaoaWrapError, RefinementError, ValidationError
from .model import (
    Component,
    HamiltonianPair,
    IsingInstance,
    build_diagonal_cost,
    build_ising,
    build_transverse_field_mixer,
    example_pair,
    load_pair,
    sample_sparse_ising,
    save_pair,
)
from .engine import QaoaResult, Schedule, evolve, evolve_general, qaoa_step, ramp_schedule

