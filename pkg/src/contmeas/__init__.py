"""Simulation of continuous position measurement of a free quantum particle.

Grid states and exact free flight live in :mod:`contmeas.lattice`; the
repeated-localization process in :mod:`contmeas.discrete`; its Ito limit in
:mod:`contmeas.sde`; the ensemble-level master equation in
:mod:`contmeas.master`; a closed-form Gaussian oracle in
:mod:`contmeas.gaussian`; and the statistical convergence checks in
:mod:`contmeas.convergence`.
"""

from __future__ import annotations

from .discrete import DiscreteParams, run_cycle, run_discrete_ensemble, run_discrete_trajectory
from .errors import (
    BoundaryLeak,
    ConfigError,
    DegenerateWidth,
    GammaZero,
    GridMismatch,
    InsufficientSamples,
    NonPositiveInput,
    SimulationError,
    UnderResolved,
    ZeroState,
)
from .gaussian import GaussianPureState
from .lattice import DensityMatrix, GridSpec, ModelParams, Moments, WaveFunction, gaussian_packet, moments
from .master import MomentFlow, evolve_master, moment_flow
from .noise import NoiseStream
from .sde import SdeParams, UnravelingKind, run_sde_ensemble, run_sde_trajectory

__version__ = "0.1.0"

__all__ = [
    "BoundaryLeak",
    "ConfigError",
    "DegenerateWidth",
    "DensityMatrix",
    "DiscreteParams",
    "GammaZero",
    "GaussianPureState",
    "GridMismatch",
    "GridSpec",
    "InsufficientSamples",
    "ModelParams",
    "MomentFlow",
    "Moments",
    "NoiseStream",
    "NonPositiveInput",
    "SdeParams",
    "SimulationError",
    "UnderResolved",
    "UnravelingKind",
    "WaveFunction",
    "ZeroState",
    "evolve_master",
    "gaussian_packet",
    "moment_flow",
    "moments",
    "run_cycle",
    "run_discrete_ensemble",
    "run_discrete_trajectory",
    "run_sde_ensemble",
    "run_sde_trajectory",
]
