"""Spectral Galerkin simulator and verification lab for the stochastic
phase-field alpha-Navier-Stokes vesicle-fluid interaction system on (0, pi)^2."""

__version__ = "0.1.0"

from .basis import DomainSpec, Transforms, eigenvalue, sorted_modes
from .errors import (
    BlowUpError,
    ConfigError,
    DealiasError,
    ModeIndexError,
    ShapeError,
    SnapshotFormatError,
    StabilityError,
    TraceClassError,
    VesiflowError,
)
from .field import (
    NormBundle,
    ScalarField,
    VelocityField,
    divergence_residual,
    from_grid,
    gradient,
    inner,
    inner_vec,
    norms,
    product,
    scalar_eigenpair,
    to_grid,
    velocity_eigenpair,
    zero_scalar,
    zero_velocity,
)
from .energy import EnergyBreakdown, EnergyParams
from .fluid import AlphaParams
from .noise import NoiseSpec
from .dynamics import Problem, StepperConfig, SystemState
from .ledger import BalanceRecord
