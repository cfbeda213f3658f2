"""Interferometric measurement of quantum work statistics, simulated.

Core layers: qop (finite-dimensional operator algebra), model (Hamiltonians
and drive schedules), evolve (time-ordered propagation), interferometry
(Ramsey protocols reading out the work characteristic function), workstats
(work distributions, fluctuation theorems, and the exact two-measurement
reference), cli (presets and file outputs).
"""
from .errors import (
    ConfigError,
    GuardLevelError,
    NumericalGuardError,
    UnitarityError,
    WorkqedError,
)
from .evolve import PropagationConfig, compare_generators, propagator
from .interferometry import (
    GSample,
    ProtocolRun,
    ProtocolSpec,
    build_drive,
    run_single_ancilla,
    run_two_ancilla,
    sweep_u,
)
from .model import (
    BathMode,
    DrivePair,
    ModelParams,
    PiecewiseSchedule,
    constant_schedule,
    drive_exclusive,
    drive_inclusive,
    effective_frequency,
    h_system,
    linear_ramp,
    qubit_splittings,
)
from .qop import DensityMatrix, Operator, SpaceLayout, Spectrum, thermal_state
from .workstats import (
    FTReport,
    WorkDistribution,
    char_direct,
    char_from_peaks,
    crooks_check,
    exclusive_oracle,
    free_energy_oscillator,
    free_energy_spectral,
    jarzynski_check,
    pdf_from_char,
    tmp_oracle,
)

__version__ = "0.1.0"
