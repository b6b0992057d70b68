"""Grid-free Bohmian trajectory simulator with a wavepacket cross-check.

The wavefunction is carried in polar form by Lagrangian fluid elements;
spatial derivatives on the moving cloud come from weighted local
polynomial fits (:mod:`qtraj.mwls`), the equations of motion integrate
under the external plus quantum potential (:mod:`qtraj.lagrangian`), an
independent sine-basis wavepacket route provides the reference solution
(:mod:`qtraj.dvr`), and closed-form benchmarks live in
:mod:`qtraj.analytic`.  Experiments are driven through
:mod:`qtraj.runner` or the ``qtraj`` command line.
"""

from .analytic import (
    HARTREE_TO_INVCM,
    CoherentOscillator,
    TwoStateModel,
    gaussian_quantum_potential,
    two_state_for_double_well,
)
from .config import ConfigError, ExperimentConfig, list_presets, parse_config
from .core import (
    DoubleWell,
    Ensemble,
    FluidElement,
    Harmonic,
    PhysicalSystem,
    PolynomialPotential,
    Potential,
    Zero,
    init_gaussian_ensemble,
    potential_gradient,
    potential_value,
)
from .dvr import (
    BoxExitError,
    DvrGrid,
    DvrState,
    SpectralDecomposition,
    WavepacketEvolution,
    build_hamiltonian,
    build_transform,
    eigensolve,
    gaussian_packet,
    integrate_pilot_trajectories,
    interpolate_psi,
    pilot_velocity,
)
from .lagrangian import (
    FieldEval,
    PropagationResult,
    StepController,
    TimestepUnderflowError,
    TrajectoryCrossingError,
    adaptive_step,
    check_norm,
    compute_accelerations,
    evaluate_fields,
    propagate,
    quantum_potential_at,
    reconstruct_wavefunction,
    total_energies,
    total_energy,
    verlet_step,
)
from .mwls import (
    BasisSpec,
    DegenerateStencilError,
    FitConfig,
    FitResult,
    Stencil,
    fit_batch,
    fit_local_polynomial,
    gaussian_weights,
    neighbor_table,
    quantum_force,
    quantum_potential,
    select_stencil,
    shift_jet,
    velocity_divergence,
)
from .records import TrajectoryRecord
from .runner import (
    ComparisonReport,
    MassResolution,
    PairingError,
    RunResult,
    compare_trajectories,
    pair_separation_deflection,
    resolve,
    resolve_double_well_mass,
    run_experiment,
)

__version__ = "0.1.0"
