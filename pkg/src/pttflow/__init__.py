"""Desk-scale spectral solver and verification suite for a viscoelastic
flow model on the periodic box [0, 2pi)^3.

The model couples incompressible velocity to a symmetric stress tensor
whose relaxation stiffens linearly with its own trace.  Depending on
the sign structure of the initial trace the coupled system either
breaks down in finite time or relaxes globally with an algebraic rate,
and both regimes come with closed-form oracles (a scalar trace ODE
along particle paths, an explicit linear propagator, projected
advection identities) that the solver is tested against.

Modules:

    spectral     grids, transforms, norms, projections
    model        the coupled equations, monitors, initial data
    semigroup    closed-form linear propagator and its oracle
    integrate    time stepping, step control, breakdown detection
    tracking     particle paths, trace transport, flow-map bounds
    diagnostics  energy records, weighted functionals, bound checks
    config       key=value run configuration
    snapshot     binary state persistence
    scenarios    orchestration and artifact output
    cli          the ``ptt`` command
"""

from .config import SCENARIOS, ConfigError, ScenarioConfig, build_config, parse_config
from .diagnostics import (
    EnergyRecord,
    InsufficientDataError,
    RECORD_FIELDS,
    WeightedEnergies,
    accumulate,
    adaptive_simpson,
    decay_envelope_check,
    heat_linf_check,
    linf_grad2,
    memory_integral_check,
    record,
    start_weighted,
)
from .integrate import (
    BlowupRateFit,
    BlowupReport,
    InvariantLog,
    RunOutcome,
    StepControl,
    StepInfo,
    blowup_rate_probe,
    run,
    step,
    viscous_factor,
)
from .model import (
    FlowState,
    ModelParams,
    StepMonitors,
    Tendency,
    deformation,
    grad_u_physical,
    i3_residual,
    make_initial_data,
    momentum_rhs,
    pdivtau_coeffs,
    pressure,
    q_bilinear,
    random_solenoidal_field,
    stress_rhs,
    tau_sobolev_norm,
    tendency,
    trace_coeffs,
    trace_field,
    vorticity_tensor,
)
from .scenarios import run_scenario
from .semigroup import (
    ENVELOPE_CONSTANT,
    GreenBlocks,
    block_deviation,
    duhamel_defect,
    eigenvalues,
    evolve_linear,
    green_blocks,
    matrix_exponential_oracle,
    sweep_block_constant,
    table_rows,
)
from .snapshot import (
    CorruptStateError,
    FileFormatError,
    Snapshot,
    load_snapshot,
    save_snapshot,
)
from .spectral import (
    BOX_VOLUME,
    Grid,
    MeanValueError,
    SpectralField,
    SYM_COMPONENTS,
    SYM_WEIGHTS,
    dealias,
    derivative,
    div_sym,
    divergence,
    forward_dealiased,
    gradient,
    grid_max_abs,
    inverse_laplacian,
    leray_project,
    projection_identity_residuals,
    sobolev_norm,
    solenoidal_residual,
    transform_backward,
    transform_forward,
)
from .tracking import (
    BlowupPrediction,
    FlowBoundReport,
    ParticleSet,
    ParticleTracker,
    SingularityError,
    TransportReport,
    advect,
    blowup_time,
    flow_bound_check,
    fourier_eval,
    locate_trace_minimum,
    predict_blowup_time,
    riccati_trace,
    seed_particles,
    trace_transport_check,
)

__version__ = "0.1.0"
