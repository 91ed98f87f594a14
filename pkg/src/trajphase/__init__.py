"""Trajectory-resolved open-system evolution and geometric phases.

Lindblad dynamics with a tunable channel-shift gauge, the no-jump branch and
its geometric phase, jump-unraveling Monte Carlo, and the diffusive (QSD)
unraveling, plus closed forms for the dephasing qubit.
"""

from .config import (
    ConfigError,
    RunSettings,
    ScenarioConfig,
    SweepAxis,
    load_config,
    parse_config,
    serialize_config,
)
from .dephasing import (
    DephasingParams,
    bloch_spiral,
    closed_form_dynamical_phase,
    closed_form_no_jump_phase,
    closed_form_overlap_phase,
    closed_form_survival,
    decay_equivalent_model,
    decay_model,
    dephasing_model,
    no_jump_phase_correction,
)
from .jump import (
    BranchTrackingError,
    GeometricPhaseResult,
    JumpEnsembleResult,
    JumpEvent,
    KrausSet,
    NoJumpGenerator,
    StepSizeError,
    TotalDecayError,
    TrajectoryRecord,
    average_jump_ensemble,
    connection_unitarity_residual,
    gauge_transform_check,
    kraus_connection_matrix,
    kraus_maps_equal,
    kraus_set,
    no_jump_geometric_phase,
    no_jump_hamiltonian,
    no_jump_probability,
    propagate_no_jump,
    sample_jump_trajectory,
    shifted_no_jump_hamiltonian,
)
from .lindblad import (
    DensityMatrix,
    IntegrationError,
    LindbladModel,
    ShiftSet,
    apply_shift,
    apply_unitary_mixing,
    evolve_density,
    lindblad_rhs,
    shift_is_hidden,
    shifted_hamiltonian,
    zero_point_shift,
)
from .operators import (
    BlochAngles,
    Operator,
    OperatorSchedule,
    PureState,
    ScalarSchedule,
    ScheduleRangeError,
    annihilation,
    bloch_angles,
    bloch_path,
    bloch_state,
    combine_schedules,
    commutator,
    identity,
    is_hermitian,
    matrix_exponential,
    pauli,
    time_ordered_propagator,
    wrap_phase,
)
from .qsd import (
    QSDConfig,
    QSDEnsembleResult,
    averaged_geometric_phase,
    averaged_overlap,
    qsd_step,
    wiener_increments,
)

__version__ = "0.1.0"

__all__ = [
    "BlochAngles",
    "BranchTrackingError",
    "ConfigError",
    "DensityMatrix",
    "DephasingParams",
    "GeometricPhaseResult",
    "IntegrationError",
    "JumpEnsembleResult",
    "JumpEvent",
    "KrausSet",
    "LindbladModel",
    "NoJumpGenerator",
    "Operator",
    "OperatorSchedule",
    "PureState",
    "QSDConfig",
    "QSDEnsembleResult",
    "RunSettings",
    "ScalarSchedule",
    "ScenarioConfig",
    "ScheduleRangeError",
    "ShiftSet",
    "StepSizeError",
    "SweepAxis",
    "TotalDecayError",
    "TrajectoryRecord",
    "annihilation",
    "apply_shift",
    "apply_unitary_mixing",
    "average_jump_ensemble",
    "averaged_geometric_phase",
    "averaged_overlap",
    "bloch_angles",
    "bloch_path",
    "bloch_spiral",
    "bloch_state",
    "closed_form_dynamical_phase",
    "closed_form_no_jump_phase",
    "closed_form_overlap_phase",
    "closed_form_survival",
    "combine_schedules",
    "commutator",
    "connection_unitarity_residual",
    "decay_equivalent_model",
    "decay_model",
    "dephasing_model",
    "evolve_density",
    "gauge_transform_check",
    "identity",
    "is_hermitian",
    "kraus_connection_matrix",
    "kraus_maps_equal",
    "kraus_set",
    "lindblad_rhs",
    "load_config",
    "matrix_exponential",
    "no_jump_geometric_phase",
    "no_jump_hamiltonian",
    "no_jump_phase_correction",
    "no_jump_probability",
    "parse_config",
    "pauli",
    "propagate_no_jump",
    "qsd_step",
    "sample_jump_trajectory",
    "serialize_config",
    "shift_is_hidden",
    "shifted_hamiltonian",
    "shifted_no_jump_hamiltonian",
    "time_ordered_propagator",
    "wiener_increments",
    "wrap_phase",
    "zero_point_shift",
]
