"""Open-system dynamics interrupted by repeated nonselective measurements."""

__version__ = "0.1.0"

from .channels import (  # noqa: E402
    DegenerateBasisError,
    DephasingChannel,
    ProjectedRateWarning,
    RateMatrix,
    basis_drift_rates,
    dephasing_channel,
    is_doubly_stochastic,
    overlap_matrix,
    rate_from_overlap,
    rates_from_transitions,
)
from .effective import (  # noqa: E402
    ValidityWarning,
    diagonal_rates,
    drifting_basis_rates,
    effective_generator_general,
    escape_rates_hamiltonian,
    gksl_effective_hamiltonian,
    pauli_rates_dissipative,
    pauli_rates_hamiltonian,
    solve_pauli,
    stroboscopic_comparison,
    stroboscopic_generator,
)
from .generators import (  # noqa: E402
    GeneratorSpec,
    composite_generator,
    dissipative_generator,
    dissipator,
    gksl_check,
    hamiltonian_generator,
    split_strength,
)
from .landau_zener import (  # noqa: E402
    LZParams,
    diabatic_basis,
    lz_closed_form,
    lz_effective_ode,
    lz_exact,
    lz_experiment,
    lz_formula,
    make_schedule,
)
from .operators import (  # noqa: E402
    BranchCutError,
    OrthonormalBasis,
    ValidationError,
    choi_matrix,
    eigenbasis,
    is_completely_positive,
    is_trace_preserving,
    matrix_exp,
    principal_log,
    unvec,
    vec,
)
from .propagation import (  # noqa: E402
    MeasurementSchedule,
    NonConvergenceError,
    Trajectory,
    intervened_evolution,
    propagate,
    zeno_freeze_probe,
)
