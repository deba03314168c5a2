"""Counting statistics of quantum and classical clockworks under incoherent feedback."""
from .errors import (
    ClockFcsError,
    DegenerateCurrentError,
    KernelDimensionError,
    ModelError,
    NonPositiveError,
    NotClassicalError,
    NumericalError,
    SimulationError,
)
from .fcs import (
    CountingStatistics,
    FcsResult,
    IntegratedCurrent,
    Transition,
    analytic_qubit_snr,
    corollary1_construction,
    cur_bound,
    current_and_noise,
    group_inverse,
    hyperaccurate_current,
    kur_bound,
    optimal_combination,
    optimal_current,
    rescale_dynamics,
    rescale_weights,
    steady_state,
    theorem1_bound,
    vectorized_generator,
)
from .feedback import (
    FeedbackPolicy,
    JointSystem,
    build_joint,
    classical_feedback_rate_matrix,
    constant_policy,
    protocol1_output_current,
    protocol1_policy,
    two_qubit_switching_policy,
)
from .models import (
    ClassicalClockworkSpec,
    ControlledFamily,
    JumpLabel,
    LindbladSpec,
    ParameterSpace,
    classical_to_lindblad,
    compose_independent,
    control_family,
    cyclic_clockwork,
    cyclic_family,
    qubit_clockwork,
    qubit_family,
)

__version__ = "0.1.0"
