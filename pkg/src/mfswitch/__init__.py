"""Mean-field interacting particle systems with common regime switching.

Simulation of N-particle systems whose coefficients depend on the empirical
measure and on a shared finite-state Markov chain, together with the
metrics, reference approximations, and averaging tools used to study their
large-N and fast-switching behaviour.
"""

__version__ = "0.1.0"

from .chain import (
    AggregationResult,
    GeneratorMatrix,
    MartingaleDecomposition,
    SwitchingPath,
    TwoScaleSpec,
    aggregate,
    build_fast_generator,
    constant_path,
    martingale_decomposition,
    occupation_residual,
    occupation_time,
    project_path,
    sample_path,
    stationary_distribution,
    transition_matrix,
    validate_generator,
)
from .dynamics import (
    CoefficientModel,
    InitialCondition,
    ParticleEnsemble,
    SimConfig,
    TrajectoryRecord,
    builtin_model,
    em_step,
    generator_apply,
    kernel_interaction,
    lyapunov_moment,
    mean_reverting_switch,
    simulate,
    simulate_with_chain,
)
from .harness import (
    RateFit,
    StudyReport,
    StudySpec,
    build_test_function,
    derive_seed,
    fit_rate,
    run_study,
)
from .limit import (
    LLNCurve,
    MartingaleResidualReport,
    conditional_law_reference,
    frozen_regime_mckean_vlasov,
    lln_distance_curve,
    martingale_residual,
    quadratic_variation_estimate,
)
from .measure import (
    EmpiricalMeasure,
    TestFunctionBundle,
    bl_distance_approx,
    bl_distance_exact,
    bump,
    coordinate_sum,
    integrate,
    moment,
    product_metric_d,
    regime_scaled,
    squared_norm,
    wasserstein1_1d,
)
from .twoscale import (
    AveragedModel,
    average_coefficients,
    matrix_sqrt_spd,
    operator_residual,
    sigma_averaged_control,
    two_scale_experiment,
)
