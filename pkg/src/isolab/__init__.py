"""Numerical laboratory for isometry and gradient propagation in
batch-normalized chains with orthogonal weights.

The package measures how the isometry gap of representations evolves
through deep BN networks, verifies the closed-form orthogonal-moment
identities and expectation bounds behind those dynamics, backpropagates
exactly through the chain via the closed-form BN Jacobian, and fits
gain schedules that keep nonlinear chains from exploding.
"""

from .backend import active_backend
from .errors import AcceptanceFailure, DegenerateRowError
from .spectral import (
    RANK_RTOL,
    SpectralSummary,
    isometry,
    isometry_gap,
    sample_gaussian,
    sample_haar_orthogonal,
    sample_haar_stack,
    spectral_summary,
)
from .network import (
    BN_EPSILON,
    GainSchedule,
    LayerTape,
    NetworkConfig,
    apply_activation,
    bn_simplified,
    bn_standard,
    format_config,
    forward,
    parse_config,
    sample_network_weights,
    with_gain,
)
from .gradients import (
    BackwardResult,
    GradientReport,
    LossKind,
    backward,
    bn_jacobian_apply,
    bn_jacobian_opnorm,
    fd_bn_jvp,
    fd_weight_grad,
    loss_and_logit_grad,
    sgd_step,
)
from .moments import (
    IsometryLiftReport,
    MomentEstimate,
    MomentSpec,
    moment_report_json,
    verify_isometry_lift,
    verify_moment_mc,
    weingarten_moment,
)
from .shaping import (
    RATE_GAP,
    RateFit,
    RateMeasurement,
    cumulative_rate,
    cumulative_rate_bound,
    fit_power_law,
    gain_schedule_from_fit,
    measure_rate,
    measure_rate_single,
)
from .data import (
    Batch,
    RankAudit,
    load_csv_batch,
    load_idx,
    project_to_width,
    rank_audit,
    synth_batch,
    write_audit_csv,
)
from .io import (
    load_matrix_bin,
    load_matrix_csv,
    save_matrix_bin,
    save_matrix_csv,
)
from .rng import as_generator, derive
from .experiments import (
    ExperimentSpec,
    TrainRecord,
    emit_plot_data,
    make_cluster_batch,
    run_degenerate_contrast,
    run_gradient_sweep,
    run_isometry_decay,
    run_rank_audit,
    run_shaping_suite,
    run_training,
    run_weingarten_verify,
    write_sidecar,
)

__version__ = "0.1.0"
