"""Stochastic control benchmarks with certified optimal policies."""

from .errors import (
    ChecksumMismatch,
    EmptyGrid,
    EmptyInput,
    IndexOutOfRange,
    InvalidHorizon,
    IoFailure,
    LengthMismatch,
    NonFinite,
    NotPsd,
    NotSpd,
    PolicyFailure,
    QGBenchError,
    RetryBudgetExhausted,
    SamplingExhausted,
    SchemaVersionMismatch,
    ShapeMismatch,
    Unreachable,
    ZeroDirectionField,
)
from .evaluation import (
    EvalProtocol,
    EvalReport,
    evaluate,
    export_heatmap_csv,
    opt_gap,
    paired_bootstrap,
    write_csv,
)
from .families import (
    ArmParams,
    DifficultyWeights,
    NvdexParams,
    TuningResult,
    build_arm,
    build_nvdex,
    difficulty_index,
    open_loop_linearization,
    tune_instability,
)
from .generator import (
    Fixture,
    GeneratorConfig,
    ValidationSettings,
    evaluation_grid,
    export_fixture,
    generate_dataset,
    import_fixture,
    revalidate,
    sample_params,
    validate_bellman,
    validate_boundedness,
    validate_instance,
    validate_spd,
)
from .linalg import (
    GivensRotation,
    apply_givens_product,
    random_spd,
    spd_inv_sqrt,
    spd_sqrt,
    spectral_radius,
)
from .qg import (
    METRIC_NORMALIZED,
    SQUARE_ROOT,
    AngleTerm,
    DirectionField,
    InputCoupling,
    OrthogonalField,
    PlaneRotation,
    QGInstance,
    bellman_residual,
    control_hessian,
    discounted_metric,
    discounted_metric_woodbury,
    drift,
    energy,
    energy_residual,
    expected_next_value,
    noise_offset,
    optimal_action,
    reward,
    reward_value,
    value,
)
from .sim import (
    ExternalPolicy,
    InitialStateSchedule,
    LinearPolicy,
    NoiseStream,
    OraclePolicy,
    PairedTrajectory,
    ScaledOraclePolicy,
    Trajectory,
    ZeroPolicy,
    discounted_regret,
    dump_noise,
    dump_trajectory,
    paired_rollout,
    parse_policy_spec,
    read_noise_dump,
    read_trajectory_dump,
    rollout,
    rollout_returns,
    step,
)

__version__ = "0.1.0"
