"""Linear structure and velocity estimation from asynchronous point tracks."""

from .errors import (
    AmbiguousSignError,
    AsyncMotionError,
    DegenerateTrackError,
    ExperimentError,
    GenerationError,
    InsufficientDataError,
    InvalidInputError,
    NoSolutionError,
    OracleTooLargeError,
    ScaleUnobservableError,
    UnderconstrainedError,
)
from .geometry import (
    AngularRate,
    Asynchronous,
    BearingObservation,
    CameraIntrinsics,
    GlobalShutter,
    RollingShutter,
    TimestampModel,
    Track,
    TrackObservation,
    assign_timestamp,
    compensate,
    pixel_to_bearing,
    reference_time,
    so3_exp,
)
from .linsys import (
    RankCheck,
    SchurMatrix,
    TrackBlocks,
    accumulate_schur,
    rank_check_F,
    skew_squared,
    track_blocks,
)
from .robust import RansacConfig, RansacResult, ransac, sample_hypothesis, track_residual
from .sim import (
    NoiseConfig,
    SimConfig,
    TrialStats,
    add_noise,
    generate_scene,
    inject_outliers,
    preset_config,
    run_trials,
    velocity_error,
)
from .solver import (
    Minimality,
    MinimalityClass,
    MotionEstimate,
    OrderSInputs,
    angle_between,
    classify_minimality,
    disambiguate_sign,
    full_svd_reference,
    refine_velocity_tls,
    solve,
    solve_order_s,
    solve_points,
    solve_velocity,
    solve_with_known_accel,
)

__version__ = "0.1.0"
