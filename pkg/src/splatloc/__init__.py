"""Camera pose estimation against a renderable splat scene.

The pipeline renders an RGBD frame at an initial pose guess, matches 2D
features between the query and the rendered image, lifts the matches to
3D through the rendered depth, and solves a robust perspective-n-point
problem. A photometric-descent baseline and an evaluation harness ride on
the same renderer.
"""

from .geometry import (
    BehindCamera,
    Intrinsics,
    Pose,
    backproject,
    compose,
    exp_se3,
    invert,
    log_se3,
    project,
    rotation_angle_between,
    transform_point,
)
from .localization import FALLBACK_INITIAL, SOLVED, LocalizationResult, lift_matches, localize
from .matching import (
    ClassicalMatcherConfig,
    MatcherConfig,
    MatchSet,
    OracleMatcherConfig,
    match_classical,
    match_oracle,
)
from .photometric import PhotometricConfig, localize_photometric, photometric_loss
from .pnp import (
    LiftedSet,
    LmConfig,
    NoConsensus,
    PnpConfig,
    PnpResult,
    RansacConfig,
    TooFewCorrespondences,
    reprojection_residuals,
    residual_jacobian,
    solve_pnp_lm,
    solve_pnp_ransac,
)
from .rendering import (
    RgbdFrame,
    Scene,
    Splat,
    generate_test_scene,
    make_orbit_trajectory,
    render,
)
from .evaluation import (
    BenchmarkReport,
    Metrics,
    PerturbationLimits,
    deviation_limits,
    pose_errors,
    run_benchmark,
    run_sensitivity_sweep,
    sample_initial_pose,
    sample_initial_pose_uniform,
    scene_scale,
)

__version__ = "0.1.0"
