"""Stability analysis for two-view minimal problems.

Exact 5-point/7-point solvers, condition numbers of the associated
solution maps, ill-posed world configurations, degeneracy curves in the
second image, distance-to-degeneracy queries, and a synthetic experiment
harness with standard and stability-filtered RANSAC.
"""

from .conditioning import (
    ConditionReport,
    SolutionCondition,
    cond_image,
    cond_world_5pt,
    cond_world_7pt,
    dphi_5pt,
    dphi_7pt,
    gram_5pt,
    gram_7pt,
)
from .errors import (
    AtInfinity,
    ChartFailure,
    Degenerate,
    DegenerateFixedData,
    EliminationFailure,
    EmptyCandidates,
    EverywhereIllPosed,
    InvalidInput,
    MinstabError,
    NoHypothesis,
    NonFinite,
    NotEssential,
    NotSPD,
    NoValidPose,
    OnBaseline,
    RankDeficientData,
    SameCenter,
    SamplingExhausted,
)
from .illposed import (
    CurveTrace,
    QuadricSystemReport,
    criticality_test,
    curve65_poly,
    curve_scan,
    distance_to_illposed,
    illposed_world_calibrated,
    illposed_world_projective,
)
from .lab import (
    RansacOptions,
    RansacResult,
    SceneConfig,
    TrialRecord,
    add_noise,
    classify_counts,
    classify_instability,
    e_metric,
    exp_cond_correlation,
    exp_curve_robustness,
    exp_histograms,
    exp_instability_ratio,
    exp_noise_sweep,
    pose_from_model,
    ransac_epipolar,
    rotation_translation_error,
    sample_scene,
    sampson_epipolar,
    trial_stream,
)
from .numerics import (
    BivariatePoly,
    UnivariatePoly,
    discriminant,
    real_roots,
    smallest_singular_value,
    spd_sqrt,
)
from .scene import (
    CalibratedScene,
    CorrespondenceSet,
    EpipolarModel,
    Intrinsics,
    ProjectiveScene,
    camera_from_b,
    cheirality_filter,
    essential_from_pose,
    fundamental_from_cameras,
    normalized_to_pixels,
    pixels_to_normalized,
    pose_candidates_from_essential,
    project_calibrated,
    project_projective,
    triangulate,
)
from .solvers import Solve5Result, Solve7Result, solve_5pt, solve_7pt

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
