"""Experiment-harness tests: sampling, noise, metrics, RANSAC, runners.

Closed-form oracles used below:
  * deviation metric on scalar multiples: e(M, [c*M]) == | |c| - 1 |
  * rotation error of a pure z-rotation equals its angle in degrees
  * translation error folds the angle between unit vectors to [0, 90]
  * first-order epipolar distance re-derived entrywise in `sampson_oracle`
"""

import json
import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minstab.errors import (
    EmptyCandidates,
    InvalidInput,
    NoHypothesis,
    SamplingExhausted,
)
from minstab.lab import (
    RansacOptions,
    SceneConfig,
    add_noise,
    classify_counts,
    classify_instability,
    e_metric,
    exp_cond_correlation,
    exp_curve_robustness,
    exp_histograms,
    exp_instability_ratio,
    exp_noise_sweep,
    gaussian,
    pose_from_model,
    ransac_epipolar,
    rotation_translation_error,
    sample_scene,
    sampson_epipolar,
    trial_stream,
    unit_sphere_sample,
)
from minstab.scene import (
    CorrespondenceSet,
    EpipolarModel,
    essential_from_pose,
    normalized_to_pixels,
    pixels_to_normalized,
    project_calibrated,
)


def rot_z(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0.0],
                     [math.sin(a), math.cos(a), 0.0],
                     [0.0, 0.0, 1.0]])


def pixel_scene(seed=11, **cfg_kwargs):
    cfg = SceneConfig(**cfg_kwargs)
    scene, K = sample_scene(cfg, trial_stream(seed, 0))
    return scene, K, normalized_to_pixels(K, project_calibrated(scene))


# ------------------------------------------------------------------ RNG


def test_trial_stream_reproducible_and_distinct():
    a = trial_stream(7, 3).random(8)
    b = trial_stream(7, 3).random(8)
    c = trial_stream(7, 4).random(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gaussian_shapes():
    rng = trial_stream(0, 0)
    assert isinstance(gaussian(rng), float)
    assert gaussian(rng, (3,)).shape == (3,)
    assert gaussian(rng, (2, 3)).shape == (2, 3)
    assert gaussian(rng, (5,)).shape == (5,)


def test_gaussian_moments():
    z = gaussian(trial_stream(1, 0), (1_000_000,))
    assert abs(np.mean(z)) < 0.01
    assert abs(np.std(z) - 1.0) < 0.01
    assert np.all(np.isfinite(z))


def test_unit_sphere_sample_uniformity():
    rng = trial_stream(2, 0)
    pts = np.array([unit_sphere_sample(rng) for _ in range(20_000)])
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(np.mean(pts, axis=0))) < 0.02


# --------------------------------------------------------------- config


def test_scene_config_defaults():
    e = SceneConfig(kind="essential")
    f = SceneConfig(kind="fundamental")
    assert (e.n_points, f.n_points) == (5, 7)
    assert (e.minimal_size(), f.minimal_size()) == (5, 7)
    K = e.intrinsics
    assert K.fx == pytest.approx(640 * 32.0 / 36.0)
    assert K.fx == K.fy
    assert (K.cx, K.cy) == (320.0, 240.0)


@pytest.mark.parametrize("kwargs", [
    dict(kind="affine"),
    dict(kind="essential", n_points=4),
    dict(kind="fundamental", n_points=6),
    dict(kind="essential", depth_min=5.0, depth_max=2.0),
    dict(kind="essential", depth_min=-1.0),
    dict(kind="essential", width=0),
    dict(kind="essential", focal_mm=0.0),
    dict(kind="essential", translation_radius=0.0),
])
def test_scene_config_rejects_bad_values(kwargs):
    with pytest.raises(InvalidInput):
        SceneConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [
    dict(iterations=0),
    dict(threshold_px=0.0),
    dict(min_curve_distance_px=-1.0),
])
def test_ransac_options_rejects_bad_values(kwargs):
    with pytest.raises(InvalidInput):
        RansacOptions(**kwargs)


# ------------------------------------------------------------- sampling


def test_sample_scene_geometry():
    cfg = SceneConfig(kind="essential", n_points=12)
    scene, K = sample_scene(cfg, trial_stream(3, 0))
    assert scene.points.shape == (12, 3)
    assert np.allclose(scene.R @ scene.R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(scene.R) == pytest.approx(1.0)
    assert np.linalg.norm(scene.t_hat) == pytest.approx(1.0)
    # depths inside the configured range (unit translation radius)
    assert np.all(scene.points[:, 2] >= cfg.depth_min)
    assert np.all(scene.points[:, 2] <= cfg.depth_max)
    # both projections land inside their images
    c = normalized_to_pixels(K, project_calibrated(scene))
    for arr in (c.x, c.xbar):
        assert np.all(arr[:, 0] >= 0) and np.all(arr[:, 0] <= cfg.width)
        assert np.all(arr[:, 1] >= 0) and np.all(arr[:, 1] <= cfg.height)


def test_sample_scene_deterministic():
    cfg = SceneConfig(kind="fundamental")
    s1, _ = sample_scene(cfg, trial_stream(5, 9))
    s2, _ = sample_scene(cfg, trial_stream(5, 9))
    assert np.array_equal(s1.R, s2.R)
    assert np.array_equal(s1.t_hat, s2.t_hat)
    assert np.array_equal(s1.points, s2.points)


def test_sample_scene_exhaustion():
    # a 0.6-degree field of view almost never sees the same points twice
    cfg = SceneConfig(kind="essential", focal_mm=3600.0)
    with pytest.raises(SamplingExhausted):
        sample_scene(cfg, trial_stream(42, 0))


def test_add_noise_zero_sigma_is_identity():
    _, _, c = pixel_scene(seed=11)
    noisy = add_noise(c, 0.0, trial_stream(0, 1))
    assert np.array_equal(noisy.x, c.x)
    assert np.array_equal(noisy.xbar, c.xbar)


def test_add_noise_moments():
    n = 250_000
    base = CorrespondenceSet(np.zeros((n, 2)), np.zeros((n, 2)), unit="pixels")
    noisy = add_noise(base, 2.0, trial_stream(6, 0))
    offsets = np.hstack([noisy.x, noisy.xbar]).ravel()
    assert abs(np.mean(offsets)) < 0.01
    assert abs(np.std(offsets) - 2.0) < 0.04


def test_add_noise_rejects_normalized_units():
    base = CorrespondenceSet(np.zeros((5, 2)), np.zeros((5, 2)))
    with pytest.raises(InvalidInput):
        add_noise(base, 1.0, trial_stream(0, 0))
    px = CorrespondenceSet(np.zeros((5, 2)), np.zeros((5, 2)), unit="pixels")
    with pytest.raises(InvalidInput):
        add_noise(px, -0.5, trial_stream(0, 0))


# -------------------------------------------------------------- metrics

_M_REF = np.array([[1.0, -2.0, 3.0],
                   [0.5, 4.0, -1.5],
                   [2.5, -0.5, 1.0]])


def test_e_metric_exact_cases():
    assert e_metric(_M_REF, [_M_REF]) == 0.0
    assert e_metric(_M_REF, [-_M_REF]) == 0.0
    assert e_metric(_M_REF, [2.0 * _M_REF]) == pytest.approx(1.0, abs=1e-15)
    assert e_metric(_M_REF, [2.0 * _M_REF, _M_REF]) == 0.0


def test_e_metric_ignores_structural_zeros():
    ref = _M_REF.copy()
    ref[0, 1] = 0.0
    cand = ref.copy()
    cand[0, 1] = 99.0
    assert e_metric(ref, [cand]) == 0.0


def test_e_metric_input_validation():
    with pytest.raises(EmptyCandidates):
        e_metric(_M_REF, [])
    with pytest.raises(InvalidInput):
        e_metric(np.full((3, 3), np.nan), [_M_REF])
    with pytest.raises(InvalidInput):
        e_metric(np.eye(2), [_M_REF])


@given(st.floats(0.05, 20.0), st.booleans())
@settings(max_examples=40, deadline=None)
def test_e_metric_scalar_multiples(c, neg):
    cand = (-c if neg else c) * _M_REF
    assert e_metric(_M_REF, [cand]) == pytest.approx(abs(c - 1.0), abs=1e-12)


def test_classify_instability_flags():
    clean = SimpleNamespace(solutions=[_M_REF, 2.0 * _M_REF])
    same = SimpleNamespace(solutions=[_M_REF, 2.0 * _M_REF])
    flags = classify_instability(clean, same, tau=0.5)
    assert flags.e == 0.0
    assert not flags.erroneous and not flags.count_changed and not flags.unstable

    fewer = SimpleNamespace(solutions=[3.0 * _M_REF])
    flags = classify_instability(clean, fewer, tau=0.5)
    assert flags.count_changed and flags.unstable
    assert flags.e == pytest.approx(0.5, abs=1e-12)  # nearest ref is 2M
    assert flags.erroneous  # threshold is inclusive: e >= tau

    flags = classify_instability(clean, fewer, tau=0.5 + 1e-9)
    assert not flags.erroneous

    empty = SimpleNamespace(solutions=[])
    flags = classify_instability(clean, empty, tau=0.5)
    assert flags.e == np.inf and flags.erroneous and flags.count_changed

    with pytest.raises(EmptyCandidates):
        classify_instability(empty, clean, tau=0.5)


def test_classify_instability_external_reference():
    clean = SimpleNamespace(solutions=[2.0 * _M_REF])
    noisy = SimpleNamespace(solutions=[2.0 * _M_REF])
    flags = classify_instability(clean, noisy, tau=0.5, reference=_M_REF)
    assert flags.e == pytest.approx(1.0, abs=1e-12)
    assert flags.erroneous and not flags.count_changed


@given(st.integers(0, 60), st.integers(1, 60))
def test_classify_counts_thirds_rule(a, n):
    n_err = min(a, n)
    label = classify_counts(n_err, n)
    if 3 * n_err <= n:
        assert label == "stable"
    elif 3 * n_err >= 2 * n:
        assert label == "unstable"
    else:
        assert label == "borderline"


def test_rotation_translation_error_basics():
    t = np.array([0.0, 0.0, 1.0])
    rot, trans = rotation_translation_error((np.eye(3), t), (np.eye(3), t))
    assert rot == 0.0 and trans == 0.0
    rot, trans = rotation_translation_error((rot_z(10.0), t), (np.eye(3), t))
    assert rot == pytest.approx(10.0, abs=1e-9)
    rot, trans = rotation_translation_error((np.eye(3), -t), (np.eye(3), t))
    assert trans == pytest.approx(0.0, abs=1e-6)
    ty = np.array([0.0, 1.0, 0.0])
    _, trans = rotation_translation_error((np.eye(3), ty), (np.eye(3), t))
    assert trans == pytest.approx(90.0, abs=1e-9)
    with pytest.raises(InvalidInput):
        rotation_translation_error((np.eye(3), 2.0 * t), (np.eye(3), t))


@given(st.floats(0.5, 179.0))
@settings(max_examples=25, deadline=None)
def test_rotation_error_matches_angle(theta):
    t = np.array([1.0, 0.0, 0.0])
    rot, _ = rotation_translation_error((rot_z(theta), t), (np.eye(3), t))
    assert rot == pytest.approx(theta, abs=1e-5)


@given(st.floats(0.0, 180.0))
@settings(max_examples=25, deadline=None)
def test_translation_error_folds_to_quadrant(alpha):
    a = math.radians(alpha)
    te = np.array([math.cos(a), math.sin(a), 0.0])
    tt = np.array([1.0, 0.0, 0.0])
    _, trans = rotation_translation_error((np.eye(3), te), (np.eye(3), tt))
    expected = min(alpha, 180.0 - alpha)
    assert trans == pytest.approx(expected, abs=1e-5)
    assert 0.0 <= trans <= 90.0


def sampson_oracle(F, x1, x2):
    out = []
    for a, b in zip(x1, x2):
        xh = np.array([a[0], a[1], 1.0])
        xbh = np.array([b[0], b[1], 1.0])
        l1 = F @ xh
        l2 = F.T @ xbh
        out.append(abs(xbh @ F @ xh) /
                   math.sqrt(l1[0] ** 2 + l1[1] ** 2 + l2[0] ** 2 + l2[1] ** 2))
    return np.array(out)


def test_sampson_matches_entrywise_oracle():
    rng = np.random.default_rng(4)
    F = rng.normal(size=(3, 3))
    x1 = rng.uniform(0, 640, size=(40, 2))
    x2 = rng.uniform(0, 480, size=(40, 2))
    c = CorrespondenceSet(x1, x2, unit="pixels")
    got = sampson_epipolar(F, c)
    assert np.allclose(got, sampson_oracle(F, x1, x2), rtol=1e-12, atol=1e-12)


def test_sampson_zero_on_exact_correspondences():
    scene, K, c_px = pixel_scene(seed=13, kind="essential", n_points=25)
    E = essential_from_pose(scene.R, scene.t_hat)
    Kinv = np.linalg.inv(K.K)
    F = Kinv.T @ E.M @ Kinv
    assert np.max(sampson_epipolar(F, c_px)) < 1e-8


# --------------------------------------------------------------- RANSAC


def test_ransac_noiseless_round_trip_essential():
    scene, K, c_px = pixel_scene(seed=21, kind="essential", n_points=30)
    opts = RansacOptions(iterations=20, threshold_px=1.0, seed=3)
    res = ransac_epipolar(c_px, "essential", opts, intrinsics=K)
    assert res.n_inliers == 30
    assert res.rejected_by_filter == 0
    pose = pose_from_model(res.model, pixels_to_normalized(K, c_px))
    rot, trans = rotation_translation_error(pose, (scene.R, scene.t_hat))
    assert rot < 1e-6 and trans < 1e-6


def test_ransac_noiseless_round_trip_fundamental():
    scene, K, c_px = pixel_scene(seed=22, kind="fundamental", n_points=30)
    E = essential_from_pose(scene.R, scene.t_hat)
    Kinv = np.linalg.inv(K.K)
    F = EpipolarModel("fundamental", Kinv.T @ E.M @ Kinv)
    opts = RansacOptions(iterations=20, threshold_px=1.0, seed=5)
    res = ransac_epipolar(c_px, "fundamental", opts)
    assert res.n_inliers == 30
    assert e_metric(F, [res.model]) < 1e-6


def test_ransac_deterministic_and_filter_off_equivalent():
    _, K, c_px = pixel_scene(seed=23, kind="essential", n_points=20)
    noisy = add_noise(c_px, 1.0, trial_stream(23, 1))
    opts = RansacOptions(iterations=15, threshold_px=2.0, seed=9)
    r1 = ransac_epipolar(noisy, "essential", opts, intrinsics=K)
    r2 = ransac_epipolar(noisy, "essential", opts, intrinsics=K)
    off = RansacOptions(iterations=15, threshold_px=2.0,
                        min_curve_distance_px=0.0, seed=9)
    r3 = ransac_epipolar(noisy, "essential", off, intrinsics=K)
    for other in (r2, r3):
        assert np.array_equal(r1.inlier_mask, other.inlier_mask)
        assert np.array_equal(r1.model.M, other.model.M)
        assert other.rejected_by_filter == 0


def test_ransac_input_validation():
    _, K, c_px = pixel_scene(seed=24, kind="essential", n_points=8)
    small = c_px.take(np.arange(4))
    with pytest.raises(InvalidInput):
        ransac_epipolar(small, "essential", RansacOptions(), intrinsics=K)
    with pytest.raises(InvalidInput):
        ransac_epipolar(c_px, "essential", RansacOptions())
    with pytest.raises(InvalidInput):
        ransac_epipolar(c_px, "homography", RansacOptions(), intrinsics=K)


def test_ransac_no_hypothesis_on_degenerate_data():
    x = np.tile([100.0, 120.0], (6, 1))
    xb = np.tile([210.0, 90.0], (6, 1))
    c = CorrespondenceSet(x, xb, unit="pixels")
    K = SceneConfig(kind="essential").intrinsics
    with pytest.raises(NoHypothesis):
        ransac_epipolar(c, "essential", RansacOptions(iterations=3, seed=1),
                        intrinsics=K)


def test_pose_from_model_recovers_truth():
    scene, K, c_px = pixel_scene(seed=25, kind="essential", n_points=10)
    E = essential_from_pose(scene.R, scene.t_hat)
    pose = pose_from_model(E, pixels_to_normalized(K, c_px))
    rot, trans = rotation_translation_error(pose, (scene.R, scene.t_hat))
    assert rot < 1e-8 and trans < 1e-8


# -------------------------------------------------------------- runners


def read_trials(path):
    lines = (path / "trials.csv").read_text().splitlines()
    header = lines[0].split(",")
    return header, lines[1:]


def test_instability_ratio_runner(tmp_path):
    cfg = SceneConfig(kind="essential")
    s = exp_instability_ratio(cfg, [0.0, 0.5], [0.5], trials=3, seed=1,
                              out_dir=tmp_path)
    header, rows = read_trials(tmp_path)
    assert header == ["trial", "sigma", "e", "count_clean", "count_noisy",
                      "count_changed", "error"]
    assert len(rows) == 6
    assert s["unstable_fraction"]["sigma=0.0,tau=0.5"] == 0.0
    assert s["erroneous_fraction"]["sigma=0.0,tau=0.5"] == 0.0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiment"] == "instability_ratio"
    assert summary["trials"] == 3


def test_instability_ratio_thread_invariance(tmp_path):
    cfg = SceneConfig(kind="fundamental")
    a, b = tmp_path / "a", tmp_path / "b"
    exp_instability_ratio(cfg, [0.3], [0.5], trials=4, seed=2, out_dir=a,
                          threads=1)
    exp_instability_ratio(cfg, [0.3], [0.5], trials=4, seed=2, out_dir=b,
                          threads=2)
    assert (a / "trials.csv").read_bytes() == (b / "trials.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()


def test_noise_sweep_runner(tmp_path):
    cfg = SceneConfig(kind="essential", n_points=15)
    opts = RansacOptions(iterations=10, threshold_px=2.0, seed=7)
    s = exp_noise_sweep(cfg, [0.0, 1.0], trials=2, opts=opts, seed=3,
                        out_dir=tmp_path)
    header, rows = read_trials(tmp_path)
    assert len(rows) == 4
    assert s["failed_rows"] == 0
    assert s["rejected_samples_total"] == 0
    assert s["per_sigma_median_rot_err_deg"]["0.0"] < 1e-6
    assert np.isfinite(s["median_rot_err_deg"])
    with pytest.raises(InvalidInput):
        exp_noise_sweep(SceneConfig(kind="fundamental"), [0.5], 1, opts)


def test_noise_sweep_reruns_byte_identical(tmp_path):
    cfg = SceneConfig(kind="essential", n_points=10)
    opts = RansacOptions(iterations=5, threshold_px=2.0, seed=11)
    a, b = tmp_path / "a", tmp_path / "b"
    exp_noise_sweep(cfg, [0.5], trials=3, opts=opts, seed=4, out_dir=a)
    exp_noise_sweep(cfg, [0.5], trials=3, opts=opts, seed=4, out_dir=b,
                    threads=2)
    assert (a / "trials.csv").read_bytes() == (b / "trials.csv").read_bytes()


def test_histogram_runner(tmp_path):
    cfg = SceneConfig(kind="essential")
    s = exp_histograms(cfg, sigma=0.3, tau=0.5, trials=3, seed=5,
                       out_dir=tmp_path, n_perturb=4, with_cond=False)
    header, rows = read_trials(tmp_path)
    assert len(rows) == 3
    assert "classification" in header
    total = sum(s["counts"].values())
    assert total == 3 - s["failed_rows"]
    assert s["experiment"] == "histograms"


def test_cond_correlation_runner(tmp_path):
    cfg = SceneConfig(kind="essential")
    s = exp_cond_correlation(cfg, trials=3, seed=6, out_dir=tmp_path,
                             sigma=0.1, n_perturb=2, well_posed_cond=1e12)
    assert s["well_posed_trials"] >= 3
    assert -1.0 <= s["spearman_pose"] <= 1.0
    assert (tmp_path / "trials.csv").exists()


def test_curve_robustness_runner(tmp_path):
    cfg = SceneConfig(kind="essential")
    s = exp_curve_robustness(cfg, sigma_perturb=0.1, trials=2, seed=7,
                             out_dir=tmp_path)
    header, rows = read_trials(tmp_path)
    assert len(rows) == 2
    assert len(s["histogram_counts"]) == 16
    assert sum(s["histogram_counts"]) == 2 - s["failed_rows"]
