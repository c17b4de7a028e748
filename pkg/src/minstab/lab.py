"""Synthetic-scene experiment harness.

Scene sampling, pixel noise, instability classification, RANSAC (standard
and stability-filtered), and batch experiment runners that write tidy CSV
files plus JSON summaries. All randomness goes through counter-based
per-trial streams so results are reproducible across thread schedules.
"""

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import spearmanr

from .conditioning import cond_image, cond_world_5pt
from .errors import (
    AtInfinity,
    EmptyCandidates,
    EverywhereIllPosed,
    InvalidInput,
    MinstabError,
    NoHypothesis,
    NoValidPose,
    OnBaseline,
    SamplingExhausted,
)
from .illposed import distance_to_illposed
from .scene import (
    CalibratedScene,
    CorrespondenceSet,
    EpipolarModel,
    Intrinsics,
    check_rotation,
    essential_from_pose,
    normalized_to_pixels,
    pixels_to_normalized,
    pose_candidates_from_essential,
    project_calibrated,
    triangulate,
)
from .solvers import solve_5pt, solve_7pt

_MAX_POINT_REJECTIONS = 10_000


# ----------------------------------------------------------------- RNG


def trial_stream(seed, index):
    """Independent counter-based generator for one work item."""
    key = np.uint64(seed) ^ np.uint64(index)
    return np.random.Generator(np.random.Philox(key=key))


def gaussian(rng, shape=()):
    """Standard normals via Box-Muller on the generator's uniforms.

    Pinning the transform (rather than using the generator's native
    normal method) keeps byte streams stable across library versions.
    """
    n = int(np.prod(shape, dtype=int)) if shape != () else 1
    m = (n + 1) // 2
    u = rng.random(2 * m)
    r = np.sqrt(-2.0 * np.log1p(-u[:m]))
    a = (2.0 * np.pi) * u[m:]
    z = np.concatenate([r * np.cos(a), r * np.sin(a)])[:n]
    return z.reshape(shape) if shape != () else float(z[0])


# -------------------------------------------------------------- config


@dataclass(frozen=True)
class SceneConfig:
    """Geometry of the synthetic two-view generator."""

    kind: str = "essential"
    width: int = 640
    height: int = 480
    focal_mm: float = 32.0
    sensor_width_mm: float = 36.0
    depth_min: float = 1.0
    depth_max: float = 20.0
    translation_radius: float = 1.0
    n_points: int = 0

    def __post_init__(self):
        if self.kind not in ("essential", "fundamental"):
            raise InvalidInput("kind must be 'essential' or 'fundamental'")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInput("image size must be positive")
        if self.focal_mm <= 0 or self.sensor_width_mm <= 0:
            raise InvalidInput("focal length and sensor width must be positive")
        if not (0 < self.depth_min < self.depth_max):
            raise InvalidInput("depth range must be positive with min < max")
        if self.translation_radius <= 0:
            raise InvalidInput("translation radius must be positive")
        if self.n_points == 0:
            object.__setattr__(self, "n_points", 5 if self.kind == "essential" else 7)
        if self.n_points < (5 if self.kind == "essential" else 7):
            raise InvalidInput("point count below the minimal problem size")

    @property
    def intrinsics(self):
        f = self.width * self.focal_mm / self.sensor_width_mm
        return Intrinsics(f, f, self.width / 2.0, self.height / 2.0,
                          self.width, self.height)

    def minimal_size(self):
        return 5 if self.kind == "essential" else 7


@dataclass(frozen=True)
class RansacOptions:
    """Hypothesize-and-verify loop parameters (thresholds in pixels)."""

    iterations: int = 100
    threshold_px: float = 1.0
    min_curve_distance_px: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInput("iterations must be >= 1")
        if not (self.threshold_px > 0):
            raise InvalidInput("inlier threshold must be positive")
        if self.min_curve_distance_px < 0:
            raise InvalidInput("min_curve_distance_px must be >= 0")


@dataclass
class TrialRecord:
    """One classified instance of the repeat-perturbation experiment."""

    seed: int
    scene: CalibratedScene
    clean: CorrespondenceSet
    noisy: CorrespondenceSet
    solutions_clean: list
    solutions_noisy: list
    e: float
    count_clean: int
    count_noisy: int
    classification: str
    distance_to_curve: float
    cond: float

    def __post_init__(self):
        if self.classification not in ("stable", "unstable", "borderline"):
            raise InvalidInput("classification must be stable/unstable/borderline")


# ------------------------------------------------------------ sampling


def unit_sphere_sample(rng):
    """Uniform draw from the unit sphere (normalized Gaussian)."""
    while True:
        g = gaussian(rng, (3,))
        norm = np.linalg.norm(g)
        if norm > 1e-12:
            return g / norm


def _random_rotation(rng):
    A = gaussian(rng, (3, 3))
    Q, Rr = np.linalg.qr(A)
    d = np.sign(np.diag(Rr))
    d[d == 0] = 1.0
    Q = Q * d
    if np.linalg.det(Q) < 0:
        Q[:, 2] = -Q[:, 2]
    return Q


def sample_scene(cfg: SceneConfig, rng):
    """Random relative pose plus world points visible in both views.

    Rotation comes from the sign-fixed QR factor of an i.i.d. normal
    matrix, translation is uniform on the sphere of the configured
    radius, and points are drawn uniformly over first-image pixels and
    the depth range, rejecting any draw that lands behind either camera
    or outside the second image. When a pose leaves too little frustum
    overlap to place the points, the pose itself is redrawn; a global
    rejection budget bounds the whole search.
    """
    K = cfg.intrinsics
    fx, fy, cx, cy = K.fx, K.fy, K.cx, K.cy
    total_rejections = 0
    per_pose_budget = 50 + 20 * cfg.n_points
    while True:
        Q = _random_rotation(rng)
        t_dir = unit_sphere_sample(rng)
        T = cfg.translation_radius * t_dir
        pts = []
        fails = 0
        while len(pts) < cfg.n_points and fails < per_pose_budget:
            u = rng.random() * cfg.width
            v = rng.random() * cfg.height
            z = cfg.depth_min + rng.random() * (cfg.depth_max - cfg.depth_min)
            p = np.array([z * (u - cx) / fx, z * (v - cy) / fy, z])
            q = Q @ p + T
            ok = q[2] > 0
            if ok:
                u2 = fx * q[0] / q[2] + cx
                v2 = fy * q[1] / q[2] + cy
                ok = 0.0 <= u2 <= cfg.width and 0.0 <= v2 <= cfg.height
            if ok:
                pts.append(p)
            else:
                fails += 1
                total_rejections += 1
                if total_rejections >= _MAX_POINT_REJECTIONS:
                    raise SamplingExhausted(
                        f"gave up after {total_rejections} point rejections; "
                        "the two frusta barely overlap for this configuration")
        if len(pts) == cfg.n_points:
            break
    # Dividing the world through by the translation radius leaves every
    # projection unchanged and yields the unit-translation form the
    # calibrated scene type stores.
    pts = np.asarray(pts) / cfg.translation_radius
    return CalibratedScene(Q, t_dir, pts), K


def add_noise(c: CorrespondenceSet, sigma_px, rng):
    """Add i.i.d. isotropic Gaussian pixel noise to every image point."""
    if c.unit != "pixels":
        raise InvalidInput("noise is specified in pixels; convert first")
    sigma = float(sigma_px)
    if sigma < 0:
        raise InvalidInput("sigma must be >= 0")
    g = gaussian(rng, (len(c), 4))
    return CorrespondenceSet(c.x + sigma * g[:, :2], c.xbar + sigma * g[:, 2:],
                             unit="pixels")


# -------------------------------------------------------------- metrics


def _model_matrix(M):
    if isinstance(M, EpipolarModel):
        return M.M
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise InvalidInput("model must be a finite 3x3 matrix")
    return M


def e_metric(M_true, candidates):
    """Mean relative entrywise deviation to the nearest candidate model.

    Entries of the reference whose magnitude is below 1e-9 of its norm
    are excluded (the ratio is undefined on structural zeros); the
    statistic is minimized over candidates and over the global sign.
    """
    if candidates is None or len(candidates) == 0:
        raise EmptyCandidates("no candidate models to compare against")
    Mt = _model_matrix(M_true)
    mask = np.abs(Mt) >= 1e-9 * np.linalg.norm(Mt)
    ref = Mt[mask]
    best = np.inf
    for cand in candidates:
        Mc = _model_matrix(cand)[mask]
        for s in (1.0, -1.0):
            val = float(np.mean(np.abs(np.abs(s * Mc / ref) - 1.0)))
            if val < best:
                best = val
    return best


@dataclass(frozen=True)
class InstabilityFlags:
    erroneous: bool
    count_changed: bool
    e: float

    @property
    def unstable(self):
        return self.erroneous or self.count_changed


def classify_instability(clean, noisy, tau, reference=None):
    """Flags for the two instability criteria of one resolve.

    `erroneous`: the nearest noisy model deviates from the reference by
    e >= tau (reference defaults to the best-matched clean solution).
    `count_changed`: the number of real solutions differs.
    """
    clean_sols = list(clean.solutions)
    noisy_sols = list(noisy.solutions)
    if not clean_sols:
        raise EmptyCandidates("clean solve produced no real solutions")
    refs = [reference] if reference is not None else clean_sols
    if noisy_sols:
        e = min(e_metric(r, noisy_sols) for r in refs)
    else:
        e = np.inf
    return InstabilityFlags(bool(e >= tau),
                            len(clean_sols) != len(noisy_sols), float(e))


def rotation_translation_error(estimated, truth):
    """Angular pose errors in degrees.

    Rotation error is the angle of R_est^T R_true; translation error is
    the angle between the unit translations folded to [0, 90] degrees
    (the two-view problem only determines translation up to sign).
    """
    Re, te = estimated
    Rt, tt = truth
    Re = check_rotation(Re)
    Rt = check_rotation(Rt)
    te = np.asarray(te, dtype=float).ravel()
    tt = np.asarray(tt, dtype=float).ravel()
    for t in (te, tt):
        if t.shape != (3,) or abs(np.linalg.norm(t) - 1.0) > 1e-6:
            raise InvalidInput("translations must be unit 3-vectors")
    # atan2 keeps full precision near 0 and 180 degrees, where acos of a
    # clipped cosine loses half the significant digits
    D = Re.T @ Rt
    cr = (np.trace(D) - 1.0) / 2.0
    sr = 0.5 * math.hypot(D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1])
    rot = math.degrees(math.atan2(sr, cr))
    st = np.linalg.norm(np.cross(te, tt))
    ct = abs(float(te @ tt))
    trans = math.degrees(math.atan2(st, ct))
    return rot, trans


# --------------------------------------------------------------- RANSAC


def sampson_epipolar(M, c: CorrespondenceSet):
    """First-order epipolar distances of all correspondences to a model."""
    F = _model_matrix(M)
    ones = np.ones((len(c), 1))
    x1 = np.hstack([c.x, ones])
    x2 = np.hstack([c.xbar, ones])
    Fx = x1 @ F.T
    Ftx = x2 @ F
    num = np.abs(np.sum(x2 * Fx, axis=1))
    den = np.sqrt(Fx[:, 0] ** 2 + Fx[:, 1] ** 2 + Ftx[:, 0] ** 2 + Ftx[:, 1] ** 2)
    return num / np.maximum(den, 1e-300)


@dataclass
class RansacResult:
    model: EpipolarModel
    inlier_mask: np.ndarray
    iterations: int
    rejected_by_filter: int

    @property
    def n_inliers(self):
        return int(np.count_nonzero(self.inlier_mask))


def _f_from_e(E, K):
    Kinv = np.linalg.inv(K.K)
    return EpipolarModel("fundamental", Kinv.T @ E.M @ Kinv)


def ransac_epipolar(c: CorrespondenceSet, kind, opts: RansacOptions,
                    intrinsics: Intrinsics | None = None):
    """Pure hypothesize-and-verify loop over uniform minimal samples.

    Scoring counts correspondences whose first-order epipolar distance
    is at or below the threshold; no refit is performed. When
    min_curve_distance_px > 0, a sample whose last point lies closer
    than that to the degeneracy curve of its other points is rejected
    before solving. Calibrated estimation expects pixel data plus
    intrinsics; scoring then happens in pixels through the uncalibrated
    form of each candidate while the returned model stays calibrated.
    """
    if kind not in ("essential", "fundamental"):
        raise InvalidInput("kind must be 'essential' or 'fundamental'")
    m = 5 if kind == "essential" else 7
    n = len(c)
    if n < m:
        raise InvalidInput(f"need at least {m} correspondences, got {n}")
    if kind == "essential":
        if c.unit == "pixels" and intrinsics is None:
            raise InvalidInput("calibrated estimation from pixels needs intrinsics")
        px_scale = intrinsics.fx if intrinsics is not None else 1.0
    else:
        px_scale = 1.0

    rng = np.random.Generator(np.random.Philox(key=np.uint64(opts.seed)))
    best_count = -1
    best_mean = np.inf
    best = None
    rejected = 0
    for _ in range(opts.iterations):
        idx = rng.choice(n, size=m, replace=False)
        sample = c.take(np.sort(idx))
        if kind == "essential" and c.unit == "pixels":
            sample_solve = pixels_to_normalized(intrinsics, sample)
        else:
            sample_solve = sample
        if opts.min_curve_distance_px > 0:
            threshold = opts.min_curve_distance_px / px_scale
            try:
                d = distance_to_illposed(sample_solve, kind,
                                         max_radius=4.0 * threshold,
                                         window_columns=7, window_rows=11,
                                         stop_below=threshold)
            except (EverywhereIllPosed, MinstabError):
                d = 0.0
            if d < threshold:
                rejected += 1
                continue
        try:
            result = (solve_5pt if kind == "essential" else solve_7pt)(sample_solve)
        except MinstabError:
            continue
        for model in result.solutions:
            scoring = model
            if kind == "essential" and c.unit == "pixels":
                scoring = _f_from_e(model, intrinsics)
            dists = sampson_epipolar(scoring, c)
            mask = dists <= opts.threshold_px
            count = int(np.count_nonzero(mask))
            mean_inl = float(np.mean(dists[mask])) if count else np.inf
            if count > best_count or (count == best_count and mean_inl < best_mean):
                best_count, best_mean = count, mean_inl
                best = (model, mask)
    if best is None:
        raise NoHypothesis("every iteration was rejected or failed to solve")
    return RansacResult(best[0], best[1], opts.iterations, rejected)


def pose_from_model(model, c_solve):
    """Physical (R, t) of a calibrated model: the candidate placing the
    most points at positive depth in both cameras (majority cheirality,
    so a few noise-flipped triangulations cannot void the pose)."""
    best_votes = 0
    best = None
    for R, t in pose_candidates_from_essential(model):
        votes = 0
        for i in range(len(c_solve)):
            try:
                p = triangulate(R, t, c_solve.x[i], c_solve.xbar[i])
            except (OnBaseline, AtInfinity):
                continue
            if p[2] > 0 and (R @ p + t)[2] > 0:
                votes += 1
        if votes > best_votes:
            best_votes = votes
            best = (R, t)
    if best is None:
        raise NoValidPose("no candidate places any point in front of both cameras")
    return best


# ------------------------------------------------ experiment plumbing


def _run_indexed(n, worker, threads):
    """worker(index) for all indices, results ordered by index."""
    if threads <= 1:
        return [worker(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n)))


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_outputs(out_dir, columns, rows, summary):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row[k]) for k in columns])
    text = buf.getvalue()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "trials.csv"), "w", newline="") as f:
            f.write(text)
        with open(os.path.join(out_dir, "summary.json"), "w") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
            f.write("\n")
    return text


def _gt_models(scene, K):
    E = essential_from_pose(scene.R, scene.t_hat)
    return E, _f_from_e(E, K)


def _solve_minimal(c_px, kind, K):
    if kind == "essential":
        return solve_5pt(pixels_to_normalized(K, c_px))
    return solve_7pt(c_px)


def _reference_model(kind, E, F):
    return E if kind == "essential" else F


def _curve_distance_px(c_px, kind, K, max_radius_px=300.0):
    """Distance from the last second-image point to the degeneracy curve,
    in pixels, capped at max_radius_px."""
    if kind == "fundamental":
        return distance_to_illposed(c_px, "fundamental")
    cn = pixels_to_normalized(K, c_px)
    return K.fx * distance_to_illposed(cn, "essential",
                                       max_radius=max_radius_px / K.fx)


def classify_counts(n_err, n):
    if 3 * n_err <= n:
        return "stable"
    if 3 * n_err >= 2 * n:
        return "unstable"
    return "borderline"


# ------------------------------------------------------------- runners


def exp_instability_ratio(cfg: SceneConfig, sigma_grid, tau_grid, trials,
                          seed=0, out_dir=None, threads=1):
    """Fraction of unstable resolves per (noise level, error threshold)."""
    sigmas = [float(s) for s in sigma_grid]
    taus = [float(t) for t in tau_grid]
    if not sigmas or not taus or trials < 1:
        raise InvalidInput("need nonempty grids and at least one trial")

    def worker(i):
        rng = trial_stream(seed, i)
        out = []
        try:
            scene, K = sample_scene(cfg, rng)
            clean_px = normalized_to_pixels(K, project_calibrated(scene))
            E, F = _gt_models(scene, K)
            ref = _reference_model(cfg.kind, E, F)
            clean = _solve_minimal(clean_px, cfg.kind, K)
            if not clean.solutions:
                raise EmptyCandidates("clean solve produced no real solutions")
        except MinstabError as exc:
            return [dict(trial=i, sigma=s, e=np.nan, count_clean=-1,
                         count_noisy=-1, count_changed=False,
                         error=type(exc).__name__) for s in sigmas]
        for s in sigmas:
            noisy_px = add_noise(clean_px, s, rng)
            try:
                noisy = _solve_minimal(noisy_px, cfg.kind, K)
                flags = classify_instability(clean, noisy, np.inf, reference=ref)
                out.append(dict(trial=i, sigma=s, e=flags.e,
                                count_clean=len(clean.solutions),
                                count_noisy=len(noisy.solutions),
                                count_changed=flags.count_changed, error=""))
            except MinstabError as exc:
                out.append(dict(trial=i, sigma=s, e=np.nan, count_clean=len(clean.solutions),
                                count_noisy=-1, count_changed=True,
                                error=type(exc).__name__))
        return out

    rows = [r for chunk in _run_indexed(trials, worker, threads) for r in chunk]
    # rows with count_clean == -1 never produced a clean baseline and are
    # excluded; a failed noisy solve counts as unstable via count_changed
    frac = {}
    frac_err_only = {}
    for s in sigmas:
        sub = [r for r in rows if r["sigma"] == s and r["count_clean"] > 0]
        for t in taus:
            unstable = [(r["e"] >= t) or r["count_changed"] for r in sub]
            err_only = [r["e"] >= t for r in sub]
            frac[f"sigma={s!r},tau={t!r}"] = float(np.mean(unstable)) if sub else np.nan
            frac_err_only[f"sigma={s!r},tau={t!r}"] = float(np.mean(err_only)) if sub else np.nan
    summary = {
        "experiment": "instability_ratio", "kind": cfg.kind, "trials": trials,
        "seed": seed, "sigma_grid": sigmas, "tau_grid": taus,
        "unstable_fraction": frac, "erroneous_fraction": frac_err_only,
        "failed_rows": int(sum(1 for r in rows if r["error"])),
    }
    columns = ["trial", "sigma", "e", "count_clean", "count_noisy",
               "count_changed", "error"]
    _write_outputs(out_dir, columns, rows, summary)
    return summary


def exp_noise_sweep(cfg: SceneConfig, sigma_grid, trials, opts: RansacOptions,
                    seed=0, out_dir=None, threads=1):
    """RANSAC pose errors across noise levels for one point count."""
    if cfg.kind != "essential":
        raise InvalidInput("the pose-error sweep is a calibrated experiment")
    sigmas = [float(s) for s in sigma_grid]
    if not sigmas or trials < 1:
        raise InvalidInput("need a nonempty sigma grid and at least one trial")
    jobs = [(s, t) for s in sigmas for t in range(trials)]

    def worker(j):
        s, t = jobs[j]
        rng = trial_stream(seed, j)
        row = dict(trial=t, sigma=s, rot_err_deg=np.nan, trans_err_deg=np.nan,
                   inliers=-1, rejected=-1, error="")
        try:
            scene, K = sample_scene(cfg, rng)
            clean_px = normalized_to_pixels(K, project_calibrated(scene))
            noisy_px = add_noise(clean_px, s, rng)
            run_opts = RansacOptions(opts.iterations, opts.threshold_px,
                                     opts.min_curve_distance_px,
                                     seed=int(np.uint64(opts.seed) ^ np.uint64(j)))
            res = ransac_epipolar(noisy_px, "essential", run_opts, intrinsics=K)
            pose = pose_from_model(res.model, pixels_to_normalized(K, noisy_px))
            rot, trans = rotation_translation_error(pose, (scene.R, scene.t_hat))
            row.update(rot_err_deg=rot, trans_err_deg=trans,
                       inliers=res.n_inliers, rejected=res.rejected_by_filter)
        except MinstabError as exc:
            row["error"] = type(exc).__name__
        return row

    rows = _run_indexed(len(jobs), worker, threads)
    ok = [r for r in rows if not r["error"]]
    med = lambda key, sub: float(np.median([r[key] for r in sub])) if sub else np.nan
    summary = {
        "experiment": "noise_sweep", "kind": cfg.kind, "n_points": cfg.n_points,
        "trials_per_sigma": trials, "seed": seed, "sigma_grid": sigmas,
        "ransac": {"iterations": opts.iterations, "threshold_px": opts.threshold_px,
                   "min_curve_distance_px": opts.min_curve_distance_px},
        "median_rot_err_deg": med("rot_err_deg", ok),
        "median_trans_err_deg": med("trans_err_deg", ok),
        "per_sigma_median_rot_err_deg": {
            repr(s): med("rot_err_deg", [r for r in ok if r["sigma"] == s]) for s in sigmas},
        "per_sigma_median_trans_err_deg": {
            repr(s): med("trans_err_deg", [r for r in ok if r["sigma"] == s]) for s in sigmas},
        "rejected_samples_total": int(sum(max(r["rejected"], 0) for r in rows)),
        "failed_rows": int(len(rows) - len(ok)),
    }
    columns = ["trial", "sigma", "rot_err_deg", "trans_err_deg", "inliers",
               "rejected", "error"]
    _write_outputs(out_dir, columns, rows, summary)
    return summary


def exp_histograms(cfg: SceneConfig, sigma, tau, trials, seed=0, out_dir=None,
                   n_perturb=20, threads=1, with_cond=True):
    """Stable/unstable/borderline classification vs distance to the curve."""
    sigma = float(sigma)
    tau = float(tau)
    if trials < 1 or n_perturb < 1:
        raise InvalidInput("need at least one trial and one perturbation")

    def worker(i):
        rng = trial_stream(seed, i)
        row = dict(trial=i, sigma=sigma, tau=tau, n_perturb=n_perturb,
                   n_erroneous=-1, n_count_changed=-1, count_clean=-1,
                   classification="", distance_px=np.nan, cond=np.nan, error="")
        try:
            scene, K = sample_scene(cfg, rng)
            clean_px = normalized_to_pixels(K, project_calibrated(scene))
            E, F = _gt_models(scene, K)
            ref = _reference_model(cfg.kind, E, F)
            clean = _solve_minimal(clean_px, cfg.kind, K)
            if not clean.solutions:
                raise EmptyCandidates("clean solve produced no real solutions")
            n_err = 0
            n_cc = 0
            for _ in range(n_perturb):
                noisy_px = add_noise(clean_px, sigma, rng)
                try:
                    noisy = _solve_minimal(noisy_px, cfg.kind, K)
                    flags = classify_instability(clean, noisy, tau, reference=ref)
                    n_err += flags.erroneous
                    n_cc += flags.count_changed
                except MinstabError:
                    n_err += 1
                    n_cc += 1
            row.update(n_erroneous=n_err, n_count_changed=n_cc,
                       count_clean=len(clean.solutions),
                       classification=classify_counts(n_err, n_perturb))
            try:
                row["distance_px"] = _curve_distance_px(clean_px, cfg.kind, K)
            except MinstabError:
                row["distance_px"] = np.nan
            if with_cond:
                try:
                    solve_unit = (pixels_to_normalized(K, clean_px)
                                  if cfg.kind == "essential" else clean_px)
                    row["cond"] = cond_image(solve_unit, cfg.kind).value
                except MinstabError:
                    row["cond"] = np.nan
        except MinstabError as exc:
            row["error"] = type(exc).__name__
        return row

    rows = _run_indexed(trials, worker, threads)
    ok = [r for r in rows if not r["error"] and np.isfinite(r["distance_px"])]
    by = {c: [r["distance_px"] for r in ok if r["classification"] == c]
          for c in ("stable", "unstable", "borderline")}
    dists = [r["distance_px"] for r in ok]
    cc = [r["distance_px"] for r in ok if r["n_count_changed"] > 0]
    summary = {
        "experiment": "histograms", "kind": cfg.kind, "trials": trials,
        "seed": seed, "sigma": sigma, "tau": tau, "n_perturb": n_perturb,
        "counts": {c: len(v) for c, v in by.items()},
        "mean_distance_px": {c: (float(np.mean(v)) if v else np.nan)
                             for c, v in by.items()},
        "median_distance_px": {c: (float(np.median(v)) if v else np.nan)
                               for c, v in by.items()},
        "median_distance_count_changed_px": float(np.median(cc)) if cc else np.nan,
        "median_distance_all_px": float(np.median(dists)) if dists else np.nan,
        "failed_rows": int(len(rows) - len(ok)),
    }
    columns = ["trial", "sigma", "tau", "n_perturb", "n_erroneous",
               "n_count_changed", "count_clean", "classification",
               "distance_px", "cond", "error"]
    _write_outputs(out_dir, columns, rows, summary)
    return summary


def exp_cond_correlation(cfg: SceneConfig, trials, seed=0, out_dir=None,
                         sigma=0.1, n_perturb=10, threads=1,
                         well_posed_cond=1e3, max_attempts=None):
    """Rank correlation between world conditioning and worst resolve error."""
    if cfg.kind != "essential":
        raise InvalidInput("the conditioning correlation runs on the calibrated kind")
    sigma = float(sigma)
    if trials < 1 or n_perturb < 1:
        raise InvalidInput("need at least one trial and one perturbation")
    if max_attempts is None:
        max_attempts = 4 * trials

    def worker(i):
        rng = trial_stream(seed, i)
        row = dict(trial=i, cond=np.nan, max_rot_err_deg=np.nan,
                   max_trans_err_deg=np.nan, max_e=np.nan, well_posed=False,
                   error="")
        try:
            scene, K = sample_scene(cfg, rng)
            clean_px = normalized_to_pixels(K, project_calibrated(scene))
            cond = cond_world_5pt(scene).value
            row.update(cond=cond, well_posed=bool(cond <= well_posed_cond))
            E, _ = _gt_models(scene, K)
            max_rot = max_trans = max_e = 0.0
            for _ in range(n_perturb):
                noisy_px = add_noise(clean_px, sigma, rng)
                noisy_n = pixels_to_normalized(K, noisy_px)
                try:
                    sols = solve_5pt(noisy_n).solutions
                    if not sols:
                        raise EmptyCandidates("no real solutions")
                    nearest = min(sols, key=lambda M: e_metric(E, [M]))
                    pose = pose_from_model(nearest, noisy_n)
                    rot, trans = rotation_translation_error(pose, (scene.R, scene.t_hat))
                    max_e = max(max_e, e_metric(E, sols))
                except MinstabError:
                    rot = trans = 180.0
                    max_e = np.inf
                max_rot = max(max_rot, rot)
                max_trans = max(max_trans, trans)
            row.update(max_rot_err_deg=max_rot, max_trans_err_deg=max_trans,
                       max_e=max_e)
        except MinstabError as exc:
            row["error"] = type(exc).__name__
        return row

    rows = []
    start = 0
    while True:
        kept = sum(1 for r in rows if r["well_posed"] and not r["error"])
        remaining = min(trials - kept, max_attempts - start)
        if remaining <= 0:
            break
        rows.extend(_run_indexed(remaining, lambda k, base=start: worker(base + k),
                                 threads))
        start += remaining

    ok = [r for r in rows if r["well_posed"] and not r["error"]
          and np.isfinite(r["max_rot_err_deg"])]
    summary = {
        "experiment": "cond_correlation", "kind": cfg.kind, "seed": seed,
        "sigma": sigma, "n_perturb": n_perturb, "attempts": len(rows),
        "well_posed_trials": len(ok), "well_posed_cond": well_posed_cond,
        "spearman_rot": np.nan, "spearman_trans": np.nan, "spearman_pose": np.nan,
    }
    if len(ok) >= 3:
        conds = [r["cond"] for r in ok]
        rot = [r["max_rot_err_deg"] for r in ok]
        trans = [r["max_trans_err_deg"] for r in ok]
        pose = [max(a, b) for a, b in zip(rot, trans)]
        summary["spearman_rot"] = float(spearmanr(conds, rot).statistic)
        summary["spearman_trans"] = float(spearmanr(conds, trans).statistic)
        summary["spearman_pose"] = float(spearmanr(conds, pose).statistic)
    columns = ["trial", "cond", "max_rot_err_deg", "max_trans_err_deg",
               "max_e", "well_posed", "error"]
    _write_outputs(out_dir, columns, rows, summary)
    return summary


def exp_curve_robustness(cfg: SceneConfig, sigma_perturb, trials, seed=0,
                         out_dir=None, threads=1):
    """Stability of the curve distance under noise on the other points."""
    sigma = float(sigma_perturb)
    if trials < 1:
        raise InvalidInput("need at least one trial")

    def worker(i):
        rng = trial_stream(seed, i)
        row = dict(trial=i, sigma=sigma, distance_px=np.nan,
                   distance_perturbed_px=np.nan, log10_ratio=np.nan, error="")
        try:
            scene, K = sample_scene(cfg, rng)
            clean_px = normalized_to_pixels(K, project_calibrated(scene))
            d0 = _curve_distance_px(clean_px, cfg.kind, K)
            noisy_px = add_noise(clean_px, sigma, rng)
            # the target correspondence stays clean; only the fixed
            # points defining the curve move
            x = noisy_px.x.copy()
            xb = noisy_px.xbar.copy()
            x[-1] = clean_px.x[-1]
            xb[-1] = clean_px.xbar[-1]
            moved = CorrespondenceSet(x, xb, unit="pixels")
            d1 = _curve_distance_px(moved, cfg.kind, K)
            ratio = np.nan
            if d0 > 0 and d1 > 0:
                ratio = float(np.log10(d1 / d0))
            row.update(distance_px=d0, distance_perturbed_px=d1,
                       log10_ratio=ratio)
        except MinstabError as exc:
            row["error"] = type(exc).__name__
        return row

    rows = _run_indexed(trials, worker, threads)
    ok = [r for r in rows if not r["error"] and np.isfinite(r["log10_ratio"])]
    ratios = np.array([r["log10_ratio"] for r in ok], dtype=float)
    edges = np.linspace(-2.0, 2.0, 17)
    hist = (np.histogram(ratios, bins=edges)[0].tolist() if ratios.size else
            [0] * (len(edges) - 1))
    summary = {
        "experiment": "curve_robustness", "kind": cfg.kind, "trials": trials,
        "seed": seed, "sigma_perturb": sigma,
        "median_abs_log10_ratio": (float(np.median(np.abs(ratios)))
                                   if ratios.size else np.nan),
        "histogram_edges": edges.tolist(), "histogram_counts": hist,
        "failed_rows": int(len(rows) - len(ok)),
    }
    columns = ["trial", "sigma", "distance_px", "distance_perturbed_px",
               "log10_ratio", "error"]
    _write_outputs(out_dir, columns, rows, summary)
    return summary
