"""World-scene charts, projection, epipolar machinery, and pose recovery.

Two-view scenes come in a calibrated chart (rotation + unit translation +
five world points) and a projective chart (a 7-parameter second camera with
unit-pivot normalization + seven world points). Both project through
pinhole division; the epipolar model of a scene is the 3x3 matrix whose
bilinear form annihilates all correspondences.
"""

import numpy as np

from .errors import (
    AtInfinity,
    ChartFailure,
    InvalidInput,
    NonFinite,
    NotEssential,
    NoValidPose,
    OnBaseline,
    SameCenter,
)

_DEPTH_TOL = 1e-12


def skew(v):
    """Cross-product matrix: skew(v) @ w = v x w."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def check_rotation(R, tol=1e-10):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidInput("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise InvalidInput("matrix is not a rotation (orthogonality/determinant check failed)")
    return R


def canonicalize_model(M):
    """Scale to unit Frobenius norm with the largest-|entry| positive.

    Idempotent bitwise: matrices already canonical pass through unchanged.
    """
    M = np.asarray(M, dtype=float)
    norm = np.linalg.norm(M)
    if norm == 0.0 or not np.isfinite(norm):
        raise InvalidInput("cannot canonicalize a zero or non-finite matrix")
    M = M.copy() if abs(norm - 1.0) <= 1e-14 else M / norm
    flat = M.ravel()
    if flat[np.argmax(np.abs(flat))] < 0:
        np.negative(M, out=M)
    return M


class EpipolarModel:
    """Canonicalized 3x3 epipolar matrix, either calibrated or projective kind."""

    __slots__ = ("kind", "M")

    def __init__(self, kind, M, tol_essential=1e-8, tol_rank=1e-10):
        if kind not in ("essential", "fundamental"):
            raise InvalidInput("kind must be 'essential' or 'fundamental'")
        M = canonicalize_model(M)
        s = np.linalg.svd(M, compute_uv=False)
        if kind == "essential":
            if s[0] - s[1] > tol_essential or s[2] > tol_essential:
                raise NotEssential(f"singular values {s} fail the equal-pair/zero test")
        else:
            if s[2] > tol_rank:
                raise InvalidInput(f"matrix is not rank 2 (sigma_3 = {s[2]:.3e})")
        self.kind = kind
        self.M = M

    def __repr__(self):
        return f"EpipolarModel({self.kind!r})"


class CalibratedScene:
    """Pose (R, unit t) plus world points, all finite-depth in both cameras."""

    __slots__ = ("R", "t_hat", "points")

    def __init__(self, R, t_hat, points):
        self.R = check_rotation(R)
        t = np.asarray(t_hat, dtype=float).ravel()
        if t.shape != (3,) or abs(np.linalg.norm(t) - 1.0) > 1e-8:
            raise InvalidInput("translation must be a unit 3-vector")
        self.t_hat = t / np.linalg.norm(t)
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
            raise InvalidInput("points must be a finite n x 3 array")
        z1 = pts[:, 2]
        z2 = (pts @ self.R.T + self.t_hat)[:, 2]
        if np.min(np.abs(z1)) <= _DEPTH_TOL or np.min(np.abs(z2)) <= _DEPTH_TOL:
            raise InvalidInput("a world point has (near-)zero depth in one of the cameras")
        self.points = pts.copy()


def camera_from_b(b, chart_id=6):
    """Second camera of the 7-parameter chart.

    chart_id = 3*r + c: the all-but-last-entry-zero row sits at row r and the
    unit pivot of the leading free row sits in column c. chart 6 (r=2, c=0)
    is the untransposed template.
    """
    b = np.asarray(b, dtype=float).ravel()
    if b.shape != (7,):
        raise InvalidInput("b must have 7 entries")
    r, c = divmod(int(chart_id), 3)
    if not (0 <= r <= 2 and 0 <= c <= 2):
        raise InvalidInput("chart_id must be in 0..8")
    M = np.array(
        [
            [1.0, b[0], b[1], b[2]],
            [b[3], b[4], b[5], b[6]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    M[[2, r]] = M[[r, 2]]
    M[:, [0, c]] = M[:, [c, 0]]
    return M


def _b_from_camera(M, chart_id):
    """Read chart parameters off a camera already in exact chart shape."""
    r, c = divmod(int(chart_id), 3)
    M0 = M.copy()
    M0[:, [0, c]] = M0[:, [c, 0]]
    M0[[2, r]] = M0[[r, 2]]
    return np.array([M0[0, 1], M0[0, 2], M0[0, 3], M0[1, 0], M0[1, 1], M0[1, 2], M0[1, 3]])


class ProjectiveScene:
    """Chart parameters b plus world points, finite-depth in both cameras."""

    __slots__ = ("b", "chart_id", "points")

    def __init__(self, b, chart_id, points):
        b = np.asarray(b, dtype=float).ravel()
        M = camera_from_b(b, chart_id)
        s = np.linalg.svd(M, compute_uv=False)
        if s[2] <= 1e-10 * s[0]:
            raise InvalidInput("second camera is rank-deficient")
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or not np.all(np.isfinite(pts)):
            raise InvalidInput("points must be a finite n x 3 array")
        z1 = pts[:, 2]
        z2 = pts @ M[2, :3] + M[2, 3]
        if np.min(np.abs(z1)) <= _DEPTH_TOL or np.min(np.abs(z2)) <= _DEPTH_TOL:
            raise InvalidInput("a world point has (near-)zero depth in one of the cameras")
        self.b = b.copy()
        self.chart_id = int(chart_id)
        self.points = pts.copy()


class CorrespondenceSet:
    """Paired image points (first image, second image) with a unit flag."""

    __slots__ = ("x", "xbar", "unit")

    def __init__(self, x, xbar, unit="normalized"):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        xbar = np.atleast_2d(np.asarray(xbar, dtype=float))
        if x.shape != xbar.shape or x.shape[1] != 2:
            raise InvalidInput("correspondences must be matching n x 2 arrays")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xbar))):
            raise NonFinite("correspondences must be finite")
        if unit not in ("normalized", "pixels"):
            raise InvalidInput("unit must be 'normalized' or 'pixels'")
        self.x = x.copy()
        self.xbar = xbar.copy()
        self.unit = unit

    def __len__(self):
        return self.x.shape[0]

    def take(self, indices):
        idx = np.asarray(indices, dtype=int)
        return CorrespondenceSet(self.x[idx], self.xbar[idx], self.unit)


class Intrinsics:
    """Pinhole intrinsics in pixels."""

    __slots__ = ("fx", "fy", "cx", "cy", "width", "height")

    def __init__(self, fx, fy, cx, cy, width, height):
        if fx <= 0 or fy <= 0:
            raise InvalidInput("focal lengths must be positive")
        self.fx, self.fy = float(fx), float(fy)
        self.cx, self.cy = float(cx), float(cy)
        self.width, self.height = int(width), int(height)

    @property
    def K(self):
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def _divide_by_depth(pts3, what):
    z = pts3[:, 2]
    if np.min(np.abs(z)) < _DEPTH_TOL:
        raise AtInfinity(f"{what}: a point projects to infinity (depth ~ 0)")
    return pts3[:, :2] / z[:, None]


def project_calibrated(s):
    """Pinhole projections of the 5 points in both cameras."""
    first = _divide_by_depth(s.points, "first camera")
    second = _divide_by_depth(s.points @ s.R.T + s.t_hat, "second camera")
    return CorrespondenceSet(first, second)


def project_projective(s):
    """Pinhole projections of the 7 points through (I 0) and the chart camera."""
    M = camera_from_b(s.b, s.chart_id)
    first = _divide_by_depth(s.points, "first camera")
    hom = np.hstack([s.points, np.ones((s.points.shape[0], 1))])
    second = _divide_by_depth(hom @ M.T, "second camera")
    return CorrespondenceSet(first, second)


def essential_from_pose(R, t_hat):
    """Calibrated epipolar model [t]x R of a pose."""
    R = check_rotation(R)
    t = np.asarray(t_hat, dtype=float).ravel()
    if abs(np.linalg.norm(t) - 1.0) > 1e-8:
        raise InvalidInput("translation must be a unit vector")
    return EpipolarModel("essential", skew(t) @ R)


def cofactor_fundamental(P, P_bar):
    """Raw (unnormalized) fundamental matrix of a camera pair.

    F[i, j] = (-1)^(i+j) det of P without row j stacked over P_bar without
    row i; entries are polynomial in the camera entries (no canonicalization),
    which downstream differentiation relies on.
    """
    P = np.asarray(P, dtype=float)
    Pb = np.asarray(P_bar, dtype=float)
    F = np.zeros((3, 3))
    rows = [0, 1, 2]
    for i in range(3):
        keep_i = [r for r in rows if r != i]
        for j in range(3):
            keep_j = [r for r in rows if r != j]
            stacked = np.vstack([P[keep_j], Pb[keep_i]])
            F[i, j] = (-1) ** (i + j) * np.linalg.det(stacked)
    return F


def fundamental_from_cameras(P, P_bar):
    """Projective epipolar model from a camera pair via 4x4 cofactors."""
    P = np.asarray(P, dtype=float)
    Pb = np.asarray(P_bar, dtype=float)
    if P.shape != (3, 4) or Pb.shape != (3, 4):
        raise InvalidInput("cameras must be 3x4")
    if np.linalg.matrix_rank(P) < 3 or np.linalg.matrix_rank(Pb) < 3:
        raise InvalidInput("cameras must have rank 3")
    F = cofactor_fundamental(P, Pb)
    scale = (np.linalg.norm(P) * np.linalg.norm(Pb)) ** 2
    if np.max(np.abs(F)) <= 1e-12 * scale:
        raise SameCenter("all stacked determinants vanish; cameras share a center")
    return EpipolarModel("fundamental", F)


def epipolar_matrix(c):
    """n x 9 matrix whose rows contract with vec(M) to the bilinear forms."""
    if len(c) < 1:
        raise InvalidInput("epipolar_matrix expects at least one correspondence")
    return epipolar_rows(c.x, c.xbar)


def epipolar_rows(x, xbar):
    """Stacked constraint rows for arbitrary point arrays (no arity check)."""
    x = np.atleast_2d(x)
    xbar = np.atleast_2d(xbar)
    ones = np.ones((x.shape[0], 1))
    xh = np.hstack([x, ones])
    xbh = np.hstack([xbar, ones])
    # row = kron((xbar;1), (x;1)) so that row . vec(M) = (xbar;1)^T M (x;1)
    return (xbh[:, :, None] * xh[:, None, :]).reshape(x.shape[0], 9)


def epipolar_residuals(M, c):
    """Bilinear epipolar residuals of every correspondence against M."""
    return epipolar_rows(c.x, c.xbar) @ np.asarray(M, dtype=float).ravel()


def pose_candidates_from_essential(E):
    """The four (R, +-t) factorizations of a calibrated epipolar model."""
    if getattr(E, "kind", None) != "essential":
        raise InvalidInput("expected an essential-kind model")
    M = E.M
    U, s, Vt = np.linalg.svd(M)
    if s[0] - s[1] > 1e-8 or s[2] > 1e-8:
        raise NotEssential(f"singular values {s} fail the equal-pair/zero test")
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    R1 = U @ W @ Vt
    R2 = U @ W.T @ Vt
    t = U[:, 2].copy()
    return [(R1, t), (R1, -t), (R2, t), (R2, -t)]


def _triangulate_dlt(P, Pb, g, gb):
    A = np.vstack(
        [
            g[0] * P[2] - P[0],
            g[1] * P[2] - P[1],
            gb[0] * Pb[2] - Pb[0],
            gb[1] * Pb[2] - Pb[1],
        ]
    )
    _, s, Vt = np.linalg.svd(A)
    if s[2] <= 1e-10 * max(s[0], 1e-300):
        raise OnBaseline("backprojection rays coincide; point undetermined up to the baseline")
    return Vt[3]


def triangulate(R, t_hat, g, g_bar):
    """World point whose two pinhole projections are (g, g_bar)."""
    P = np.hstack([np.eye(3), np.zeros((3, 1))])
    Pb = np.hstack([np.asarray(R, dtype=float), np.asarray(t_hat, dtype=float).reshape(3, 1)])
    X = _triangulate_dlt(P, Pb, np.asarray(g, dtype=float), np.asarray(g_bar, dtype=float))
    if abs(X[3]) <= 1e-12 * np.linalg.norm(X):
        raise AtInfinity("triangulated point lies at infinity")
    return X[:3] / X[3]


def cheirality_filter(candidates, c):
    """Keep pose candidates whose triangulated points have depth of one
    consistent sign in both cameras (the +- double-cover twin both survive)."""
    survivors = []
    for R, t in candidates:
        pts = []
        ok = True
        for i in range(len(c)):
            try:
                pts.append(triangulate(R, t, c.x[i], c.xbar[i]))
            except (OnBaseline, AtInfinity):
                ok = False
                break
        if not ok:
            continue
        pts = np.asarray(pts)
        z1 = pts[:, 2]
        z2 = (pts @ R.T + t)[:, 2]
        depths = np.concatenate([z1, z2])
        if np.min(np.abs(depths)) <= _DEPTH_TOL:
            continue
        if np.all(depths > 0) or np.all(depths < 0):
            survivors.append(CalibratedScene(R, t, pts))
    if not survivors:
        raise NoValidPose("no pose candidate has sign-consistent depths")
    return survivors


def pixels_to_normalized(K, c):
    """Undo the intrinsics: pixel coordinates to normalized image coordinates."""
    if c.unit != "pixels":
        raise InvalidInput("expected pixel-unit correspondences")
    f = np.array([K.fx, K.fy])
    pp = np.array([K.cx, K.cy])
    return CorrespondenceSet((c.x - pp) / f, (c.xbar - pp) / f, unit="normalized")


def normalized_to_pixels(K, c):
    """Apply the intrinsics: normalized image coordinates to pixels."""
    if c.unit != "normalized":
        raise InvalidInput("expected normalized-unit correspondences")
    f = np.array([K.fx, K.fy])
    pp = np.array([K.cx, K.cy])
    return CorrespondenceSet(c.x * f + pp, c.xbar * f + pp, unit="pixels")


def _chart_positions(r):
    """(pivot row, second free row) of the chart template after the row swap."""
    if r == 0:
        return 2, 1
    if r == 1:
        return 0, 2
    return 0, 1


def projective_scene_from_model(F, c, residual_tol=1e-6):
    """Lift a projective model + consistent correspondences to a world scene.

    The canonical camera pair ((I 0), ([e']x F | e')) is moved by a world
    transform into the chart shape; the chart is chosen by the largest
    smallest-pivot across the 9 row/column charts, falling back to the next
    chart when a triangulated point dehomogenizes badly.
    """
    if getattr(F, "kind", None) != "fundamental":
        raise InvalidInput("expected a fundamental-kind model")
    if len(c) != 7:
        raise InvalidInput("expected 7 correspondences")
    res = epipolar_residuals(F.M, c)
    scale = (1.0 + np.max(np.abs(c.x))) * (1.0 + np.max(np.abs(c.xbar)))
    if np.max(np.abs(res)) > residual_tol * scale:
        raise InvalidInput("correspondences violate the epipolar constraints of the model")
    M = F.M
    U, _, _ = np.linalg.svd(M)
    ep = U[:, 2]  # left epipole: ep^T M = 0
    B = skew(ep) @ M
    P = np.hstack([np.eye(3), np.zeros((3, 1))])
    Pb0 = np.hstack([B, ep[:, None]])
    # score all 9 charts by their smallest pivot
    scored = []
    for r in range(3):
        if abs(ep[r]) <= 1e-10 * np.max(np.abs(ep)):
            continue
        C = B - np.outer(ep, B[r] / ep[r])
        pr, _ = _chart_positions(r)
        for col in range(3):
            piv = abs(C[pr, col])
            score = min(abs(ep[r]) / np.max(np.abs(ep)), piv / max(np.max(np.abs(C)), 1e-300))
            scored.append((score, r, col, C))
    scored.sort(key=lambda t: -t[0])
    if not scored or scored[0][0] < 1e-10:
        raise ChartFailure("no chart yields a well-conditioned normalizing transform")
    last_err = None
    for score, r, col, C in scored:
        if score < 1e-10:
            break
        pr, _ = _chart_positions(r)
        s = C[pr, col]
        lam = s / ep[r]
        Pbar = np.hstack([C, (lam * ep)[:, None]]) / s
        # exact chart shape: zero the constrained row, pin the two unit pivots
        Pbar[r] = 0.0
        Pbar[r, 3] = 1.0
        Pbar[pr, col] = 1.0
        b = _b_from_camera(Pbar, 3 * r + col)
        u = -B[r] / ep[r]
        try:
            pts = []
            for i in range(7):
                X = _triangulate_dlt(P, Pb0, c.x[i], c.xbar[i])
                Xp = np.append(X[:3], (-u @ X[:3] + X[3]) / lam)
                if abs(Xp[3]) <= 1e-10 * np.linalg.norm(Xp):
                    raise ChartFailure("point at infinity in this chart")
                pts.append(Xp[:3] / Xp[3])
            return ProjectiveScene(b, 3 * r + col, np.asarray(pts))
        except (ChartFailure, InvalidInput, OnBaseline) as e:
            last_err = e
            continue
    raise ChartFailure(f"all charts failed ({last_err})")
