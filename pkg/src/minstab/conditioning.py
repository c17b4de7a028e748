"""Exact condition numbers of minimal two-view problems.

The world-to-image map factors as a chart embedding followed by pinhole
projection; its square Jacobian, a Gram matrix on the model tangent space,
and a selector of the pose coordinates combine into the condition number
sigma_max(G^(1/2) . S . DPhi^(-1)). Rank deficiency of DPhi is reported as
an infinite value, never an exception.
"""

import numpy as np

from .errors import (
    AtInfinity,
    ChartFailure,
    InvalidInput,
    NoValidPose,
    OnBaseline,
    SameCenter,
)
from .numerics import spd_sqrt
from .scene import (
    camera_from_b,
    cheirality_filter,
    cofactor_fundamental,
    pose_candidates_from_essential,
    projective_scene_from_model,
    skew,
)

_SING_TOL = 1e-12
_DEPTH_TOL = 1e-12


class ConditionReport:
    """Condition value (possibly +inf), the smallest singular value of the
    world-to-image Jacobian behind it, and per-solution detail for image
    queries."""

    __slots__ = ("value", "sigma_min_dphi", "per_solution")

    def __init__(self, value, sigma_min_dphi, per_solution=None):
        self.value = float(value)
        self.sigma_min_dphi = float(sigma_min_dphi)
        self.per_solution = per_solution

    def __repr__(self):
        return f"ConditionReport(value={self.value:.6g}, sigma_min={self.sigma_min_dphi:.3g})"


class SolutionCondition:
    """One minimal-solver solution with its lifted world scenes and their
    worst condition number (None with an error note when lifting failed)."""

    __slots__ = ("model", "scenes", "cond", "sigma_min_dphi", "error")

    def __init__(self, model, scenes, cond, sigma_min_dphi, error=None):
        self.model = model
        self.scenes = scenes
        self.cond = cond
        self.sigma_min_dphi = sigma_min_dphi
        self.error = error


def dpi(v):
    """Jacobian of the pinhole division at a 3-point (2x3)."""
    x, y, z = v
    return np.array([[1.0 / z, 0.0, -x / z**2], [0.0, 1.0 / z, -y / z**2]])


def unit_completion(t):
    """Deterministic orthonormal completion (p1, p2) of a unit vector.

    Householder-style: reflect the standard axis with the smallest |t|
    component against t, then close the frame with a cross product.
    """
    t = np.asarray(t, dtype=float)
    k = int(np.argmin(np.abs(t)))
    v = -t[k] * t
    v[k] += 1.0
    p1 = v / np.linalg.norm(v)
    p2 = np.cross(t, p1)
    return p1, p2


# ------------------------------------------------------------- Jacobians


def _depths_calibrated(s):
    z1 = s.points[:, 2]
    z2 = (s.points @ s.R.T + s.t_hat)[:, 2]
    if np.min(np.abs(z1)) <= _DEPTH_TOL or np.min(np.abs(z2)) <= _DEPTH_TOL:
        raise AtInfinity("a scene point projects to infinity")
    return z1, z2


def dphi1_5pt(s):
    """30x20 Jacobian of the chart embedding: world coordinates (15 point,
    3 rotation, 2 translation) to the stacked pre-projection 3-vectors."""
    D = np.zeros((30, 20))
    D[:15, :15] = np.eye(15)
    p1, p2 = unit_completion(s.t_hat)
    eye3 = np.eye(3)
    for i in range(5):
        r = 15 + 3 * i
        D[r : r + 3, 3 * i : 3 * i + 3] = s.R
        RG = s.R @ s.points[i]
        for j in range(3):
            D[r : r + 3, 15 + j] = np.cross(eye3[j], RG)
        D[r : r + 3, 18] = p1
        D[r : r + 3, 19] = p2
    return D


def dphi_5pt(s):
    """20x20 Jacobian of the calibrated world-to-image map."""
    _depths_calibrated(s)
    D1 = dphi1_5pt(s)
    D2 = np.zeros((20, 30))
    second = s.points @ s.R.T + s.t_hat
    for i in range(5):
        D2[4 * i : 4 * i + 2, 3 * i : 3 * i + 3] = dpi(s.points[i])
        D2[4 * i + 2 : 4 * i + 4, 15 + 3 * i : 18 + 3 * i] = dpi(second[i])
    return D2 @ D1


def dphi1_7pt(s):
    """42x28 Jacobian of the projective chart embedding: world coordinates
    (21 point, 7 camera) to the stacked pre-projection 3-vectors."""
    M = camera_from_b(s.b, s.chart_id)
    M0 = camera_from_b(np.zeros(7), s.chart_id)
    dM = [camera_from_b(e, s.chart_id) - M0 for e in np.eye(7)]
    D = np.zeros((42, 28))
    D[:21, :21] = np.eye(21)
    for i in range(7):
        r = 21 + 3 * i
        hom = np.append(s.points[i], 1.0)
        D[r : r + 3, 3 * i : 3 * i + 3] = M[:, :3]
        for j in range(7):
            D[r : r + 3, 21 + j] = dM[j] @ hom
    return D


def dphi_7pt(s):
    """28x28 Jacobian of the projective world-to-image map."""
    M = camera_from_b(s.b, s.chart_id)
    hom = np.hstack([s.points, np.ones((7, 1))])
    second = hom @ M.T
    z1 = s.points[:, 2]
    z2 = second[:, 2]
    if np.min(np.abs(z1)) <= _DEPTH_TOL or np.min(np.abs(z2)) <= _DEPTH_TOL:
        raise AtInfinity("a scene point projects to infinity")
    D1 = dphi1_7pt(s)
    D2 = np.zeros((28, 42))
    for i in range(7):
        D2[4 * i : 4 * i + 2, 3 * i : 3 * i + 3] = dpi(s.points[i])
        D2[4 * i + 2 : 4 * i + 4, 21 + 3 * i : 24 + 3 * i] = dpi(second[i])
    return D2 @ D1


# ------------------------------------------------------------------ Grams


def gram_5pt(R, t_hat):
    """Gram matrix (5x5) of the essential-model tangent basis
    [t]x[e_i]xR (3 rotations) and [p_j]xR (2 translations)."""
    t = np.asarray(t_hat, dtype=float)
    G = np.zeros((5, 5))
    G[:3, :3] = np.eye(3) + np.outer(t, t)
    G[3:, 3:] = 2.0 * np.eye(2)
    p1, p2 = unit_completion(t)
    for j, p in enumerate((p1, p2)):
        cross = np.cross(p, t)
        G[:3, 3 + j] = cross
        G[3 + j, :3] = cross
    return G


def _closed_form_f_jacobian(b):
    b1, b2, b3, b4, b5, b6, b7 = b
    f = np.array(
        [b4, b5, b6, -1.0, -b1, -b2, -b3 * b4 + b7, -b3 * b5 + b1 * b7, -b3 * b6 + b2 * b7]
    )
    J = np.zeros((9, 7))
    J[0, 3] = 1.0
    J[1, 4] = 1.0
    J[2, 5] = 1.0
    J[4, 0] = -1.0
    J[5, 1] = -1.0
    J[6] = [0.0, 0.0, -b4, -b3, 0.0, 0.0, 1.0]
    J[7] = [b7, 0.0, -b5, 0.0, -b3, 0.0, b1]
    J[8] = [0.0, b7, -b6, 0.0, 0.0, -b3, b2]
    return f, J


def _cofactor_f_jacobian(b, chart_id):
    P = np.hstack([np.eye(3), np.zeros((3, 1))])

    def f_of(bv):
        return cofactor_fundamental(P, camera_from_b(bv, chart_id)).ravel()

    f = f_of(b)
    J = np.zeros((9, 7))
    h = 0.5  # entries are quadratic in b: central differences are exact
    for j in range(7):
        e = np.zeros(7)
        e[j] = h
        J[:, j] = (f_of(b + e) - f_of(b - e)) / (2.0 * h)
    return f, J


def gram_7pt(b, chart_id=6, closed_form=True):
    """Gram matrix (7x7) of the fundamental-model tangent directions in the
    projective quotient metric: J^T J / |f|^2 - (J^T f)(J^T f)^T / |f|^4."""
    b = np.asarray(b, dtype=float).ravel()
    if b.shape != (7,):
        raise InvalidInput("b must have 7 entries")
    if chart_id == 6 and closed_form:
        f, J = _closed_form_f_jacobian(b)
    else:
        f, J = _cofactor_f_jacobian(b, chart_id)
    nf2 = f @ f
    if nf2 <= 0.0 or not np.isfinite(nf2):
        raise InvalidInput("camera pair maps to the zero matrix; no model defined")
    g = J.T @ f
    return J.T @ J / nf2 - np.outer(g, g) / nf2**2


# ----------------------------------------------------------- cond (world)


def _cond_from_dphi(dphi, G_half, n_pose):
    sv = np.linalg.svd(dphi, compute_uv=False)
    smax, smin = sv[0], sv[-1]
    if smin <= _SING_TOL * smax:
        return np.inf, smin
    m = dphi.shape[0]
    St = np.zeros((m, n_pose))
    St[m - n_pose :, :] = np.eye(n_pose)
    pose_rows = np.linalg.solve(dphi.T, St).T  # = S . DPhi^{-1}
    value = np.linalg.svd(G_half @ pose_rows, compute_uv=False)[0]
    return value, smin


def cond_world_5pt(s):
    """Condition number of a calibrated world scene."""
    G_half = spd_sqrt(gram_5pt(s.R, s.t_hat))
    value, smin = _cond_from_dphi(dphi_5pt(s), G_half, 5)
    return ConditionReport(value, smin)


def cond_world_7pt(s):
    """Condition number of a projective world scene."""
    G_half = spd_sqrt(gram_7pt(s.b, s.chart_id))
    value, smin = _cond_from_dphi(dphi_7pt(s), G_half, 7)
    return ConditionReport(value, smin)


# ----------------------------------------------------------- cond (image)


def _lift_essential(model, c):
    candidates = pose_candidates_from_essential(model)
    return cheirality_filter(candidates, c)


def cond_image(c, kind):
    """Worst-case condition over every world scene solving the minimal
    problem on the given image data."""
    if kind == "essential":
        from .solvers import solve_5pt

        result = solve_5pt(c)
    elif kind == "fundamental":
        from .solvers import solve_7pt

        result = solve_7pt(c)
    else:
        raise InvalidInput("kind must be 'essential' or 'fundamental'")

    per_solution = []
    last_error = None
    for model in result.solutions:
        try:
            if kind == "essential":
                scenes = _lift_essential(model, c)
                reports = [cond_world_5pt(sc) for sc in scenes]
            else:
                scenes = [projective_scene_from_model(model, c)]
                reports = [cond_world_7pt(sc) for sc in scenes]
        except (NoValidPose, ChartFailure, OnBaseline, AtInfinity, SameCenter, InvalidInput) as e:
            per_solution.append(SolutionCondition(model, [], None, np.nan, error=str(e)))
            last_error = e
            continue
        k = int(np.argmax([r.value for r in reports]))
        per_solution.append(
            SolutionCondition(model, scenes, reports[k].value, reports[k].sigma_min_dphi)
        )
    scored = [p for p in per_solution if p.cond is not None]
    if not scored:
        if last_error is not None:
            raise last_error
        raise NoValidPose("no solution could be lifted to a world scene")
    best = max(scored, key=lambda p: p.cond)
    return ConditionReport(best.cond, best.sigma_min_dphi, per_solution)
