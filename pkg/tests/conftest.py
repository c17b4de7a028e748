"""Shared fixtures: deterministic random scene factories."""

import numpy as np
import pytest


def random_rotation(rng):
    A = rng.normal(size=(3, 3))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 2] = -Q[:, 2]
    return Q


def random_unit(rng, n=3):
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def make_calibrated_scene(rng, n_points=5):
    """Random pose with points visible (positive depth) in both cameras."""
    from minstab.scene import CalibratedScene

    while True:
        R = random_rotation(rng)
        t = random_unit(rng)
        pts = []
        tries = 0
        while len(pts) < n_points and tries < 500:
            tries += 1
            xy = rng.uniform(-0.4, 0.4, size=2)
            z = rng.uniform(2.0, 20.0)
            p = np.array([xy[0] * z, xy[1] * z, z])
            z2 = (R @ p + t)[2]
            if z2 > 0.1:
                pts.append(p)
        if len(pts) == n_points:
            return CalibratedScene(R, t, np.array(pts))


def make_projective_scene(rng, n_points=7):
    """Random plane-parameterized camera pair with finite projections."""
    from minstab.scene import ProjectiveScene, camera_from_b

    while True:
        b = rng.normal(size=7)
        M = camera_from_b(b)
        pts = []
        tries = 0
        while len(pts) < n_points and tries < 500:
            tries += 1
            p = rng.uniform(-3, 3, size=3) + np.array([0, 0, 4.0])
            ph = np.append(p, 1.0)
            if abs(p[2]) > 0.3 and abs((M @ ph)[2]) > 0.3:
                pts.append(p)
        if len(pts) == n_points:
            return ProjectiveScene(b, 6, np.array(pts))


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)


# ------------------------------------------------------- FD amplification
#
# Empirical condition-number oracle: perturb the image data by h along unit
# directions, re-solve the minimal problem, match the nearest solution to the
# reference model in the chordal metric, and report the worst distance/h
# ratio. Directions include the top singular direction of the FD-estimated
# input-output Jacobian (a finite-difference power-ascent), so the returned
# ratio approaches the true operator norm.


def _chordal(A, B):
    return min(np.linalg.norm(A - B), np.linalg.norm(A + B))


def _matched_delta(solutions, M0):
    """Signed difference of the solution nearest to M0 (canonical reps)."""
    best = None
    best_d = np.inf
    for sol in solutions:
        for sgn in (1.0, -1.0):
            d = np.linalg.norm(sgn * sol.M - M0)
            if d < best_d:
                best_d = d
                best = sgn * sol.M - M0
    return best, best_d


def fd_amplification(scene, kind, h=1e-6, n_dirs=50, rng=None):
    """Max FD amplification ratio over n_dirs image perturbations."""
    from minstab.scene import (
        CorrespondenceSet,
        camera_from_b,
        canonicalize_model,
        essential_from_pose,
        fundamental_from_cameras,
        project_calibrated,
        project_projective,
    )
    from minstab.solvers import solve_5pt, solve_7pt

    if rng is None:
        rng = np.random.default_rng(0)
    if kind == "essential":
        c = project_calibrated(scene)
        M0 = essential_from_pose(scene.R, scene.t_hat).M
        solve = solve_5pt
        n_pts = 5
    else:
        c = project_projective(scene)
        P = np.hstack([np.eye(3), np.zeros((3, 1))])
        M0 = fundamental_from_cameras(P, camera_from_b(scene.b, scene.chart_id)).M
        solve = solve_7pt
        n_pts = 7
    x0 = np.hstack([c.x, c.xbar]).ravel()
    dim = 4 * n_pts

    def solve_delta(u):
        x1 = (x0 + h * u).reshape(n_pts, 4)
        res = solve(CorrespondenceSet(x1[:, :2], x1[:, 2:]))
        if not res.solutions:
            return None, np.inf
        return _matched_delta(res.solutions, M0)

    # FD Jacobian of the matched solution, then its top input direction
    J = np.zeros((9, dim))
    ok = True
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        delta, _ = solve_delta(e)
        if delta is None:
            ok = False
            break
        J[:, j] = delta.ravel() / h
    dirs = []
    if ok:
        _, _, Vt = np.linalg.svd(J, full_matrices=False)
        dirs.append(Vt[0])
    while len(dirs) < n_dirs:
        v = rng.normal(size=dim)
        dirs.append(v / np.linalg.norm(v))
    best = 0.0
    for u in dirs:
        _, d = solve_delta(u)
        if np.isfinite(d):
            best = max(best, d / h)
    return best
