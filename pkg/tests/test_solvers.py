import numpy as np
import pytest

from minstab.errors import RankDeficientData
from minstab.numerics import UnivariatePoly, discriminant, real_roots
from minstab.scene import (
    CorrespondenceSet,
    canonicalize_model,
    epipolar_matrix,
    essential_from_pose,
    fundamental_from_cameras,
    camera_from_b,
    project_calibrated,
    project_projective,
)
from minstab.solvers import poly10_at, scanline_poly10, solve_5pt, solve_7pt

from conftest import make_calibrated_scene, make_projective_scene


def canonical_distance(A, B):
    A = canonicalize_model(A)
    B = canonicalize_model(B)
    return min(np.linalg.norm(A - B), np.linalg.norm(A + B))


# ---------------------------------------------------------------- 7-point


def test_solve7_recovers_ground_truth(rng):
    for _ in range(25):
        s = make_projective_scene(rng)
        c = project_projective(s)
        F_gt = fundamental_from_cameras(
            np.hstack([np.eye(3), np.zeros((3, 1))]), camera_from_b(s.b, s.chart_id)
        ).M
        res = solve_7pt(c)
        assert 1 <= len(res.solutions) <= 3
        d = min(canonical_distance(sol.M, F_gt) for sol in res.solutions)
        assert d <= 1e-8


def test_solve7_solutions_satisfy_constraints(rng):
    for _ in range(10):
        s = make_projective_scene(rng)
        c = project_projective(s)
        res = solve_7pt(c)
        L = epipolar_matrix(c)
        for sol in res.solutions:
            assert np.max(np.abs(L @ sol.M.ravel())) <= 1e-10
            sv = np.linalg.svd(sol.M, compute_uv=False)
            assert sv[2] <= 1e-10


def test_solve7_basis_spans_kernel(rng):
    s = make_projective_scene(rng)
    c = project_projective(s)
    res = solve_7pt(c)
    L = epipolar_matrix(c)
    F1, F2 = res.basis
    scale = np.linalg.norm(L) * np.linalg.norm(F1)
    assert np.max(np.abs(L @ F1.ravel())) <= 1e-10 * scale
    assert np.max(np.abs(L @ F2.ravel())) <= 1e-10 * scale
    # cubic matches det(t F1 + F2)
    for t in (-1.3, 0.0, 0.7, 2.1):
        det = np.linalg.det(t * F1 + F2)
        assert det == pytest.approx(res.cubic(t), rel=1e-9, abs=1e-12)


def test_solve7_repeated_correspondence_raises(rng):
    s = make_projective_scene(rng)
    c = project_projective(s)
    x = c.x.copy()
    xbar = c.xbar.copy()
    x[6] = x[0]
    xbar[6] = xbar[0]
    with pytest.raises(RankDeficientData):
        solve_7pt(CorrespondenceSet(x, xbar))


def test_solve7_permutation_invariant(rng):
    s = make_projective_scene(rng)
    c = project_projective(s)
    res_a = solve_7pt(c)
    perm = rng.permutation(7)
    res_b = solve_7pt(c.take(perm))
    assert len(res_a.solutions) == len(res_b.solutions)
    for sa in res_a.solutions:
        assert min(canonical_distance(sa.M, sb.M) for sb in res_b.solutions) <= 1e-8


def test_solve7_root_count_parity(rng):
    # away from the discriminant locus the cubic has 1 or 3 real roots
    for _ in range(50):
        c = CorrespondenceSet(rng.standard_normal((7, 2)), rng.standard_normal((7, 2)))
        res = solve_7pt(c)
        if res.cubic.degree == 3:
            disc = discriminant(res.cubic)
            scale = np.max(np.abs(res.cubic.coefficients)) ** 4
            if abs(disc) > 1e-8 * scale:
                n = sum(m for _, m in real_roots(res.cubic))
                assert n in (1, 3)


def test_solve7_random_count_bound(rng):
    for _ in range(200):
        c = CorrespondenceSet(rng.standard_normal((7, 2)), rng.standard_normal((7, 2)))
        res = solve_7pt(c)
        assert len(res.solutions) <= 3


# ---------------------------------------------------------------- 5-point


def test_solve5_recovers_ground_truth(rng):
    for _ in range(25):
        s = make_calibrated_scene(rng)
        c = project_calibrated(s)
        E_gt = essential_from_pose(s.R, s.t_hat).M
        res = solve_5pt(c)
        assert 1 <= len(res.solutions) <= 10
        d = min(canonical_distance(sol.M, E_gt) for sol in res.solutions)
        assert d <= 1e-8


def test_solve5_solutions_satisfy_constraints(rng):
    for _ in range(10):
        s = make_calibrated_scene(rng)
        c = project_calibrated(s)
        res = solve_5pt(c)
        L = epipolar_matrix(c)
        for sol in res.solutions:
            E = sol.M
            assert np.max(np.abs(L @ E.ravel())) <= 1e-8
            assert abs(np.linalg.det(E)) <= 1e-8
            T = 2.0 * E @ E.T @ E - np.trace(E @ E.T) * E
            assert np.max(np.abs(T)) <= 1e-8


def test_solve5_poly10_consistency(rng):
    # each solution's z-coordinate in the nullspace basis is a root of poly10
    s = make_calibrated_scene(rng)
    c = project_calibrated(s)
    res = solve_5pt(c)
    assert res.poly10.degree <= 10
    basis = np.array([b.ravel() for b in res.nullspace_basis])
    pscale = np.max(np.abs(res.poly10.coefficients))
    for sol in res.solutions:
        coords = basis @ sol.M.ravel()
        assert abs(coords[3]) > 1e-12
        z = coords[2] / coords[3]
        assert abs(res.poly10(z)) <= 1e-6 * pscale * max(1.0, abs(z)) ** 10


def test_solve5_coincident_raises(rng):
    g = rng.standard_normal(2)
    gbar = rng.standard_normal(2)
    c = CorrespondenceSet(np.tile(g, (5, 1)), np.tile(gbar, (5, 1)))
    with pytest.raises(RankDeficientData):
        solve_5pt(c)


def test_solve5_permutation_invariant(rng):
    s = make_calibrated_scene(rng)
    c = project_calibrated(s)
    res_a = solve_5pt(c)
    res_b = solve_5pt(c.take(rng.permutation(5)))
    assert len(res_a.solutions) == len(res_b.solutions)
    for sa in res_a.solutions:
        assert min(canonical_distance(sa.M, sb.M) for sb in res_b.solutions) <= 1e-8


def test_solve5_random_count_bound(rng):
    for _ in range(200):
        c = CorrespondenceSet(rng.standard_normal((5, 2)), rng.standard_normal((5, 2)))
        res = solve_5pt(c)
        assert len(res.solutions) <= 10


# ---------------------------------------------------------------- poly10_at


def _split_for_scan(c):
    c4 = c.take([0, 1, 2, 3])
    return c4, c.x[4], c.xbar[4]


def test_poly10_at_deterministic(rng):
    s = make_calibrated_scene(rng)
    c = project_calibrated(s)
    c4, g5, gbar5 = _split_for_scan(c)
    p1 = poly10_at(c4, g5, gbar5)
    p2 = poly10_at(c4, g5, gbar5)
    assert np.array_equal(p1.coefficients, p2.coefficients)


def test_poly10_at_matches_solve5(rng):
    s = make_calibrated_scene(rng)
    c = project_calibrated(s)
    c4, g5, gbar5 = _split_for_scan(c)
    p = poly10_at(c4, g5, gbar5)
    res = solve_5pt(c)
    scale = np.max(np.abs(p.coefficients))
    roots_p = [r for r, _ in real_roots(p)]
    # every solve_5pt solution's underlying root appears among poly10_at's roots
    basis = np.array([b.ravel() for b in res.nullspace_basis])
    for sol in res.solutions:
        coords = basis @ sol.M.ravel()
        z = coords[2] / coords[3]
        assert abs(p(z)) <= 1e-6 * scale * max(1.0, abs(z)) ** 10


def test_poly10_at_alignment_continuity(rng):
    # with basis alignment the coefficient change must shrink linearly with
    # the perturbation (no sign/order discontinuity from the kernel basis)
    def rel_change(c4, g5, gbar5, basis0, n0, h):
        p1, _ = scanline_poly10(c4, g5, gbar5 + np.array([h, 0.0]), basis_ref=basis0)
        n1 = np.zeros(11)
        n1[: len(p1.coefficients)] = p1.coefficients
        return np.linalg.norm(n1 - n0) / np.linalg.norm(n0)

    for _ in range(10):
        s = make_calibrated_scene(rng)
        c = project_calibrated(s)
        c4, g5, gbar5 = _split_for_scan(c)
        p0, basis0 = scanline_poly10(c4, g5, gbar5)
        n0 = np.zeros(11)
        n0[: len(p0.coefficients)] = p0.coefficients
        d9 = rel_change(c4, g5, gbar5, basis0, n0, 1e-9)
        d10 = rel_change(c4, g5, gbar5, basis0, n0, 1e-10)
        assert d9 <= 2e-6
        assert d10 <= 0.2 * d9 + 1e-12


def test_poly10_at_roots_match_ground_truth(rng):
    # the generating scene's 5th correspondence must be consistent: poly10 has
    # a root reproducing the ground-truth essential matrix
    s = make_calibrated_scene(rng)
    c = project_calibrated(s)
    c4, g5, gbar5 = _split_for_scan(c)
    p = poly10_at(c4, g5, gbar5)
    res = solve_5pt(c)
    E_gt = essential_from_pose(s.R, s.t_hat).M
    assert min(canonical_distance(sol.M, E_gt) for sol in res.solutions) <= 1e-8
    assert p.degree >= 1
