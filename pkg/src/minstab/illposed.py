"""Ill-posedness tests and curve machinery for minimal epipolar problems.

World-side tests reduce to small linear systems over an explicit family of
quadrics through the baseline; image-side tests locate the curve of
degenerate last-point placements, either as an explicit bivariate polynomial
(seven-point problem: the discriminant of the kernel-pencil cubic) or by a
columnwise scan of a discriminant criterion (five-point problem).
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb, hypot

import numpy as np

from .errors import (
    Degenerate,
    DegenerateFixedData,
    EverywhereIllPosed,
    InvalidInput,
    RankDeficientData,
    SamplingExhausted,
)
from .numerics import BivariatePoly, UnivariatePoly, bipoly_eval_grad, discriminant, real_roots
from .scene import CalibratedScene, CorrespondenceSet, ProjectiveScene, camera_from_b, epipolar_rows
from .conditioning import unit_completion
from .solvers import (
    _EPS3,
    _P64,
    _canonical_distance,
    _nullspace_basis,
    scanline_poly10,
    signed_minors,
    solve_5pt,
)

_RANK_TOL = 1e-10
_QUADRIC_TOL_FACTOR = 1e-8


# ---------------------------------------------------------------------------
# quadric families through the baseline
# ---------------------------------------------------------------------------


def quadric_family_calibrated(R, t):
    """Basis (5, 4, 4) of quadrics containing the baseline whose sections by
    planes normal to the baseline are circles.

    In coordinates where the baseline is the z-axis the family is spanned by
    x^2 + y^2, xz, yz, xw, yw (w the homogenising coordinate)."""
    R = np.asarray(R, dtype=float)
    t = np.asarray(t, dtype=float)
    p1, p2 = unit_completion(t)
    S = np.vstack([p1, p2, t / np.linalg.norm(t)])
    B = S @ R
    Bh = np.eye(4)
    Bh[:3, :3] = B
    pats = np.zeros((5, 4, 4))
    pats[0, 0, 0] = pats[0, 1, 1] = 1.0
    pats[1, 0, 2] = pats[1, 2, 0] = 0.5
    pats[2, 1, 2] = pats[2, 2, 1] = 0.5
    pats[3, 0, 3] = pats[3, 3, 0] = 0.5
    pats[4, 1, 3] = pats[4, 3, 1] = 0.5
    return np.einsum("ji,kjl,lm->kim", Bh, pats, Bh)


def quadric_family_projective(b):
    """Explicit basis (7, 4, 4) of quadrics containing the baseline of the
    canonical-chart camera pair ([I|0], M(b))."""
    b = np.asarray(b, dtype=float)
    if b.shape != (7,):
        raise InvalidInput("camera parameter must be a 7-vector")
    b1, b2, _, b4, b5, b6, _ = b
    Q = np.zeros((7, 4, 4))
    Q[0] = [[0, -b4, 0, 0], [-b4, -2 * b5, -b6, 0], [0, -b6, 0, 0], [0, 0, 0, 0]]
    Q[1] = [[0, 0, -b4, 0], [0, 0, -b5, 0], [-b4, -b5, -2 * b6, 0], [0, 0, 0, 0]]
    Q[2] = [[0, 0, 0, -b4], [0, 0, 0, -b5], [0, 0, 0, -b6], [-b4, -b5, -b6, 0]]
    Q[3] = [[2, b1, b2, 0], [b1, 0, 0, 0], [b2, 0, 0, 0], [0, 0, 0, 0]]
    Q[4] = [[0, 1, 0, 0], [1, 2 * b1, b2, 0], [0, b2, 0, 0], [0, 0, 0, 0]]
    Q[5] = [[0, 0, 1, 0], [0, 0, b1, 0], [1, b1, 2 * b2, 0], [0, 0, 0, 0]]
    Q[6] = [[0, 0, 0, 1], [0, 0, 0, b1], [0, 0, 0, b2], [1, b1, b2, 0]]
    return Q


def baseline_direction_projective(b):
    """Direction of the baseline (the second camera centre, at infinity) for
    the canonical-chart pair."""
    b = np.asarray(b, dtype=float)
    b1, b2, _, b4, b5, b6, _ = b
    return np.array([b2 * b5 - b1 * b6, -b2 * b4 + b6, b1 * b4 - b5])


def quadric_family_through_line(p, q):
    """Numeric basis (7, 4, 4) of quadrics containing the line through two
    homogeneous points p, q (used for non-canonical camera charts)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    idx = [(i, j) for i in range(4) for j in range(i, 4)]

    def row(a, bvec):
        r = np.empty(len(idx))
        for k, (i, j) in enumerate(idx):
            r[k] = a[i] * bvec[j] + (a[j] * bvec[i] if i != j else 0.0)
        return r

    A = np.vstack([row(p, p), row(q, q), row(p, q)])
    _, sv, Vt = np.linalg.svd(A)
    null = Vt[3:]
    out = np.zeros((7, 4, 4))
    for k, v in enumerate(null):
        for c, (i, j) in enumerate(idx):
            out[k, i, j] = v[c]
            out[k, j, i] = v[c]
    return out


def _incidence_rows(points, family):
    pts = np.asarray(points, dtype=float)
    ph = np.hstack([pts, np.ones((pts.shape[0], 1))])
    return np.einsum("ni,kij,nj->nk", ph, family, ph)


@dataclass
class QuadricSystemReport:
    """Outcome of a world-side ill-posedness test."""

    system_matrix: np.ndarray
    sigma_min: float
    tol: float
    quadric: np.ndarray | None
    checks: dict | None

    @property
    def is_illposed(self):
        return self.sigma_min <= self.tol


def _quadric_from_null(family, coeffs):
    Q = np.einsum("k,kij->ij", coeffs, family)
    n = np.linalg.norm(Q)
    if n > 0:
        Q = Q / n
    return 0.5 * (Q + Q.T)


def _line_checks(Q, p, q):
    """Residuals certifying that the line through homogeneous points p and q
    lies in the quadric: all three coefficients of the restriction vanish."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    np_ = max(np.linalg.norm(p), 1.0)
    nq = max(np.linalg.norm(q), 1.0)
    return {
        "line_end_p": abs(p @ Q @ p) / np_**2,
        "line_end_q": abs(q @ Q @ q) / nq**2,
        "line_cross": abs(p @ Q @ q) / (np_ * nq),
    }


def illposed_world_calibrated(s: CalibratedScene, tol_factor=_QUADRIC_TOL_FACTOR):
    """5x5 incidence system over the calibrated quadric family; the scene is
    ill-posed exactly when the system is rank-deficient."""
    family = quadric_family_calibrated(s.R, s.t_hat)
    M = _incidence_rows(s.points, family)
    _, sv, Vt = np.linalg.svd(M)
    tol = tol_factor * sv[0]
    quadric = None
    checks = None
    if sv[-1] <= tol:
        quadric = _quadric_from_null(family, Vt[-1])
        ph = np.hstack([s.points, np.ones((5, 1))])
        axis = s.R.T @ s.t_hat
        checks = _line_checks(quadric, np.array([0.0, 0.0, 0.0, 1.0]), np.append(axis, 0.0))
        checks["point_incidence"] = float(np.max(np.abs(np.einsum("ni,ij,nj->n", ph, quadric, ph))))
        p1, p2 = unit_completion(s.t_hat)
        B = np.vstack([p1, p2, s.t_hat]) @ s.R
        Bh = np.eye(4)
        Bh[:3, :3] = B
        Qr = Bh @ quadric @ Bh.T
        checks["equal_leading_diag"] = abs(Qr[0, 0] - Qr[1, 1])
        checks["pattern_zeros"] = float(
            max(abs(Qr[0, 1]), abs(Qr[2, 2]), abs(Qr[3, 3]), abs(Qr[2, 3]))
        )
    return QuadricSystemReport(M, float(sv[-1]), float(tol), quadric, checks)


def illposed_world_projective(s: ProjectiveScene, tol_factor=_QUADRIC_TOL_FACTOR):
    """7x7 incidence system over the quadrics through the baseline."""
    base_pt = np.array([0.0, 0.0, 0.0, 1.0])
    if s.chart_id == 6:
        family = quadric_family_projective(s.b)
        base_other = np.append(baseline_direction_projective(s.b), 0.0)
    else:
        P2 = camera_from_b(s.b, s.chart_id)
        _, _, Vt = np.linalg.svd(P2)
        base_other = Vt[-1]
        family = quadric_family_through_line(base_pt, base_other)
    M = _incidence_rows(s.points, family)
    _, sv, Vt = np.linalg.svd(M)
    tol = tol_factor * sv[0]
    quadric = None
    checks = None
    if sv[-1] <= tol:
        quadric = _quadric_from_null(family, Vt[-1])
        ph = np.hstack([s.points, np.ones((s.points.shape[0], 1))])
        checks = _line_checks(quadric, base_pt, base_other)
        checks["point_incidence"] = float(np.max(np.abs(np.einsum("ni,ij,nj->n", ph, quadric, ph))))
    return QuadricSystemReport(M, float(sv[-1]), float(tol), quadric, checks)


def criticality_test(world_points, cameras, kind):
    """Numerical rank of the N-point incidence system over the baseline
    quadric family, and whether a common qualifying quadric exists."""
    pts = np.asarray(world_points, dtype=float)
    if kind == "essential":
        R, t = cameras
        family = quadric_family_calibrated(R, np.asarray(t, dtype=float))
        if pts.shape[0] < 5:
            raise InvalidInput("need at least 5 world points")
    elif kind == "fundamental":
        if isinstance(cameras, tuple) and len(cameras) == 2 and np.ndim(cameras[1]) == 0:
            b, chart_id = cameras
        else:
            b, chart_id = cameras, 6
        b = np.asarray(b, dtype=float)
        if chart_id == 6:
            family = quadric_family_projective(b)
        else:
            P2 = camera_from_b(np.asarray(b, dtype=float), chart_id)
            _, _, Vt = np.linalg.svd(P2)
            family = quadric_family_through_line(np.array([0.0, 0.0, 0.0, 1.0]), Vt[-1])
        if pts.shape[0] < 7:
            raise InvalidInput("need at least 7 world points")
    else:
        raise InvalidInput(f"unknown kind {kind!r}")
    M = _incidence_rows(pts, family)
    sv = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(sv > _RANK_TOL * sv[0])) if sv[0] > 0 else 0
    return rank, rank <= family.shape[0] - 1


def sample_points_on_quadric(Q, rng, n, box=3.0, predicate=None, max_tries=10000):
    """n affine points on the quadric {x : (x;1)^T Q (x;1) = 0}, found by
    intersecting random lines with the surface."""
    Q = np.asarray(Q, dtype=float)
    pts = []
    tries = 0
    while len(pts) < n:
        tries += 1
        if tries > max_tries:
            raise SamplingExhausted("could not sample enough points on the quadric")
        p = np.append(rng.uniform(-box, box, size=3), 1.0)
        d = rng.normal(size=3)
        d = np.append(d / np.linalg.norm(d), 0.0)
        a = d @ Q @ d
        bb = 2.0 * (p @ Q @ d)
        c = p @ Q @ p
        if abs(a) <= 1e-14 * (np.abs(Q).max() + 1.0):
            continue
        disc = bb * bb - 4.0 * a * c
        if disc <= 0.0:
            continue
        sq = np.sqrt(disc)
        qq = -0.5 * (bb + np.copysign(sq, bb)) if bb != 0.0 else 0.5 * sq
        roots = [qq / a]
        if qq != 0.0:
            roots.append(c / qq)
        for tval in roots:
            x = p[:3] + tval * d[:3]
            if np.max(np.abs(x)) > 10.0 * box:
                continue
            if predicate is not None and not predicate(x):
                continue
            pts.append(x)
            if len(pts) == n:
                break
    return np.asarray(pts)


# ---------------------------------------------------------------------------
# the 6.5-point curve: discriminant of the kernel-pencil cubic
# ---------------------------------------------------------------------------


@lru_cache(maxsize=1)
def _curve_nodes():
    """Chebyshev tensor nodes on [-1,1]^2 and the pseudo-inverse of the
    total-degree-6 monomial collocation matrix."""
    g = np.cos((2.0 * np.arange(8) + 1.0) * np.pi / 16.0)
    S, T = np.meshgrid(g, g, indexing="ij")
    s = S.ravel()
    t = T.ravel()
    exps = [(a, b) for a in range(7) for b in range(7 - a)]
    V = np.stack([s**a * t**b for a, b in exps], axis=1)
    return s, t, tuple(exps), np.linalg.pinv(V)


def _bdet3(F):
    return (
        F[..., 0, 0] * (F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1])
        - F[..., 0, 1] * (F[..., 1, 0] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 0])
        + F[..., 0, 2] * (F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0])
    )


def _badjT(F):
    """Transposed adjugate, batched; tr(adj(A) @ B) = sum(_badjT(A) * B)."""
    out = np.empty_like(F)
    out[..., 0, 0] = F[..., 1, 1] * F[..., 2, 2] - F[..., 1, 2] * F[..., 2, 1]
    out[..., 0, 1] = F[..., 1, 2] * F[..., 2, 0] - F[..., 1, 0] * F[..., 2, 2]
    out[..., 0, 2] = F[..., 1, 0] * F[..., 2, 1] - F[..., 1, 1] * F[..., 2, 0]
    out[..., 1, 0] = F[..., 0, 2] * F[..., 2, 1] - F[..., 0, 1] * F[..., 2, 2]
    out[..., 1, 1] = F[..., 0, 0] * F[..., 2, 2] - F[..., 0, 2] * F[..., 2, 0]
    out[..., 1, 2] = F[..., 0, 1] * F[..., 2, 0] - F[..., 0, 0] * F[..., 2, 1]
    out[..., 2, 0] = F[..., 0, 1] * F[..., 1, 2] - F[..., 0, 2] * F[..., 1, 1]
    out[..., 2, 1] = F[..., 0, 2] * F[..., 1, 0] - F[..., 0, 0] * F[..., 1, 2]
    out[..., 2, 2] = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    return out


def _pencil_disc_batch(minors):
    """Discriminant of det(t*F1 + F2) for a batch (m, 9, 9) of signed-minor
    arrays, with the pivot-normalised kernel basis; the result is independent
    of the pivot choice."""
    m = minors.shape[0]
    flat = np.abs(minors).reshape(m, 81)
    k = np.argmax(flat, axis=1)
    i, j = np.unravel_index(k, (9, 9))
    piv = np.abs(minors[np.arange(m), i, j])
    scale = np.sqrt(np.where(piv > 0, piv, 1.0))
    F1 = (minors[np.arange(m), i, :] / scale[:, None]).reshape(m, 3, 3)
    F2 = (minors[np.arange(m), j, :] / scale[:, None]).reshape(m, 3, 3)
    a = _bdet3(F1)
    d = _bdet3(F2)
    b = np.sum(_badjT(F1) * F2, axis=(1, 2))
    c = np.sum(_badjT(F2) * F1, axis=(1, 2))
    disc = (
        18.0 * a * b * c * d
        - 4.0 * b**3 * d
        + b * b * c * c
        - 4.0 * a * c**3
        - 27.0 * a * a * d * d
    )
    return np.where(piv > 0, disc, 0.0)


def _hartley_frame(pts):
    """Shift/scale bringing a point cloud to zero mean and ~unit spread."""
    pts = np.asarray(pts, dtype=float)
    mu = pts.mean(axis=0)
    rms = float(np.sqrt(np.mean(np.sum((pts - mu) ** 2, axis=1))))
    rho = rms / math.sqrt(2.0) if rms > 0.0 else 1.0
    return mu, rho


def _minor_affine_data(c: CorrespondenceSet, center, scale):
    """Signed minors of the 7x9 constraint matrix as affine functions of the
    scaled last-point coordinates: m(s, t) = A + s*B + t*C."""
    x = c.x
    xbar = c.xbar
    L = np.empty((7, 9))
    L[:6] = epipolar_rows(x[:6], xbar[:6])
    g = np.array([x[6, 0], x[6, 1], 1.0])

    def minors_at(u, v):
        L[6, 0:3] = u * g
        L[6, 3:6] = v * g
        L[6, 6:9] = g
        return signed_minors(L)

    cu, cv = center
    A = minors_at(cu, cv)
    B = minors_at(cu + scale, cv) - A
    C = minors_at(cu, cv + scale) - A
    L[6, 0:3] = cu * g
    L[6, 3:6] = cv * g
    L[6, 6:9] = g
    hadamard = float(np.prod(np.linalg.norm(L, axis=1)))
    return A, B, C, hadamard


def curve65_poly(c: CorrespondenceSet, *, center=None, scale=None):
    """Bivariate polynomial (total degree <= 6) in the last second-image
    point whose zero set is the locus where two of the three pencil solutions
    merge. Coefficients are max-normalised; the identically-zero polynomial
    is returned when every maximal minor vanishes for all placements."""
    if c.x.shape[0] != 7:
        raise InvalidInput("expected 6 full correspondences plus a seventh point pair")
    if center is None:
        center = (float(c.xbar[6, 0]), float(c.xbar[6, 1]))
    if scale is None:
        scale = float(max(1.0, np.max(np.abs(c.xbar)), np.max(np.abs(center))))
    # Condition control: move each image to zero mean and unit spread before
    # building minors. Ill-posedness is invariant under per-image affine maps
    # (the 36 minors transform by a fixed linear map), so the interpolated
    # chart polynomial cuts the same curve and max-normalization below makes
    # the returned coefficients frame-independent. Without this, pixel-scale
    # inputs drive the minors so far below their Hadamard bound that honest
    # curves read as identically zero.
    mu1, rho1 = _hartley_frame(c.x)
    mu2, rho2 = _hartley_frame(np.vstack([c.xbar[:6],
                                          np.asarray(center, dtype=float)[None, :]]))
    cn = CorrespondenceSet((c.x - mu1) / rho1, (c.xbar - mu2) / rho2, unit=c.unit)
    center_n = ((center[0] - mu2[0]) / rho2, (center[1] - mu2[1]) / rho2)
    A, B, C, hadamard = _minor_affine_data(cn, center_n, scale / rho2)
    if max(np.abs(A).max(), np.abs(B).max(), np.abs(C).max()) <= 1e-12 * max(hadamard, 1e-300):
        return BivariatePoly(np.zeros((1, 1)))
    s, t, exps, pinv = _curve_nodes()
    m_nodes = A[None, :, :] + s[:, None, None] * B + t[:, None, None] * C
    vals = _pencil_disc_batch(m_nodes)
    coeffs = pinv @ vals
    Cst = np.zeros((7, 7))
    for (a, bdeg), v in zip(exps, coeffs):
        Cst[a, bdeg] = v
    cu, cv = center
    k = np.arange(7)
    Mu = np.zeros((7, 7))
    Mv = np.zeros((7, 7))
    for deg in range(7):
        for kk in range(deg + 1):
            Mu[deg, kk] = comb(deg, kk) * (-cu) ** (deg - kk) / scale**deg
            Mv[deg, kk] = comb(deg, kk) * (-cv) ** (deg - kk) / scale**deg
    raw = Mu.T @ Cst @ Mv
    peak = np.max(np.abs(raw))
    if peak > 0.0:
        raw = raw / peak
        flat = np.argmax(np.abs(raw))
        if raw.ravel()[flat] < 0:
            raw = -raw
    # clip the numerically-zero upper anti-triangle so the stored grid is an
    # honest total-degree-6 object
    ii, jj = np.meshgrid(k, k, indexing="ij")
    raw[ii + jj > 6] = 0.0
    return BivariatePoly(raw)


def sampson_distance(P, pt):
    """First-order distance |P(pt)| / ||grad P(pt)||; +inf at a singular
    point of the curve that the point is not on."""
    val, du, dv = bipoly_eval_grad(P, float(pt[0]), float(pt[1]))
    g = hypot(du, dv)
    if g == 0.0 or not np.isfinite(g):
        return 0.0 if val == 0.0 else float("inf")
    return abs(val) / g


# ---------------------------------------------------------------------------
# batched degree-10 eliminant along a scan column (five-point curve)
# ---------------------------------------------------------------------------


def _align_chain(Ns, ref=None):
    """Orthogonal-Procrustes alignment of consecutive kernel bases so the
    scan criterion varies continuously along a column."""
    out = np.array(Ns, dtype=float)
    prev = ref
    for k in range(out.shape[0]):
        if prev is None:
            for r in range(4):
                idx = np.argmax(np.abs(out[k, r]))
                if out[k, r, idx] < 0:
                    out[k, r] = -out[k, r]
        else:
            M = out[k] @ prev.T
            U, _, Wt = np.linalg.svd(M)
            out[k] = (Wt.T @ U.T) @ out[k]
        prev = out[k]
    return out


def _grid_polys(c4rows, g5, us, vgrid):
    """Aligned kernel bases, eliminant coefficients and discriminant values
    for a whole scan grid in one batch. Bases chain down each column, and
    each column's head aligns to the previous column's head."""
    nu, nv = len(us), len(vgrid)
    uu = np.repeat(np.asarray(us, dtype=float), nv)
    vv = np.tile(np.asarray(vgrid, dtype=float), nu)
    Ns, valid = _batched_nullspaces(c4rows, _probe_rows(g5, uu, vv))
    prev_head = None
    for ci in range(nu):
        col = slice(ci * nv, (ci + 1) * nv)
        Ns[col] = _align_chain(Ns[col], ref=prev_head)
        prev_head = Ns[ci * nv]
    polys, pvalid = _batched_poly10(Ns)
    h = _batched_disc10(polys)
    h[~(valid & pvalid)] = np.nan
    return (Ns.reshape(nu, nv, 4, 9), polys.reshape(nu, nv, 11),
            h.reshape(nu, nv))


def _batched_nullspaces(L4, probes):
    m = probes.shape[0]
    Ls = np.empty((m, 5, 9))
    Ls[:, :4] = L4
    Ls[:, 4] = probes
    _, sv, Vt = np.linalg.svd(Ls)
    valid = sv[:, 4] > 1e-12 * sv[:, 0]
    return Vt[:, 5:9, :], valid


def _batched_poly10(Ns):
    """Vectorised version of the 5-point eliminant for a stack of aligned
    kernel bases; returns (m, 11) ascending coefficients and a validity mask."""
    m = Ns.shape[0]
    Cb = Ns.reshape(m, 4, 3, 3).transpose(0, 2, 3, 1)
    det64 = np.einsum("abc,nai,nbj,nck->nijk", _EPS3, Cb[:, :, 0], Cb[:, :, 1], Cb[:, :, 2])
    T1 = np.einsum("naci,ndcj,ndbk->nabijk", Cb, Cb, Cb)
    S = np.einsum("naci,nacj->nij", Cb, Cb)
    T2 = np.einsum("nij,nabk->nabijk", S, Cb)
    trace64 = (2.0 * T1 - T2).reshape(m, 9, 64)
    rows = np.concatenate([det64.reshape(m, 1, 64), trace64], axis=1) @ _P64
    valid = np.ones(m, dtype=bool)
    R = np.empty((m, 10, 10))
    try:
        R = np.linalg.solve(rows[:, :, :10], rows[:, :, 10:])
    except np.linalg.LinAlgError:
        for k in range(m):
            try:
                R[k] = np.linalg.solve(rows[k, :, :10], rows[k, :, 10:])
            except np.linalg.LinAlgError:
                valid[k] = False
                R[k] = 0.0
    valid &= np.all(np.isfinite(R), axis=(1, 2))
    Bc = np.zeros((m, 3, 3, 5))
    for idx, (p, q) in enumerate(((4, 5), (6, 7), (8, 9))):
        Bc[:, idx, 0, :4] = np.stack(
            [R[:, p, 2], R[:, p, 1] - R[:, q, 2], R[:, p, 0] - R[:, q, 1], -R[:, q, 0]], axis=1
        )
        Bc[:, idx, 1, :4] = np.stack(
            [R[:, p, 5], R[:, p, 4] - R[:, q, 5], R[:, p, 3] - R[:, q, 4], -R[:, q, 3]], axis=1
        )
        Bc[:, idx, 2, :5] = np.stack(
            [
                R[:, p, 9],
                R[:, p, 8] - R[:, q, 9],
                R[:, p, 7] - R[:, q, 8],
                R[:, p, 6] - R[:, q, 7],
                -R[:, q, 6],
            ],
            axis=1,
        )

    def bconv(X, Y):
        out = np.zeros((m, X.shape[1] + Y.shape[1] - 1))
        for i in range(X.shape[1]):
            for j in range(Y.shape[1]):
                out[:, i + j] += X[:, i] * Y[:, j]
        return out

    p1 = bconv(Bc[:, 1, 2], Bc[:, 0, 1, :4]) - bconv(Bc[:, 0, 2], Bc[:, 1, 1, :4])
    p2 = bconv(Bc[:, 0, 2], Bc[:, 1, 0, :4]) - bconv(Bc[:, 1, 2], Bc[:, 0, 0, :4])
    p3 = bconv(Bc[:, 0, 0, :4], Bc[:, 1, 1, :4]) - bconv(Bc[:, 0, 1, :4], Bc[:, 1, 0, :4])
    out = np.zeros((m, 11))
    out += bconv(p1, Bc[:, 2, 0, :4])
    out += bconv(p2, Bc[:, 2, 1, :4])
    out += bconv(p3, Bc[:, 2, 2])
    return out, valid


def _batched_disc10(P):
    """Discriminants of a stack of degree-10 polynomials (ascending (m, 11)
    coefficients), matching the scalar convention; NaN where the leading
    coefficient vanishes relative to the coefficient scale."""
    m = P.shape[0]
    scale = np.max(np.abs(P), axis=1)
    ok = scale > 0
    cs = np.where(ok[:, None], P / np.where(ok, scale, 1.0)[:, None], 0.0)
    lc = cs[:, -1]
    ok &= np.abs(lc) > 1e-13
    dc = cs[:, 1:] * np.arange(1, 11)
    syl = np.zeros((m, 19, 19))
    pd = cs[:, ::-1]
    dpd = dc[:, ::-1]
    for i in range(9):
        syl[:, i, i : i + 11] = pd
    for i in range(10):
        syl[:, 9 + i, i : i + 10] = dpd
    res = np.linalg.det(syl)
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = -res / lc
    return np.where(ok, disc, np.nan)


def _count_real(coeffs):
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return 0
    return sum(mult for _, mult in real_roots(UnivariatePoly(coeffs / scale)))


def _h_of(c4, g5, u, v, ref):
    poly, basis = scanline_poly10(c4, g5, (u, v), basis_ref=ref)
    coeffs = poly.coefficients
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return np.nan, basis
    try:
        return discriminant(UnivariatePoly(coeffs / scale)), basis
    except Degenerate:
        return np.nan, basis


def _pair_at(c4, g5, u, v):
    """Smallest canonical distance between any two solutions of the data
    assembled with the movable point placed at (u, v)."""
    x5 = np.vstack([c4.x, g5])
    xbar5 = np.vstack([c4.xbar, [u, v]])
    try:
        sols = [m.M for m in solve_5pt(CorrespondenceSet(x5, xbar5, unit=c4.unit)).solutions]
    except Exception:
        return np.inf
    return min(
        (_canonical_distance(sols[a], sols[b])
         for a in range(len(sols)) for b in range(a + 1, len(sols))),
        default=np.inf,
    )


def _separate_double(c4, g5, u, base, side, vlo, vhi, rich, frozen):
    """Offset from a curve crossing, on the real side but inside the bracket
    cell [vlo, vhi], at which the merging solution pair is resolved as two
    distinct solutions within 1e-4 of each other.

    Exactly at the crossing the coincident pair is reported as one (double)
    solution, so the vertex is nudged to the smallest offset where the full
    real-root count `rich` reappears with no repeated root; the exhibit is
    verified by re-solving the assembled data. Returns None when no
    compliant offset exists."""
    cell = vhi - vlo

    def split_at(delta):
        v = base + side * delta
        if not vlo <= v <= vhi:
            return None
        try:
            poly, _ = scanline_poly10(c4, g5, (u, v), basis_ref=frozen)
        except Exception:
            return None
        cs = poly.coefficients
        sc = np.max(np.abs(cs))
        if sc == 0.0:
            return None
        vals = np.sort(
            np.asarray([r for r, mult in real_roots(UnivariatePoly(cs / sc)) for _ in range(mult)])
        )
        if vals.size != rich or vals.size < 2:
            return None
        if float(np.min(np.diff(vals) / (1.0 + np.abs(vals[:-1])))) <= 0.0:
            return None
        return v

    klo, khi = 1, 22
    onset = None
    while klo < khi:
        onset = split_at(cell * 4.0 ** (-klo))
        if onset is not None:
            break
        klo += 1
    if onset is None:
        return None
    while khi - klo > 1:
        kmid = (klo + khi) // 2
        vmid = split_at(cell * 4.0 ** (-kmid))
        if vmid is None:
            khi = kmid
        else:
            klo, onset = kmid, vmid
    delta = cell * 4.0 ** (-klo)
    for _ in range(4):
        delta /= 2.0
        finer = split_at(delta)
        if finer is None:
            break
        onset = finer
    return onset if _pair_at(c4, g5, u, onset) <= 1e-4 else None


def _probe_rows(g5, u_arr, v_arr):
    gh = np.array([g5[0], g5[1], 1.0])
    probes = np.empty((len(u_arr), 9))
    probes[:, 0:3] = np.asarray(u_arr, dtype=float)[:, None] * gh
    probes[:, 3:6] = np.asarray(v_arr, dtype=float)[:, None] * gh
    probes[:, 6:9] = gh
    return probes


def _align_to_refs(Ns, refs):
    """Per-item orthogonal-Procrustes alignment of kernel bases to their own
    reference bases (the batched form of the chained alignment)."""
    M = np.matmul(Ns, refs.transpose(0, 2, 1))
    U, _, Wt = np.linalg.svd(M)
    rot = np.matmul(Wt.transpose(0, 2, 1), U.transpose(0, 2, 1))
    return np.matmul(rot, Ns)


def _batched_h(c4rows, g5, u_arr, v_arr, refs):
    """Discriminant criterion at a batch of probe placements, each aligned
    to its own frozen basis."""
    Ns, valid = _batched_nullspaces(c4rows, _probe_rows(g5, u_arr, v_arr))
    Ns = _align_to_refs(Ns, refs)
    polys, pvalid = _batched_poly10(Ns)
    h = _batched_disc10(polys)
    h[~(valid & pvalid)] = np.nan
    return h


def _column_brackets(ci, u, vgrid, Ns_col, polys_col, h_col, confirm):
    """Grid-node roots and sign-change brackets of the discriminant criterion
    along one column of a precomputed grid; brackets carry the frozen basis
    and column scale the bisection needs."""
    finite = np.isfinite(h_col)
    nodes = []
    brackets = []
    if not finite.any():
        return nodes, brackets
    col_scale = np.nanmax(np.abs(h_col))
    if not np.isfinite(col_scale) or col_scale == 0.0:
        return nodes, brackets
    h = h_col / col_scale
    for k in range(len(vgrid) - 1):
        if not (finite[k] and finite[k + 1]):
            continue
        if h[k] == 0.0:
            nodes.append((k, float(vgrid[k]), 0.0, False if confirm else None))
            continue
        if h[k] * h[k + 1] >= 0.0:
            continue
        brackets.append(dict(
            k=k, col=ci, u=float(u), lo=float(vgrid[k]), hi=float(vgrid[k + 1]),
            hlo=float(h[k]), frozen=Ns_col[k], scale=float(col_scale),
            count_lo=_count_real(polys_col[k]) if confirm else 0,
            count_hi=_count_real(polys_col[k + 1]) if confirm else 0,
        ))
    return nodes, brackets


def _bisect_brackets(c4rows, g5, brackets, bisect_rel):
    """Vectorised bisection of all sign-change brackets of a scan at once.
    Returns per-bracket (vstar, normalized residual); residual is NaN where
    the criterion stopped evaluating."""
    lo = np.array([b["lo"] for b in brackets])
    hi = np.array([b["hi"] for b in brackets])
    hlo = np.array([b["hlo"] for b in brackets])
    u = np.array([b["u"] for b in brackets])
    scale = np.array([b["scale"] for b in brackets])
    frozen = np.stack([b["frozen"] for b in brackets])
    cell = hi - lo
    active = np.ones(len(brackets), dtype=bool)
    for _ in range(80):
        tol = np.maximum(bisect_rel * cell, 4e-16 * (1.0 + np.abs(lo)))
        active &= (hi - lo) > tol
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        mid = 0.5 * (lo[idx] + hi[idx])
        h = _batched_h(c4rows, g5, u[idx], mid, frozen[idx]) / scale[idx]
        bad = ~np.isfinite(h)
        zero = ~bad & (h == 0.0)
        go_lo = ~bad & ~zero & (hlo[idx] * h > 0.0)
        go_hi = ~bad & ~zero & ~go_lo
        active[idx[bad]] = False
        lo[idx[zero]] = mid[zero]
        hi[idx[zero]] = mid[zero]
        active[idx[zero]] = False
        lo[idx[go_lo]] = mid[go_lo]
        hlo[idx[go_lo]] = h[go_lo]
        hi[idx[go_hi]] = mid[go_hi]
    vstar = 0.5 * (lo + hi)
    res = np.abs(_batched_h(c4rows, g5, u, vstar, frozen)) / scale
    return vstar, res


def _confirm_vertex(c4, g5, u, vstar, res, binfo, refine_tol):
    """Count-jump check plus the minimal-separation exhibit for one vertex;
    returns the possibly nudged (vstar, res, confirmed)."""
    count_lo, count_hi = binfo["count_lo"], binfo["count_hi"]
    col_scale = binfo["scale"]
    frozen = binfo["frozen"]
    confirmed = abs(count_lo - count_hi) == 2
    if confirmed:
        side = -1.0 if count_lo > count_hi else 1.0
        rich = max(count_lo, count_hi)
        vsep = _separate_double(c4, g5, u, vstar, side, binfo["lo"], binfo["hi"],
                                rich, frozen)
        hsep = np.nan
        if vsep is not None:
            hsep, _ = _h_of(c4, g5, u, vsep, frozen)
        if np.isfinite(hsep) and abs(hsep) / col_scale <= refine_tol:
            vstar = vsep
            res = abs(hsep) / col_scale
        elif _pair_at(c4, g5, u, vstar) > 1e-4:
            # the coincident pair could not be exhibited as two distinct
            # solutions at this crossing, so it stays unconfirmed
            confirmed = False
    return float(vstar), float(res), bool(confirmed)


# ---------------------------------------------------------------------------
# curve tracing
# ---------------------------------------------------------------------------


@dataclass
class CurveTrace:
    """Polyline approximation of a degeneracy curve in the second image."""

    branches: list
    confirmed: list | None
    unit: str
    viewport: tuple

    def vertex_count(self):
        return int(sum(len(b) for b in self.branches))


def _link_columns(per_column, max_jump):
    """Greedy nearest-neighbour linking of per-column vertex lists into
    polyline branches; a vertex farther than max_jump from every open tail
    starts a new branch."""
    branches = []
    tails = []
    for pts in per_column:
        cands = []
        for ti, (bi, tx, ty) in enumerate(tails):
            for pj, p in enumerate(pts):
                d = hypot(p[0] - tx, p[1] - ty)
                if d <= max_jump:
                    cands.append((d, ti, pj))
        cands.sort(key=lambda z: z[0])
        used_t = set()
        used_p = set()
        new_tails = []
        for d, ti, pj in cands:
            if ti in used_t or pj in used_p:
                continue
            used_t.add(ti)
            used_p.add(pj)
            bi = tails[ti][0]
            branches[bi].append(pts[pj])
            new_tails.append((bi, pts[pj][0], pts[pj][1]))
        for pj, p in enumerate(pts):
            if pj in used_p:
                continue
            branches.append([p])
            new_tails.append((len(branches) - 1, p[0], p[1]))
        tails = new_tails
    return branches


def curve_scan(kind, c: CorrespondenceSet, viewport, columns, refine_tol=1e-3, rows=None,
               confirm=True, bisect_rel=1e-9):
    """Columnwise trace of the degeneracy curve for the last point of c.

    kind="fundamental": per column, the real roots of the degree-6 curve
    polynomial. kind="essential": per column, sign changes of the eliminant
    discriminant refined by bisection; vertices whose bracket also changes
    the real-solution count are marked confirmed (confirm=False skips that
    assessment, leaving the trace's confirmed field None; bisect_rel sets
    the per-cell relative bisection stop for cheaper, coarser vertices)."""
    x0, y0, x1, y1 = (float(v) for v in viewport)
    if not (x1 > x0 and y1 > y0) or columns < 2:
        raise InvalidInput("viewport must be a nonempty box and columns >= 2")
    us = np.linspace(x0, x1, int(columns))
    max_jump = 3.0 * (x1 - x0) / (int(columns) - 1)
    per_column = []
    if kind == "fundamental":
        if c.x.shape[0] != 7:
            raise InvalidInput("fundamental scan expects 7 point pairs")
        P = curve65_poly(c, center=(0.5 * (x0 + x1), 0.5 * (y0 + y1)),
                         scale=max(1.0, 0.5 * (x1 - x0), 0.5 * (y1 - y0)))
        if P.total_degree == 0 and np.all(P.coeffs == 0.0):
            raise EverywhereIllPosed("every placement of the last point is degenerate")
        for u in us:
            slice_poly = P.at_u(u)
            cs = slice_poly.coefficients
            cscale = np.max(np.abs(cs))
            pts = []
            if cscale > 0.0:
                for v, _ in real_roots(slice_poly):
                    if y0 <= v <= y1:
                        res = abs(slice_poly(v)) / cscale
                        if res <= refine_tol:
                            pts.append((float(u), float(v), float(res), True))
            per_column.append(pts)
        confirmed_default = None
    elif kind == "essential":
        if c.x.shape[0] != 5:
            raise InvalidInput("essential scan expects 5 point pairs")
        c4 = c.take([0, 1, 2, 3])
        c4rows = epipolar_rows(c4.x, c4.xbar)
        sv = np.linalg.svd(c4rows, compute_uv=False)
        if sv[3] <= _RANK_TOL * sv[0]:
            raise DegenerateFixedData("the four fixed correspondences are rank-deficient")
        g5 = c.x[4]
        if rows is None:
            rows = max(33, int(round(columns * (y1 - y0) / (x1 - x0))))
        vgrid = np.linspace(y0, y1, int(rows))
        Ns_grid, polys_grid, h_grid = _grid_polys(c4rows, g5, us, vgrid)
        col_nodes = []
        all_brackets = []
        for ci, u in enumerate(us):
            nodes, brackets = _column_brackets(ci, float(u), vgrid, Ns_grid[ci],
                                               polys_grid[ci], h_grid[ci], confirm)
            col_nodes.append(nodes)
            all_brackets.extend(brackets)
        if all_brackets:
            vstars, resids = _bisect_brackets(c4rows, g5, all_brackets, bisect_rel)
        for ci, u in enumerate(us):
            items = [(k, (float(u), v, r, conf)) for k, v, r, conf in col_nodes[ci]]
            for bi, b in enumerate(all_brackets):
                if b["col"] != ci:
                    continue
                res = resids[bi]
                if not np.isfinite(res) or res > refine_tol:
                    continue
                if confirm:
                    v, r, conf = _confirm_vertex(c4, g5, float(u), float(vstars[bi]),
                                                 float(res), b, refine_tol)
                else:
                    v, r, conf = float(vstars[bi]), float(res), None
                items.append((b["k"], (float(u), v, r, conf)))
            items.sort(key=lambda t: t[0])
            per_column.append([t[1] for t in items])
        confirmed_default = True if confirm else None
    else:
        raise InvalidInput(f"unknown kind {kind!r}")
    linked = _link_columns(per_column, max_jump)
    branches = [np.array([[p[0], p[1], p[2]] for p in br]) for br in linked]
    conf = None
    if confirmed_default is not None:
        conf = [np.array([bool(p[3]) for p in br]) for br in linked]
    return CurveTrace(branches, conf, c.unit, (x0, y0, x1, y1))


# ---------------------------------------------------------------------------
# distance to the curve
# ---------------------------------------------------------------------------


def _nearest_vertex_distance(trace, pt):
    best = np.inf
    for br in trace.branches:
        if len(br) == 0:
            continue
        d = np.hypot(br[:, 0] - pt[0], br[:, 1] - pt[1])
        best = min(best, float(np.min(d)))
    return best


def distance_to_illposed(c: CorrespondenceSet, kind, *, refine_tol=1e-3, max_radius=1.0,
                         window_columns=9, window_rows=17, return_info=False,
                         stop_below=0.0):
    """Distance from the last second-image point to the degeneracy curve of
    the remaining data, in the units of the input coordinates.

    The seven-point case uses the first-order (Sampson) distance to the
    explicit curve polynomial. The five-point case scans windows of growing
    radius around the point and returns the nearest vertex found, then
    refines with shrinking windows; if no curve point appears within
    max_radius, that radius is returned as a lower bound (capped=True in
    the info dict). Scanned vertices are true curve points, so the result
    only ever overestimates: once it drops to stop_below the search stops
    early — useful for threshold queries that only need a reject decision."""
    pt = np.asarray(c.xbar[-1], dtype=float)
    info = {"capped": False, "fallback": False}
    if kind == "fundamental":
        P = curve65_poly(c)
        if np.all(P.coeffs == 0.0):
            raise EverywhereIllPosed("every placement of the last point is degenerate")
        d = sampson_distance(P, pt)
        if np.isfinite(d):
            if return_info:
                return d, info
            return d
        info["fallback"] = True
        w = max_radius / 16.0
        best = np.inf
        while True:
            us = np.linspace(pt[0] - w, pt[0] + w, window_columns)
            for u in us:
                for v, _ in real_roots(P.at_u(u)):
                    if abs(v - pt[1]) <= w:
                        best = min(best, hypot(u - pt[0], v - pt[1]))
            if best <= w:
                break
            if w >= max_radius:
                if not np.isfinite(best):
                    best = max_radius
                    info["capped"] = True
                break
            w = min(2.0 * w, max_radius)
        if return_info:
            return float(best), info
        return float(best)
    if kind != "essential":
        raise InvalidInput(f"unknown kind {kind!r}")
    if c.x.shape[0] != 5:
        raise InvalidInput("essential distance expects 5 point pairs")
    w = max_radius / 16.0
    best = np.inf

    def rescan(w):
        vp = (pt[0] - w, pt[1] - w, pt[0] + w, pt[1] + w)
        trace = curve_scan("essential", c, vp, window_columns,
                           refine_tol=refine_tol, rows=window_rows,
                           confirm=False, bisect_rel=1e-3)
        return _nearest_vertex_distance(trace, pt)

    while True:
        best = min(best, rescan(w))
        if best <= stop_below:
            if return_info:
                return float(best), info
            return float(best)
        if best <= w:
            break
        if w >= max_radius:
            if not np.isfinite(best):
                best = max_radius
                info["capped"] = True
            break
        w = min(4.0 * w, max_radius)
    # Adjacent crossings closer together than a grid cell cancel and hide
    # nearer curve points, so re-scan shrinking windows around the query
    # until the resolution outruns the best distance found.
    if np.isfinite(best) and not info["capped"]:
        while w > max(best / 16.0, 1e-4 * max_radius) and best > 0.0:
            w /= 4.0
            best = min(best, rescan(w))
            if best <= stop_below:
                break
    if return_info:
        return float(best), info
    return float(best)
