"""Minimal two-view solvers.

The 7-point solver parameterizes the constraint-matrix kernel by signed
maximal minors (Pluecker coordinates) and intersects the resulting matrix
pencil with the rank-2 hypersurface via a cubic. The 5-point solver expands
the determinant and trace cubic constraints over a 4-dimensional kernel,
eliminates by Gauss-Jordan reduction in graded monomial order, and reads the
solutions off a degree-10 univariate polynomial.

Both expose their internal polynomials: the pencil cubic and the degree-10
eliminant feed the conditioning and ill-posedness modules.
"""

from itertools import combinations

import numpy as np

from .errors import EliminationFailure, InvalidInput, NotEssential, RankDeficientData
from .numerics import UnivariatePoly, real_roots
from .scene import EpipolarModel, canonicalize_model, epipolar_matrix, epipolar_rows

_RANK_TOL = 1e-12
_DEDUP_TOL = 1e-8

# graded monomial order in (x, y, z) used by the 5-point elimination; the
# first ten monomials are the Gauss-Jordan pivots, the remaining ten stay in
# the reduced tails. Pairs (x^2 z, x^2), (y^2 z, y^2), (xyz, xy) are adjacent
# so that "row_p - z * row_q" eliminates everything of degree > 1 in x, y.
_MONOMIALS = [
    (3, 0, 0), (0, 3, 0), (2, 1, 0), (1, 2, 0), (2, 0, 1),
    (2, 0, 0), (0, 2, 1), (0, 2, 0), (1, 1, 1), (1, 1, 0),
    (1, 0, 2), (1, 0, 1), (1, 0, 0), (0, 1, 2), (0, 1, 1),
    (0, 1, 0), (0, 0, 3), (0, 0, 2), (0, 0, 1), (0, 0, 0),
]
_MONOMIAL_INDEX = {m: k for k, m in enumerate(_MONOMIALS)}


def _build_projection():
    """64 x 20 matrix folding an (i,j,k) product-coefficient tensor over the
    variables (x, y, z, 1) onto the graded monomial basis."""
    P = np.zeros((64, 20))
    for i in range(4):
        for j in range(4):
            for k in range(4):
                expo = [0, 0, 0]
                for v in (i, j, k):
                    if v < 3:
                        expo[v] += 1
                P[16 * i + 4 * j + k, _MONOMIAL_INDEX[tuple(expo)]] = 1.0
    return P


_P64 = _build_projection()
_EPS3 = np.zeros((3, 3, 3))
for _a, _b, _c, _s in [(0, 1, 2, 1), (1, 2, 0, 1), (2, 0, 1, 1),
                       (0, 2, 1, -1), (2, 1, 0, -1), (1, 0, 2, -1)]:
    _EPS3[_a, _b, _c] = _s

_PAIRS_9 = list(combinations(range(9), 2))
_KEEP_COLS = np.array([[c for c in range(9) if c not in pair] for pair in _PAIRS_9])


class Solve7Result:
    __slots__ = ("solutions", "cubic", "basis")

    def __init__(self, solutions, cubic, basis):
        self.solutions = solutions
        self.cubic = cubic
        self.basis = basis


class Solve5Result:
    __slots__ = ("solutions", "poly10", "nullspace_basis")

    def __init__(self, solutions, poly10, nullspace_basis):
        self.solutions = solutions
        self.poly10 = poly10
        self.nullspace_basis = nullspace_basis


def _canonical_distance(A, B):
    return min(np.linalg.norm(A - B), np.linalg.norm(A + B))


def _dedup(models):
    kept = []
    for M in models:
        if all(_canonical_distance(M.M, K.M) > _DEDUP_TOL for K in kept):
            kept.append(M)
    return kept


# ------------------------------------------------------------------ 7-point


def signed_minors(L):
    """Antisymmetric 9x9 array of signed maximal minors of a 7x9 matrix.

    m[i, j] = (-1)^(i+j) det(L with columns i, j dropped), for i < j; these
    are the Pluecker coordinates of the kernel: each row m[i, :] lies in
    ker(L).
    """
    dets = np.linalg.det(L[:, _KEEP_COLS].transpose(1, 0, 2))
    m = np.zeros((9, 9))
    for (i, j), d in zip(_PAIRS_9, dets):
        v = (-1.0) ** (i + j) * d
        m[i, j] = v
        m[j, i] = -v
    return m


def _pencil_cubic(F1, F2):
    """Ascending coefficients of det(t*F1 + F2) by multilinear expansion."""
    coeffs = np.zeros(4)
    for mask in range(8):
        cols = [F1[:, k] if (mask >> k) & 1 else F2[:, k] for k in range(3)]
        coeffs[bin(mask).count("1")] += np.linalg.det(np.column_stack(cols))
    return coeffs


def solve_7pt(c):
    """All rank-2 matrices in the kernel pencil of 7 correspondences."""
    L = epipolar_matrix(c)
    if L.shape[0] != 7:
        raise InvalidInput("solve_7pt expects exactly 7 correspondences")
    sv = np.linalg.svd(L, compute_uv=False)
    if sv[6] <= _RANK_TOL * sv[0]:
        raise RankDeficientData("constraint matrix has rank < 7")
    m = signed_minors(L)
    flat = np.abs(m)
    i, j = np.unravel_index(np.argmax(flat), flat.shape)
    i, j = min(i, j), max(i, j)
    piv = m[i, j]
    if piv == 0.0:
        raise RankDeficientData("all maximal minors vanish")
    scale = np.sqrt(abs(piv))
    F1 = (m[i, :] / scale).reshape(3, 3)
    F2 = (m[j, :] / scale).reshape(3, 3)
    cubic = UnivariatePoly._raw(_pencil_cubic(F1, F2))
    solutions = []
    for t, _ in real_roots(cubic):
        try:
            solutions.append(EpipolarModel("fundamental", t * F1 + F2))
        except InvalidInput:
            continue
    if abs(np.linalg.det(F1)) <= 1e-12 * np.linalg.norm(F1) ** 3:
        try:
            solutions.append(EpipolarModel("fundamental", F1))
        except InvalidInput:
            pass
    return Solve7Result(_dedup(solutions), cubic, (F1, F2))


# ------------------------------------------------------------------ 5-point


def _nullspace_basis(L, basis_ref=None):
    _, sv, Vt = np.linalg.svd(L)
    if sv[4] <= _RANK_TOL * sv[0]:
        raise RankDeficientData("constraint matrix has rank < 5")
    N = Vt[5:9]
    if basis_ref is None:
        for r in range(4):
            k = np.argmax(np.abs(N[r]))
            if N[r, k] < 0:
                N[r] = -N[r]
    else:
        M = N @ np.asarray(basis_ref).T
        U, _, Wt = np.linalg.svd(M)
        N = (Wt.T @ U.T) @ N
    return N


def _cubic_equation_matrix(N):
    """10 x 20 coefficient matrix of det(E) and the trace identity over the
    kernel combination E = x*E1 + y*E2 + z*E3 + E4."""
    C = N.reshape(4, 3, 3).transpose(1, 2, 0)  # C[a, b, k]
    det64 = np.einsum("abc,ai,bj,ck->ijk", _EPS3, C[:, 0, :], C[:, 1, :], C[:, 2, :])
    T1 = np.einsum("aci,dcj,dbk->abijk", C, C, C)
    S = np.einsum("aci,acj->ij", C, C)
    T2 = np.einsum("ij,abk->abijk", S, C)
    trace64 = (2.0 * T1 - T2).reshape(9, 64)
    rows = np.vstack([det64.reshape(1, 64), trace64])
    return rows @ _P64


def _eliminate(A):
    """Gauss-Jordan solve of the pivot block; returns the reduced tails."""
    try:
        R = np.linalg.solve(A[:, :10], A[:, 10:])
    except np.linalg.LinAlgError as e:
        raise EliminationFailure("pivot block of the cubic system is singular") from e
    if not np.all(np.isfinite(R)):
        raise EliminationFailure("elimination produced non-finite coefficients")
    return R


def _action_rows(R):
    """3x3 matrix of z-polynomials B with B(z) @ (x, y, 1)^T = 0.

    Row pairs (x^2 z, x^2), (y^2 z, y^2), (xyz, xy) of the reduced system are
    combined as tail_p - z * tail_q, cancelling the pivot monomials.
    """
    B = []
    for p, q in ((4, 5), (6, 7), (8, 9)):
        # tail columns: [xz^2, xz, x, yz^2, yz, y, z^3, z^2, z, 1]
        ap = np.array([R[p, 2], R[p, 1], R[p, 0]])
        aq = np.array([R[q, 2], R[q, 1], R[q, 0]])
        bp = np.array([R[p, 5], R[p, 4], R[p, 3]])
        bq = np.array([R[q, 5], R[q, 4], R[q, 3]])
        cp = np.array([R[p, 9], R[p, 8], R[p, 7], R[p, 6]])
        cq = np.array([R[q, 9], R[q, 8], R[q, 7], R[q, 6]])
        a = np.concatenate([ap, [0.0]]) - np.concatenate([[0.0], aq])
        b = np.concatenate([bp, [0.0]]) - np.concatenate([[0.0], bq])
        cc = np.concatenate([cp, [0.0]]) - np.concatenate([[0.0], cq])
        B.append([a, b, cc])
    return B


def _det_poly10(B):
    conv = np.convolve
    p1 = conv(B[1][2], B[0][1]) - conv(B[0][2], B[1][1])
    p2 = conv(B[0][2], B[1][0]) - conv(B[1][2], B[0][0])
    p3 = conv(B[0][0], B[1][1]) - conv(B[0][1], B[1][0])
    out = np.zeros(11)
    for p, tail in ((p1, B[2][0]), (p2, B[2][1]), (p3, B[2][2])):
        full = conv(p, tail)
        out[: len(full)] += full
    return out


def _essential_residuals(E):
    T = 2.0 * E @ E.T @ E - np.trace(E @ E.T) * E
    return np.concatenate([[_det3(E)], T.ravel()])


def _det3(E):
    return (
        E[0, 0] * (E[1, 1] * E[2, 2] - E[1, 2] * E[2, 1])
        - E[0, 1] * (E[1, 0] * E[2, 2] - E[1, 2] * E[2, 0])
        + E[0, 2] * (E[1, 0] * E[2, 1] - E[1, 1] * E[2, 0])
    )


def _adjugate(E):
    out = np.empty((3, 3))
    for a in range(3):
        for b in range(3):
            r = [k for k in range(3) if k != b]
            s = [k for k in range(3) if k != a]
            out[a, b] = (-1.0) ** (a + b) * (
                E[r[0], s[0]] * E[r[1], s[1]] - E[r[0], s[1]] * E[r[1], s[0]]
            )
    return out


def _residual_jacobian(E, directions):
    adjT = _adjugate(E).T
    cols = []
    for D in directions:
        ddet = np.sum(adjT.T * D)  # tr(adj(E) @ D)
        dT = (
            2.0 * (D @ E.T @ E + E @ D.T @ E + E @ E.T @ D)
            - 2.0 * np.trace(D @ E.T) * E
            - np.trace(E @ E.T) * D
        )
        cols.append(np.concatenate([[ddet], dT.ravel()]))
    return np.column_stack(cols)


def _polish_xyz(xyz, basis_mats):
    E1, E2, E3, E4 = basis_mats
    xyz = np.asarray(xyz, dtype=float)

    def make(v):
        return v[0] * E1 + v[1] * E2 + v[2] * E3 + E4

    E = make(xyz)
    r = _essential_residuals(E)
    target = 1e-14 * (1.0 + np.max(np.abs(E))) ** 3
    for _ in range(10):
        if np.linalg.norm(r) <= target:
            break
        J = _residual_jacobian(E, (E1, E2, E3))
        try:
            step = np.linalg.solve(J.T @ J, -(J.T @ r))
        except np.linalg.LinAlgError:
            break
        improved = False
        for _ in range(6):
            cand = xyz + step
            Ec = make(cand)
            rc = _essential_residuals(Ec)
            if np.linalg.norm(rc) < np.linalg.norm(r):
                xyz, E, r = cand, Ec, rc
                improved = True
                break
            step = step / 2.0
        if not improved:
            break
    return xyz, E


def _solve_from_basis(N):
    A = _cubic_equation_matrix(N)
    R = _eliminate(A)
    B = _action_rows(R)
    poly10 = UnivariatePoly._raw(_det_poly10(B))
    basis_mats = [N[k].reshape(3, 3) for k in range(4)]
    # pad the 3x3 grid of z-polynomials into one (3, 3, 5) tensor
    Bcoef = np.zeros((3, 3, 5))
    for a in range(3):
        for b in range(3):
            Bcoef[a, b, : len(B[a][b])] = B[a][b]
    solutions = []
    for z, _ in real_roots(poly10):
        Bz = Bcoef[..., 4]
        for k in (3, 2, 1, 0):
            Bz = Bz * z + Bcoef[..., k]
        _, _, Vt = np.linalg.svd(Bz)
        v = Vt[2]
        if abs(v[2]) <= 1e-12 * np.linalg.norm(v):
            continue
        xyz0 = np.array([v[0] / v[2], v[1] / v[2], z])
        _, E = _polish_xyz(xyz0, basis_mats)
        try:
            solutions.append(EpipolarModel("essential", E))
        except (NotEssential, InvalidInput):
            continue
    return _dedup(solutions), poly10, basis_mats


def solve_5pt(c):
    """All essential matrices consistent with 5 correspondences."""
    L = epipolar_matrix(c)
    if L.shape[0] != 5:
        raise InvalidInput("solve_5pt expects exactly 5 correspondences")
    N = _nullspace_basis(L)
    solutions, poly10, basis_mats = _solve_from_basis(N)
    return Solve5Result(solutions, poly10, basis_mats)


def scanline_poly10(c4, g5, gbar5, basis_ref=None):
    """Degree-10 eliminant for 4 fixed correspondences plus a probe pair,
    with the kernel basis optionally aligned to a reference for continuity.

    Returns (polynomial, basis) so that a scan can chain the alignment.
    """
    L4 = epipolar_rows(c4.x, c4.xbar)
    probe = epipolar_rows(np.asarray(g5, dtype=float), np.asarray(gbar5, dtype=float))
    L = np.vstack([L4, probe])
    N = _nullspace_basis(L, basis_ref=basis_ref)
    A = _cubic_equation_matrix(N)
    R = _eliminate(A)
    poly10 = UnivariatePoly._raw(_det_poly10(_action_rows(R)))
    return poly10, N


def poly10_at(c4, g5, gbar5, basis_ref=None):
    """The degree-10 eliminant of the assembled 5-tuple (see scanline_poly10)."""
    poly, _ = scanline_poly10(c4, g5, gbar5, basis_ref=basis_ref)
    return poly
