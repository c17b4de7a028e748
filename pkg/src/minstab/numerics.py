"""Small dense linear-algebra and polynomial kernels shared by the other modules."""

import numpy as np

from .errors import Degenerate, InvalidInput, NonFinite, NotSPD

# Relative threshold below which a leading coefficient counts as vanished.
_LEAD_TOL = 1e-13
# Imaginary parts below this (relative) threshold are treated as real roots.
_IMAG_TOL = 1e-8
# Dense bivariate storage is capped at this total degree.
_BIPOLY_MAX_DEGREE = 8


class UnivariatePoly:
    """Real univariate polynomial, coefficients stored in ascending degree."""

    __slots__ = ("coefficients",)

    def __init__(self, coefficients):
        c = np.atleast_1d(np.asarray(coefficients, dtype=float)).ravel()
        if c.size == 0:
            c = np.zeros(1)
        # trim exact trailing (highest-degree) zeros; keep tiny values as-is
        n = c.size
        while n > 1 and c[n - 1] == 0.0:
            n -= 1
        self.coefficients = c[:n].copy()

    @classmethod
    def _raw(cls, coefficients):
        """Build without trimming (used when the stored length is meaningful)."""
        obj = cls.__new__(cls)
        obj.coefficients = np.atleast_1d(np.asarray(coefficients, dtype=float)).ravel().copy()
        return obj

    @property
    def degree(self):
        if self.is_zero:
            return -1
        return self.coefficients.size - 1

    @property
    def is_zero(self):
        return bool(np.all(self.coefficients == 0.0))

    def __call__(self, z):
        # Horner evaluation; works on scalars and arrays
        z = np.asarray(z, dtype=float)
        acc = np.zeros_like(z, dtype=float)
        for c in self.coefficients[::-1]:
            acc = acc * z + c
        return acc if acc.ndim else float(acc)

    def derivative(self):
        c = self.coefficients
        if c.size <= 1:
            return UnivariatePoly([0.0])
        return UnivariatePoly(c[1:] * np.arange(1, c.size))

    def __repr__(self):
        return f"UnivariatePoly({self.coefficients.tolist()})"


def _as_poly(p):
    return p if isinstance(p, UnivariatePoly) else UnivariatePoly(p)


def _effective_coeffs(p):
    """Coefficients with relatively negligible leading terms dropped."""
    c = p.coefficients
    if not np.all(np.isfinite(c)):
        raise NonFinite("polynomial coefficients must be finite")
    scale = np.max(np.abs(c))
    if scale == 0.0:
        raise Degenerate("zero polynomial")
    n = c.size
    while n > 1 and abs(c[n - 1]) <= _LEAD_TOL * scale:
        n -= 1
    return c[:n], scale


def real_roots(p, polish_tol=1e-12):
    """All real roots of p as (value, multiplicity) pairs, values ascending.

    Roots come from companion-matrix eigenvalues, are polished by Newton
    steps until |p(r)| <= polish_tol * max|coeff| (or no further progress),
    and numerically coincident values are merged into one entry with a
    multiplicity count.
    """
    p = _as_poly(p)
    c, scale = _effective_coeffs(p)
    if c.size <= 1:
        return []
    eigen = np.roots(c[::-1] / scale)
    real = eigen.real[np.abs(eigen.imag) <= _IMAG_TOL * (1.0 + np.abs(eigen.real))]
    if real.size == 0:
        return []
    cs = c / scale
    dcs = cs[1:] * np.arange(1, cs.size)
    target = polish_tol

    def horner(coeffs, x):
        acc = np.full_like(x, coeffs[-1])
        for a in coeffs[-2::-1]:
            acc = acc * x + a
        return acc

    # vectorized Newton polish over all candidate roots at once
    best = real.copy()
    best_val = np.abs(horner(cs, best))
    x = real.copy()
    stalled = 0
    for _ in range(30):
        if np.all(best_val <= target):
            break
        d = horner(dcs, x)
        ok = (d != 0.0) & np.isfinite(d)
        step = np.where(ok, horner(cs, x) / np.where(ok, d, 1.0), 0.0)
        x = x - step
        fx = np.abs(horner(cs, x))
        better = fx < best_val
        best = np.where(better, x, best)
        best_val = np.where(better, fx, best_val)
        stalled = 0 if np.any(better) else stalled + 1
        if stalled >= 2 or np.all(np.abs(step) <= 1e-17 * (1.0 + np.abs(x))):
            break
    polished = sorted(best.tolist())
    # merge numerically coincident representatives
    reps = []
    for r in polished:
        if reps and abs(r - reps[-1]) <= 1e-6 * (1.0 + abs(r)):
            reps[-1] = 0.5 * (reps[-1] + r)
        else:
            reps.append(r)
    # multiplicity: assign every eigenvalue (complex included) to its nearest
    # representative, then count the assignees that sit within the radius a
    # root of that multiplicity perturbs eigenvalues to (~eps^(1/m))
    assigned = {i: [] for i in range(len(reps))}
    reps_arr = np.asarray(reps)
    for z in eigen:
        i = int(np.argmin(np.abs(z - reps_arr)))
        assigned[i].append(abs(z - reps_arr[i]))
    out = []
    for i, r in enumerate(reps):
        dists = sorted(assigned[i])
        m = 1
        for k in range(1, len(dists) + 1):
            if dists[k - 1] <= 10.0 * (1.0 + abs(r)) * (1e-12) ** (1.0 / (k + 1)):
                m = k
        out.append((float(r), int(m)))
    return out


def discriminant(p):
    """Polynomial discriminant via the Sylvester resultant of p and p'.

    Normalization: disc(p) = (-1)^(n(n-1)/2) * Res(p, p') / lc(p). The sign
    flips exactly when a pair of real roots merges and reappears as a complex
    pair, which is what downstream bisection consumes.
    """
    p = _as_poly(p)
    c_full = p.coefficients
    if not np.all(np.isfinite(c_full)):
        raise NonFinite("polynomial coefficients must be finite")
    scale = np.max(np.abs(c_full))
    if scale == 0.0:
        raise Degenerate("zero polynomial")
    if abs(c_full[-1]) <= _LEAD_TOL * scale:
        raise Degenerate("leading coefficient vanishes relative to the coefficient scale")
    n = c_full.size - 1
    if n < 2:
        raise InvalidInput("discriminant requires degree >= 2")
    c = c_full / scale
    dc = c[1:] * np.arange(1, c.size)
    # Sylvester matrix of p (degree n) and p' (degree n-1), descending rows
    size = 2 * n - 1
    syl = np.zeros((size, size))
    pd = c[::-1]
    dpd = dc[::-1]
    for i in range(n - 1):
        syl[i, i : i + n + 1] = pd
    for i in range(n):
        syl[n - 1 + i, i : i + n] = dpd
    res = np.linalg.det(syl)
    sign = -1.0 if (n * (n - 1) // 2) % 2 else 1.0
    disc_scaled = sign * res / c[-1]
    return float(disc_scaled * scale ** (2 * n - 2))


def spd_sqrt(G):
    """Symmetric square root of a symmetric positive-definite matrix."""
    G = np.asarray(G, dtype=float)
    if not np.all(np.isfinite(G)):
        raise NonFinite("matrix entries must be finite")
    Gs = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(Gs)
    if w.min() <= 0.0:
        raise NotSPD(f"smallest eigenvalue {w.min():.3e} is not positive")
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


def smallest_singular_value(A):
    """sigma_min(A); zero exactly when A is rank-deficient."""
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix entries must be finite")
    return float(np.linalg.svd(A, compute_uv=False)[-1])


class BivariatePoly:
    """Dense bivariate polynomial sum_ij c[i,j] u^i v^j with small total degree."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim != 2:
            raise ValueError("coefficient grid must be 2-D")
        nz = np.argwhere(c != 0.0)
        deg = int((nz.sum(axis=1)).max()) if nz.size else 0
        if deg > _BIPOLY_MAX_DEGREE:
            raise ValueError(f"total degree {deg} exceeds the dense cap {_BIPOLY_MAX_DEGREE}")
        self.coeffs = c.copy()

    @property
    def total_degree(self):
        nz = np.argwhere(self.coeffs != 0.0)
        return int((nz.sum(axis=1)).max()) if nz.size else 0

    def at_u(self, u):
        """Restrict to a fixed u: univariate polynomial in v."""
        c = self.coeffs
        upow = np.power(float(u), np.arange(c.shape[0]))
        return UnivariatePoly(upow @ c)

    def __repr__(self):
        return f"BivariatePoly(shape={self.coeffs.shape}, total_degree={self.total_degree})"


def bipoly_eval_grad(P, u, v):
    """(P(u,v), dP/du, dP/dv); u and v may be scalars or broadcastable arrays."""
    c = P.coeffs if isinstance(P, BivariatePoly) else np.asarray(P, dtype=float)
    nu, nv = c.shape
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    scalar = u.ndim == 0 and v.ndim == 0
    iu = np.arange(nu)
    iv = np.arange(nv)
    up = np.power(u[..., None], iu)
    vp = np.power(v[..., None], iv)
    dup = np.zeros_like(up)
    dup[..., 1:] = up[..., :-1] * iu[1:]
    dvp = np.zeros_like(vp)
    dvp[..., 1:] = vp[..., :-1] * iv[1:]
    val = np.einsum("...i,ij,...j->...", up, c, vp)
    du = np.einsum("...i,ij,...j->...", dup, c, vp)
    dv = np.einsum("...i,ij,...j->...", up, c, dvp)
    if scalar:
        return float(val), float(du), float(dv)
    return val, du, dv
