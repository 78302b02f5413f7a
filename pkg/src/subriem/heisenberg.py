"""Closed-form geodesics, Jacobi propagator and conjugate locus of the
Heisenberg group.

Everything here is evaluated from explicit formulas (trigonometric in
theta = alpha0 * t), making this module the exact oracle for the numeric flow.
Terms that are 0/0 at alpha0 = 0 are computed through scalar kernels with
Taylor branches near theta = 0 (cut 1e-4, or 1e-2 with longer series for the
kernels whose direct evaluation cancels at second order), so all maps extend
smoothly to alpha0 = 0.

Notation, with base point (x0, y0, tau0) and covector (u0, v0, alpha0):

    xi0  = u0 - alpha0*y0/2        eta0  = v0 + alpha0*x0/2
    xi0t = u0 + alpha0*y0/2        eta0t = v0 - alpha0*x0/2
    z0 = x0 + i y0   w0 = u0 + i v0   zeta0 = xi0 + i eta0

The fiber Hamiltonian is H = |zeta0|^2 / 2.  A covector with H != 0 is
conjugate iff phi(alpha0) = alpha0 sin(alpha0) + 2 cos(alpha0) - 2 = 0 and
alpha0 != 0; the kernel of the exponential differential is one-dimensional,
tangent to the conjugate plane on the sin(alpha0) = 0 branch (class C1,
kernel (-eta0, xi0, 0)) and transverse on the tan(alpha0/2) = alpha0/2
branch (class C0, kernel ((eta0+y0)/2, -(xi0+x0)/2, 1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SearchFailureError, ZeroHamiltonianError

_TAYLOR_CUT = 1e-4

#: tolerance on phi(alpha0) for declaring a covector conjugate
CONJUGATE_TOL = 1e-10


# ---------------------------------------------------------------------------
# scalar kernels with Taylor branches (all smooth through theta = 0)

def _k_f1(th):
    """(1 - cos th) / th"""
    if abs(th) < _TAYLOR_CUT:
        return th / 2 - th ** 3 / 24
    return (1 - math.cos(th)) / th


def _k_f2(th):
    """sin th / th"""
    if abs(th) < _TAYLOR_CUT:
        return 1 - th ** 2 / 6 + th ** 4 / 120
    return math.sin(th) / th


def _k_f1p(th):
    """(th sin th - (1 - cos th)) / th^2  (derivative of _k_f1)

    Direct evaluation loses eps/th^2 absolutely, so the (longer) series is
    used on a wider band than for the first-order kernels.
    """
    if abs(th) < 1e-2:
        return 0.5 - th ** 2 / 8 + th ** 4 / 144 - th ** 6 / 5760
    return (th * math.sin(th) - (1 - math.cos(th))) / th ** 2


def _k_g(th):
    """(th cos th - sin th) / th^2  (derivative of _k_f2)"""
    if abs(th) < 1e-2:
        return -th / 3 + th ** 3 / 30 - th ** 5 / 840
    return (th * math.cos(th) - math.sin(th)) / th ** 2


def _k_s2(th):
    """(th - sin th) / th^2"""
    if abs(th) < _TAYLOR_CUT:
        return th / 6 - th ** 3 / 120
    return (th - math.sin(th)) / th ** 2


def _k_w(th):
    """(th (1 + cos th) - 2 sin th) / th^3"""
    if abs(th) < 1e-2:
        return -1 / 6 + th ** 2 / 40 - th ** 4 / 1008 + th ** 6 / 51840
    return (th * (1 + math.cos(th)) - 2 * math.sin(th)) / th ** 3


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeisCovector:
    """Base point and covector of the Heisenberg group, with derived quantities
    recomputed on access (never stored stale)."""

    base: tuple[float, float, float]
    cov: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "base", tuple(float(v) for v in self.base))
        object.__setattr__(self, "cov", tuple(float(v) for v in self.cov))
        if len(self.base) != 3 or len(self.cov) != 3:
            raise ValueError("base and covector must be 3-vectors")

    @property
    def alpha0(self) -> float:
        return self.cov[2]

    @property
    def xi0(self) -> float:
        return self.cov[0] - self.alpha0 * self.base[1] / 2

    @property
    def xi0_tilde(self) -> float:
        return self.cov[0] + self.alpha0 * self.base[1] / 2

    @property
    def eta0(self) -> float:
        return self.cov[1] + self.alpha0 * self.base[0] / 2

    @property
    def eta0_tilde(self) -> float:
        return self.cov[1] - self.alpha0 * self.base[0] / 2

    @property
    def z0(self) -> complex:
        return complex(self.base[0], self.base[1])

    @property
    def w0(self) -> complex:
        """Covector components u0 + i v0 (the complex variable of the closed forms)."""
        return complex(self.cov[0], self.cov[1])

    @property
    def zeta0(self) -> complex:
        """Horizontal momenta xi0 + i eta0; |zeta0|^2 = 2 H."""
        return complex(self.xi0, self.eta0)

    @property
    def hamiltonian(self) -> float:
        return 0.5 * abs(self.zeta0) ** 2


def phi_conjugate(alpha: float) -> float:
    """Conjugate-point indicator phi(alpha) = alpha sin alpha + 2 cos alpha - 2."""
    return alpha * math.sin(alpha) + 2 * math.cos(alpha) - 2


def heis_exp_closed(hc: HeisCovector, t: float):
    """Closed-form extremal: returns (z(t), tau(t), w(t), alpha) with
    z = x + iy the configuration, w = u + iv the linear momenta."""
    tau0 = hc.base[2]
    al = hc.cov[2]
    z0, w0, zeta0 = hc.z0, hc.w0, hc.zeta0
    th = al * t
    s, c = math.sin(th), math.cos(th)
    z = z0 + t * zeta0 * complex(_k_f2(th), _k_f1(th))
    tau = (tau0
           + 0.5 * (z0.conjugate() * w0).imag * t
           + 0.5 * t * (z0.conjugate() * w0).real * _k_f1(th)
           + abs(z0) ** 2 * (th + s) / 8
           + 0.5 * abs(w0) ** 2 * t * t * _k_s2(th))
    w = w0 + 0.5 * zeta0 * complex(c - 1.0, s)
    return z, tau, w, al


def heis_state(hc: HeisCovector, t: float) -> np.ndarray:
    """Phase state (x, y, tau, u, v, alpha) at time t, (q, p) ordering."""
    z, tau, w, al = heis_exp_closed(hc, t)
    return np.array([z.real, z.imag, tau, w.real, w.imag, al])


def heis_exp_point(hc: HeisCovector, t: float = 1.0) -> np.ndarray:
    """Configuration (x, y, tau) reached at time t."""
    z, tau, _, _ = heis_exp_closed(hc, t)
    return np.array([z.real, z.imag, tau])


def heis_group_law(g, h) -> np.ndarray:
    """Group product (x,y,tau)*(x',y',tau') = (x+x', y+y', tau+tau' - Im[z conj(z')]/2)."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    zg = complex(g[0], g[1])
    zh = complex(h[0], h[1])
    return np.array([g[0] + h[0], g[1] + h[1],
                     g[2] + h[2] - 0.5 * (zg * zh.conjugate()).imag])


def heis_inverse(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    return -g


def heis_left_translation_differential(g) -> np.ndarray:
    """Differential at the identity of left translation by g (a 3x3 matrix)."""
    g = np.asarray(g, dtype=float)
    mat = np.eye(3)
    mat[2, 0] = -g[1] / 2
    mat[2, 1] = g[0] / 2
    return mat


def heis_jacobi_matrix(hc: HeisCovector, t: float) -> np.ndarray:
    """Fundamental matrix M(t) of the linearized flow, in (p, x) block order
    (rows and columns ordered du, dv, dalpha, dx, dy, dtau); M(0) = I."""
    x0, y0, _ = hc.base
    u0, v0, al = hc.cov
    xi0, eta0 = hc.xi0, hc.eta0
    z0, w0 = hc.z0, hc.w0
    th = al * t
    s, c = math.sin(th), math.cos(th)
    f1k, f2k = _k_f1(th), _k_f2(th)
    f1p, gk = _k_f1p(th), _k_g(th)
    s2k, wk = _k_s2(th), _k_w(th)

    f1 = (y0 - (2 * t * eta0 + y0) * c - (2 * t * xi0 + x0) * s) / 4
    f2 = (-x0 + (2 * t * xi0 + x0) * c - (2 * t * eta0 + y0) * s) / 4
    f3 = t * t * (u0 * gk - v0 * f1p) - 0.5 * t * (x0 * s + y0 * c)
    f4 = t * t * (u0 * f1p + v0 * gk) + 0.5 * t * (x0 * c - y0 * s)
    f5 = -0.5 * y0 * t + 0.5 * x0 * t * f1k + u0 * t * t * s2k
    f6 = 0.5 * x0 * t + 0.5 * y0 * t * f1k + v0 * t * t * s2k
    zw = (z0.conjugate() * w0).real
    f7 = (0.5 * t * t * zw * f1p + t * abs(z0) ** 2 * (1 + c) / 8
          - 0.5 * t ** 3 * abs(w0) ** 2 * wk)
    f8 = 0.5 * t * eta0 + 0.5 * u0 * t * f1k + 0.25 * x0 * s
    f9 = -0.5 * t * xi0 + 0.5 * v0 * t * f1k + 0.25 * y0 * s

    half = (1 + c) / 2
    return np.array([
        [half, -s / 2, f1, -al * s / 4, al * (1 - c) / 4, 0.0],
        [s / 2, half, f2, -al * (1 - c) / 4, -al * s / 4, 0.0],
        [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        [t * f2k, -t * f1k, f3, half, -s / 2, 0.0],
        [t * f1k, t * f2k, f4, s / 2, half, 0.0],
        [f5, f6, f7, f8, f9, 1.0],
    ])


def heis_d_exp(hc: HeisCovector) -> np.ndarray:
    """Closed-form Jacobian of the exponential map at the covector of ``hc``:
    the 3x3 map d(lambda0) -> dq(1), i.e. the bottom-left block of M(1)."""
    return heis_jacobi_matrix(hc, 1.0)[3:, :3]


def heis_frame_blocks(hc: HeisCovector, t: float):
    """Closed-form frame matrices (A, B, R) of the Jacobi system along the
    extremal, in the global Darboux frame.

    The third column of B is expressed through the geodesic position
    (B13 = -y(t)/2, B23 = x(t)/2, B33 = |z(t)|^2/4), which equals the
    trigonometric display with the xi/eta shorthands.
    """
    u0, v0, al = hc.cov
    xi0, eta0 = hc.xi0, hc.eta0
    xi0t, eta0t = hc.xi0_tilde, hc.eta0_tilde
    th = al * t
    s, c = math.sin(th), math.cos(th)
    r_mat = np.diag([-al * al / 4, -al * al / 4, 0.0])
    a_mat = np.array([
        [0.0, -al / 2, 0.0],
        [al / 2, 0.0, 0.0],
        [-(eta0t - 3 * (eta0 * c + xi0 * s)) / 4,
         (xi0t - 3 * (xi0 * c - eta0 * s)) / 4, 0.0],
    ])
    z, _, _, _ = heis_exp_closed(hc, t)
    x_t, y_t = z.real, z.imag
    b_mat = np.array([
        [1.0, 0.0, -y_t / 2],
        [0.0, 1.0, x_t / 2],
        [-y_t / 2, x_t / 2, (x_t * x_t + y_t * y_t) / 4],
    ])
    return a_mat, b_mat, r_mat


# ---------------------------------------------------------------------------
# conjugate locus

@dataclass(frozen=True)
class ConjugateRoot:
    alpha: float
    branch: str  # "sin-zero" (alpha = 2 pi k) or "sin-nonzero" (tan(a/2) = a/2)


def _bisect(fun, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 200) -> float:
    flo, fhi = fun(lo), fun(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise ValueError("bisection bracket does not straddle a root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = fun(mid)
        if fmid == 0.0 or hi - lo < tol:
            return mid
        if flo * fmid < 0:
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def heis_conjugate_roots(limit: float) -> list[ConjugateRoot]:
    """All positive roots of phi(alpha) = alpha sin alpha + 2 cos alpha - 2 in
    (0, limit], sorted, tagged by branch; refined by bisection to 1e-12.

    phi factors as 2 sin(a/2) [a cos(a/2) - 2 sin(a/2)], so the roots are
    alpha = 2 pi k and alpha = 2x with tan x = x, x in (k pi, k pi + pi/2).
    """
    if limit <= 0:
        raise ValueError("limit must be positive")
    roots: list[ConjugateRoot] = []
    k = 1
    while 2 * math.pi * k <= limit * (1 + 1e-15):
        roots.append(ConjugateRoot(2 * math.pi * k, "sin-zero"))
        k += 1
    j = 1
    g = lambda x: math.sin(x) - x * math.cos(x)
    while math.pi * j * 2 <= limit:  # alpha = 2x > 2 pi j: stop once past limit
        lo = math.pi * j + 1e-9
        hi = math.pi * j + math.pi / 2 - 1e-9
        x = _bisect(g, lo, hi, tol=1e-14)
        alpha = 2 * x
        if alpha <= limit * (1 + 1e-15):
            roots.append(ConjugateRoot(alpha, "sin-nonzero"))
        j += 1
    roots.sort(key=lambda r: r.alpha)
    return roots


#: first root of the conjugate condition with sin(alpha) != 0, i.e. the
#: smallest positive solution of tan(alpha/2) = alpha/2 (about 8.98681892)
ALPHA_STAR = 2 * _bisect(lambda x: math.sin(x) - x * math.cos(x),
                         math.pi + 1e-9, 1.5 * math.pi - 1e-9, tol=1e-15)


@dataclass(frozen=True)
class ConjugateClass:
    """Classification of a covector: 'C1' (kernel tangent to the conjugate
    plane, sin alpha0 = 0), 'C0' (fold, sin alpha0 != 0) or 'none'."""

    tag: str
    kernel: np.ndarray | None

    @property
    def is_conjugate(self) -> bool:
        return self.tag in ("C0", "C1")


def classify_conjugate(hc: HeisCovector, tol: float = CONJUGATE_TOL) -> ConjugateClass:
    """Classify a covector with H != 0 by the conjugate condition phi(alpha0) = 0.

    The kernel vectors are the exact kernels of the bottom-left block of M(1):
    span{(-eta0, xi0, 0)} on the sin-zero branch and
    span{((eta0+y0)/2, -(xi0+x0)/2, 1)} on the fold branch.
    """
    if hc.hamiltonian <= 1e-30:
        raise ZeroHamiltonianError("covector lies in the zero level of H")
    al = hc.alpha0
    if al == 0.0 or abs(phi_conjugate(al)) > tol:
        return ConjugateClass("none", None)
    k = round(al / (2 * math.pi))
    if k != 0 and abs(al - 2 * math.pi * k) <= 1e-8:
        kernel = np.array([-hc.eta0, hc.xi0, 0.0])
        return ConjugateClass("C1", kernel)
    x0, y0, _ = hc.base
    kernel = np.array([(hc.eta0 + y0) / 2, -(hc.xi0 + x0) / 2, 1.0])
    return ConjugateClass("C0", kernel)


def fold_derivative(hc: HeisCovector) -> float:
    """Transversality scalar of the fold: H(lambda0)/(2 alpha0^2) *
    [2 - (2 + alpha0^2) cos alpha0]; nonzero at every C0 conjugate covector.

    Its sign matches the t-derivative at t = 1 of det d_{t lambda0} exp
    (they differ by the positive factor 4 / alpha0^2).
    """
    al = hc.alpha0
    if al == 0.0:
        raise ValueError("fold derivative undefined at alpha0 = 0")
    return hc.hamiltonian / (2 * al * al) * (2 - (2 + al * al) * math.cos(al))


# ---------------------------------------------------------------------------
# non-injectivity

@dataclass(frozen=True)
class CollisionResult:
    lambda1: np.ndarray
    lambda2: np.ndarray
    image1: np.ndarray
    image2: np.ndarray
    gap: float
    separation: float
    circle_angle: float | None  # C1 case: angle walked along the kernel circle


def _kernel_circle(hc: HeisCovector):
    """Center and radius of the C1 kernel integral curve in the (u, v) plane."""
    x0, y0, _ = hc.base
    al = hc.alpha0
    center = complex(al * y0 / 2, -al * x0 / 2)
    return center, abs(hc.zeta0)


def find_collision(hc: HeisCovector, radius: float,
                   gap_tol: float = 1e-9, max_iter: int = 200,
                   class_tol: float = CONJUGATE_TOL) -> CollisionResult:
    """Two distinct covectors within ``radius`` of a conjugate covector with
    the same exponential image (gap <= gap_tol, separation >= radius/4).

    C1 covectors lie on a circle of constant |zeta0| and alpha0 = 2 pi k that
    the exponential collapses to one point; two points of the circle are
    returned.  C0 covectors are fold points: a damped Newton iteration on the
    transverse coordinates solves exp(lam0 + sA) = exp(lam0 - s2 A + b) for a
    straddling pair across the kernel direction A.

    ``class_tol`` loosens the conjugacy gate for inputs given with truncated
    digits; the gap requirement is enforced on the result either way.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    cls = classify_conjugate(hc, tol=class_tol)
    if not cls.is_conjugate:
        raise ValueError("find_collision requires a conjugate covector")
    lam0 = np.asarray(hc.cov, dtype=float)
    base = hc.base

    if cls.tag == "C1":
        center, rho = _kernel_circle(hc)
        d_target = radius / 2
        if d_target > 1.999 * rho:
            raise SearchFailureError(
                "kernel circle too small to reach the requested separation",
                best_gap=None)
        psi = 2 * math.asin(d_target / (2 * rho))
        offset = complex(lam0[0], lam0[1]) - center
        rotated = center + offset * complex(math.cos(psi), math.sin(psi))
        lam2 = np.array([rotated.real, rotated.imag, lam0[2]])
        img1 = heis_exp_point(hc, 1.0)
        img2 = heis_exp_point(HeisCovector(base, tuple(lam2)), 1.0)
        gap = float(np.linalg.norm(img1 - img2))
        if gap > gap_tol:
            raise SearchFailureError(
                f"kernel-circle images differ by {gap:.3e} (covector not "
                "conjugate to working precision)", best_gap=gap)
        return CollisionResult(lam0.copy(), lam2, img1, img2, gap,
                               float(np.linalg.norm(lam0 - lam2)), psi)

    # C0 fold: straddle the kernel direction and solve for the partner
    a_dir = cls.kernel / np.linalg.norm(cls.kernel)
    # orthonormal transverse directions
    basis = np.linalg.svd(a_dir[None, :])[2][1:]
    t1, t2 = basis[0], basis[1]
    s = radius / 3
    lam1 = lam0 + s * a_dir
    img1 = heis_exp_point(HeisCovector(base, tuple(lam1)), 1.0)

    def exp_of(vec):
        return heis_exp_point(HeisCovector(base, tuple(vec)), 1.0)

    zeta = np.array([s, 0.0, 0.0])  # (s2, b1, b2)

    def lam2_of(zv):
        return lam0 - zv[0] * a_dir + zv[1] * t1 + zv[2] * t2

    best_gap = float("inf")
    best = None
    budget = max_iter
    while budget > 0:
        lam2 = lam2_of(zeta)
        res = exp_of(lam2) - img1
        gap = float(np.linalg.norm(res))
        if gap < best_gap:
            best_gap, best = gap, (zeta.copy(), lam2.copy())
        if gap <= min(gap_tol * 1e-3, 1e-12):
            break
        jac_exp = heis_d_exp(HeisCovector(base, tuple(lam2)))
        jac = np.column_stack([jac_exp @ (-a_dir), jac_exp @ t1, jac_exp @ t2])
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise SearchFailureError("singular Newton system in fold search",
                                     best_gap=best_gap) from None
        lam = 1.0
        budget -= 1
        while budget > 0:
            trial = zeta + lam * step
            trial_gap = float(np.linalg.norm(exp_of(lam2_of(trial)) - img1))
            if trial_gap < gap or lam < 1e-4:
                zeta = trial
                break
            lam *= 0.5
            budget -= 1

    zeta, lam2 = best
    img2 = exp_of(lam2)
    gap = float(np.linalg.norm(img2 - img1))
    sep = float(np.linalg.norm(lam1 - lam2))
    if gap > gap_tol or sep < radius / 4 or np.linalg.norm(lam2 - lam0) > radius:
        raise SearchFailureError(
            f"fold search did not meet targets (gap {gap:.3e}, separation {sep:.3e})",
            best_gap=gap)
    return CollisionResult(lam1, lam2, img1, img2, gap, sep, None)


# ---------------------------------------------------------------------------
# locus scan export

def conjugate_locus_rows(u_values, alpha_values, v0: float = 0.0,
                         base=(0.0, 0.0, 0.0)) -> list[tuple]:
    """Rows (u0, v0, alpha0, conjugate, class, k1, k2, k3) over a parameter grid."""
    rows = []
    for u0 in u_values:
        for al in alpha_values:
            hc = HeisCovector(base, (float(u0), v0, float(al)))
            cls = classify_conjugate(hc)
            if cls.is_conjugate:
                k = cls.kernel / np.linalg.norm(cls.kernel)
                rows.append((u0, v0, al, 1, cls.tag, k[0], k[1], k[2]))
            else:
                rows.append((u0, v0, al, 0, "-", 0.0, 0.0, 0.0))
    return rows
