"""Lagrangian subspaces, Jacobi curves, crossing forms and Maslov indices.

Two curves of Lagrangian subspaces are attached to an extremal, both framed in
(p, x) coordinates where the vertical space is span[I; 0]:

* the Jacobi curve, the vertical space transported backward,
  ``J(t) = Phi(t)^{-1} [Ver]`` (so J(0) = Ver); its intersections with J(0)
  are exactly the conjugate times, its crossing forms are negative definite
  on the intersection and the Maslov index counts conjugate points with
  multiplicity and a minus sign;
* the forward curve ``L(t) = Phi(t) [Ver]``, which meets the vertical at the
  same times with the same multiplicities but with positive crossing forms.

Crossings against a reference Lagrangian L0 are located through the n x n
pairing ``G(t) = L0^T Omega F(t)``: its kernel is the intersection.  Sign
changes of det G bracket odd-multiplicity crossings; a singular-value sweep
at fixed resolution catches even-multiplicity touches.  An indicator that
vanishes along a whole sub-interval signals an abnormal segment and aborts
(the counting theory assumes ideal structures).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (AmbiguousRankError, CrossingEndpointError,
                     DegenerateCrossingError, NonIdealStructureError,
                     SubriemError, UnresolvedCrossingError,
                     ZeroHamiltonianError)
from .flow import (ExtremalTrajectory, d_exp, integrate_extremal,
                   integrate_extremal_batch)
from .linalg import RANK_REL_TOL, block_swap, null_space, numerical_rank, omega_px
from .structure import Structure

#: grid step of the secondary singular-value sweep
SWEEP_STEP = 1e-3
#: maximum number of sweep points per scan window
SWEEP_CAP = 4000
#: two crossings closer than this are reported as an unresolved cluster
CLUSTER_TOL = 1e-8


@dataclass(frozen=True)
class LagrangianFrame:
    """A rank-n 2n x n matrix whose column span is a Lagrangian subspace."""

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != 2 * mat.shape[1]:
            raise ValueError(f"frame must be 2n x n, got {mat.shape}")
        object.__setattr__(self, "matrix", mat)
        n = mat.shape[1]
        rank, _ = numerical_rank(mat)
        if rank != n:
            raise ValueError("frame columns do not span an n-dimensional space")
        defect = np.max(np.abs(mat.T @ omega_px(n) @ mat))
        scale = float(np.sum(mat * mat))
        if defect > 1e-9 * scale:
            raise ValueError(f"frame is not isotropic (defect {defect:.3e})")

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def isotropy_defect(self) -> float:
        return float(np.max(np.abs(self.matrix.T @ omega_px(self.n) @ self.matrix)))


def vertical_frame(n: int) -> LagrangianFrame:
    return LagrangianFrame(np.vstack([np.eye(n), np.zeros((n, n))]))


def horizontal_frame(n: int) -> LagrangianFrame:
    return LagrangianFrame(np.vstack([np.zeros((n, n)), np.eye(n)]))


def _phi_px(traj: ExtremalTrajectory, t: float) -> np.ndarray:
    return block_swap(traj.phi_at(t))


def _sympl_inverse(phi_px: np.ndarray) -> np.ndarray:
    """Inverse of a symplectic matrix in (p, x) order: Omega^{-1} M^T Omega."""
    n = phi_px.shape[0] // 2
    m1 = phi_px[:n, :n]
    m2 = phi_px[:n, n:]
    m3 = phi_px[n:, :n]
    m4 = phi_px[n:, n:]
    inv = np.empty_like(phi_px)
    inv[:n, :n] = m4.T
    inv[:n, n:] = -m2.T
    inv[n:, :n] = -m3.T
    inv[n:, n:] = m1.T
    return inv


def jacobi_curve(struct: Structure, traj: ExtremalTrajectory, t: float) -> LagrangianFrame:
    """Vertical space transported backward: columns of Phi(t)^{-1} [I; 0]."""
    inv = _sympl_inverse(_phi_px(traj, t))
    return LagrangianFrame(inv[:, :struct.n])


def l_curve(struct: Structure, traj: ExtremalTrajectory, t: float) -> LagrangianFrame:
    """Vertical space transported forward: columns of Phi(t) [I; 0]."""
    return LagrangianFrame(_phi_px(traj, t)[:, :struct.n])


def intersection_dim(f: LagrangianFrame, g: LagrangianFrame) -> int:
    """dim(span F  intersect  span G) = 2n - rank([F | G])."""
    stacked = np.hstack([f.matrix, g.matrix])
    rank, _ = numerical_rank(stacked)
    return 2 * f.n - rank


@dataclass
class JacobiCurveSamples:
    """A curve of Lagrangian frames along an extremal, plus its sample grid.

    ``kind`` records the orientation: "jacobi" for the backward-transported
    curve in the fixed tangent space at the initial covector, "l" for the
    forward curve along the extremal.
    """

    traj: ExtremalTrajectory
    kind: str
    ts: np.ndarray
    frames: list[LagrangianFrame]

    @staticmethod
    def sample(struct: Structure, traj: ExtremalTrajectory, kind: str,
               ts: Sequence[float]) -> "JacobiCurveSamples":
        if kind not in ("jacobi", "l"):
            raise ValueError("kind must be 'jacobi' or 'l'")
        build = jacobi_curve if kind == "jacobi" else l_curve
        ts = np.asarray(ts, dtype=float)
        frames = [build(struct, traj, t) for t in ts]
        return JacobiCurveSamples(traj, kind, ts, frames)

    def frame_at(self, t: float) -> LagrangianFrame:
        hits = np.nonzero(np.abs(self.ts - t) <= 1e-14 * max(1.0, abs(t)))[0]
        if len(hits):
            return self.frames[int(hits[0])]
        build = jacobi_curve if self.kind == "jacobi" else l_curve
        return build(self.traj.structure, self.traj, t)

    def reversed_over(self, r: float, s: float) -> "_ReversedCurve":
        """The time-reversed curve tau -> frame(r + s - tau) on the same window."""
        return _ReversedCurve(self, r + s)


@dataclass
class _ReversedCurve:
    base: JacobiCurveSamples
    total: float

    @property
    def traj(self) -> ExtremalTrajectory:
        return self.base.traj

    def frame_at(self, t: float) -> LagrangianFrame:
        return self.base.frame_at(self.total - t)


def _pairing_matrix(l0: LagrangianFrame, frame: LagrangianFrame) -> np.ndarray:
    return l0.matrix.T @ omega_px(l0.n) @ frame.matrix


def crossing_form(curve, t_star: float, l0: LagrangianFrame,
                  h: float | None = None,
                  multiplicity: int | None = None) -> np.ndarray:
    """Quadratic form omega(z, zdot) on the intersection of the curve with l0
    at t_star, as a symmetric k x k matrix.

    Intersection vectors are extended with constant frame coordinates (any
    smooth extension inside the curve gives the same form); the frame
    derivative is a 5-point finite-difference stencil with step
    ``h = 1e-4 * max(1, |t_star|)`` unless overridden.  When the caller has
    already decided the intersection dimension (the scan does), passing it as
    ``multiplicity`` selects that many smallest singular directions instead of
    re-running the rank decision.
    """
    f_star = curve.frame_at(t_star)
    g_mat = _pairing_matrix(l0, f_star)
    if multiplicity is None:
        coeffs = null_space(g_mat)
    else:
        _, _, vt = np.linalg.svd(g_mat)
        coeffs = vt[l0.n - multiplicity:].T.copy()
    k = coeffs.shape[1]
    if k == 0:
        raise ValueError(f"curve does not meet the reference Lagrangian at t = {t_star}")
    if h is None:
        h = 1e-4 * max(1.0, abs(t_star))
    t_max = curve.traj.t_final
    if t_star - 2 * h >= 0 and t_star + 2 * h <= t_max:
        stencil = ((-2, 1 / 12), (-1, -2 / 3), (1, 2 / 3), (2, -1 / 12))
    elif t_star + 4 * h <= t_max:
        stencil = ((0, -25 / 12), (1, 4.0), (2, -3.0), (3, 4 / 3), (4, -1 / 4))
    elif t_star - 4 * h >= 0:
        stencil = ((0, 25 / 12), (-1, -4.0), (-2, 3.0), (-3, -4 / 3), (-4, 1 / 4))
    else:
        raise ValueError("trajectory span too short for the derivative stencil")
    f_dot = np.zeros_like(f_star.matrix)
    for off, wgt in stencil:
        f_dot += wgt * (f_star.matrix if off == 0 else curve.frame_at(t_star + off * h).matrix)
    f_dot /= h
    om = omega_px(l0.n)
    form = coeffs.T @ (f_star.matrix.T @ om @ f_dot) @ coeffs
    return 0.5 * (form + form.T)


def form_signature(form: np.ndarray, rel_tol: float = 1e-6) -> int:
    """Signature (positive minus negative eigenvalue count) of a symmetric form;
    refuses to sign eigenvalues inside the degeneracy band."""
    eigs = np.linalg.eigvalsh(form)
    scale = max(np.max(np.abs(eigs)), 1e-300)
    tol = rel_tol * scale
    if np.any(np.abs(eigs) <= tol):
        raise DegenerateCrossingError(
            f"crossing form has a near-zero eigenvalue (eigs {eigs})")
    return int(np.sum(eigs > 0) - np.sum(eigs < 0))


@dataclass(frozen=True)
class CrossingReport:
    """One detected crossing: time, multiplicity, crossing-form signature and
    the bracketing interval that localized it."""

    t: float
    multiplicity: int
    signature: int
    bracket: tuple[float, float]

    def __post_init__(self):
        if self.multiplicity < 1:
            raise ValueError("crossing multiplicity must be at least 1")
        if abs(self.signature) > self.multiplicity:
            raise ValueError("|signature| cannot exceed the multiplicity")

    def to_json_dict(self) -> dict:
        return {"t": self.t, "multiplicity": self.multiplicity,
                "signature": self.signature,
                "bracket": [self.bracket[0], self.bracket[1]]}


def _scan_grid(r: float, s: float) -> np.ndarray:
    base = np.linspace(r, s, 257)
    n_sweep = int(math.ceil((s - r) / SWEEP_STEP))
    if n_sweep > SWEEP_CAP:
        n_sweep = SWEEP_CAP
    sweep = np.linspace(r, s, max(n_sweep, 2))
    return np.unique(np.concatenate([base, sweep]))


def _indicator(curve, l0: LagrangianFrame, t: float) -> tuple[float, float]:
    """(det, sigma_min) of the pairing matrix at t."""
    g_mat = _pairing_matrix(l0, curve.frame_at(t))
    det = float(np.linalg.det(g_mat))
    svals = np.linalg.svd(g_mat, compute_uv=False)
    return det, float(svals[-1])


def _refine_sign_change(curve, l0, lo, hi, det_lo) -> tuple[float, float, float]:
    """Bisect a sign change of det G to relative width 1e-10."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-10 * max(1.0, abs(mid)):
            return mid, lo, hi
        det_mid, _ = _indicator(curve, l0, mid)
        if det_mid == 0.0:
            return mid, lo, hi
        if (det_lo < 0) != (det_mid < 0):
            hi = mid
        else:
            lo, det_lo = mid, det_mid
    return 0.5 * (lo + hi), lo, hi


def _refine_touch(curve, l0, lo, hi) -> tuple[float, float]:
    """Golden-section minimization of sigma_min(G) on [lo, hi]."""
    invphi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _indicator(curve, l0, c)[1]
    fd = _indicator(curve, l0, d)[1]
    for _ in range(80):
        if b - a <= 1e-11 * max(1.0, abs(a)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _indicator(curve, l0, c)[1]
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _indicator(curve, l0, d)[1]
    t_min = c if fc < fd else d
    return t_min, min(fc, fd)


def _multiplicity(curve, l0, t_star: float, scale: float) -> int:
    """Kernel dimension of the pairing at a refined crossing time, measured
    against the scan-wide scale of the pairing matrices."""
    g_mat = _pairing_matrix(l0, curve.frame_at(t_star))
    svals = np.linalg.svd(g_mat, compute_uv=False)
    small = svals < RANK_REL_TOL * scale
    if not np.any(small):
        small = svals < 1e-6 * scale  # refinement landed next to the root
    if np.any(small) and np.any(~small):
        gap = svals[~small].min() / max(svals[small].max(), 1e-300)
        if gap < 1e3:
            raise AmbiguousRankError(
                f"multiplicity ambiguous at t = {t_star}", singular_values=svals)
    return int(np.count_nonzero(small))


def locate_crossings(curve, l0: LagrangianFrame, r: float, s: float) -> list[CrossingReport]:
    """All crossings of the curve with l0 in (r, s), refined and classified.

    Raises :class:`CrossingEndpointError` when an endpoint itself is a
    crossing and :class:`NonIdealStructureError` when the indicator vanishes
    identically on a sub-interval (abnormal segment).
    """
    if not s > r:
        raise ValueError("need r < s")
    n = l0.n
    grid = _scan_grid(r, s)
    dets = np.empty(len(grid))
    sigmas = np.empty(len(grid))
    scale = 0.0
    for i, t in enumerate(grid):
        g_mat = _pairing_matrix(l0, curve.frame_at(t))
        svals = np.linalg.svd(g_mat, compute_uv=False)
        dets[i] = np.linalg.det(g_mat)
        sigmas[i] = svals[-1]
        scale = max(scale, svals[0])
    scale = max(scale, 1e-300)
    ratios = sigmas / scale
    near_zero = ratios < 10 * RANK_REL_TOL

    run = 0
    for val in ratios < 1e-10:
        run = run + 1 if val else 0
        if run >= 10:
            raise NonIdealStructureError(
                "crossing indicator vanishes on a sub-interval; "
                "structure has an abnormal segment (not ideal)")

    for label, idx in (("left", 0), ("right", len(grid) - 1)):
        if near_zero[idx]:
            raise CrossingEndpointError(f"{label} endpoint t = {grid[idx]} is a crossing")

    crossings: list[tuple[float, float, float]] = []
    consumed_cells: set[int] = set()

    # grid points sitting (numerically) on a crossing: refine each group of
    # adjacent near-zero samples by minimizing sigma_min over its neighborhood
    i = 1
    while i < len(grid) - 1:
        if near_zero[i]:
            j = i
            while j + 1 < len(grid) - 1 and near_zero[j + 1]:
                j += 1
            lo, hi = grid[i - 1], grid[j + 1]
            if (dets[i - 1] < 0) != (dets[j + 1] < 0):
                t_star, lo2, hi2 = _refine_sign_change(curve, l0, lo, hi, dets[i - 1])
                crossings.append((t_star, lo2, hi2))
            else:
                t_star, _ = _refine_touch(curve, l0, lo, hi)
                crossings.append((t_star, lo, hi))
            consumed_cells.update(range(i - 1, j + 1))
            i = j + 1
        else:
            i += 1

    # odd-multiplicity crossings: sign changes of det G
    for i in range(len(grid) - 1):
        if i in consumed_cells or near_zero[i] or near_zero[i + 1]:
            continue
        if (dets[i] < 0) != (dets[i + 1] < 0):
            consumed_cells.add(i)
            t_star, lo, hi = _refine_sign_change(curve, l0, grid[i], grid[i + 1], dets[i])
            crossings.append((t_star, lo, hi))

    # even-multiplicity touches: local minima of sigma_min without a sign change
    for i in range(1, len(grid) - 1):
        if ratios[i] <= ratios[i - 1] and ratios[i] <= ratios[i + 1] and ratios[i] < 1e-4:
            if {i - 1, i} & consumed_cells or near_zero[i]:
                continue
            t_star, sigma_min = _refine_touch(curve, l0, grid[i - 1], grid[i + 1])
            if sigma_min / scale < 10 * RANK_REL_TOL:
                consumed_cells.update((i - 1, i))
                crossings.append((t_star, grid[i - 1], grid[i + 1]))

    crossings.sort(key=lambda c: c[0])
    for (t1, _, _), (t2, _, _) in zip(crossings, crossings[1:]):
        if t2 - t1 < CLUSTER_TOL:
            raise UnresolvedCrossingError(
                f"crossings at {t1} and {t2} are closer than {CLUSTER_TOL}")

    reports = []
    for t_star, lo, hi in crossings:
        mult = _multiplicity(curve, l0, t_star, scale)
        if mult == 0:
            continue
        form = crossing_form(curve, t_star, l0, h=1e-4 * max(1.0, abs(t_star)),
                             multiplicity=mult)
        reports.append(CrossingReport(t_star, mult, form_signature(form), (lo, hi)))
    return reports


def maslov_index(curve, l0: LagrangianFrame, r: float, s: float) -> int:
    """Sum of crossing-form signatures over all crossings in (r, s).

    Endpoints must be crossing-free.  The result is invariant under monotone
    resampling of the grid and flips sign under curve reversal.
    """
    return sum(rep.signature for rep in locate_crossings(curve, l0, r, s))


def count_conjugate_on_ray(struct: Structure, point, covector, r: float,
                           s_end: float, tol: float = 1e-10,
                           traj: ExtremalTrajectory | None = None
                           ) -> list[CrossingReport]:
    """Every conjugate time in (r, s_end) along the ray through ``covector``,
    with multiplicities, located as crossings of the Jacobi curve with the
    vertical space.

    Requires non-conjugate window endpoints and a covector off the zero level
    of H.  Consistency of the Maslov count (-index = total multiplicity) is
    asserted before returning.
    """
    point = np.asarray(point, dtype=float)
    covector = np.asarray(covector, dtype=float)
    if struct.hamiltonian_raw(point, covector) <= 1e-30:
        raise ZeroHamiltonianError("conjugate analysis requires H(lambda0) != 0")
    if traj is None:
        t_total = s_end * (1 + 1e-3) + 1e-3
        traj = integrate_extremal(struct, point, covector, t_total, tol,
                                  samples=_scan_grid(r, s_end))
    curve = JacobiCurveSamples.sample(struct, traj, "jacobi", _scan_grid(r, s_end))
    l0 = vertical_frame(struct.n)
    reports = locate_crossings(curve, l0, r, s_end)
    index = sum(rep.signature for rep in reports)
    total = sum(rep.multiplicity for rep in reports)
    if -index != total:
        raise SubriemError(
            f"Maslov count inconsistent: index {index}, total multiplicity {total}")
    return reports


@dataclass(frozen=True)
class ContinuityReport:
    """Per-ray conjugate counts in a window around a conjugate covector."""

    kernel_dim: int
    ray_covectors: np.ndarray      # (n_rays, n)
    ray_totals: np.ndarray         # (n_rays,)
    ray_indices: np.ndarray        # (n_rays,)

    @property
    def passed(self) -> bool:
        return bool(np.all(self.ray_totals == self.kernel_dim))


def continuity_check(struct: Structure, point, covector, delta_ray: float = 1e-2,
                     n_rays: int = 50, tol: float = 1e-10,
                     seed: int = 42) -> ContinuityReport:
    """Count conjugate points on rays through a neighborhood of a conjugate
    covector; each must carry exactly the kernel dimension of the center.

    Rays are sampled in a ball of radius ``delta_ray * |lambda0| / 4`` around
    the covector and scanned over the window [1 - delta_ray, 1 + delta_ray]
    (covering the bundle of rays joining the two endpoint balls of the
    construction).  Endpoint certification failures propagate as
    :class:`CrossingEndpointError`.
    """
    point = np.asarray(point, dtype=float)
    covector = np.asarray(covector, dtype=float)
    if struct.hamiltonian_raw(point, covector) <= 1e-30:
        raise ZeroHamiltonianError("continuity check requires H(lambda0) != 0")
    dmat = d_exp(struct, point, covector, tol)
    kernel_dim = struct.n - numerical_rank(dmat)[0]

    rng = np.random.default_rng(seed)
    radius = delta_ray * float(np.linalg.norm(covector)) / 4
    dirs = rng.normal(size=(n_rays, struct.n))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = radius * rng.uniform(0.2, 1.0, size=n_rays)
    rays = covector[None, :] + dirs * radii[:, None]

    r, s = 1.0 - delta_ray, 1.0 + delta_ray
    t_total = s * (1 + 1e-3) + 1e-3
    grid = _scan_grid(r, s)
    trajs = integrate_extremal_batch(struct, point, rays, t_total, tol, samples=grid)

    totals = np.zeros(n_rays, dtype=int)
    indices = np.zeros(n_rays, dtype=int)
    for i, traj in enumerate(trajs):
        reports = count_conjugate_on_ray(struct, point, rays[i], r, s, tol, traj=traj)
        totals[i] = sum(rep.multiplicity for rep in reports)
        indices[i] = sum(rep.signature for rep in reports)
    return ContinuityReport(kernel_dim, rays, totals, indices)
