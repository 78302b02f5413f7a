"""Hamiltonian geodesic flow and its variational equation.

Integrates the canonical Hamilton equations ``qdot = dH/dp, pdot = -dH/dq``
jointly with the linearized flow ``Phidot = S(t) Phi`` as one augmented system
(2n + 4n^2 components) so state and fundamental matrix share step selection.
The integrator is an embedded Dormand-Prince 5(4) pair with PI step-size
control and exact landing on requested sample times.

States and fundamental matrices are stored in (q, p) ordering; use
``linalg.block_swap`` to pass to the (p, x) ordering of the Jacobi machinery.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import (DimensionMismatchError, IntegrationError,
                     NonFiniteStateError, StepSizeUnderflowError)
from .linalg import omega_qp, symplectic_defect
from .structure import Structure

DEFAULT_TOL = 1e-10
ABS_FLOOR = 1e-13

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                    -92097 / 339200, 187 / 2100, 1 / 40])

_MAX_STEPS = 1_000_000


def _dopri5(fun, t0: float, y0: np.ndarray, targets: Sequence[float],
            rtol: float, atol: float):
    """Integrate ``ydot = fun(t, y)`` from ``t0``, landing exactly on each target.

    Returns the list of states at the targets (which must be >= t0, sorted).
    """
    targets = list(targets)
    out: list[np.ndarray] = []
    t, y = t0, y0.copy()
    f = fun(t, y)
    if not np.all(np.isfinite(f)):
        raise NonFiniteStateError("vector field not finite at the initial state")

    ti = 0
    while ti < len(targets) and targets[ti] <= t + 1e-15 * max(1.0, abs(t)):
        out.append(y.copy())
        ti += 1
    if ti == len(targets):
        return out
    t_end = targets[-1]

    # initial step size (classic heuristic)
    sc = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / sc) ** 2))
    d1 = np.sqrt(np.mean((f / sc) ** 2))
    h0 = 1e-6 if d1 < 1e-10 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t)
    y1 = y + h0 * f
    f1 = fun(t + h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f) / sc) ** 2)) / h0 if h0 > 0 else 0.0
    if max(d1, d2) <= 1e-15:
        h = min(max(h0 * 1e3, 1e-6), t_end - t)
    else:
        h = min(100 * h0, (0.01 / max(d1, d2)) ** 0.2, t_end - t)
    h = max(h, 1e-12 * max(1.0, abs(t_end)))

    err_prev = 1e-4
    stages = np.empty((7, y.size))
    rejected = False

    for _ in range(_MAX_STEPS):
        h_floor = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        if h < h_floor:
            raise StepSizeUnderflowError(
                f"step size underflow at t = {t:.6g} (stiffness failure)")
        h = min(h, targets[ti] - t)

        stages[0] = f
        bad = False
        for i in range(1, 6):
            yi = y + h * (stages[:i].T @ _A[i, :i])
            stages[i] = fun(t + _C[i] * h, yi)
            if not np.all(np.isfinite(stages[i])):
                bad = True
                break
        if not bad:
            y_new = y + h * (stages[:6].T @ _B[:6])
            stages[6] = fun(t + h, y_new)
            bad = not np.all(np.isfinite(stages[6]))
        if bad:
            h *= 0.25
            rejected = True
            if h < h_floor:
                raise NonFiniteStateError(f"state became non-finite near t = {t:.6g}")
            continue

        err_vec = h * (stages.T @ _E)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = np.sqrt(np.mean((err_vec / sc) ** 2))

        if err <= 1.0:
            t_new = t + h
            t, y, f = t_new, y_new, stages[6]
            while ti < len(targets) and abs(targets[ti] - t) <= 1e-14 * max(1.0, abs(t)):
                out.append(y.copy())
                ti += 1
            if ti == len(targets):
                return out
            # PI controller (accepted step)
            err = max(err, 1e-10)
            fac = 0.9 * err ** -0.14 * err_prev ** 0.08
            fac = min(5.0 if not rejected else 1.0, max(0.2, fac))
            h *= fac
            err_prev = err
            rejected = False
        else:
            h *= min(1.0, max(0.2, 0.9 * err ** -0.2))
            rejected = True
    raise IntegrationError("step budget exhausted")


def _dopri5_batch(fun, t0: float, y0: np.ndarray, targets: Sequence[float],
                  rtol: float, atol: float):
    """Batched integrator: ``y0`` has shape (B, D) and steps are shared.

    The accept/reject decision uses the worst per-system scaled RMS error, so
    every system in the batch individually meets the tolerance.
    """
    targets = list(targets)
    out: list[np.ndarray] = []
    t, y = t0, y0.copy()
    f = fun(t, y)
    if not np.all(np.isfinite(f)):
        raise NonFiniteStateError("vector field not finite at the initial state")

    ti = 0
    while ti < len(targets) and targets[ti] <= t + 1e-15 * max(1.0, abs(t)):
        out.append(y.copy())
        ti += 1
    if ti == len(targets):
        return out
    t_end = targets[-1]

    def err_norm(err_vec, y_old, y_new):
        sc = atol + rtol * np.maximum(np.abs(y_old), np.abs(y_new))
        per_system = np.sqrt(np.mean((err_vec / sc) ** 2, axis=1))
        return float(np.max(per_system))

    sc = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / sc) ** 2))
    d1 = np.sqrt(np.mean((f / sc) ** 2))
    h0 = 1e-6 if d1 < 1e-10 else 0.01 * d0 / d1
    h0 = min(h0, t_end - t)
    f1 = fun(t + h0, y + h0 * f)
    d2 = np.sqrt(np.mean(((f1 - f) / sc) ** 2)) / h0 if h0 > 0 else 0.0
    if max(d1, d2) <= 1e-15:
        h = min(max(h0 * 1e3, 1e-6), t_end - t)
    else:
        h = min(100 * h0, (0.01 / max(d1, d2)) ** 0.2, t_end - t)
    h = max(h, 1e-12 * max(1.0, abs(t_end)))

    err_prev = 1e-4
    stages = np.empty((7,) + y.shape)
    rejected = False

    for _ in range(_MAX_STEPS):
        h_floor = 16 * np.finfo(float).eps * max(abs(t), 1.0)
        if h < h_floor:
            raise StepSizeUnderflowError(
                f"step size underflow at t = {t:.6g} (stiffness failure)")
        h = min(h, targets[ti] - t)

        stages[0] = f
        bad = False
        for i in range(1, 6):
            yi = y + h * np.tensordot(_A[i, :i], stages[:i], axes=(0, 0))
            stages[i] = fun(t + _C[i] * h, yi)
            if not np.all(np.isfinite(stages[i])):
                bad = True
                break
        if not bad:
            y_new = y + h * np.tensordot(_B[:6], stages[:6], axes=(0, 0))
            stages[6] = fun(t + h, y_new)
            bad = not np.all(np.isfinite(stages[6]))
        if bad:
            h *= 0.25
            rejected = True
            if h < h_floor:
                raise NonFiniteStateError(f"state became non-finite near t = {t:.6g}")
            continue

        err_vec = h * np.tensordot(_E, stages, axes=(0, 0))
        err = err_norm(err_vec, y, y_new)

        if err <= 1.0:
            t, y, f = t + h, y_new, stages[6].copy()
            while ti < len(targets) and abs(targets[ti] - t) <= 1e-14 * max(1.0, abs(t)):
                out.append(y.copy())
                ti += 1
            if ti == len(targets):
                return out
            err = max(err, 1e-10)
            fac = 0.9 * err ** -0.14 * err_prev ** 0.08
            fac = min(5.0 if not rejected else 1.0, max(0.2, fac))
            h *= fac
            err_prev = err
            rejected = False
        else:
            h *= min(1.0, max(0.2, 0.9 * err ** -0.2))
            rejected = True
    raise IntegrationError("step budget exhausted")


def _augmented_rhs(struct: Structure):
    n = struct.n

    def rhs(t, y):
        q = y[:n]
        p = y[n:2 * n]
        phi = y[2 * n:].reshape(2 * n, 2 * n)
        _, gq, gp, hqq, hqp, hpp = struct.jet_raw(q, p)
        s_mat = np.empty((2 * n, 2 * n))
        s_mat[:n, :n] = hqp.T
        s_mat[:n, n:] = hpp
        s_mat[n:, :n] = -hqq
        s_mat[n:, n:] = -hqp
        dy = np.empty_like(y)
        dy[:n] = gp
        dy[n:2 * n] = -gq
        dy[2 * n:] = (s_mat @ phi).ravel()
        return dy

    return rhs


def _augmented_rhs_batch(struct: Structure):
    n = struct.n

    def rhs(t, y):
        b = y.shape[0]
        q = y[:, :n]
        p = y[:, n:2 * n]
        phi = y[:, 2 * n:].reshape(b, 2 * n, 2 * n)
        _, gq, gp, hqq, hqp, hpp = struct.jet_raw_batch(q, p)
        s_mat = np.empty((b, 2 * n, 2 * n))
        s_mat[:, :n, :n] = hqp.transpose(0, 2, 1)
        s_mat[:, :n, n:] = hpp
        s_mat[:, n:, :n] = -hqq
        s_mat[:, n:, n:] = -hqp
        dy = np.empty_like(y)
        dy[:, :n] = gp
        dy[:, n:2 * n] = -gq
        dy[:, 2 * n:] = np.matmul(s_mat, phi).reshape(b, -1)
        return dy

    return rhs


@dataclass(frozen=True)
class Ray:
    """Ray t -> t * covector in the fiber over ``point``, on [a, b]."""

    point: np.ndarray
    covector: np.ndarray
    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b <= self.a:
            raise ValueError("ray interval must satisfy 0 <= a < b")

    def __call__(self, t: float) -> np.ndarray:
        return t * np.asarray(self.covector, dtype=float)


@dataclass(frozen=True)
class ExtremalTrajectory:
    """A sampled normal extremal with its fundamental-matrix samples.

    ``states[i]`` is (q, p) at ``ts[i]`` and ``phis[i]`` the 2n x 2n variational
    matrix (d of the time-t flow at the initial condition), with Phi(0) = I.
    """

    structure: Structure
    point: np.ndarray
    covector: np.ndarray
    t_final: float
    tol: float
    ts: np.ndarray
    states: np.ndarray
    phis: np.ndarray

    @property
    def n(self) -> int:
        return self.structure.n

    def _locate(self, t: float) -> int | None:
        i = np.searchsorted(self.ts, t)
        for j in (i - 1, i):
            if 0 <= j < len(self.ts) and abs(self.ts[j] - t) <= 1e-12 * max(1.0, abs(t)):
                return j
        return None

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """State and fundamental matrix at ``t``, re-integrating from the
        nearest stored sample when ``t`` is off the grid."""
        if t < -1e-12 or t > self.t_final + 1e-12 * max(1.0, self.t_final):
            raise ValueError(f"t = {t} outside the integrated span [0, {self.t_final}]")
        hit = self._locate(t)
        if hit is not None:
            return self.states[hit].copy(), self.phis[hit].copy()
        j = bisect.bisect_right(self.ts.tolist(), t) - 1
        j = max(j, 0)
        n = self.n
        y0 = np.concatenate([self.states[j], self.phis[j].ravel()])
        (y,) = _dopri5(_augmented_rhs(self.structure), float(self.ts[j]), y0,
                       [t], rtol=self.tol, atol=ABS_FLOOR)
        return y[:2 * n].copy(), y[2 * n:].reshape(2 * n, 2 * n).copy()

    def state_at(self, t: float) -> np.ndarray:
        return self.at(t)[0]

    def phi_at(self, t: float) -> np.ndarray:
        return self.at(t)[1]

    def hamiltonian_values(self) -> np.ndarray:
        n = self.n
        return np.array([self.structure.hamiltonian_raw(s[:n], s[n:]) for s in self.states])

    def energy_drift(self) -> float:
        """Max relative drift of H over the stored samples."""
        h_vals = self.hamiltonian_values()
        h0 = h_vals[0]
        denom = abs(h0) if abs(h0) > 0 else 1.0
        return float(np.max(np.abs(h_vals - h0)) / denom)

    def symplectic_defect(self) -> float:
        om = omega_qp(self.n)
        return max(symplectic_defect(phi, om) for phi in self.phis)

    def write_csv(self, stream: IO[str], with_phi: bool = False,
                  fmt: str = "%.12g") -> None:
        n = self.n
        header = ["t"] + [f"q{i+1}" for i in range(n)] + [f"p{i+1}" for i in range(n)] + ["H"]
        if with_phi:
            header += [f"phi_{r+1}_{c+1}" for r in range(2 * n) for c in range(2 * n)]
        stream.write(",".join(header) + "\n")
        for t, state, phi in zip(self.ts, self.states, self.phis):
            h_val = self.structure.hamiltonian_raw(state[:n], state[n:])
            row = [t, *state, h_val]
            if with_phi:
                row += list(phi.ravel())
            stream.write(",".join(fmt % v for v in row) + "\n")


def integrate_extremal(struct: Structure, point, covector, t_final: float,
                       tol: float = DEFAULT_TOL,
                       samples: int | Sequence[float] | None = None) -> ExtremalTrajectory:
    """Integrate the normal extremal from (point, covector) over [0, t_final].

    ``samples`` selects the stored grid: an integer asks for that many uniform
    sample times, an array is used as-is (forced landings, always extended with
    0 and t_final), and None means 65 uniform samples.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    q0 = np.asarray(point, dtype=float)
    p0 = np.asarray(covector, dtype=float)
    n = struct.n
    if q0.shape != (n,) or p0.shape != (n,):
        raise DimensionMismatchError(
            f"point/covector must have shape ({n},), got {q0.shape} and {p0.shape}")

    if samples is None:
        grid = None
    elif isinstance(samples, int):
        if samples < 2:
            raise ValueError("need at least 2 samples")
        grid = np.linspace(0.0, t_final, samples)
    else:
        grid = np.unique(np.concatenate([[0.0, t_final], np.asarray(samples, dtype=float)]))
        if grid[0] < 0 or grid[-1] > t_final * (1 + 1e-12):
            raise ValueError("sample times must lie in [0, t_final]")

    y0 = np.concatenate([q0, p0, np.eye(2 * n).ravel()])
    rhs = _augmented_rhs(struct)

    if grid is None:
        grid = np.linspace(0.0, t_final, 65)

    ys = _dopri5(rhs, 0.0, y0, list(grid), rtol=tol, atol=ABS_FLOOR)
    states = np.array([y[:2 * n] for y in ys])
    phis = np.array([y[2 * n:].reshape(2 * n, 2 * n) for y in ys])
    return ExtremalTrajectory(struct, q0, p0, float(t_final), tol,
                              np.asarray(grid, dtype=float), states, phis)


def integrate_extremal_batch(struct: Structure, point, covectors, t_final: float,
                             tol: float = DEFAULT_TOL,
                             samples: int | Sequence[float] | None = None
                             ) -> list[ExtremalTrajectory]:
    """Integrate many extremals jointly with shared adaptive steps.

    ``point`` is one base point shared by the batch or an array of shape
    (B, n); ``covectors`` has shape (B, n).  Each trajectory individually
    meets the tolerance (the step controller uses the worst per-system
    error).  Results are identical in contract to ``integrate_extremal``.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    covs = np.atleast_2d(np.asarray(covectors, dtype=float))
    b = covs.shape[0]
    n = struct.n
    if covs.shape[1] != n:
        raise DimensionMismatchError(f"covectors must have shape (B, {n})")
    pts = np.asarray(point, dtype=float)
    if pts.ndim == 1:
        pts = np.broadcast_to(pts, (b, n)).copy()
    if pts.shape != (b, n):
        raise DimensionMismatchError(f"points must have shape (B, {n})")

    if samples is None:
        grid = np.linspace(0.0, t_final, 65)
    elif isinstance(samples, int):
        if samples < 2:
            raise ValueError("need at least 2 samples")
        grid = np.linspace(0.0, t_final, samples)
    else:
        grid = np.unique(np.concatenate([[0.0, t_final], np.asarray(samples, dtype=float)]))

    eye = np.eye(2 * n).ravel()
    y0 = np.hstack([pts, covs, np.tile(eye, (b, 1))])
    ys = _dopri5_batch(_augmented_rhs_batch(struct), 0.0, y0, list(grid),
                       rtol=tol, atol=ABS_FLOOR)
    trajectories = []
    for j in range(b):
        states = np.array([y[j, :2 * n] for y in ys])
        phis = np.array([y[j, 2 * n:].reshape(2 * n, 2 * n) for y in ys])
        trajectories.append(ExtremalTrajectory(
            struct, pts[j], covs[j], float(t_final), tol,
            np.asarray(grid, dtype=float), states, phis))
    return trajectories


def exp_map(struct: Structure, point, covector, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Exponential map: the configuration reached at time one."""
    p0 = np.asarray(covector, dtype=float)
    if not p0.any():
        return np.asarray(point, dtype=float).copy()
    traj = integrate_extremal(struct, point, covector, 1.0, tol, samples=[1.0])
    return traj.states[-1][:struct.n].copy()


def d_exp(struct: Structure, point, covector, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Differential of the exponential map in the fiber directions.

    Returns the n x n block of Phi(1) sending a covector perturbation
    d(lambda0) to the configuration perturbation dq(1).
    """
    traj = integrate_extremal(struct, point, covector, 1.0, tol, samples=[1.0])
    n = struct.n
    return traj.phis[-1][:n, n:].copy()


def d_exp_batch(struct: Structure, point, covectors, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Batched ``d_exp``: returns an array of shape (B, n, n)."""
    trajs = integrate_extremal_batch(struct, point, covectors, 1.0, tol, samples=[1.0])
    n = struct.n
    return np.array([t.phis[-1][:n, n:] for t in trajs])


def check_constant_speed(traj: ExtremalTrajectory) -> tuple[float, float]:
    """Diagnostics (max relative drift of H, max |squared speed - 2 H(0)|).

    The squared speed of the projected geodesic is sum_k h_k(lambda(t))^2.
    """
    n = traj.n
    h_vals = traj.hamiltonian_values()
    h0 = h_vals[0]
    denom = abs(h0) if abs(h0) > 0 else 1.0
    drift = float(np.max(np.abs(h_vals - h0)) / denom)
    speeds = np.array([
        float(np.sum(traj.structure.momenta_raw(s[:n], s[n:]) ** 2))
        for s in traj.states
    ])
    gap = float(np.max(np.abs(speeds - 2.0 * h0)))
    return drift, gap
