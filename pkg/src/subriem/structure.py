"""Sub-Riemannian structures on R^n given by polynomial generating families.

A structure is a family of m polynomial vector fields X_1..X_m in a single
global chart.  The fiber-quadratic Hamiltonian

    H(q, p) = 1/2 * sum_k h_k(q, p)^2,      h_k(q, p) = <p, X_k(q)>,

is itself polynomial in (q, p), so its gradient and Hessian are evaluated by
exact polynomial differentiation; no numerical differentiation enters the
geodesic or variational flow.

All types are immutable after construction and all operations are pure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError

Term = tuple[tuple[int, ...], float]


def _canonical_terms(nvars: int, terms) -> tuple[Term, ...]:
    acc: dict[tuple[int, ...], float] = {}
    for expo, coef in terms:
        expo = tuple(int(e) for e in expo)
        if len(expo) != nvars:
            raise ValueError(f"multi-index {expo} has length {len(expo)}, expected {nvars}")
        if any(e < 0 for e in expo):
            raise ValueError(f"multi-index {expo} has a negative entry")
        coef = float(coef)
        if not math.isfinite(coef):
            raise ValueError("non-finite coefficient")
        acc[expo] = acc.get(expo, 0.0) + coef
    return tuple(sorted((e, c) for e, c in acc.items() if c != 0.0))


@dataclass(frozen=True)
class SparsePolynomial:
    """Polynomial in ``nvars`` variables, stored as sorted (multi-index, coeff) terms.

    Terms are merged and zero coefficients dropped at construction, so equal
    polynomials compare equal and evaluation order is deterministic.
    """

    nvars: int
    terms: tuple[Term, ...]

    @staticmethod
    def from_terms(nvars: int, terms) -> "SparsePolynomial":
        return SparsePolynomial(nvars, _canonical_terms(nvars, terms))

    def __call__(self, q: np.ndarray) -> float:
        total = 0.0
        for expo, coef in self.terms:
            mono = coef
            for qi, ei in zip(q, expo):
                if ei:
                    mono *= qi ** ei
            total += mono
        return total

    def diff(self, j: int) -> "SparsePolynomial":
        """Exact partial derivative with respect to variable ``j``."""
        out = []
        for expo, coef in self.terms:
            if expo[j] == 0:
                continue
            new = list(expo)
            new[j] -= 1
            out.append((tuple(new), coef * expo[j]))
        return SparsePolynomial.from_terms(self.nvars, out)

    @property
    def is_zero(self) -> bool:
        return not self.terms


@dataclass(frozen=True)
class PolyVectorField:
    """Vector field on R^n with polynomial components."""

    n: int
    components: tuple[SparsePolynomial, ...]

    def __post_init__(self):
        if len(self.components) != self.n:
            raise DimensionMismatchError(
                f"field with {len(self.components)} components on R^{self.n}")
        for comp in self.components:
            if comp.nvars != self.n:
                raise DimensionMismatchError("component has wrong number of variables")

    @staticmethod
    def from_lists(n: int, components: Sequence) -> "PolyVectorField":
        return PolyVectorField(n, tuple(SparsePolynomial.from_terms(n, c) for c in components))

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return np.array([comp(q) for comp in self.components])


@dataclass(frozen=True)
class PhaseState:
    """A point (q, p) of the cotangent bundle in global Darboux coordinates."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1:
            raise DimensionMismatchError(f"q shape {q.shape} vs p shape {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[0]


class _JetTables:
    """Stacked monomial tables for vectorized evaluation of all field components
    and their first and second q-derivatives in a single pass.

    Derivative layouts are chosen so the Hamiltonian jet assembles with plain
    matrix products: ``grad[k, j, i] = d(X_k)_i / dq_j`` and
    ``hess[k, j, l, i] = d^2(X_k)_i / dq_j dq_l`` (symmetric in j, l exactly).
    """

    def __init__(self, struct: "Structure"):
        n, m = struct.n, struct.m
        exps, coefs, rows = [], [], []
        sizes = (m * n, m * n * n, m * n * n * n)
        offsets = (0, sizes[0], sizes[0] + sizes[1])

        def push(poly: SparsePolynomial, flat_index: int, offset: int):
            for expo, coef in poly.terms:
                exps.append(expo)
                coefs.append(coef)
                rows.append(offset + flat_index)

        for k, field in enumerate(struct.fields):
            for i, poly in enumerate(field.components):
                push(poly, k * n + i, offsets[0])
                grads = [poly.diff(j) for j in range(n)]
                for j, gpoly in enumerate(grads):
                    push(gpoly, (k * n + j) * n + i, offsets[1])
                    for l in range(j, n):
                        hpoly = gpoly.diff(l)
                        if hpoly.is_zero:
                            continue
                        push(hpoly, ((k * n + j) * n + l) * n + i, offsets[2])
                        if l != j:
                            push(hpoly, ((k * n + l) * n + j) * n + i, offsets[2])

        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), n)
        self.coefs = np.array(coefs)
        self.rows = np.array(rows, dtype=np.int64)
        self.total = sum(sizes)
        self.sizes = sizes
        self.has_hess = bool(np.any(self.rows >= offsets[2])) if len(rows) else False
        self.m, self.n = m, n
        # dense scatter matrix (total x R) for batched evaluation
        self.scatter = np.zeros((self.total, len(coefs)))
        for col, (row, coef) in enumerate(zip(self.rows, self.coefs)):
            self.scatter[row, col] = coef

    def evaluate(self, q: np.ndarray):
        """Flat (value, grad, hess) arrays; see class docstring for layouts."""
        if self.exps.shape[0]:
            mono = np.prod(np.power(q[None, :], self.exps), axis=1)
            flat = np.bincount(self.rows, weights=self.coefs * mono, minlength=self.total)
        else:
            flat = np.zeros(self.total)
        sv, sg, _ = self.sizes
        m, n = self.m, self.n
        return (flat[:sv].reshape(m, n),
                flat[sv:sv + sg].reshape(m, n, n),
                flat[sv + sg:].reshape(m, n, n, n))

    def evaluate_batch(self, q_batch: np.ndarray):
        """Batched variant over q_batch of shape (B, n)."""
        b = q_batch.shape[0]
        m, n = self.m, self.n
        if self.exps.shape[0]:
            mono = np.prod(np.power(q_batch[:, None, :], self.exps[None, :, :]), axis=2)
            flat = mono @ self.scatter.T
        else:
            flat = np.zeros((b, self.total))
        sv, sg, _ = self.sizes
        return (flat[:, :sv].reshape(b, m, n),
                flat[:, sv:sv + sg].reshape(b, m, n, n),
                flat[:, sv + sg:].reshape(b, m, n, n, n))


@dataclass(frozen=True)
class Structure:
    """Free sub-Riemannian structure: m polynomial fields on R^n plus the
    Euclidean metric on the controls."""

    n: int
    m: int
    fields: tuple[PolyVectorField, ...]
    name: str | None = None

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")
        if len(self.fields) != self.m:
            raise DimensionMismatchError(f"{len(self.fields)} fields, m = {self.m}")
        for field in self.fields:
            if field.n != self.n:
                raise DimensionMismatchError("field dimension differs from structure dimension")

    @staticmethod
    def from_fields(fields: Sequence[PolyVectorField], name: str | None = None) -> "Structure":
        fields = tuple(fields)
        return Structure(fields[0].n, len(fields), fields, name)

    @cached_property
    def _tables(self) -> _JetTables:
        return _JetTables(self)

    def _check_state(self, state: PhaseState):
        if state.n != self.n:
            raise DimensionMismatchError(f"state on R^{state.n}, structure on R^{self.n}")

    # raw-array entry points used by the integrators (hot path)

    def momenta_raw(self, q: np.ndarray, p: np.ndarray) -> np.ndarray:
        value, _, _ = self._tables.evaluate(q)
        return value @ p

    def hamiltonian_raw(self, q: np.ndarray, p: np.ndarray) -> float:
        h = self.momenta_raw(q, p)
        return 0.5 * float(h @ h)

    def jet_raw(self, q: np.ndarray, p: np.ndarray):
        """Value, gradient pieces and Hessian blocks of H at (q, p).

        Returns ``(value, gq, gp, hqq, hqp, hpp)`` with hqq, hpp exactly
        symmetric; the full Hessian in (q, p) order is
        ``[[hqq, hqp], [hqp.T, hpp]]``.
        """
        tables = self._tables
        m, n = tables.m, tables.n
        value, grad, hess = tables.evaluate(q)
        h = value @ p                                        # (m,)
        hq = (grad.reshape(m * n, n) @ p).reshape(m, n)      # d h_k / d q_j
        gq = h @ hq
        gp = h @ value
        hpp = value.T @ value
        hqp = hq.T @ value + (h @ grad.reshape(m, n * n)).reshape(n, n)
        hqq = hq.T @ hq
        if tables.has_hess:
            hqq = hqq + (h @ (hess.reshape(m * n * n, n) @ p).reshape(m, n * n)).reshape(n, n)
        return 0.5 * float(h @ h), gq, gp, hqq, hqp, hpp

    def hessian_blocks(self, q: np.ndarray, p: np.ndarray):
        """(hqq, hqp, hpp) of H at (q, p), each n x n, hqq and hpp exactly symmetric."""
        _, _, _, hqq, hqp, hpp = self.jet_raw(q, p)
        return hqq, hqp, hpp

    def jet_raw_batch(self, q_batch: np.ndarray, p_batch: np.ndarray):
        """Batched Hamiltonian jet over (B, n) arrays of positions and momenta.

        Returns ``(values (B,), gq (B,n), gp (B,n), hqq, hqp, hpp)`` with the
        Hessian blocks of shape (B, n, n).
        """
        tables = self._tables
        b = q_batch.shape[0]
        m, n = tables.m, tables.n
        value, grad, hess = tables.evaluate_batch(q_batch)
        p_col = p_batch[:, :, None]
        h = np.matmul(value, p_col)[:, :, 0]                       # (B, m)
        hq = np.matmul(grad.reshape(b, m * n, n), p_col).reshape(b, m, n)
        h_row = h[:, None, :]
        gq = np.matmul(h_row, hq)[:, 0, :]
        gp = np.matmul(h_row, value)[:, 0, :]
        value_t = value.transpose(0, 2, 1)
        hq_t = hq.transpose(0, 2, 1)
        hpp = np.matmul(value_t, value)
        hqp = np.matmul(hq_t, value) + np.matmul(h_row, grad.reshape(b, m, n * n)).reshape(b, n, n)
        hqq = np.matmul(hq_t, hq)
        if tables.has_hess:
            hp = np.matmul(hess.reshape(b, m * n * n, n), p_col).reshape(b, m, n * n)
            hqq = hqq + np.matmul(h_row, hp).reshape(b, n, n)
        values = 0.5 * np.einsum("bm,bm->b", h, h)
        return values, gq, gp, hqq, hqp, hpp


# ---------------------------------------------------------------------------
# operations

def momentum_functions(struct: Structure, state: PhaseState) -> np.ndarray:
    """Momenta h_k(q, p) = <p, X_k(q)> of the generating family."""
    struct._check_state(state)
    return struct.momenta_raw(state.q, state.p)


def hamiltonian(struct: Structure, state: PhaseState) -> float:
    """Maximized Hamiltonian H = 1/2 sum_k h_k^2; always >= 0."""
    struct._check_state(state)
    return struct.hamiltonian_raw(state.q, state.p)


def minimal_control(struct: Structure, state: PhaseState) -> np.ndarray:
    """Optimal control at the state; equals the momentum vector and
    satisfies ||u||^2 = 2 H."""
    return momentum_functions(struct, state)


def hamiltonian_jet(struct: Structure, state: PhaseState):
    """Value, gradient and Hessian of H at the state, by exact differentiation.

    The gradient is ordered (dH/dq, dH/dp) and the 2n x 2n Hessian carries the
    blocks [[H_qq, H_qp], [H_pq, H_pp]]; it is symmetric exactly.
    """
    struct._check_state(state)
    value, gq, gp, hqq, hqp, hpp = struct.jet_raw(state.q, state.p)
    n = struct.n
    grad = np.concatenate([gq, gp])
    hess = np.zeros((2 * n, 2 * n))
    hess[:n, :n] = hqq
    hess[:n, n:] = hqp
    hess[n:, :n] = hqp.T
    hess[n:, n:] = hpp
    return value, grad, hess


# ---------------------------------------------------------------------------
# built-in registry and file format

def heisenberg_structure() -> Structure:
    """The Heisenberg group structure on R^3:
    X1 = d/dx - (y/2) d/dtau, X2 = d/dy + (x/2) d/dtau."""
    x1 = PolyVectorField.from_lists(3, [
        [((0, 0, 0), 1.0)],
        [],
        [((0, 1, 0), -0.5)],
    ])
    x2 = PolyVectorField.from_lists(3, [
        [],
        [((0, 0, 0), 1.0)],
        [((1, 0, 0), 0.5)],
    ])
    return Structure(3, 2, (x1, x2), name="heisenberg")


def euclidean_structure(n: int) -> Structure:
    """Degenerate Riemannian sanity case: X_k = d/dq_k, H = |p|^2 / 2."""
    fields = []
    for k in range(n):
        comps = [[] for _ in range(n)]
        comps[k] = [((0,) * n, 1.0)]
        fields.append(PolyVectorField.from_lists(n, comps))
    return Structure(n, n, tuple(fields), name=f"euclidean:{n}")


def make_structure(selector: str) -> Structure:
    """Resolve a registry name: ``heisenberg`` or ``euclidean:n``."""
    if selector == "heisenberg":
        return heisenberg_structure()
    if selector.startswith("euclidean:"):
        try:
            n = int(selector.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad euclidean selector {selector!r}") from None
        if n < 1:
            raise ValueError("euclidean dimension must be >= 1")
        return euclidean_structure(n)
    raise ValueError(f"unknown structure {selector!r}")


def structure_to_dict(struct: Structure) -> dict:
    return {
        "name": struct.name or "",
        "dim": struct.n,
        "fields": [
            {"components": [[[list(e), c] for e, c in poly.terms]
                            for poly in field.components]}
            for field in struct.fields
        ],
    }


def structure_from_dict(data: dict) -> Structure:
    n = int(data["dim"])
    fields = tuple(
        PolyVectorField.from_lists(n, entry["components"])
        for entry in data["fields"]
    )
    if not fields:
        raise ValueError("structure file declares no fields")
    return Structure(n, len(fields), fields, name=data.get("name") or None)


def load_structure(path: str) -> Structure:
    with open(path, "r", encoding="utf-8") as fh:
        return structure_from_dict(json.load(fh))


def save_structure(struct: Structure, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(structure_to_dict(struct), fh, indent=2)
        fh.write("\n")
