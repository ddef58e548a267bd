"""Exact H-representations of behaviour polytopes."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from ..behavior import BellVector
from ..scenario import Scenario
from .exact import lcm, rank, rref


class EmptyPolytopeError(ValueError):
    pass


def _frac_array(rows, ncols) -> np.ndarray:
    arr = np.empty((len(rows), ncols), dtype=object)
    for i, row in enumerate(rows):
        arr[i] = [Fraction(v) for v in row]
    return arr


@dataclass(frozen=True, eq=False)
class HRep:
    """``eq @ P == eq_rhs`` and ``ineq @ P >= ineq_rhs`` over exact rationals."""

    eq: np.ndarray
    eq_rhs: np.ndarray
    ineq: np.ndarray
    ineq_rhs: np.ndarray
    dim: int
    label: str = ""
    scenario: Scenario | None = field(default=None)

    def __post_init__(self):
        for name in ("eq", "ineq"):
            mat = getattr(self, name)
            if mat.ndim != 2 or (mat.shape[0] and mat.shape[1] != self.dim):
                raise ValueError(f"{name} matrix must have {self.dim} columns")
        if self.eq.shape[0] != self.eq_rhs.shape[0] or self.ineq.shape[0] != self.ineq_rhs.shape[0]:
            raise ValueError("right-hand sides do not match the constraint matrices")

    @property
    def n_eq(self) -> int:
        return self.eq.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.ineq.shape[0]

    @cached_property
    def chart(self) -> "AffineChart":
        return AffineChart.from_equalities(self.eq, self.eq_rhs, self.dim)

    def satisfied_by(self, point) -> bool:
        """Exact membership test for a rational point."""
        p = np.array([Fraction(v) for v in point], dtype=object)
        if self.n_eq and np.any(self.eq.dot(p) != self.eq_rhs):
            return False
        return not (self.n_ineq and np.any(self.ineq.dot(p) < self.ineq_rhs))

    def _linprog(self, c):
        a_eq = self.eq.astype(float) if self.n_eq else None
        b_eq = self.eq_rhs.astype(float) if self.n_eq else None
        a_ub = -self.ineq.astype(float)
        b_ub = -self.ineq_rhs.astype(float)
        return linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                       bounds=[(None, None)] * self.dim, method="highs")

    def is_empty(self) -> bool:
        res = self._linprog(np.zeros(self.dim))
        return res.status == 2

    def implicit_equalities(self, tol: float = 1e-9) -> list[int]:
        """Indices of inequality rows that hold with equality on the whole polytope."""
        implicit = []
        for i in range(self.n_ineq):
            row = self.ineq[i].astype(float)
            if not np.any(row):
                continue
            res = self._linprog(-row)
            if res.status == 2:
                raise EmptyPolytopeError(f"polytope {self.label!r} is empty")
            if res.status == 0 and -res.fun - float(self.ineq_rhs[i]) <= tol:
                implicit.append(i)
        return implicit

    def affine_dimension(self) -> int:
        """Dimension of the affine hull of the solution set (-1 if empty)."""
        if self.is_empty():
            return -1
        implicit = self.implicit_equalities()
        rows = [list(r) + [b] for r, b in zip(self.eq, self.eq_rhs)]
        rows += [list(self.ineq[i]) + [self.ineq_rhs[i]] for i in implicit]
        return self.dim - (rank([r[:-1] for r in rows]) if rows else 0)

    def to_json_dict(self) -> dict:
        def enc(mat):
            return [[f"{Fraction(v).numerator}/{Fraction(v).denominator}" for v in row] for row in mat]

        return {
            "kind": "hrep",
            "label": self.label,
            "dim": self.dim,
            "scenario": list(self.scenario.settings) if self.scenario else None,
            "eq": enc(self.eq),
            "eq_rhs": enc([self.eq_rhs])[0] if self.n_eq else [],
            "ineq": enc(self.ineq),
            "ineq_rhs": enc([self.ineq_rhs])[0] if self.n_ineq else [],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "HRep":
        dim = d["dim"]
        scen = Scenario(tuple(d["scenario"])) if d.get("scenario") else None
        return cls(
            _frac_array(d["eq"], dim), np.array([Fraction(v) for v in d["eq_rhs"]], dtype=object),
            _frac_array(d["ineq"], dim), np.array([Fraction(v) for v in d["ineq_rhs"]], dtype=object),
            dim, d.get("label", ""), scen,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict())


@dataclass(frozen=True, eq=False)
class AffineChart:
    """Parametrisation ``P = origin + basis @ t`` of the equality solution set.

    ``t`` are the free coordinates left over by Gauss-Jordan elimination.
    Integer versions (``scale * origin``, ``scale * basis``) support
    fraction-free arithmetic downstream.
    """

    origin: np.ndarray
    basis: np.ndarray
    free: tuple[int, ...]

    @classmethod
    def from_equalities(cls, eq, eq_rhs, dim) -> "AffineChart":
        rows = [list(map(Fraction, r)) + [Fraction(b)] for r, b in zip(eq, eq_rhs)]
        red, piv = rref(rows)
        if dim in piv:
            raise EmptyPolytopeError("equality constraints are inconsistent")
        free = tuple(c for c in range(dim) if c not in piv)
        origin = np.array([Fraction(0)] * dim, dtype=object)
        basis = np.empty((dim, len(free)), dtype=object)
        basis[:] = Fraction(0)
        for j, f in enumerate(free):
            basis[f, j] = Fraction(1)
        for row, p in zip(red, piv):
            origin[p] = row[dim]
            for j, f in enumerate(free):
                basis[p, j] = -row[f]
        return cls(origin, basis, free)

    @property
    def dimension(self) -> int:
        return len(self.free)

    @cached_property
    def scale(self) -> int:
        s = 1
        for v in list(self.origin) + list(self.basis.ravel()):
            s = lcm(s, v.denominator)
        return s

    @cached_property
    def integer_origin(self) -> np.ndarray:
        return np.array([int(v * self.scale) for v in self.origin], dtype=object)

    @cached_property
    def integer_basis(self) -> np.ndarray:
        return (self.basis * self.scale).astype(object).copy()

    def coordinates(self, point) -> np.ndarray:
        return np.array([Fraction(point[f]) for f in self.free], dtype=object)

    def point(self, t) -> np.ndarray:
        return self.origin + self.basis.dot(np.asarray(t, dtype=object))


def _frac_rows(rows, dim):
    return _frac_array(rows, dim) if rows else np.empty((0, dim), dtype=object)


def build_ns_hrep(s: Scenario) -> HRep:
    """No-signalling polytope: marginal equalities, normalisation, non-negativity."""
    n = s.n_parties
    dim = s.size
    eq_rows, eq_rhs = [], []
    for k in range(n):
        if s.settings[k] < 2:
            continue
        # marginal of the other parties must not depend on party k's setting
        for setting in s.setting_tuples:
            if setting[k] == 0:
                continue
            base = setting[:k] + (0,) + setting[k + 1:]
            for rest in itertools.product((0, 1), repeat=n - 1):
                row = [0] * dim
                for ok in (0, 1):
                    o = rest[:k] + (ok,) + rest[k:]
                    row[s.index(o, setting)] += 1
                    row[s.index(o, base)] -= 1
                eq_rows.append(row)
                eq_rhs.append(0)
    for setting in s.setting_tuples:
        row = [0] * dim
        for o in s.outcome_tuples:
            row[s.index(o, setting)] = 1
        eq_rows.append(row)
        eq_rhs.append(1)
    ineq = [[int(i == j) for j in range(dim)] for i in range(dim)]
    return HRep(
        _frac_rows(eq_rows, dim), np.array([Fraction(v) for v in eq_rhs], dtype=object),
        _frac_rows(ineq, dim), np.array([Fraction(0)] * dim, dtype=object),
        dim, f"NS{s.settings}", s,
    )


def simplex_hrep(n: int) -> HRep:
    """The probability simplex in ``n`` variables."""
    return HRep(
        _frac_rows([[1] * n], n), np.array([Fraction(1)], dtype=object),
        _frac_rows([[int(i == j) for j in range(n)] for i in range(n)], n),
        np.array([Fraction(0)] * n, dtype=object), n, f"simplex{n}",
    )


def _check_dims(h: HRep, w: BellVector):
    if w.coefficients.size != h.dim:
        raise ValueError(f"witness has {w.coefficients.size} coefficients, polytope lives in R^{h.dim}")


def intersect_halfspace(h: HRep, w: BellVector) -> HRep:
    """Append ``bound - w . P >= 0``."""
    _check_dims(h, w)
    row = np.array([-Fraction(int(c)) if not isinstance(c, Fraction) else -c
                    for c in w.coefficients], dtype=object)
    return HRep(h.eq, h.eq_rhs, np.vstack([h.ineq, row[None, :]]),
                np.append(h.ineq_rhs, -Fraction(w.bound)).astype(object),
                h.dim, f"{h.label}&{w.label}<={w.bound}", h.scenario)


def intersect_hyperplane(h: HRep, w: BellVector, check_empty: bool = True) -> HRep:
    """Append ``w . P == bound``; raises :class:`EmptyPolytopeError` if nothing is left."""
    _check_dims(h, w)
    row = np.array([Fraction(int(c)) if not isinstance(c, Fraction) else c
                    for c in w.coefficients], dtype=object)
    out = HRep(np.vstack([h.eq, row[None, :]]) if h.n_eq else row[None, :],
               np.append(h.eq_rhs, Fraction(w.bound)).astype(object),
               h.ineq, h.ineq_rhs, h.dim, f"{h.label}&{w.label}=={w.bound}", h.scenario)
    if check_empty and out.is_empty():
        raise EmptyPolytopeError(f"hyperplane {w.label} = {w.bound} misses {h.label}")
    return out
