"""Exact double description vertex enumeration.

The equalities of an :class:`HRep` are eliminated first, leaving a chart
``P = origin + basis @ t``.  Each inequality becomes a primitive integer row
``r`` acting on homogeneous coordinates ``x = (x0, t)`` with ``r . x >= 0``.
Extreme rays are integer vectors reduced by their gcd, and adjacency is
decided combinatorially from zero-set bitsets.
"""
from __future__ import annotations

import logging
import time
from fractions import Fraction
from math import gcd

import numpy as np

from ..behavior import BellVector
from .exact import inverse, lcm, primitive_integer_row, rref
from .hrep import AffineChart, EmptyPolytopeError, HRep
from .vrep import VRep

log = logging.getLogger(__name__)

INT_LIMIT = 2 ** 62
DEFAULT_MAX_RAYS = 5_000_000


class ResourceLimitError(RuntimeError):
    """The ray count grew past the configured limit."""

    def __init__(self, message, rows_done=0, rows_total=0, n_rays=0):
        super().__init__(message)
        self.rows_done = rows_done
        self.rows_total = rows_total
        self.n_rays = n_rays


class UnboundedPolytopeError(ValueError):
    pass


def _maxabs(a: np.ndarray) -> int:
    if a.size == 0:
        return 0
    if a.dtype == object:
        return max(abs(int(v)) for v in a.ravel())
    return int(np.abs(a).max())


def _as_int64_if_safe(a: np.ndarray) -> np.ndarray:
    if a.dtype != object:
        return a
    if _maxabs(a) < INT_LIMIT:
        return a.astype(np.int64)
    return a


def _reduce_rows(rays: np.ndarray) -> np.ndarray:
    if rays.shape[0] == 0:
        return rays
    if rays.dtype == object:
        out = rays.copy()
        for i, row in enumerate(out):
            g = 0
            for v in row:
                g = gcd(g, int(v))
            if g > 1:
                out[i] = [int(v) // g for v in row]
        return out
    g = np.gcd.reduce(rays, axis=1)
    g[g == 0] = 1
    return rays // g[:, None]


def homogeneous_rows(ineq, ineq_rhs, chart: AffineChart) -> list[list[int]]:
    """Rows of ``a . P >= g`` rewritten as ``r . (x0, t) >= 0`` in primitive integers."""
    rows = []
    for a, g in zip(ineq, ineq_rhs):
        a = np.asarray(a, dtype=object)
        head = a.dot(chart.origin) - Fraction(g)
        tail = a.dot(chart.basis) if chart.dimension else np.empty(0, dtype=object)
        rows.append(primitive_integer_row([head, *tail]))
    return rows


def insertion_order(rows: list[list[int]]) -> list[int]:
    """Sparse rows first, ties broken lexicographically."""
    return sorted(range(len(rows)), key=lambda i: (sum(1 for v in rows[i] if v), rows[i]))


class DDState:
    """Extreme rays of ``{x : r_i . x >= 0}`` for the rows added so far."""

    def __init__(self, rays: np.ndarray, zeros: np.ndarray, d: int, row_ids: list[int],
                 max_rays: int = DEFAULT_MAX_RAYS):
        self.rays = rays
        self.zeros = zeros
        self.d = d
        self.row_ids = list(row_ids)
        self.max_rays = max_rays

    @property
    def n_rays(self) -> int:
        return self.rays.shape[0]

    @classmethod
    def simplicial(cls, rows: list[list[int]], order: list[int], max_rays=DEFAULT_MAX_RAYS):
        """Start from ``d`` independent rows; returns the state and the rows left over."""
        d = len(rows[0])
        basis, rest = [], []
        echelon: list[list[Fraction]] = []
        for i in order:
            if len(basis) == d:
                rest.append(i)
                continue
            cand = [Fraction(v) for v in rows[i]]
            red, _ = rref(echelon + [cand])
            if len(red) > len(echelon):
                echelon = red
                basis.append(i)
            else:
                rest.append(i)
        if len(basis) < d:
            return None, basis, rest
        inv = inverse([rows[i] for i in basis])
        rays = [primitive_integer_row([inv[r][j] for r in range(d)]) for j in range(d)]
        rays = _as_int64_if_safe(np.array(rays, dtype=object))
        n_words = max(1, (len(rows) + 63) // 64)
        zeros = np.zeros((d, n_words), dtype=np.uint64)
        for j in range(d):
            for k in range(d):
                if k != j:
                    zeros[j, k // 64] |= np.uint64(1) << np.uint64(k % 64)
        return cls(rays, zeros, d, basis, max_rays), basis, rest

    @classmethod
    def from_rays(cls, rays: np.ndarray, rows: list[list[int]], d: int,
                  max_rays=DEFAULT_MAX_RAYS, spare_rows: int = 1) -> "DDState":
        """Rebuild the state from a known list of extreme rays of the cone."""
        rays = _as_int64_if_safe(np.asarray(rays, dtype=object) if np.asarray(rays).dtype == object
                                 else np.asarray(rays, dtype=np.int64))
        n_words = max(1, (len(rows) + spare_rows + 63) // 64)
        zeros = np.zeros((rays.shape[0], n_words), dtype=np.uint64)
        state = cls(rays, zeros, d, [], max_rays)
        for k, r in enumerate(rows):
            vals = state._values(r)
            hit = np.nonzero(vals == 0)[0]
            zeros[hit, k // 64] |= np.uint64(1) << np.uint64(k % 64)
            state.row_ids.append(k)
        return state

    def _values(self, row) -> np.ndarray:
        row_arr = np.array(row, dtype=object)
        if self.rays.dtype != object and _maxabs(row_arr) * self.d * _maxabs(self.rays) < INT_LIMIT:
            return self.rays @ row_arr.astype(np.int64)
        return self.rays.astype(object) @ row_arr

    def _ensure_width(self, bit: int):
        need = bit // 64 + 1
        if self.zeros.shape[1] < need:
            extra = np.zeros((self.zeros.shape[0], need - self.zeros.shape[1]), dtype=np.uint64)
            self.zeros = np.hstack([self.zeros, extra])

    def _adjacent_pairs(self, pos: np.ndarray, neg: np.ndarray):
        """All adjacent (positive, negative) ray pairs."""
        zeros = self.zeros
        thr = self.d - 2
        # loop over the smaller side
        outer, inner = (pos, neg) if pos.size <= neg.size else (neg, pos)
        z_inner = zeros[inner]
        out_a, out_b = [], []
        for p in outer:
            zp = zeros[p]
            common = z_inner & zp
            ok = np.bitwise_count(common).sum(axis=1, dtype=np.int64) >= thr
            if not ok.any():
                continue
            cand = inner[ok]
            common = common[ok]
            share = np.bitwise_count(zeros & zp).sum(axis=1, dtype=np.int64) >= thr
            share[p] = False
            k_zeros = zeros[share]
            counts = np.zeros(cand.size, dtype=np.int64)
            step = max(1, 4_000_000 // max(1, cand.size * zeros.shape[1]))
            for s in range(0, k_zeros.shape[0], step):
                blk = k_zeros[s:s + step]
                inside = ((blk[:, None, :] & common[None, :, :]) == common[None, :, :]).all(axis=2)
                counts += inside.sum(axis=0)
            # the partner itself is always among the rays containing the common set
            adj = cand[counts == 1]
            out_a.append(np.full(adj.size, p, dtype=np.int64))
            out_b.append(adj)
        if not out_a:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        a = np.concatenate(out_a)
        b = np.concatenate(out_b)
        return (a, b) if outer is pos else (b, a)

    def add_row(self, row, row_id: int, equality: bool = False):
        vals = self._values(row)
        pos = np.nonzero(vals > 0)[0]
        neg = np.nonzero(vals < 0)[0]
        zer = vals == 0
        bit = len(self.row_ids)
        self._ensure_width(bit)
        word, mask = bit // 64, np.uint64(1) << np.uint64(bit % 64)

        if pos.size and neg.size:
            ip, ineg = self._adjacent_pairs(pos, neg)
        else:
            ip = ineg = np.empty(0, dtype=np.int64)
        if self.n_rays - (neg.size if not equality else neg.size + pos.size) + ip.size > self.max_rays:
            raise ResourceLimitError(
                f"ray count would reach {self.n_rays + ip.size} (limit {self.max_rays})",
                n_rays=self.n_rays + ip.size)

        new_rays = self._combine(vals, ip, ineg)
        new_zeros = self.zeros[ip] & self.zeros[ineg]
        new_zeros[:, word] |= mask
        self.zeros[zer, word] |= mask

        keep = zer if equality else (zer | (vals > 0))
        rays = self.rays[keep]
        if new_rays.dtype == object or rays.dtype == object:
            rays = np.vstack([rays.astype(object), new_rays.astype(object)])
            rays = _as_int64_if_safe(rays)
        else:
            rays = np.vstack([rays, new_rays])
        self.rays = rays
        self.zeros = np.vstack([self.zeros[keep], new_zeros])
        self.row_ids.append(row_id)
        if equality:
            self.d -= 1

    def _combine(self, vals, ip, ineg) -> np.ndarray:
        d = self.rays.shape[1]
        if ip.size == 0:
            return np.empty((0, d), dtype=self.rays.dtype)
        vp = vals[ip]
        vn = -vals[ineg]
        bound = 2 * _maxabs(np.asarray(vals)) * _maxabs(self.rays)
        if self.rays.dtype != object and np.asarray(vals).dtype != object and bound < INT_LIMIT:
            new = vp[:, None] * self.rays[ineg] + vn[:, None] * self.rays[ip]
        else:
            r = self.rays.astype(object)
            vp = np.asarray(vp, dtype=object)
            vn = np.asarray(vn, dtype=object)
            new = vp[:, None] * r[ineg] + vn[:, None] * r[ip]
        return _reduce_rows(new)


def _run(state: DDState, rows, rest, progress, t0, equality_rows=()):
    total = len(rows)
    done = len(state.row_ids)
    for n, i in enumerate(rest):
        try:
            state.add_row(rows[i], i, equality=i in equality_rows)
        except ResourceLimitError as exc:
            exc.rows_done, exc.rows_total = done + n, total
            raise ResourceLimitError(
                f"{exc} after {done + n}/{total} rows", done + n, total, exc.n_rays) from None
        if progress:
            progress(done + n + 1, total, state.n_rays)
        log.debug("row %d/%d: %d rays (%.1fs)", done + n + 1, total, state.n_rays,
                  time.perf_counter() - t0)
    return state


def _to_vrep(state: DDState, chart: AffineChart, label, scenario, provenance) -> VRep:
    rays = state.rays
    if rays.shape[0] == 0:
        raise EmptyPolytopeError(f"polytope {label!r} is empty")
    x0 = rays[:, 0]
    if np.any(x0 <= 0):
        raise UnboundedPolytopeError(f"polytope {label!r} is unbounded")
    s = chart.scale
    origin = chart.integer_origin
    basis = chart.integer_basis
    bound = _maxabs(rays) * (abs(s) + _maxabs(origin) + _maxabs(basis) * chart.dimension)
    if rays.dtype != object and bound < INT_LIMIT:
        r = rays
        num = np.outer(r[:, 0], origin.astype(np.int64))
        if chart.dimension:
            num = num + r[:, 1:] @ basis.astype(np.int64).T
        den = r[:, 0] * s
        g = np.gcd(np.gcd.reduce(num, axis=1), den)
        num, den = num // g[:, None], den // g
    else:
        r = rays.astype(object)
        num = np.outer(r[:, 0], origin)
        if chart.dimension:
            num = num + r[:, 1:].dot(basis.T)
        den = r[:, 0] * s
        for i in range(num.shape[0]):
            g = int(den[i])
            for v in num[i]:
                g = gcd(g, int(v))
                if g == 1:
                    break
            if g > 1:
                num[i] = [int(v) // g for v in num[i]]
                den[i] = int(den[i]) // g
        if _maxabs(num) >= INT_LIMIT or _maxabs(den) >= INT_LIMIT:
            raise OverflowError("vertex coordinates exceed int64")
    return VRep.from_integer(num.astype(np.int64), den.astype(np.int64), label=label,
                             scenario=scenario, provenance=provenance)


def enumerate_vertices(h: HRep, max_rays: int = DEFAULT_MAX_RAYS, progress=None) -> VRep:
    """Vertex list of a bounded polytope in H-representation."""
    t0 = time.perf_counter()
    chart = h.chart
    if chart.dimension == 0:
        # a single point, provided it satisfies the inequalities
        if not h.satisfied_by(chart.origin):
            raise EmptyPolytopeError(f"polytope {h.label!r} is empty")
        return VRep.from_fractions([chart.origin], label=h.label, scenario=h.scenario,
                                   provenance="double-description")
    rows = homogeneous_rows(h.ineq, h.ineq_rhs, chart)
    d = chart.dimension + 1
    order = insertion_order(rows)
    state, _, rest = DDState.simplicial(rows, order, max_rays)
    if state is None:
        # add x0 >= 0 to make the cone pointed when the rows alone are not enough
        rows = rows + [[1] + [0] * (d - 1)]
        order = order + [len(rows) - 1]
        state, _, rest = DDState.simplicial(rows, order, max_rays)
        if state is None:
            raise UnboundedPolytopeError(f"polytope {h.label!r} contains a line")
    _run(state, rows, rest, progress, t0)
    if state.n_rays and np.any(state.rays[:, 0] <= 0):
        state.add_row([1] + [0] * (d - 1), len(rows))
    log.info("%s: %d vertices in %.1fs", h.label, state.n_rays, time.perf_counter() - t0)
    return _to_vrep(state, chart, h.label, h.scenario, "double-description")


def _witness_row(w: BellVector, chart: AffineChart, sign: int) -> list[int]:
    coef = np.array([Fraction(int(c)) if not isinstance(c, Fraction) else c
                     for c in w.coefficients], dtype=object)
    # sign * (bound - w . P) >= 0
    return homogeneous_rows([-sign * coef], [-sign * Fraction(w.bound)], chart)[0]


def extend_vertices(base: HRep, vertices: VRep, w: BellVector, mode: str = "halfspace",
                    max_rays: int = DEFAULT_MAX_RAYS, label: str | None = None) -> VRep:
    """Vertices of ``base`` cut by ``w . P <= bound`` (``halfspace``) or ``== bound``.

    Runs a single double description step starting from the known vertex
    list of ``base`` instead of enumerating from scratch.
    """
    if mode not in ("halfspace", "hyperplane"):
        raise ValueError("mode must be 'halfspace' or 'hyperplane'")
    if vertices.dim != base.dim or w.coefficients.size != base.dim:
        raise ValueError("dimension mismatch between polytope, vertices and witness")
    chart = base.chart
    rows = homogeneous_rows(base.ineq, base.ineq_rhs, chart)
    free = list(chart.free)
    rays = np.column_stack([vertices.denominators, vertices.numerators[:, free]])
    state = DDState.from_rays(rays, rows, chart.dimension + 1, max_rays)
    new_row = _witness_row(w, chart, 1)
    state.add_row(new_row, len(rows), equality=(mode == "hyperplane"))
    if label is None:
        op = "<=" if mode == "halfspace" else "=="
        label = f"{base.label}&{w.label}{op}{w.bound}"
    return _to_vrep(state, chart, label, base.scenario, f"extension:{mode}")
