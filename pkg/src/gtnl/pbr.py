"""Test-factor optimization, p-values and evidence curves.

A test factor ``F`` assigns a non-negative weight to each trial result
``abcxyz`` such that ``sum_u P(u) S(u) F(u) <= 1`` for every behaviour in
the null set.  It is chosen to maximize the expected log-gain ``E_q[log2 F]``
under an anticipated trial distribution ``q``; the product of the per-trial
factors bounds the p-value.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .behavior import GHZ_THRESHOLD, depolarized_ghz
from .ingest import CountTable, DataError
from .mlns import ConvergenceError, SettingsDistribution, TrialDistribution
from .polytope import VRep
from .scenario import TRIPARTITE, Scenario

LN2 = math.log(2.0)
SAME_DATA_WARNING = (
    "the test factor was tuned on the same counts used for the p-value; "
    "the reported evidence is optimistic (use a train/test split)"
)


@dataclass(frozen=True)
class LockGroup:
    """Sets of cell indices whose test-factor values are constrained equal."""

    sets: tuple[frozenset, ...]

    def __post_init__(self):
        sets = tuple(frozenset(int(i) for i in s) for s in self.sets)
        seen: set = set()
        for s in sets:
            if seen & s:
                raise ValueError("lock sets must be disjoint")
            seen |= s
        object.__setattr__(self, "sets", sets)

    def cells(self) -> frozenset:
        return frozenset().union(*self.sets) if self.sets else frozenset()

    def to_json(self) -> list:
        return [sorted(s) for s in self.sets]


def cao_locks(grouped=((0, 0, 0), (0, 1, 0)), scenario: Scenario = TRIPARTITE) -> LockGroup:
    """Tie ``F(a0c|xyz)`` to ``F(a1c|xyz)`` on settings whose b-split is unknown."""
    sets = []
    for setting in grouped:
        for a in (0, 1):
            for c in (0, 1):
                sets.append({scenario.index((a, 0, c), setting), scenario.index((a, 1, c), setting)})
    return LockGroup(tuple(sets))


def lock_matrix(locks, size: int) -> np.ndarray:
    """0/1 matrix ``L`` (size x k) with ``F = L g`` for group values ``g``."""
    sets = []
    for lg in locks:
        sets.extend(lg.sets)
    used = set()
    for s in sets:
        if used & s:
            raise ValueError("lock sets from different groups overlap")
        if max(s) >= size or min(s) < 0:
            raise ValueError("lock cell index out of range")
        used |= s
    groups = [sorted(s) for s in sets if len(s) > 1]
    singles = [i for i in range(size) if not any(i in g for g in groups)]
    cols = [[i] for i in singles] + groups
    cols.sort(key=lambda c: c[0])
    L = np.zeros((size, len(cols)))
    for j, c in enumerate(cols):
        L[c, j] = 1.0
    return L


@dataclass(frozen=True, eq=False)
class TestFactor:
    """Non-negative weights per trial result with the solver's certificate."""

    __test__ = False  # keep pytest from collecting this class

    values: np.ndarray
    objective: float
    report: dict = field(default_factory=dict)
    locks: tuple = ()
    scenario: Scenario = TRIPARTITE
    q: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        f = np.asarray(self.values, dtype=float)
        if f.shape != (self.scenario.size,):
            raise ValueError(f"test factor needs {self.scenario.size} entries")
        if np.any(f < 0):
            raise ValueError("test factor entries must be non-negative")
        object.__setattr__(self, "values", f)

    @classmethod
    def identity(cls, scenario: Scenario = TRIPARTITE) -> "TestFactor":
        return cls(np.ones(scenario.size), 0.0, {"note": "identity"}, (), scenario)

    def table(self) -> np.ndarray:
        return self.values.reshape(self.scenario.n_settings, self.scenario.n_outcomes)

    def expectations(self, vertices: VRep, s: SettingsDistribution) -> np.ndarray:
        """``E_P[F]`` for each vertex behaviour ``P``."""
        return vertices.to_float() @ (s.per_cell() * self.values)

    def gain(self, q) -> float:
        """``E_q[log2 F]`` (``-inf`` if q charges a zero cell)."""
        q = np.asarray(getattr(q, "joint", q), dtype=float)
        pos = q > 0
        if np.any(self.values[pos] == 0):
            return -math.inf
        return float(q[pos] @ np.log2(self.values[pos]))

    def to_json_dict(self) -> dict:
        return {
            "kind": "test_factor",
            "scenario": list(self.scenario.settings),
            "values": self.values.tolist(),
            "objective_log2": self.objective,
            "locks": [lg.to_json() for lg in self.locks],
            "report": self.report,
            "q": None if self.q is None else np.asarray(self.q).tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TestFactor":
        q = d.get("q")
        return cls(np.array(d["values"], dtype=float), float(d["objective_log2"]),
                   dict(d.get("report", {})),
                   tuple(LockGroup(tuple(frozenset(s) for s in lg)) for lg in d.get("locks", [])),
                   Scenario(tuple(d["scenario"])), None if q is None else np.array(q))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "TestFactor":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _constraint_matrix(vertices: VRep, s: SettingsDistribution) -> np.ndarray:
    return vertices.to_float() * s.per_cell()[None, :]


def _barrier(A, w, g0, gap_tol=1e-9, t0=1.0, grow=8.0, newton_tol=1e-12, max_newton=200):
    """Maximize ``sum w log g`` s.t. ``A g <= 1``, ``g >= 0`` by a log-barrier path.

    Returns ``(g, lam, nu, t, iterations)`` with the barrier dual estimates
    ``lam = 1/(t s)`` for the rows and ``nu = 1/(t g)`` for the bounds.
    """
    m, k = A.shape
    g = g0.copy()
    t = t0
    iters = 0
    pos = w > 0

    def phi(g, t):
        s = 1.0 - A @ g
        if np.any(s <= 0) or np.any(g <= 0):
            return math.inf
        return -t * float(w[pos] @ np.log(g[pos])) - np.log(s).sum() - np.log(g).sum()

    while True:
        for _ in range(max_newton):
            s = 1.0 - A @ g
            inv_s = 1.0 / s
            grad = -t * w / g + A.T @ inv_s - 1.0 / g
            As = A * inv_s[:, None]
            H = As.T @ As
            H[np.diag_indices(k)] += (t * w + 1.0) / g ** 2
            try:
                step = -np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(-grad @ step)
            iters += 1
            if dec / 2 <= newton_tol:
                break
            # largest step keeping g > 0 and s > 0
            alpha = 1.0
            neg = step < 0
            if np.any(neg):
                alpha = min(alpha, 0.99 * float(np.min(-g[neg] / step[neg])))
            ds = A @ step
            up = ds > 0
            if np.any(up):
                alpha = min(alpha, 0.99 * float(np.min(s[up] / ds[up])))
            f0 = phi(g, t)
            while phi(g + alpha * step, t) > f0 - 0.25 * alpha * dec and alpha > 1e-14:
                alpha *= 0.5
            g_new = g + alpha * step
            if not phi(g_new, t) < f0:
                break
            g = g_new
        if (m + k) / t < gap_tol:
            break
        t *= grow
    s = 1.0 - A @ g
    return g, 1.0 / (t * s), 1.0 / (t * g), t, iters


def _waterfill(F, A_full, q, L):
    """Raise lock groups with no q-mass to the largest value the constraints allow."""
    F = F.copy()
    mass = L.T @ q
    for j in np.nonzero(mass <= 0)[0]:
        col = A_full @ L[:, j]
        load = A_full @ F
        live = col > 0
        if not np.any(live):
            continue
        room = float(np.min((1.0 - load[live]) / col[live]))
        if room > 0:
            F = F + room * L[:, j]
    return F


def _dual_gap(w, g, lam, A) -> float:
    """Upper bound on the optimality gap of group values ``g`` (in bits).

    ``w`` and the rows of ``A`` are pooled over lock groups.  For any
    mixture ``m`` of the constraint rows, concavity of the logarithm gives
    ``sum w log g <= sum w log(w / m)`` for every feasible ``g``.
    """
    mu = lam / lam.sum()
    m = mu @ A
    pos = w > 0
    if np.any(m[pos] <= 0) or np.any(g[pos] <= 0):
        return math.inf
    bound = float(w[pos] @ np.log2(w[pos] / m[pos]))
    return bound - float(w[pos] @ np.log2(g[pos]))


def optimize_test_factor(q: TrialDistribution, vertices: VRep, s: SettingsDistribution | None = None,
                         locks=(), gap_tol: float = 1e-9, max_gap: float = 1e-7,
                         working_set: int = 4000) -> TestFactor:
    """Log-optimal test factor against the constraint vertices.

    Maximizes ``E_q[log2 F]`` subject to ``E_P[F] <= 1`` for each vertex
    ``P`` of ``vertices`` (weighted by the settings distribution), ``F >= 0``
    and the lock equalities.  Solved with a primal log-barrier Newton method
    over the lock-group values, on a working set of vertex rows that grows
    until no row is violated.  Afterwards cells without q-mass are raised as
    far as the constraints permit.

    Passing only the witness-saturating vertices is sound when ``q``
    violates the witness; for other ``q`` use the full halfspace list.
    """
    s = s or q.settings
    scenario = s.scenario
    qv = np.asarray(q.joint, dtype=float)
    locks = tuple(locks)
    L = lock_matrix(locks, scenario.size)
    A_full = _constraint_matrix(vertices, s)
    A_all = A_full @ L
    w = L.T @ np.clip(qv, 0.0, None)
    w = w / w.sum()
    k = L.shape[1]
    g0 = np.full(k, 0.5 / max(1.0, float(A_all.sum(axis=1).max())))
    # row generation: solve on a working set, add the rows the solution violates
    if A_all.shape[0] <= working_set:
        rows = np.arange(A_all.shape[0])
    else:
        score = A_all @ (w * k)
        rows = np.sort(np.argsort(-score, kind="stable")[:working_set])
    iters, rounds = 0, 0
    while True:
        A = A_all[rows]
        g, lam, nu, t, it = _barrier(A, w, g0, gap_tol=gap_tol)
        iters += it
        rounds += 1
        load = A_all @ g
        load[rows] = 0.0
        bad = np.nonzero(load > 1.0 + 1e-12)[0]
        if bad.size == 0 or rounds >= 50:
            break
        add = bad[np.argsort(-load[bad], kind="stable")[:working_set]]
        rows = np.union1d(rows, add)
    F = L @ g
    F = _waterfill(F, A_full, qv, L)
    worst = float((A_full @ F).max())
    if worst > 1.0:
        F = F / worst
    loads = A_full @ F
    # scaled stationarity: g * (A^T lam - nu) should reproduce w
    stat = np.abs(w - g * (A.T @ lam - nu))
    gap = _dual_gap(w, (L.T @ F) / L.sum(axis=0), lam, A)
    objective = float(qv[qv > 0] @ np.log2(F[qv > 0]))
    report = {
        "solver": "log-barrier",
        "newton_iterations": iters,
        "working_set_rounds": rounds,
        "barrier_t": t,
        "duality_gap_log2": (A.shape[0] + A.shape[1]) / t / LN2,
        "kkt_stationarity": float(stat.max()),
        "certified_gap_log2": gap,
        "max_constraint": float(loads.max()),
        "n_constraints": int(A_all.shape[0]),
        "working_set": int(A.shape[0]),
        "n_variables": int(A.shape[1]),
        "active_constraints": int(np.sum(lam > 1e-6)),
        "expected_F_under_q": float(qv @ F),
    }
    if not np.isfinite(objective) or not gap <= max_gap:
        raise ConvergenceError("test-factor optimization did not converge", report)
    if objective < 0:
        # the identity is always feasible, so a negative value is round-off
        objective = 0.0
        F = np.ones(scenario.size)
    return TestFactor(F, objective, report, locks, scenario, qv.copy())


@dataclass(frozen=True, eq=False)
class EvidenceReport:
    """Accumulated test statistic and the resulting p-value bound."""

    log2_T: float
    log10_p: float
    contributions: np.ndarray = field(repr=False)
    n_trials: int = 0
    zero_cell_hit: bool = False
    warning: str = ""

    @property
    def p(self) -> float:
        """The p-value as a float, clipped below at the smallest normal double."""
        return max(10.0 ** self.log10_p, np.finfo(float).tiny)

    def format_p(self, digits: int = 4) -> str:
        e = math.floor(self.log10_p)
        mant = 10.0 ** (self.log10_p - e)
        if e == 0:
            return f"{mant:.{digits}g}"
        return f"{mant:.{digits}g}e{e:+03d}"

    def to_json_dict(self) -> dict:
        return {
            "kind": "evidence",
            "log2_T": self.log2_T,
            "log10_p": self.log10_p,
            "p": self.format_p(),
            "n_trials": self.n_trials,
            "zero_cell_hit": self.zero_cell_hit,
            "warning": self.warning,
            "contributions_log2": self.contributions.tolist(),
        }


def log_pvalue(f: TestFactor, counts, same_data: bool = False) -> EvidenceReport:
    """p-value bound ``min(2**-log2T, 1)`` with ``log2T = sum ct(u) log2 F(u)``.

    Any count on a cell where ``F = 0`` sets ``p = 1``.  With
    ``same_data=True`` the report carries the optimism warning.
    """
    ct = np.asarray(getattr(counts, "counts", counts))
    if ct.shape != f.values.shape:
        raise DataError(f"counts have shape {ct.shape}, test factor {f.values.shape}")
    if np.any(ct < 0):
        raise DataError("counts must be non-negative")
    ct = ct.astype(float)
    warning = SAME_DATA_WARNING if same_data else ""
    hit = bool(np.any((ct > 0) & (f.values == 0)))
    contrib = np.zeros_like(ct)
    pos = ct > 0
    if hit:
        return EvidenceReport(-math.inf, 0.0, contrib, int(ct.sum()), True, warning)
    contrib[pos] = ct[pos] * np.log2(f.values[pos])
    # pool counts over equal F values first, so moving counts between
    # cells that share a value (locked cells) leaves log2 T unchanged
    vals, inv = np.unique(f.values[pos], return_inverse=True)
    pooled = np.bincount(inv, weights=ct[pos])
    log2_T = math.fsum((pooled * np.log2(vals)).tolist())
    log10_p = min(-log2_T * math.log10(2.0), 0.0)
    return EvidenceReport(log2_T, log10_p, contrib, int(ct.sum()), False, warning)


def verify_halfspace_reduction(f: TestFactor, full_vertices: VRep, s: SettingsDistribution,
                               tol: float = 1e-8, q=None) -> dict:
    """Check ``E_P[F] <= 1 + tol`` on every vertex of a (larger) constraint set.

    Also checks ``E_q[F] >= 1`` whenever the test factor has positive gain,
    which holds at the optimum by concavity of the logarithm.
    """
    e = f.expectations(full_vertices, s)
    bad = np.nonzero(e > 1.0 + tol)[0]
    q = f.q if q is None else np.asarray(getattr(q, "joint", q), dtype=float)
    out = {
        "n_vertices": int(full_vertices.n_vertices),
        "max_expectation": float(e.max()),
        "n_violations": int(bad.size),
        "violations": [(int(i), float(e[i] - 1.0)) for i in bad[:100]],
        "ok": bool(bad.size == 0),
    }
    if q is not None:
        eq = float(q @ f.values)
        out["expected_F_under_q"] = eq
        out["jensen_ok"] = bool(f.objective <= 0 or eq >= 1.0 - 1e-9)
        out["ok"] = out["ok"] and out["jensen_ok"]
    return out


def default_grid(n: int = 120) -> np.ndarray:
    """``n`` equally spaced visibilities on ``(threshold, 1]``."""
    if n < 1:
        raise ValueError("grid needs at least one point")
    return GHZ_THRESHOLD + (1.0 - GHZ_THRESHOLD) * np.arange(1, n + 1) / n


@dataclass(frozen=True)
class CurvePoint:
    theta: float
    objective: float
    below_threshold: bool = False


def evidence_curve(variant: str, vertices: VRep, s: SettingsDistribution | None = None,
                   thetas=None) -> list[CurvePoint]:
    """Optimal gain for the depolarized GHZ behaviour along a visibility grid."""
    s = s or SettingsDistribution.uniform()
    thetas = default_grid() if thetas is None else np.asarray(thetas, dtype=float)
    out = []
    for th in thetas:
        th = float(th)
        if th <= GHZ_THRESHOLD + 1e-15:
            out.append(CurvePoint(th, 0.0, True))
            continue
        q = TrialDistribution.from_behavior(depolarized_ghz(th, variant), s)
        tf = optimize_test_factor(q, vertices, s)
        out.append(CurvePoint(th, tf.objective))
    return out


def curve_csv(points, path=None) -> str:
    lines = ["theta,objective_log2,below_threshold"]
    lines += [f"{p.theta:.12g},{p.objective:.12g},{int(p.below_threshold)}" for p in points]
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
