"""Maximum-likelihood no-signalling estimates of trial distributions.

The likelihood is maximised over ``Q = S * P`` with ``P`` in the
no-signalling polytope.  Equalities are eliminated through the exact
affine chart of the polytope, and the remaining non-negativity constraints
are handled by a log barrier with damped Newton steps.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .behavior import Behavior, no_signalling_residual
from .ingest import CountTable
from .polytope.hrep import build_ns_hrep
from .scenario import TRIPARTITE, Scenario

log = logging.getLogger(__name__)
LN2 = np.log(2.0)


class ConvergenceError(RuntimeError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, eq=False)
class SettingsDistribution:
    probs: np.ndarray
    scenario: Scenario = TRIPARTITE

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.scenario.n_settings,):
            raise ValueError(f"need {self.scenario.n_settings} setting probabilities")
        if np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("settings distribution must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, scenario: Scenario = TRIPARTITE) -> "SettingsDistribution":
        return cls(np.full(scenario.n_settings, 1.0 / scenario.n_settings), scenario)

    def per_cell(self) -> np.ndarray:
        """S(xyz) repeated over the outcome block of each setting."""
        return np.repeat(self.probs, self.scenario.n_outcomes)


@dataclass(frozen=True, eq=False)
class TrialDistribution:
    """Joint distribution ``Q(abcxyz)`` in flat cell order."""

    joint: np.ndarray
    settings: SettingsDistribution
    report: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        q = np.asarray(self.joint, dtype=float)
        if q.shape != (self.settings.scenario.size,):
            raise ValueError("trial distribution has the wrong length")
        object.__setattr__(self, "joint", q)

    @property
    def scenario(self) -> Scenario:
        return self.settings.scenario

    def table(self) -> np.ndarray:
        return self.joint.reshape(self.scenario.n_settings, self.scenario.n_outcomes)

    def behavior(self) -> Behavior:
        s = self.settings.per_cell()
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(s > 0, self.joint / np.where(s > 0, s, 1), 1.0 / self.scenario.n_outcomes)
        return Behavior(cond, self.scenario, "float")

    @classmethod
    def from_behavior(cls, b: Behavior, s: SettingsDistribution | None = None) -> "TrialDistribution":
        s = s or SettingsDistribution.uniform(b.scenario)
        return cls(np.asarray(b.to_float().entries, dtype=float) * s.per_cell(), s)

    def settings_residual(self) -> float:
        return float(np.abs(self.table().sum(axis=1) - self.settings.probs).max())

    def ns_residual(self) -> float:
        return float(no_signalling_residual(self.behavior()))

    def to_json_dict(self) -> dict:
        return {
            "kind": "trial_distribution",
            "scenario": list(self.scenario.settings),
            "mode": "float",
            "entries": self.joint.tolist(),
            "settings": self.settings.probs.tolist(),
            "report": self.report,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TrialDistribution":
        scen = Scenario(tuple(d["scenario"]))
        return cls(np.array(d["entries"], dtype=float),
                   SettingsDistribution(np.array(d["settings"]), scen), d.get("report", {}))


@dataclass(frozen=True, eq=False)
class EmpiricalFrequencies:
    freqs: np.ndarray
    n: int
    settings: SettingsDistribution
    grouped: tuple[tuple[int, ...], ...] = ()
    counts: CountTable | None = None

    @property
    def scenario(self) -> Scenario:
        return self.settings.scenario

    def table(self) -> np.ndarray:
        return self.freqs.reshape(self.scenario.n_settings, self.scenario.n_outcomes)


def empirical_from_counts(c, s: SettingsDistribution | None = None, grouped=()) -> EmpiricalFrequencies:
    """``f(abcxyz) = N(abc|xyz) / N(xyz) * S(xyz)``."""
    if isinstance(c, CountTable):
        table, scen = c.counts, c.scenario
    else:
        table, scen = np.asarray(c), (s.scenario if s else TRIPARTITE)
        c = CountTable(table, scen)
    s = s or SettingsDistribution.uniform(scen)
    tab = np.asarray(table, dtype=float).reshape(scen.n_settings, scen.n_outcomes)
    tot = tab.sum(axis=1)
    if np.any(tot <= 0):
        bad = [scen.setting_tuples[i] for i in np.nonzero(tot <= 0)[0]]
        raise ValueError(f"settings {bad} have no counts")
    f = (tab / tot[:, None]) * s.probs[:, None]
    return EmpiricalFrequencies(f.ravel(), int(tab.sum()), s, tuple(tuple(g) for g in grouped), c)


# chart and grouping helpers

@lru_cache(maxsize=8)
def _float_chart(scenario: Scenario):
    ch = build_ns_hrep(scenario).chart
    return ch.origin.astype(float), ch.basis.astype(float)


def grouping_matrix(scenario: Scenario, grouped=()) -> np.ndarray:
    """Rows sum the cells whose likelihood is pooled: B's outcome on grouped settings."""
    grouped = {tuple(g) for g in grouped}
    rows = []
    for setting in scenario.setting_tuples:
        if setting in grouped:
            if scenario.n_parties < 2:
                raise ValueError("grouping needs a second party")
            for o in scenario.outcome_tuples:
                if o[1] == 0:
                    r = np.zeros(scenario.size)
                    r[scenario.index(o, setting)] = 1
                    r[scenario.index(o[:1] + (1,) + o[2:], setting)] = 1
                    rows.append(r)
        else:
            for o in scenario.outcome_tuples:
                r = np.zeros(scenario.size)
                r[scenario.index(o, setting)] = 1
                rows.append(r)
    return np.array(rows)


def log_likelihood(q, freqs, grouped=(), scenario: Scenario = TRIPARTITE) -> float:
    """Base-2 objective ``sum_g w_g log2 (G Q)_g``; cells with zero weight are skipped."""
    G = grouping_matrix(scenario, grouped)
    w = G @ np.asarray(freqs, dtype=float)
    gq = G @ np.asarray(q, dtype=float)
    mask = w > 0
    if np.any(gq[mask] <= 0):
        return -np.inf
    return float(np.sum(w[mask] * np.log2(gq[mask])))


def _newton_barrier(q0, M, G, w, mu0=1e-2, mu_min=1e-13, shrink=0.2, tol=1e-22, max_iter=100):
    """Maximise ``w . log(G q) + mu * sum log q`` along ``q = q0 + M t``."""
    k = M.shape[1]
    t = np.zeros(k)
    mu = mu0
    iters = 0
    mask = w > 0
    Gm, wm = G[mask], w[mask]
    GM = Gm @ M

    def phi(t, mu):
        q = q0 + M @ t
        if np.any(q <= 0):
            return -np.inf
        gq = Gm @ q
        if np.any(gq <= 0):
            return -np.inf
        return float(wm @ np.log(gq) + mu * np.sum(np.log(q)))

    while True:
        for _ in range(max_iter):
            q = q0 + M @ t
            gq = Gm @ q
            grad = GM.T @ (wm / gq) + mu * (M.T @ (1.0 / q))
            H = (GM * (wm / gq ** 2)[:, None]).T @ GM + mu * ((M * (1.0 / q ** 2)[:, None]).T @ M)
            try:
                step = np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(H, grad, rcond=None)[0]
            dec = float(grad @ step)
            iters += 1
            if dec / 2 <= tol:
                break
            # keep q strictly positive, then Armijo backtracking
            dq = M @ step
            neg = dq < 0
            alpha = 1.0
            if np.any(neg):
                alpha = min(1.0, 0.99 * float(np.min(-q[neg] / dq[neg])))
            f0 = phi(t, mu)
            while phi(t + alpha * step, mu) < f0 + 0.25 * alpha * dec and alpha > 1e-14:
                alpha *= 0.5
            t_new = t + alpha * step
            # stop once rounding error dominates the predicted gain
            if phi(t_new, mu) - f0 <= 1e-15 * max(1.0, abs(f0)):
                t = t_new if phi(t_new, mu) >= f0 else t
                break
            t = t_new
        if mu <= mu_min:
            break
        mu = max(mu * shrink, mu_min)
    q = q0 + M @ t
    kkt = kkt_residual(q, M, G, w)
    return q, {"iterations": iters, "barrier_mu": mu, "duality_gap": float(mu * q.size), **kkt}


def kkt_residual(q, M, G, w, active_tol=1e-9) -> dict:
    """Stationarity on the active face and the most negative multiplier.

    Cells with ``q`` below ``active_tol`` are treated as active bounds.  The
    objective gradient must be cancelled by non-negative multipliers on
    those bounds.
    """
    mask = w > 0
    gq = G[mask] @ q
    grad = (G[mask] @ M).T @ (w[mask] / gq)
    act = np.nonzero(q < active_tol)[0]
    if act.size:
        A = M[act]
        lam, *_ = np.linalg.lstsq(A.T, -grad, rcond=None)
        resid = grad + A.T @ lam
        min_lam = float(lam.min())
    else:
        resid, min_lam = grad, 0.0
    return {"stationarity": float(np.abs(resid).max()), "min_multiplier": min_lam,
            "active_bounds": int(act.size)}


def _fit(e: EmpiricalFrequencies, s: SettingsDistribution, grouped, **kw) -> TrialDistribution:
    scen = s.scenario
    p0, N = _float_chart(scen)
    sc = s.per_cell()
    # start from the uniform behaviour, which is interior when S > 0
    uniform = np.full(scen.size, 1.0 / scen.n_outcomes)
    free = list(build_ns_hrep(scen).chart.free)
    t_u = uniform[free]
    q0 = sc * (p0 + N @ t_u)
    M = sc[:, None] * N
    G = grouping_matrix(scen, grouped)
    w = G @ e.freqs
    q, rep = _newton_barrier(q0, M, G, w, **kw)
    q = np.where(q < 0, 0.0, q)
    out = TrialDistribution(q, s)
    rep.update({
        "objective_log2": log_likelihood(q, e.freqs, grouped, scen),
        "settings_residual": out.settings_residual(),
        "ns_residual": out.ns_residual(),
        "min_entry": float(q.min()),
        "grouped": [list(g) for g in grouped],
        "converged": bool(rep["stationarity"] < 1e-7 and rep["min_multiplier"] > -1e-7),
    })
    if not np.isfinite(rep["objective_log2"]):
        raise ConvergenceError("MLNS solver left the feasible region", rep)
    return TrialDistribution(q, s, rep)


def mlns_fit(e: EmpiricalFrequencies, s: SettingsDistribution | None = None, **kw) -> TrialDistribution:
    """Maximum-likelihood no-signalling trial distribution for ``e``."""
    s = s or e.settings
    if e.grouped:
        raise ValueError("frequencies declare grouped settings; use mlns_fit_grouped")
    return _fit(e, s, (), **kw)


def mlns_fit_grouped(e: EmpiricalFrequencies, s: SettingsDistribution | None = None,
                     grouped=None, **kw) -> TrialDistribution:
    """As :func:`mlns_fit`, but grouped settings only enter through sums over B's outcome."""
    s = s or e.settings
    grouped = tuple(tuple(g) for g in (e.grouped if grouped is None else grouped))
    return _fit(e, s, grouped, **kw)


def zero_adjust(q0: TrialDistribution, n: int, s: SettingsDistribution | None = None) -> TrialDistribution:
    """Mix with the settings-conditional uniform distribution at weight ``1/(n+1)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    s = s or q0.settings
    noise = s.per_cell() / s.scenario.n_outcomes
    q1 = (n / (n + 1.0)) * q0.joint + (1.0 / (n + 1.0)) * noise
    rep = dict(q0.report)
    rep["zero_adjust_n"] = int(n)
    return TrialDistribution(q1, s, rep)


def fit_report_json(q: TrialDistribution) -> str:
    return json.dumps(q.report, indent=1, sort_keys=True)
