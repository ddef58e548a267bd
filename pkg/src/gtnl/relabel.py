"""Relabelings of parties, settings and outcomes, and orbit canonical forms."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .behavior import Behavior, BellVector
from .scenario import TRIPARTITE, Scenario


@dataclass(frozen=True)
class Relabeling:
    """A symmetry of the no-signalling polytope.

    Party ``k`` is moved to slot ``party_perm[k]``; its setting ``s`` becomes
    ``setting_perms[k][s]`` and its outcome is XOR-ed with ``flips[k][s]``
    (flip bits are indexed by the *old* setting).
    """

    party_perm: tuple[int, ...]
    setting_perms: tuple[tuple[int, ...], ...]
    flips: tuple[tuple[int, ...], ...]

    @classmethod
    def identity(cls, scenario: Scenario = TRIPARTITE) -> "Relabeling":
        return cls(
            tuple(range(scenario.n_parties)),
            tuple(tuple(range(n)) for n in scenario.settings),
            tuple((0,) * n for n in scenario.settings),
        )

    def is_valid_for(self, scenario: Scenario) -> bool:
        n = scenario.n_parties
        if sorted(self.party_perm) != list(range(n)) or len(self.setting_perms) != n:
            return False
        for k in range(n):
            m = scenario.settings[k]
            if scenario.settings[self.party_perm[k]] != m:
                return False
            if sorted(self.setting_perms[k]) != list(range(m)) or len(self.flips[k]) != m:
                return False
        return True

    def apply_cell(self, outcome, setting):
        n = len(self.party_perm)
        new_o = [0] * n
        new_s = [0] * n
        for k in range(n):
            j = self.party_perm[k]
            new_o[j] = outcome[k] ^ self.flips[k][setting[k]]
            new_s[j] = self.setting_perms[k][setting[k]]
        return tuple(new_o), tuple(new_s)

    def then(self, other: "Relabeling") -> "Relabeling":
        """Composite that applies ``self`` first and ``other`` second."""
        n = len(self.party_perm)
        pp, sp, fl = [], [], []
        for k in range(n):
            j = self.party_perm[k]
            pp.append(other.party_perm[j])
            m = len(self.setting_perms[k])
            sp.append(tuple(other.setting_perms[j][self.setting_perms[k][s]] for s in range(m)))
            fl.append(tuple(self.flips[k][s] ^ other.flips[j][self.setting_perms[k][s]]
                            for s in range(m)))
        return Relabeling(tuple(pp), tuple(sp), tuple(fl))

    def inverse(self) -> "Relabeling":
        n = len(self.party_perm)
        pp = [0] * n
        sp: list = [None] * n
        fl: list = [None] * n
        for k in range(n):
            j = self.party_perm[k]
            m = len(self.setting_perms[k])
            inv = [0] * m
            for s in range(m):
                inv[self.setting_perms[k][s]] = s
            pp[j] = k
            sp[j] = tuple(inv)
            fl[j] = tuple(self.flips[k][inv[t]] for t in range(m))
        return Relabeling(tuple(pp), tuple(sp), tuple(fl))

    def permutation(self, scenario: Scenario = TRIPARTITE) -> np.ndarray:
        """``perm[i]`` is the flat index that cell ``i`` is sent to."""
        if not self.is_valid_for(scenario):
            raise ValueError("relabeling does not match the scenario")
        return np.array([scenario.index(*self.apply_cell(o, s)) for o, s in scenario.cells],
                        dtype=np.int64)


def relabel(b: Behavior, r: Relabeling) -> Behavior:
    perm = r.permutation(b.scenario)
    out = np.empty_like(b.entries)
    out[perm] = b.entries
    return Behavior(out, b.scenario, b.mode)


def relabel_witness(w: BellVector, r: Relabeling) -> BellVector:
    perm = r.permutation(w.scenario)
    out = np.empty_like(w.coefficients)
    out[perm] = w.coefficients
    return BellVector(out, w.bound, w.label, w.scenario)


@lru_cache(maxsize=8)
def relabeling_group(scenario: Scenario = TRIPARTITE) -> tuple[Relabeling, ...]:
    """Every relabeling of the scenario (3072 for three parties with two settings)."""
    n = scenario.n_parties
    party_perms = [p for p in itertools.permutations(range(n))
                   if all(scenario.settings[p[k]] == scenario.settings[k] for k in range(n))]
    setting_choices = [list(itertools.permutations(range(m))) for m in scenario.settings]
    flip_choices = [list(itertools.product((0, 1), repeat=m)) for m in scenario.settings]
    group = []
    for pp in party_perms:
        for sp in itertools.product(*setting_choices):
            for fl in itertools.product(*flip_choices):
                group.append(Relabeling(pp, tuple(sp), tuple(fl)))
    return tuple(group)


@lru_cache(maxsize=8)
def group_permutations(scenario: Scenario = TRIPARTITE) -> np.ndarray:
    """Stack of index permutations, shape ``(|G|, scenario.size)``."""
    return np.stack([r.permutation(scenario) for r in relabeling_group(scenario)])


@lru_cache(maxsize=8)
def _gather_indices(scenario: Scenario) -> np.ndarray:
    # image under g is out[perm_g] = v, i.e. out = v[argsort(perm_g)]
    return np.argsort(group_permutations(scenario), axis=1)


def orbit_matrix(values: np.ndarray, scenario: Scenario = TRIPARTITE) -> np.ndarray:
    """All images of one entry vector under the relabeling group, one per row."""
    return np.asarray(values)[_gather_indices(scenario)]


def _lex_min_row(rows: np.ndarray) -> np.ndarray:
    if rows.dtype == object:
        return np.array(min(tuple(r) for r in rows), dtype=object)
    order = np.lexsort(rows.T[::-1])
    return rows[order[0]]


def canonical_form(b: Behavior) -> Behavior:
    """Lexicographically smallest element of the orbit of ``b``."""
    return Behavior(_lex_min_row(orbit_matrix(b.entries, b.scenario)), b.scenario, b.mode)


def find_relabeling(source: Behavior, target: Behavior) -> Relabeling | None:
    """A group element mapping ``source`` onto ``target``, or ``None``."""
    images = orbit_matrix(source.entries, source.scenario)
    hits = np.nonzero(np.all(images == target.entries, axis=1))[0]
    if hits.size == 0:
        return None
    return relabeling_group(source.scenario)[int(hits[0])]
