"""Bell scenarios with binary outcomes and the flat cell index convention.

A cell is a tuple ``(outcomes, settings)``.  Cells are laid out settings-major:
for three parties the flat index of ``P(abc|xyz)`` is
``((x*|Y| + y)*|Z| + z)*8 + (4a + 2b + c)``.  The same mixed-radix rule is
used for any number of parties, which keeps every per-setting normalisation
block contiguous.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Scenario:
    """Number of measurement settings per party; every outcome is binary."""

    settings: tuple[int, ...] = (2, 2, 2)

    def __post_init__(self):
        settings = tuple(int(s) for s in self.settings)
        if not settings:
            raise ValueError("a scenario needs at least one party")
        if any(s < 1 for s in settings):
            raise ValueError(f"setting counts must be >= 1, got {settings}")
        object.__setattr__(self, "settings", settings)

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        return cls(tuple(int(tok) for tok in text.replace(" ", "").split(",") if tok))

    @property
    def n_parties(self) -> int:
        return len(self.settings)

    @property
    def n_outcomes(self) -> int:
        return 2 ** self.n_parties

    @property
    def n_settings(self) -> int:
        return int(np.prod(self.settings))

    @property
    def size(self) -> int:
        return self.n_outcomes * self.n_settings

    @property
    def ns_dimension(self) -> int:
        """Affine dimension of the no-signalling polytope."""
        return int(np.prod([s + 1 for s in self.settings])) - 1

    def setting_index(self, setting: tuple[int, ...]) -> int:
        idx = 0
        for s, n in zip(setting, self.settings):
            if not 0 <= s < n:
                raise ValueError(f"setting {setting} outside scenario {self.settings}")
            idx = idx * n + s
        return idx

    def outcome_index(self, outcome: tuple[int, ...]) -> int:
        idx = 0
        for o in outcome:
            if o not in (0, 1):
                raise ValueError(f"outcomes are binary, got {outcome}")
            idx = 2 * idx + o
        return idx

    def index(self, outcome: tuple[int, ...], setting: tuple[int, ...]) -> int:
        return self.setting_index(setting) * self.n_outcomes + self.outcome_index(outcome)

    @cached_property
    def setting_tuples(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*[range(n) for n in self.settings]))

    @cached_property
    def outcome_tuples(self) -> list[tuple[int, ...]]:
        return list(itertools.product((0, 1), repeat=self.n_parties))

    @cached_property
    def cells(self) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        """All cells in flat index order."""
        return [(o, s) for s in self.setting_tuples for o in self.outcome_tuples]

    def label(self, i: int) -> str:
        o, s = self.cells[i]
        return "".join(map(str, o)) + "|" + "".join(map(str, s))


TRIPARTITE = Scenario((2, 2, 2))
