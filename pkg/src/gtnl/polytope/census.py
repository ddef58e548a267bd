"""Partition of a vertex list into relabeling orbits, with witness statistics."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..behavior import Behavior, BellVector, deterministic_behavior, extremal_box
from ..relabel import _gather_indices
from ..scenario import TRIPARTITE, Scenario
from .vrep import VRep

# Published saturation/violation profile per class id:
# (saturating MAO, violating MAO, saturating CAO, violating CAO).
# Classes not listed have an all-zero profile.
REFERENCE_PROFILES = {
    1: (16, 0, 16, 0), 2: (8, 0, 4, 0), 3: (2, 0, 0, 0), 5: (8, 0, 8, 0),
    6: (10, 0, 8, 0), 8: (8, 1, 8, 1), 10: (8, 4, 8, 4), 12: (20, 4, 16, 8),
    14: (16, 0, 16, 0), 15: (0, 16, 8, 16), 17: (8, 16, 0, 16), 18: (16, 0, 8, 0),
    24: (20, 4, 16, 8), 25: (32, 0, 24, 0), 26: (16, 0, 16, 0), 27: (8, 0, 0, 0),
    28: (16, 0, 16, 0), 29: (0, 8, 0, 8), 32: (8, 0, 0, 0), 40: (4, 0, 0, 0),
    41: (4, 0, 4, 0), 42: (8, 0, 8, 0),
}
REFERENCE_CLASS_COUNT = 46


@dataclass(frozen=True)
class CensusClass:
    class_id: int
    representative: Behavior
    size: int
    saturating: tuple[int, ...] = ()
    violating: tuple[int, ...] = ()
    member_indices: np.ndarray = field(default=None, repr=False, compare=False)

    def profile(self) -> tuple[int, ...]:
        out = []
        for s, v in zip(self.saturating, self.violating):
            out += [s, v]
        return tuple(out)


@dataclass(frozen=True)
class OrbitCensus:
    classes: tuple[CensusClass, ...]
    witness_labels: tuple[str, ...]
    total: int

    def __len__(self):
        return len(self.classes)

    def by_id(self, class_id: int) -> CensusClass:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)

    def class_of(self, vertex_index: int) -> int:
        for c in self.classes:
            if vertex_index in c.member_indices:
                return c.class_id
        raise KeyError(vertex_index)

    def rows(self, nonzero_only: bool = True):
        """(id, size, sat_1, viol_1, sat_2, viol_2, ...) ordered by id."""
        out = []
        for c in sorted(self.classes, key=lambda c: c.class_id):
            prof = c.profile()
            if nonzero_only and not any(prof):
                continue
            out.append((c.class_id, c.size, *prof))
        return out

    def format_table(self, nonzero_only: bool = True) -> str:
        head = ["class", "size"]
        for lab in self.witness_labels:
            head += [f"sat {lab}", f"viol {lab}"]
        lines = ["  ".join(f"{h:>9}" for h in head)]
        for row in self.rows(nonzero_only):
            cells = [str(row[0]), str(row[1])] + [str(v) if v else "-" for v in row[2:]]
            lines.append("  ".join(f"{c:>9}" for c in cells))
        lines.append(f"{len(self.classes)} classes, {self.total} vertices")
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            "kind": "census",
            "witnesses": list(self.witness_labels),
            "total": self.total,
            "classes": [
                {"id": c.class_id, "size": c.size, "saturating": list(c.saturating),
                 "violating": list(c.violating),
                 "representative": [f"{v.numerator}/{v.denominator}" for v in c.representative.entries]}
                for c in sorted(self.classes, key=lambda c: c.class_id)
            ],
        }


def _integer_keys(v: VRep) -> tuple[np.ndarray, int]:
    common = int(np.lcm.reduce(v.denominators))
    return v.numerators * (common // v.denominators)[:, None], common


def _orbits(keys: np.ndarray, scenario: Scenario):
    gather = _gather_indices(scenario)
    lookup = {row.tobytes(): i for i, row in enumerate(keys)}
    label = np.full(keys.shape[0], -1, dtype=np.int64)
    reps = []
    for i in range(keys.shape[0]):
        if label[i] >= 0:
            continue
        images = np.unique(keys[i][gather], axis=0)
        members = []
        for img in images:
            j = lookup.get(img.tobytes())
            if j is None:
                raise ValueError("vertex list is not closed under relabeling")
            members.append(j)
        label[members] = len(reps)
        # np.unique sorts rows lexicographically, so the first is the orbit minimum
        reps.append(images[0])
    return label, reps


def _anchor_ids(scenario: Scenario):
    """Known members of specific classes, used to pin their ids."""
    pr = [Fraction(1, 2) if (o[2] == 0 and (o[0] ^ o[1]) == (s[0] & s[1])) else Fraction(0)
          for o, s in scenario.cells]
    return {
        1: deterministic_behavior(((0, 0), (0, 0), (0, 0)), scenario),
        2: Behavior(np.array(pr, dtype=object), scenario, "exact"),
        8: extremal_box("P1"),
    }


def _assign_ids(profiles, sizes, reps, anchors, reference):
    """Map orbit index -> class id, honouring anchors and unique reference profiles."""
    n = len(profiles)
    ids = [None] * n
    taken = set()
    for cid, orbit in anchors.items():
        if orbit is not None and cid in reference and profiles[orbit] == reference[cid]:
            ids[orbit] = cid
            taken.add(cid)
    # group remaining reference ids and orbits by profile
    by_profile: dict = {}
    for cid, prof in sorted(reference.items()):
        if cid not in taken:
            by_profile.setdefault(prof, [[], []])[0].append(cid)
    for k in sorted(range(n), key=lambda k: (sizes[k], tuple(reps[k]))):
        if ids[k] is None and profiles[k] in by_profile:
            by_profile[profiles[k]][1].append(k)
    for prof, (cids, orbits) in by_profile.items():
        for cid, k in zip(cids, orbits):
            ids[k] = cid
            taken.add(cid)
    # reference ids whose profile matched nothing go to the closest unlabelled profile
    order = sorted(range(n), key=lambda k: (sizes[k], tuple(reps[k])))
    for cid, prof in sorted(reference.items()):
        if cid in taken:
            continue
        cand = [k for k in order if ids[k] is None and any(profiles[k])]
        if not cand:
            continue
        k = min(cand, key=lambda k: sum(abs(a - b) for a, b in zip(profiles[k], prof)))
        ids[k] = cid
        taken.add(cid)
    free = iter(c for c in range(1, 10 ** 6) if c not in taken and c not in reference)
    for k in order:
        if ids[k] is None:
            ids[k] = next(free)
    return ids


def classify_census(v: VRep, witnesses: list[BellVector] | tuple = (),
                    reference: dict | None = None) -> OrbitCensus:
    """Split ``v`` into relabeling orbits and count witness saturations/violations per orbit.

    Class ids follow the published numbering where it can be recovered:
    the deterministic, PR and ``P1`` classes are pinned by known members,
    and other classes take the id whose reference profile they match
    (ties broken by orbit size, then canonical form).  A reference id with
    no exact match goes to the unlabelled orbit with the nearest nonzero
    profile.  Remaining orbits get the unused ids in the same order.
    """
    scenario = v.scenario or TRIPARTITE
    keys, common = _integer_keys(v)
    label, reps = _orbits(keys, scenario)
    n_orbits = len(reps)
    signs = [v.compare_witness(w) for w in witnesses]
    sizes = np.bincount(label, minlength=n_orbits)
    sat = [np.bincount(label[s == 0], minlength=n_orbits) for s in signs]
    vio = [np.bincount(label[s > 0], minlength=n_orbits) for s in signs]
    profiles = []
    for k in range(n_orbits):
        prof = []
        for j in range(len(witnesses)):
            prof += [int(sat[j][k]), int(vio[j][k])]
        profiles.append(tuple(prof))

    lookup = {row.tobytes(): i for i, row in enumerate(keys)}
    anchors = {}
    if scenario == TRIPARTITE:
        for cid, b in _anchor_ids(scenario).items():
            key = np.array([int(x * common) if (x * common).denominator == 1 else -1
                            for x in b.entries], dtype=np.int64)
            j = lookup.get(key.tobytes())
            anchors[cid] = None if j is None else int(label[j])
    if reference is None:
        reference = REFERENCE_PROFILES if len(witnesses) == 2 and scenario == TRIPARTITE else {}
    ids = _assign_ids(profiles, sizes.tolist(), reps, anchors, reference)

    classes = []
    for k in range(n_orbits):
        rep = Behavior(np.array([Fraction(int(x), common) for x in reps[k]], dtype=object),
                       scenario, "exact")
        classes.append(CensusClass(
            ids[k], rep, int(sizes[k]),
            tuple(int(s[k]) for s in sat), tuple(int(x[k]) for x in vio),
            np.nonzero(label == k)[0]))
    classes.sort(key=lambda c: c.class_id)
    return OrbitCensus(tuple(classes), tuple(w.label for w in witnesses), v.n_vertices)
