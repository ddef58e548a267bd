"""Count tables: four-party CSV input and derivation of three-party trial counts.

Four-party tables have one row per measurement combination (for example
``Z(X+Z)XZ``) and one column per outcome sign string (``++-+``), with the
sign positions read left to right as photons 1 to 4.
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .scenario import TRIPARTITE, Scenario

SIGN_COLUMNS = tuple(
    "".join("+-"[(i >> (3 - k)) & 1] for k in range(4)) for i in range(16)
)
_TOKEN = re.compile(r"\(([XZ][+-][XZ])\)|([XZ])")
BUNDLED = {"mao1": "mao_dataset1.csv", "mao2": "mao_dataset2.csv", "cao": "cao_dataset.csv"}


class DataError(ValueError):
    """Malformed or incomplete count data."""


@dataclass(frozen=True, eq=False)
class CountTable:
    """Non-negative integer trial counts ``ct(abcxyz)`` in flat cell order."""

    counts: np.ndarray
    scenario: Scenario = TRIPARTITE
    source: str = ""
    log: tuple[str, ...] = ()

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (self.scenario.size,):
            raise DataError(f"expected {self.scenario.size} counts, got shape {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if np.any(c != np.round(c)):
                raise DataError("counts must be integers")
            c = c.astype(np.int64)
        if np.any(c < 0):
            raise DataError("counts must be non-negative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def table(self) -> np.ndarray:
        return self.counts.reshape(self.scenario.n_settings, self.scenario.n_outcomes)

    def setting_totals(self) -> np.ndarray:
        return self.table().sum(axis=1)

    def with_counts(self, counts, note: str) -> "CountTable":
        return CountTable(np.asarray(counts), self.scenario, self.source, self.log + (note,))

    def to_json_dict(self) -> dict:
        return {
            "kind": "counts",
            "scenario": list(self.scenario.settings),
            "source": self.source,
            "counts": self.counts.tolist(),
            "setting_totals": self.setting_totals().tolist(),
            "log": list(self.log),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "CountTable":
        return cls(np.array(d["counts"], dtype=np.int64), Scenario(tuple(d["scenario"])),
                   d.get("source", ""), tuple(d.get("log", ())))


@dataclass(frozen=True, eq=False)
class FourPartyCounts:
    rows: dict
    columns: tuple[str, ...] = SIGN_COLUMNS
    source: str = ""

    def row(self, label: str) -> np.ndarray:
        key = normalize_label(label)
        if key not in self.rows:
            raise DataError(f"missing measurement row {label!r}")
        return self.rows[key]

    def cell(self, label: str, signs: str) -> int:
        return int(self.row(label)[self.columns.index(signs)])

    def without(self, label: str) -> "FourPartyCounts":
        key = normalize_label(label)
        return FourPartyCounts({k: v for k, v in self.rows.items() if k != key},
                               self.columns, self.source)


def parse_label(label: str) -> tuple[str, ...]:
    """``"Z(X+Z)XZ"`` -> ``("Z", "X+Z", "X", "Z")``."""
    text = label.replace(" ", "").replace("−", "-").replace("/sqrt2", "").replace("/√2", "")
    tokens, pos = [], 0
    for m in _TOKEN.finditer(text):
        if m.start() != pos:
            raise DataError(f"cannot parse measurement label {label!r}")
        tokens.append(m.group(1) or m.group(2))
        pos = m.end()
    if pos != len(text) or len(tokens) != 4:
        raise DataError(f"measurement label {label!r} must name four observables")
    return tuple(tokens)


def normalize_label(label: str) -> tuple[str, ...]:
    return parse_label(label) if isinstance(label, str) else tuple(label)


def _parse_four_party(text: str, source: str) -> FourPartyCounts:
    reader = list(csv.reader(io.StringIO(text)))
    reader = [r for r in reader if any(c.strip() for c in r)]
    if not reader:
        raise DataError(f"{source}: empty count file")
    header = [h.strip() for h in reader[0]]
    cols = tuple(header[1:])
    if len(cols) != 16 or set(cols) != set(SIGN_COLUMNS):
        raise DataError(f"{source}: header must list the 16 sign strings of four parties")
    rows = {}
    for line in reader[1:]:
        if len(line) != 17:
            raise DataError(f"{source}: row {line[:1]} has {len(line) - 1} cells, expected 16")
        key = parse_label(line[0].strip())
        vals = []
        for cell in line[1:]:
            cell = cell.strip()
            if not re.fullmatch(r"-?\d+", cell):
                raise DataError(f"{source}: non-integer count {cell!r} in row {line[0]!r}")
            vals.append(int(cell))
        arr = np.array(vals, dtype=np.int64)
        if np.any(arr < 0):
            raise DataError(f"{source}: negative count in row {line[0]!r}")
        if key in rows:
            raise DataError(f"{source}: duplicate row {line[0]!r}")
        # store in canonical column order
        rows[key] = arr[[cols.index(c) for c in SIGN_COLUMNS]]
    if not rows:
        raise DataError(f"{source}: no data rows")
    return FourPartyCounts(rows, SIGN_COLUMNS, source)


def load_four_party(path) -> FourPartyCounts:
    path = Path(path)
    return _parse_four_party(path.read_text(), str(path))


def load_bundled(name: str) -> FourPartyCounts:
    if name not in BUNDLED:
        raise KeyError(f"unknown dataset {name!r}; choose from {sorted(BUNDLED)}")
    text = (resources.files("gtnl") / "data" / BUNDLED[name]).read_text()
    return _parse_four_party(text, name)


def swap_b_outcome(row: np.ndarray) -> np.ndarray:
    """Exchange the counts whose second sign differs, all else fixed."""
    idx = [SIGN_COLUMNS.index(_flip(c, 1)) for c in SIGN_COLUMNS]
    return row[idx]


def _flip(signs: str, pos: int) -> str:
    return signs[:pos] + ("-" if signs[pos] == "+" else "+") + signs[pos + 1:]


def _bit(sign: str) -> int:
    return 0 if sign == "+" else 1


_AC_SETTING = {"Z": 0, "X": 1}


def _derive(fp: FourPartyCounts, keep_pos: int, parties: tuple[int, int, int],
            b_settings: dict, projector: str, skip=()):
    """Shared post-selection: returns (counts, log, seen settings)."""
    counts = np.zeros(TRIPARTITE.size, dtype=np.int64)
    log, seen = [], {}
    for key, row in fp.rows.items():
        if key in skip:
            continue
        a_obs, b_obs, c_obs = (key[p] for p in parties)
        if key[keep_pos] != projector or b_obs not in b_settings:
            log.append(f"row {''.join(key)}: not part of the protocol, dropped")
            continue
        if a_obs not in _AC_SETTING or c_obs not in _AC_SETTING:
            log.append(f"row {''.join(key)}: not part of the protocol, dropped")
            continue
        y, swap = b_settings[b_obs]
        setting = (_AC_SETTING[a_obs], y, _AC_SETTING[c_obs])
        if setting in seen:
            raise DataError(f"rows {seen[setting]} and {''.join(key)} map to the same settings")
        seen[setting] = "".join(key)
        data = swap_b_outcome(row) if swap else row
        if swap:
            log.append(f"row {''.join(key)}: swapped B outcome (+ <-> -)")
        kept = 0
        for col, signs in enumerate(SIGN_COLUMNS):
            if signs[keep_pos] != "+":
                continue
            outcome = tuple(_bit(signs[p]) for p in parties)
            counts[TRIPARTITE.index(outcome, setting)] += data[col]
            kept += data[col]
        log.append(f"row {''.join(key)} -> xyz={''.join(map(str, setting))}, kept {kept} counts")
    return counts, log, seen


MAO_B = {"X+Z": (0, False), "X-Z": (1, True)}
CAO_B = {"Z+X": (0, False), "Z-X": (1, True)}


def derive_mao(fp: FourPartyCounts) -> CountTable:
    """Three-party counts from the four-photon data with photon 3 projected on X+.

    Parties A, B, C are photons 1, 2, 4.  B's ``(X-Z)`` rows are relabelled
    to the protocol's ``(Z-X)`` observable by swapping B's outcome.
    """
    counts, log, seen = _derive(fp, 2, (0, 1, 3), MAO_B, "X")
    missing = [s for s in TRIPARTITE.setting_tuples if s not in seen]
    if missing:
        raise DataError(f"missing measurement rows for settings {missing}")
    return CountTable(counts, TRIPARTITE, fp.source, tuple(log))


GROUPED_SETTINGS = ((0, 0, 0), (0, 1, 0))


def derive_cao(fp: FourPartyCounts) -> tuple[CountTable, list[tuple[int, int, int]]]:
    """Three-party counts from the four-photon data with photon 4 projected on X+.

    Settings 000 and 010 are rebuilt from the ``ZZZX`` row: only the sums
    over B's outcome are determined, and each sum is split evenly
    (B=0 takes the larger half).
    """
    zzzx = ("Z", "Z", "Z", "X")
    if zzzx not in fp.rows:
        raise DataError("missing ZZZX row; settings 000 and 010 cannot be reconstructed")
    counts, log, seen = _derive(fp, 3, (0, 1, 2), CAO_B, "X", skip=(zzzx,))
    row = fp.rows[zzzx]
    for a in (0, 1):
        for c in (0, 1):
            total = 0
            for b in "+-":
                signs = "+-"[a] + b + "+-"[c] + "+"
                total += int(row[SIGN_COLUMNS.index(signs)])
            hi, lo = total - total // 2, total // 2
            for setting in GROUPED_SETTINGS:
                if setting in seen:
                    raise DataError(f"settings {setting} present directly and via ZZZX")
                counts[TRIPARTITE.index((a, 0, c), setting)] = hi
                counts[TRIPARTITE.index((a, 1, c), setting)] = lo
            log.append(f"ZZZX sum for a={a}, c={c}: {total} split {hi}/{lo} over b")
    seen.update({s: "ZZZX" for s in GROUPED_SETTINGS})
    missing = [s for s in TRIPARTITE.setting_tuples if s not in seen]
    if missing:
        raise DataError(f"missing measurement rows for settings {missing}")
    return CountTable(counts, TRIPARTITE, fp.source, tuple(log)), list(GROUPED_SETTINGS)


def resplit(ct: CountTable, grouped, split) -> CountTable:
    """Re-divide the b-sums of grouped settings; ``split(total) -> count for b=0``."""
    counts = ct.counts.copy()
    s = ct.scenario
    for setting in grouped:
        for a in (0, 1):
            for c in (0, 1):
                i0, i1 = s.index((a, 0, c), setting), s.index((a, 1, c), setting)
                total = counts[i0] + counts[i1]
                k = int(split(int(total)))
                if not 0 <= k <= total:
                    raise DataError("split must stay within the b-sum")
                counts[i0], counts[i1] = k, total - k
    return ct.with_counts(counts, "grouped settings re-split")


def save_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj.to_json_dict(), indent=1))


def load_counts(path) -> tuple[CountTable, list]:
    """Read either a four-party CSV (derived automatically) or a CountTable JSON."""
    path = Path(path)
    if path.suffix == ".json":
        d = json.loads(path.read_text())
        return CountTable.from_json_dict(d), [tuple(g) for g in d.get("grouped", [])]
    fp = load_four_party(path)
    if ("Z", "Z", "Z", "X") in fp.rows:
        return derive_cao(fp)
    return derive_mao(fp), []


def derive_named(name: str) -> tuple[CountTable, list]:
    fp = load_bundled(name)
    if name == "cao":
        return derive_cao(fp)
    return derive_mao(fp), []
