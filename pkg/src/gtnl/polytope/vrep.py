"""Exact vertex lists and their on-disk formats."""
from __future__ import annotations

import gzip
import io
import json
import struct
from dataclasses import dataclass
from fractions import Fraction
from math import gcd
from pathlib import Path

import numpy as np

from ..behavior import Behavior, BellVector
from ..scenario import Scenario

MAGIC = b"GTNLV1"


class CacheFormatError(ValueError):
    pass


def _reduce(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = np.gcd.reduce(np.abs(num), axis=1)
    g = np.gcd(g, den)
    g[g == 0] = 1
    return num // g[:, None], den // g


@dataclass(frozen=True, eq=False)
class VRep:
    """Vertices ``numerators[i] / denominators[i]``, each row in lowest terms.

    Rows are sorted lexicographically by value, so two VReps of the same
    polytope compare equal elementwise.
    """

    numerators: np.ndarray
    denominators: np.ndarray
    label: str = ""
    scenario: Scenario | None = None
    provenance: str = ""

    def __post_init__(self):
        if self.numerators.ndim != 2 or self.denominators.shape != (self.numerators.shape[0],):
            raise ValueError("numerators must be (n, dim) and denominators (n,)")
        if np.any(self.denominators <= 0):
            raise ValueError("denominators must be positive")

    @classmethod
    def from_integer(cls, num, den, **kw) -> "VRep":
        """Reduce, deduplicate and sort raw integer vertex data."""
        num = np.asarray(num, dtype=np.int64)
        den = np.asarray(den, dtype=np.int64)
        if num.shape[0] == 0:
            return cls(num.reshape(0, num.shape[1] if num.ndim == 2 else 0), den, **kw)
        num, den = _reduce(num, den)
        packed = np.unique(np.column_stack([num, den]), axis=0)
        num, den = packed[:, :-1], packed[:, -1]
        return cls(*_sort_by_value(num, den), **kw)

    @classmethod
    def from_fractions(cls, rows, **kw) -> "VRep":
        num, den = [], []
        for row in rows:
            fr = [Fraction(v) for v in row]
            d = 1
            for v in fr:
                d = d * v.denominator // gcd(d, v.denominator)
            num.append([int(v * d) for v in fr])
            den.append(d)
        return cls.from_integer(np.array(num, dtype=np.int64).reshape(len(num), -1),
                                np.array(den, dtype=np.int64), **kw)

    @property
    def n_vertices(self) -> int:
        return self.numerators.shape[0]

    @property
    def dim(self) -> int:
        return self.numerators.shape[1]

    def __len__(self) -> int:
        return self.n_vertices

    def to_float(self) -> np.ndarray:
        return self.numerators / self.denominators[:, None]

    def fractions(self, i: int) -> list[Fraction]:
        d = int(self.denominators[i])
        return [Fraction(int(v), d) for v in self.numerators[i]]

    def behavior(self, i: int) -> Behavior:
        scen = self.scenario or Scenario()
        return Behavior(np.array(self.fractions(i), dtype=object), scen, "exact")

    def behaviors(self):
        for i in range(self.n_vertices):
            yield self.behavior(i)

    def witness_numerators(self, w: BellVector) -> np.ndarray:
        """``w . v * den`` for every vertex, exact in int64."""
        coef = np.asarray(w.coefficients, dtype=np.int64)
        return self.numerators @ coef

    def compare_witness(self, w: BellVector) -> np.ndarray:
        """Sign of ``w . v - bound`` per vertex (-1, 0 or 1)."""
        lhs = self.witness_numerators(w)
        rhs = np.asarray(self.denominators, dtype=np.int64) * int(w.bound)
        return np.sign(lhs - rhs)

    def same_vertices(self, other: "VRep") -> bool:
        return (self.numerators.shape == other.numerators.shape
                and np.array_equal(self.numerators, other.numerators)
                and np.array_equal(self.denominators, other.denominators))

    def select(self, mask, label: str | None = None) -> "VRep":
        return VRep(self.numerators[mask], self.denominators[mask],
                    self.label if label is None else label, self.scenario, self.provenance)

    def union(self, other: "VRep", label: str = "") -> "VRep":
        return VRep.from_integer(np.vstack([self.numerators, other.numerators]),
                                 np.concatenate([self.denominators, other.denominators]),
                                 label=label, scenario=self.scenario, provenance=self.provenance)

    # serialisation

    def to_json_dict(self) -> dict:
        return {
            "kind": "vrep",
            "label": self.label,
            "provenance": self.provenance,
            "scenario": list(self.scenario.settings) if self.scenario else None,
            "dim": self.dim,
            "numerators": self.numerators.tolist(),
            "denominators": self.denominators.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "VRep":
        num = np.array(d["numerators"], dtype=np.int64).reshape(-1, d["dim"])
        scen = Scenario(tuple(d["scenario"])) if d.get("scenario") else None
        return cls(num, np.array(d["denominators"], dtype=np.int64), d.get("label", ""),
                   scen, d.get("provenance", ""))

    def to_bytes(self) -> bytes:
        meta = json.dumps({"label": self.label, "provenance": self.provenance,
                           "scenario": list(self.scenario.settings) if self.scenario else None}).encode()
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<III", len(meta), self.n_vertices, self.dim))
        buf.write(meta)
        buf.write(np.ascontiguousarray(self.numerators, dtype="<i8").tobytes())
        buf.write(np.ascontiguousarray(self.denominators, dtype="<i8").tobytes())
        return gzip.compress(buf.getvalue(), compresslevel=6, mtime=0)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "VRep":
        try:
            raw = gzip.decompress(blob)
        except OSError as exc:
            raise CacheFormatError(f"not a gzip stream: {exc}") from exc
        if raw[:6] != MAGIC:
            raise CacheFormatError("bad magic, not a vertex cache")
        try:
            meta_len, n, dim = struct.unpack_from("<III", raw, 6)
            off = 18
            meta = json.loads(raw[off:off + meta_len])
            off += meta_len
            num = np.frombuffer(raw, dtype="<i8", count=n * dim, offset=off).reshape(n, dim)
            off += 8 * n * dim
            den = np.frombuffer(raw, dtype="<i8", count=n, offset=off)
        except (struct.error, ValueError) as exc:
            raise CacheFormatError(f"truncated vertex cache: {exc}") from exc
        if off + 8 * n != len(raw):
            raise CacheFormatError("trailing bytes in vertex cache")
        scen = Scenario(tuple(meta["scenario"])) if meta.get("scenario") else None
        return cls(num.astype(np.int64), den.astype(np.int64), meta.get("label", ""),
                   scen, meta.get("provenance", ""))

    def save(self, path) -> None:
        path = Path(path)
        if path.suffix == ".json":
            path.write_text(json.dumps(self.to_json_dict()))
        else:
            path.write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "VRep":
        path = Path(path)
        if path.suffix == ".json":
            return cls.from_json_dict(json.loads(path.read_text()))
        return cls.from_bytes(path.read_bytes())


def _sort_by_value(num: np.ndarray, den: np.ndarray):
    if num.shape[0] == 0:
        return num, den
    common = np.lcm.reduce(den)
    scale = common // den
    if num.size and int(np.abs(num).max()) * int(scale.max()) < 2 ** 62:
        keys = num * scale[:, None]
        order = np.lexsort(keys.T[::-1])
    else:
        keys = [tuple(Fraction(int(v), int(d)) for v in row) for row, d in zip(num, den)]
        order = np.array(sorted(range(len(keys)), key=keys.__getitem__))
    return num[order], den[order]
