"""Behaviours, correlators and linear Bell witnesses.

Entries are held in a dense vector following :mod:`gtnl.scenario`.  Two
numeric modes exist: ``"float"`` (float64 arrays) and ``"exact"`` (object
arrays of :class:`fractions.Fraction`).  Exact mode is what the polytope code
produces and consumes; the solvers work in float mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .scenario import TRIPARTITE, Scenario

# Row order of the correlator block for one settings triple.
CORRELATOR_NAMES = ("1", "M_A", "M_B", "M_C", "M_AB", "M_BC", "M_AC", "C_ABC")
_CORRELATOR_MASKS = ((), (0,), (1,), (2,), (0, 1), (1, 2), (0, 2), (0, 1, 2))


def _correlator_matrix() -> np.ndarray:
    # entry [k, abc] = (-1)^(sum of the outcome bits selected by row k)
    m = np.empty((8, 8), dtype=np.int64)
    for k, mask in enumerate(_CORRELATOR_MASKS):
        for o in range(8):
            bits = ((o >> 2) & 1, (o >> 1) & 1, o & 1)
            m[k, o] = -1 if sum(bits[p] for p in mask) % 2 else 1
    return m


CORRELATOR_MATRIX = _correlator_matrix()


def as_exact(values) -> np.ndarray:
    arr = np.asarray(values, dtype=object).ravel()
    return np.array([Fraction(v) for v in arr], dtype=object)


def _coerce(entries, mode):
    if mode == "exact":
        return as_exact(entries)
    return np.asarray(entries, dtype=float).ravel()


def _infer_mode(entries) -> str:
    arr = np.asarray(entries)
    if arr.dtype == object or (arr.size and isinstance(arr.flat[0], Fraction)):
        return "exact"
    return "float"


@dataclass(frozen=True, eq=False)
class Behavior:
    """Settings-conditional outcome probabilities ``P(o|s)``."""

    entries: np.ndarray
    scenario: Scenario = TRIPARTITE
    mode: str = field(default="")

    def __post_init__(self):
        mode = self.mode or _infer_mode(self.entries)
        if mode not in ("float", "exact"):
            raise ValueError(f"unknown numeric mode {mode!r}")
        entries = _coerce(self.entries, mode)
        if entries.size != self.scenario.size:
            raise ValueError(
                f"behaviour has {entries.size} entries, scenario {self.scenario.settings} "
                f"needs {self.scenario.size}"
            )
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "mode", mode)

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    def __getitem__(self, cell):
        outcome, setting = cell
        return self.entries[self.scenario.index(tuple(outcome), tuple(setting))]

    def __len__(self):
        return self.entries.size

    def __eq__(self, other):
        if not isinstance(other, Behavior):
            return NotImplemented
        return self.scenario == other.scenario and bool(np.all(self.entries == other.entries))

    def __hash__(self):
        return hash((self.scenario, tuple(self.entries.tolist())))

    def table(self) -> np.ndarray:
        """Rows are settings, columns outcomes."""
        s = self.scenario
        return self.entries.reshape(s.n_settings, s.n_outcomes)

    def to_float(self) -> "Behavior":
        return Behavior(self.entries.astype(float), self.scenario, "float")

    def to_exact(self) -> "Behavior":
        return Behavior(self.entries, self.scenario, "exact")

    def normalization_residual(self):
        sums = self.table().sum(axis=1)
        return max(abs(v - 1) for v in sums)

    def is_valid(self, tol: float = 1e-9) -> bool:
        """Non-negative and normalised per setting (exactly in exact mode)."""
        if self.exact:
            return all(v >= 0 for v in self.entries) and self.normalization_residual() == 0
        return bool(self.entries.min() >= -tol) and self.normalization_residual() <= tol

    def mix(self, other: "Behavior", weight) -> "Behavior":
        """``weight * self + (1 - weight) * other``."""
        if self.scenario != other.scenario:
            raise ValueError("scenario mismatch")
        return Behavior(weight * self.entries + (1 - weight) * other.entries, self.scenario)


def uniform_behavior(scenario: Scenario = TRIPARTITE, exact: bool = True) -> Behavior:
    value = Fraction(1, scenario.n_outcomes) if exact else 1.0 / scenario.n_outcomes
    return Behavior(np.full(scenario.size, value, dtype=object if exact else float), scenario)


def deterministic_behavior(responses, scenario: Scenario = TRIPARTITE) -> Behavior:
    """Local deterministic box; ``responses[k][s]`` is party k's outcome for setting s."""
    entries = np.zeros(scenario.size, dtype=object)
    entries[:] = Fraction(0)
    for setting in scenario.setting_tuples:
        outcome = tuple(responses[k][s] for k, s in enumerate(setting))
        entries[scenario.index(outcome, setting)] = Fraction(1)
    return Behavior(entries, scenario, "exact")


def no_signalling_residual(b: Behavior):
    """Largest violation of the marginal equalities (every party, every setting)."""
    s = b.scenario
    n = s.n_parties
    arr = b.entries.reshape(tuple(s.settings) + (2,) * n)
    worst = Fraction(0) if b.exact else 0.0
    for k in range(n):
        if s.settings[k] < 2:
            continue
        marg = arr.sum(axis=n + k)
        ref = np.take(marg, [0], axis=k)
        diff = marg - ref
        worst = max(worst, max(abs(v) for v in diff.ravel()))
    return worst


# --- correlators -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CorrelatorVector:
    """Per settings triple: ``1, M_A, M_B, M_C, M_AB, M_BC, M_AC, C_ABC``."""

    values: np.ndarray
    scenario: Scenario = TRIPARTITE

    def __post_init__(self):
        if self.scenario.n_parties != 3:
            raise ValueError("correlator vectors are defined for three parties")
        vals = np.asarray(self.values)
        vals = vals.reshape(self.scenario.n_settings, 8)
        object.__setattr__(self, "values", vals)

    def get(self, name: str, setting: tuple[int, int, int]):
        return self.values[self.scenario.setting_index(setting), CORRELATOR_NAMES.index(name)]

    def max_abs(self):
        return max(abs(v) for v in self.values[:, 1:].ravel())


def correlators_from_behavior(b: Behavior) -> CorrelatorVector:
    if b.scenario.n_parties != 3:
        raise ValueError("correlators need a three-party behaviour")
    if b.entries.size != b.scenario.size:
        raise ValueError("dimension mismatch between behaviour and scenario")
    m = CORRELATOR_MATRIX.astype(object) if b.exact else CORRELATOR_MATRIX.astype(float)
    return CorrelatorVector(b.table() @ m.T, b.scenario)


def behavior_from_correlators(c: CorrelatorVector) -> Behavior:
    """Inverse map.  The result may be invalid; check :meth:`Behavior.is_valid`."""
    vals = c.values
    exact = vals.dtype == object
    m = CORRELATOR_MATRIX.astype(object) if exact else CORRELATOR_MATRIX.astype(float)
    scale = Fraction(1, 8) if exact else 0.125
    table = (vals @ m) * scale
    return Behavior(table.ravel(), c.scenario, "exact" if exact else "float")


# --- witnesses ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BellVector:
    """Linear witness ``coefficients . P <= bound``."""

    coefficients: np.ndarray
    bound: object
    label: str = ""
    scenario: Scenario = TRIPARTITE

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients).ravel()
        if coeffs.size != self.scenario.size:
            raise ValueError(
                f"Bell vector has {coeffs.size} coefficients, scenario needs {self.scenario.size}"
            )
        if coeffs.dtype != object:
            coeffs = coeffs.astype(np.int64) if np.all(coeffs == np.round(coeffs)) else coeffs
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    def __getitem__(self, cell):
        outcome, setting = cell
        return self.coefficients[self.scenario.index(tuple(outcome), tuple(setting))]

    def exact_coefficients(self) -> np.ndarray:
        return as_exact(self.coefficients)


def witness_value(w: BellVector, b: Behavior):
    if w.scenario != b.scenario or w.coefficients.size != b.entries.size:
        raise ValueError("witness and behaviour dimensions differ")
    if b.exact:
        return sum((Fraction(int(c)) if not isinstance(c, Fraction) else c) * p
                   for c, p in zip(w.coefficients, b.entries) if c != 0)
    return float(np.dot(w.coefficients.astype(float), b.entries))


_MAO_TABLE = [
    [3, -1, 1, -3, -3, 1, -1, 3],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [1, 1, -1, -1, -1, -1, 1, 1],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [1, -1, -1, 1, -1, 1, 1, -1],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [-1, 1, 1, -1, 1, -1, -1, 1],
]

_CAO_TABLE = [
    [4, -4, 4, -4, -4, 4, -4, 4],
    [1, 1, -1, -1, -1, -1, 1, 1],
    [-1, 1, 1, -1, -1, 1, 1, -1],
    [-1, -1, 1, 1, 1, 1, -1, -1],
    [1, -1, -1, 1, 1, -1, -1, 1],
    [2, -2, -2, 2, -2, 2, 2, -2],
    [0, 0, 0, 0, 0, 0, 0, 0],
    [2, -2, -2, 2, -2, 2, 2, -2],
]


def standard_witness(name: str) -> BellVector:
    """The two bundled tripartite witnesses, ``"mao"`` (bound 4) or ``"cao"`` (bound 8)."""
    key = name.lower()
    if key == "mao":
        return BellVector(np.array(_MAO_TABLE, dtype=np.int64).ravel(), 4, "MAO")
    if key == "cao":
        return BellVector(np.array(_CAO_TABLE, dtype=np.int64).ravel(), 8, "CAO")
    raise ValueError(f"unknown witness {name!r}; expected 'mao' or 'cao'")


def jw_pan_witness() -> BellVector:
    """Linearised extra-setting witness on the (2, 3, 2) scenario, bound 4."""
    scen = Scenario((2, 3, 2))
    coeffs = np.zeros(scen.size, dtype=np.int64)
    for s in (0, 1):
        for t in (0, 1):
            sign = -1 if s ^ t else 1
            coeffs[scen.index((s, t, 0), (0, 1, 1))] += sign
            coeffs[scen.index((s, t, 0), (1, 0, 1))] += sign
            coeffs[scen.index((s, t, 0), (1, 1, 1))] -= sign
            coeffs[scen.index((s, t, s), (0, 2, 0))] += 4 * sign
            coeffs[scen.index((s, t, 0), (0, 0, 1))] -= 3 ** (s ^ t)
    return BellVector(coeffs, 4, "JWPAN", scen)


def jw_pan_nonlinear(b: Behavior) -> float:
    """Original ratio form of the extra-setting witness (bound 2)."""
    s = b.scenario
    p = b.entries.astype(float)

    def P(o, st):
        return p[s.index(o, st)]

    chsh = 0.0
    for x in (0, 1):
        for y in (0, 1):
            num = sum((-1) ** (a ^ c) * P((a, c, 0), (x, y, 1)) for a in (0, 1) for c in (0, 1))
            den = sum(P((a, c, 0), (x, y, 1)) for a in (0, 1) for c in (0, 1))
            chsh += (-1) ** (x * y) * num / den
    m_ab = sum((-1) ** (a ^ bb) * P((a, bb, c), (0, 2, 0))
               for a in (0, 1) for bb in (0, 1) for c in (0, 1))
    m_bc = sum((-1) ** (bb ^ c) * P((a, bb, c), (0, 2, 0))
               for a in (0, 1) for bb in (0, 1) for c in (0, 1))
    same = m_ab + m_bc
    one_plus_mc = 2 * sum(P((a, bb, 0), (0, 0, 1)) for a in (0, 1) for bb in (0, 1))
    return chsh + (4 * same - 8) / one_plus_mc


# --- closed-form reference behaviours ------------------------------------------

SQRT2 = float(np.sqrt(2.0))
GHZ_THRESHOLD = 2.0 / (SQRT2 + 1.0)


def depolarized_ghz(theta: float, variant: str = "cao") -> Behavior:
    """Depolarised GHZ behaviour at visibility ``theta``.

    Parties A and C measure Z / X.  B measures (X+Z)/sqrt2 for y=0; for y=1 it
    measures (X-Z)/sqrt2 in the ``"cao"`` variant and (Z-X)/sqrt2 in ``"mao"``.
    Only the pair ZZ correlations and the XBX full correlator survive, each
    scaled by the visibility.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {theta}")
    key = variant.lower()
    if key not in ("mao", "cao"):
        raise ValueError(f"unknown variant {variant!r}")
    r = 1.0 / SQRT2
    # (X component, Z component) of B's observable per setting
    b_axis = {0: (r, r), 1: (r, -r) if key == "cao" else (-r, r)}
    vals = np.zeros((8, 8))
    for x in (0, 1):
        for y in (0, 1):
            for z in (0, 1):
                bx, bz = b_axis[y]
                row = vals[TRIPARTITE.setting_index((x, y, z))]
                row[0] = 1.0
                row[4] = theta * bz if x == 0 else 0.0             # M_AB
                row[5] = theta * bz if z == 0 else 0.0             # M_BC
                row[6] = theta if x == 0 and z == 0 else 0.0       # M_AC
                row[7] = theta * bx if x == 1 and z == 1 else 0.0  # C_ABC
    return behavior_from_correlators(CorrelatorVector(vals))


def _delta(u, v) -> int:
    return 1 if u == v else 0


def extremal_box(name: str) -> Behavior:
    """The two maximal-violation no-signalling vertices, ``"P1"`` and ``"P2"``."""
    key = name.upper()
    if key not in ("P1", "P2"):
        raise ValueError(f"unknown extremal box {name!r}")
    q = Fraction(1, 4)
    entries = np.empty(64, dtype=object)
    for (a, b, c), (x, y, z) in TRIPARTITE.cells:
        if key == "P1":
            if a == 0 and x == 0:
                v = _delta(b, 0) * (_delta(c, 0) + _delta(c, z))
            elif a == 0:
                v = _delta(b ^ c, y * z)
            elif x == 0:
                v = _delta(b, 1) * (_delta(c, 1) + _delta(c, z ^ 1))
            else:
                v = _delta(b ^ c, (y * z) ^ z)
        else:
            if a == 0 and x == 0:
                v = _delta(b, y) * (_delta(c, 0) + _delta(c, z))
            elif a == 0:
                v = _delta(b ^ c, (y * z) ^ y)
            elif x == 0:
                v = _delta(b, y ^ 1) * (_delta(c, 1) + _delta(c, z ^ 1))
            else:
                v = _delta(b ^ c, (y * z) ^ z ^ y)
        entries[TRIPARTITE.index((a, b, c), (x, y, z))] = q * v
    return Behavior(entries, TRIPARTITE, "exact")


# --- JSON ----------------------------------------------------------------------

def _encode_value(v, exact):
    if exact:
        f = Fraction(v)
        return f"{f.numerator}/{f.denominator}"
    return float(v)


def _decode_value(v):
    if isinstance(v, str):
        return Fraction(v)
    return float(v)


def to_json_dict(obj) -> dict:
    """JSON object ``{scenario, mode, entries}`` for behaviours and witnesses."""
    if isinstance(obj, Behavior):
        return {"kind": "behavior", "scenario": list(obj.scenario.settings), "mode": obj.mode,
                "entries": [_encode_value(v, obj.exact) for v in obj.entries]}
    if isinstance(obj, BellVector):
        exact = obj.coefficients.dtype != float
        return {"kind": "bell_vector", "scenario": list(obj.scenario.settings),
                "mode": "exact" if exact else "float", "label": obj.label,
                "bound": _encode_value(obj.bound, exact),
                "entries": [_encode_value(v, exact) for v in obj.coefficients]}
    if isinstance(obj, CorrelatorVector):
        exact = obj.values.dtype == object
        return {"kind": "correlators", "scenario": list(obj.scenario.settings),
                "mode": "exact" if exact else "float",
                "entries": [_encode_value(v, exact) for v in obj.values.ravel()]}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def from_json_dict(d: dict):
    scen = Scenario(tuple(d["scenario"]))
    exact = d["mode"] == "exact"
    vals = [_decode_value(v) for v in d["entries"]]
    arr = np.array(vals, dtype=object if exact else float)
    kind = d.get("kind", "behavior")
    if kind == "behavior":
        return Behavior(arr, scen, d["mode"])
    if kind == "bell_vector":
        return BellVector(arr, _decode_value(d["bound"]), d.get("label", ""), scen)
    if kind == "correlators":
        return CorrelatorVector(arr, scen)
    raise ValueError(f"unknown kind {kind!r}")
