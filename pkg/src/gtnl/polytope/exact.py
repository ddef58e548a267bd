"""Small exact linear-algebra helpers over the rationals."""
from __future__ import annotations

from fractions import Fraction
from math import gcd

import numpy as np


def fraction_matrix(rows) -> list[list[Fraction]]:
    return [[Fraction(v) for v in row] for row in rows]


def rref(rows: list[list[Fraction]]) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form; returns (nonzero rows, pivot columns)."""
    m = [list(r) for r in rows]
    if not m:
        return [], []
    ncols = len(m[0])
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [v * inv for v in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m[:r], pivots


def rank(rows) -> int:
    return len(rref(fraction_matrix(rows))[1])


def inverse(rows) -> list[list[Fraction]]:
    n = len(rows)
    aug = [list(map(Fraction, row)) + [Fraction(int(i == j)) for j in range(n)]
           for i, row in enumerate(rows)]
    red, piv = rref(aug)
    if piv[:n] != list(range(n)) or len(piv) < n:
        raise ValueError("matrix is singular")
    return [row[n:] for row in red]


def lcm(a: int, b: int) -> int:
    return a // gcd(a, b) * b


def primitive_integer_row(row) -> list[int]:
    """Scale a rational vector to the coprime integer vector with the same direction."""
    fr = [Fraction(v) for v in row]
    den = 1
    for v in fr:
        den = lcm(den, v.denominator)
    ints = [int(v * den) for v in fr]
    g = 0
    for v in ints:
        g = gcd(g, v)
    if g > 1:
        ints = [v // g for v in ints]
    return ints


def row_gcd(mat: np.ndarray) -> np.ndarray:
    """gcd of each row of an integer matrix (object or int64)."""
    if mat.dtype == object:
        out = []
        for row in mat:
            g = 0
            for v in row:
                g = gcd(g, int(v))
            out.append(g)
        return np.array(out, dtype=object)
    return np.gcd.reduce(mat, axis=1)
