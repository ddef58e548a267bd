from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from gtnl.behavior import (CORRELATOR_MATRIX, GHZ_THRESHOLD, SQRT2, Behavior, BellVector,
                           CorrelatorVector, behavior_from_correlators, correlators_from_behavior,
                           depolarized_ghz, deterministic_behavior, extremal_box, from_json_dict,
                           jw_pan_nonlinear, jw_pan_witness, no_signalling_residual,
                           standard_witness, to_json_dict, uniform_behavior, witness_value)
from gtnl.polytope import build_ns_hrep
from gtnl.relabel import (Relabeling, canonical_form, find_relabeling, relabel, relabel_witness,
                          relabeling_group)
from gtnl.scenario import TRIPARTITE, Scenario


def random_ns_behavior(rng, scenario=TRIPARTITE, n_mix=4):
    """Convex mixture of LP-optimal vertices of the no-signalling polytope."""
    h = build_ns_hrep(scenario)
    A, b = h.eq.astype(float), h.eq_rhs.astype(float)
    pts = []
    for _ in range(n_mix):
        r = linprog(rng.normal(size=scenario.size), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        pts.append(r.x)
    lam = rng.dirichlet(np.full(n_mix, 0.5))
    return np.clip(lam @ np.array(pts), 0, None)


# scenario and indexing

def test_flat_index_convention():
    s = TRIPARTITE
    assert s.size == 64
    assert s.index((1, 0, 1), (0, 1, 1)) == ((0 * 2 + 1) * 2 + 1) * 8 + 5
    s2 = Scenario((2, 3, 2))
    assert s2.size == 96
    assert s2.index((0, 0, 0), (1, 2, 1)) == ((1 * 3 + 2) * 2 + 1) * 8


@pytest.mark.parametrize("bad", [(0, 2, 2), (2, -1, 2), ()])
def test_scenario_rejects_bad_settings(bad):
    with pytest.raises(ValueError):
        Scenario(bad)


def test_ns_dimension_formula():
    assert TRIPARTITE.ns_dimension == 26
    assert Scenario((2, 3, 2)).ns_dimension == 35
    assert Scenario((1, 1, 1)).ns_dimension == 7


# behaviours and correlators

def test_uniform_behaviour_correlators():
    c = correlators_from_behavior(uniform_behavior())
    assert all(v == 1 for v in c.values[:, 0])
    assert all(v == 0 for v in c.values[:, 1:].ravel())


def test_correlator_matrix_is_sign_pattern():
    assert CORRELATOR_MATRIX.shape == (8, 8)
    # rows are orthogonal with squared norm 8
    assert np.array_equal(CORRELATOR_MATRIX @ CORRELATOR_MATRIX.T, 8 * np.eye(8, dtype=int))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=64, max_size=64))
def test_correlator_round_trip_exact(raw):
    tab = np.array(raw, dtype=object).reshape(8, 8) + 1
    tab = np.array([[Fraction(int(v), int(sum(row))) for v in row] for row in tab], dtype=object)
    b = Behavior(tab.ravel(), TRIPARTITE, "exact")
    back = behavior_from_correlators(correlators_from_behavior(b))
    assert back == b
    assert correlators_from_behavior(b).max_abs() <= 1


def test_dimension_mismatch_errors():
    with pytest.raises(ValueError):
        Behavior(np.zeros(63), TRIPARTITE)
    with pytest.raises(ValueError):
        correlators_from_behavior(Behavior(np.full(8, 0.5), Scenario((1, 1)), "float"))


def test_deterministic_box_is_valid_and_no_signalling():
    b = deterministic_behavior(((0, 1), (1, 1), (0, 0)))
    assert b.is_valid()
    assert no_signalling_residual(b) == 0


def test_signalling_box_detected():
    e = np.zeros(64)
    for (a, b, c), (x, y, z) in TRIPARTITE.cells:
        if (a, b, c) == (y, 0, 0):  # A's outcome reveals B's setting
            e[TRIPARTITE.index((a, b, c), (x, y, z))] = 1.0
    assert no_signalling_residual(Behavior(e, TRIPARTITE, "float")) > 0.5


def test_json_round_trip():
    for obj in (extremal_box("P1"), depolarized_ghz(0.9), standard_witness("cao")):
        back = from_json_dict(to_json_dict(obj))
        if isinstance(obj, BellVector):
            assert np.array_equal(back.coefficients, obj.coefficients) and back.bound == obj.bound
        else:
            assert np.array_equal(back.entries, obj.entries)


# witnesses

def test_bell_vectors_match_published_tables():
    mao, cao = standard_witness("mao"), standard_witness("cao")
    assert mao.bound == 4 and cao.bound == 8
    assert mao[(0, 0, 0), (0, 0, 0)] == 3 and mao[(1, 1, 1), (1, 1, 1)] == 1
    assert list(mao.coefficients[8:16]) == [0] * 8
    assert cao[(0, 0, 0), (0, 0, 0)] == 4 and cao[(1, 1, 1), (1, 0, 1)] == -2
    assert list(cao.coefficients[48:56]) == [0] * 8
    assert mao.coefficients.dtype == np.int64


def test_perfect_ghz_values():
    assert abs(witness_value(standard_witness("mao"), depolarized_ghz(1.0, "mao")) - (2 + 2 * SQRT2)) < 1e-12
    assert abs(witness_value(standard_witness("cao"), depolarized_ghz(1.0, "cao")) - (4 + 4 * SQRT2)) < 1e-12


def test_ghz_threshold_value():
    v = witness_value(standard_witness("cao"), depolarized_ghz(GHZ_THRESHOLD, "cao"))
    assert abs(v - 8) < 1e-12


def test_ghz_below_threshold_satisfies_witness():
    for theta in (0.0, 0.5, 0.8):
        assert witness_value(standard_witness("cao"), depolarized_ghz(theta, "cao")) < 8
        assert witness_value(standard_witness("mao"), depolarized_ghz(theta, "mao")) < 4


def test_depolarized_ghz_is_valid_no_signalling():
    for variant in ("mao", "cao"):
        b = depolarized_ghz(0.95, variant)
        assert b.is_valid() and no_signalling_residual(b) < 1e-12
    with pytest.raises(ValueError):
        depolarized_ghz(1.2)


def test_extremal_boxes_exact_values():
    assert witness_value(standard_witness("mao"), extremal_box("P1")) == 6
    assert witness_value(standard_witness("cao"), extremal_box("P2")) == 12
    assert find_relabeling(extremal_box("P1"), extremal_box("P2")) is not None


def test_witness_cannot_exceed_ns_maximum():
    # LP over the NS polytope: maxima are attained at P1 / P2
    h = build_ns_hrep(TRIPARTITE)
    for name, best in (("mao", 6), ("cao", 12)):
        w = standard_witness(name).coefficients.astype(float)
        r = linprog(-w, A_eq=h.eq.astype(float), b_eq=h.eq_rhs.astype(float), bounds=(0, None),
                    method="highs")
        assert abs(-r.fun - best) < 1e-9


# relabelings

def test_group_order():
    assert len(relabeling_group()) == 3072


def test_relabeling_inverse_and_composition():
    g = relabeling_group()
    rng = np.random.default_rng(1)
    b = Behavior(random_ns_behavior(rng), TRIPARTITE, "float")
    for i in rng.choice(len(g), 10, replace=False):
        r = g[i]
        assert np.allclose(relabel(relabel(b, r), r.inverse()).entries, b.entries)
        r2 = g[(i * 7 + 3) % len(g)]
        lhs = relabel(relabel(b, r), r2).entries
        assert np.allclose(lhs, relabel(b, r.then(r2)).entries)


def test_relabeling_preserves_witness_value():
    g = relabeling_group()
    w = standard_witness("mao")
    b = extremal_box("P1")
    for r in g[::97]:
        assert witness_value(relabel_witness(w, r), relabel(b, r)) == witness_value(w, b)


def test_canonical_form_is_orbit_invariant():
    g = relabeling_group()
    b = extremal_box("P1")
    c = canonical_form(b)
    for r in g[::211]:
        assert canonical_form(relabel(b, r)) == c


# extra-setting witness linearisation

def test_jw_pan_coefficients():
    w = jw_pan_witness()
    assert w.scenario == Scenario((2, 3, 2)) and w.bound == 4
    assert w[(0, 0, 0), (0, 2, 0)] == 4
    assert w[(0, 1, 0), (0, 0, 1)] == -3
    assert all(w[o, (1, 1, 0)] == 0 for o in w.scenario.outcome_tuples)


def test_jw_pan_linear_form_equivalence():
    """Linear value minus bound equals (1 + M_C)/2 times the ratio form minus 2."""
    s = Scenario((2, 3, 2))
    w = jw_pan_witness()
    coeffs = w.coefficients.astype(float)
    rng = np.random.default_rng(7)
    h = build_ns_hrep(s)
    A, bnd = h.eq.astype(float), h.eq_rhs.astype(float)
    verts = []
    for k in range(60):
        c = rng.normal(size=s.size)
        if k % 3 == 0:
            c = c - 3 * coeffs  # push towards violation
        verts.append(linprog(c, A_eq=A, b_eq=bnd, bounds=(0, None), method="highs").x)
    verts = np.array(verts)
    checked = 0
    for _ in range(1000):
        lam = rng.dirichlet(np.full(len(verts), 0.2))
        p = np.clip(lam @ verts, 0, None)
        one_plus_mc = 2 * sum(p[s.index((a, b, 0), (0, 0, 1))] for a in (0, 1) for b in (0, 1))
        if one_plus_mc <= 1e-6:
            continue
        lin = coeffs @ p - 4
        ratio = jw_pan_nonlinear(Behavior(p, s, "float")) - 2
        assert abs(lin - 0.5 * one_plus_mc * ratio) < 1e-9
        if abs(lin) > 1e-9:
            assert (lin <= 0) == (ratio <= 0)
        checked += 1
    assert checked > 900
