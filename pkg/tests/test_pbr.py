import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gtnl.behavior import GHZ_THRESHOLD, Behavior, uniform_behavior
from gtnl.ingest import DataError, derive_named
from gtnl.mlns import SettingsDistribution, TrialDistribution
from gtnl.pbr import (SAME_DATA_WARNING, EvidenceReport, LockGroup, TestFactor, cao_locks,
                      curve_csv, default_grid, evidence_curve, lock_matrix, log_pvalue,
                      optimize_test_factor, verify_halfspace_reduction)
from gtnl.scenario import TRIPARTITE

S = SettingsDistribution.uniform()


@pytest.fixture(scope="module")
def tf_mao(fits, vertex_set):
    return optimize_test_factor(fits["mao1"][3], vertex_set("saturating-mao"))


@pytest.fixture(scope="module")
def tf_cao(fits, vertex_set):
    return optimize_test_factor(fits["cao"][3], vertex_set("saturating-cao"), locks=[cao_locks()])


def test_lock_group_validation():
    with pytest.raises(ValueError):
        LockGroup(({1, 2}, {2, 3}))
    L = lock_matrix([LockGroup(({0, 1},))], 4)
    assert L.shape == (4, 3) and np.array_equal(L[:, 0], [1, 1, 0, 0])
    assert len(cao_locks().sets) == 8


def test_uniform_q_gives_identity(vertex_set):
    q = TrialDistribution.from_behavior(uniform_behavior(exact=False))
    tf = optimize_test_factor(q, vertex_set("halfspace-mao"))
    assert abs(tf.objective) < 1e-9
    assert np.abs(tf.values - 1).max() < 1e-4


def test_vertex_distribution_has_no_evidence(vertex_set):
    V = vertex_set("saturating-cao")
    for i in (0, 1234, 3663):
        q = TrialDistribution.from_behavior(V.behavior(i).to_float())
        tf = optimize_test_factor(q, V)
        assert abs(tf.objective) < 1e-9


def test_certificates(tf_mao, tf_cao, fits, vertex_set):
    for tf, name in ((tf_mao, "saturating-mao"), (tf_cao, "saturating-cao")):
        assert tf.values.min() >= 0
        assert tf.expectations(vertex_set(name), S).max() <= 1 + 1e-9
        assert tf.report["certified_gap_log2"] < 1e-7
        assert tf.objective > 0
    assert abs(tf_mao.gain(fits["mao1"][3]) - tf_mao.objective) < 1e-12


def test_lock_equalities_hold(tf_cao):
    for group in cao_locks().sets:
        vals = tf_cao.values[sorted(group)]
        assert np.ptp(vals) <= 1e-12


def test_jensen_bound(tf_mao, tf_cao):
    for tf in (tf_mao, tf_cao):
        assert float(tf.q @ tf.values) >= 1 - 1e-9


def test_zero_mass_cells_are_waterfilled(fits, vertex_set):
    q = fits["mao1"][3]
    joint = q.joint.copy()
    joint[5] = 0.0
    joint /= joint.sum()
    tf = optimize_test_factor(TrialDistribution(joint, S), vertex_set("saturating-mao"))
    e = tf.expectations(vertex_set("saturating-mao"), S)
    assert e.max() <= 1 + 1e-9
    # raising the unseen cell any further breaks some constraint
    bumped = tf.values.copy()
    bumped[5] += 1e-6
    assert (vertex_set("saturating-mao").to_float() @ (S.per_cell() * bumped)).max() > 1


def test_pvalue_identity_and_zero_cell():
    ct, _ = derive_named("mao1")
    ev = log_pvalue(TestFactor.identity(), ct)
    assert ev.log10_p == 0 and ev.p == 1
    f = np.ones(64)
    f[3] = 0.0
    ev = log_pvalue(TestFactor(f, 0.0), ct)
    assert ev.zero_cell_hit and ev.log10_p == 0 and ev.p == 1
    with pytest.raises(DataError):
        log_pvalue(TestFactor.identity(), -np.ones(64, dtype=np.int64))


def test_pvalue_formula():
    f = np.full(64, 2.0)
    ct = np.zeros(64, dtype=np.int64)
    ct[:10] = 1
    ev = log_pvalue(TestFactor(f, 0.0), ct)
    assert ev.log2_T == 10 and abs(ev.log10_p + 10 * math.log10(2)) < 1e-12
    assert ev.format_p().startswith("9.766e-04")
    # evidence below one is clipped to p = 1
    ev = log_pvalue(TestFactor(np.full(64, 0.5), 0.0), ct)
    assert ev.log10_p == 0


def test_same_data_warning(tf_mao):
    ct, _ = derive_named("mao1")
    assert log_pvalue(tf_mao, ct, same_data=True).warning == SAME_DATA_WARNING
    assert log_pvalue(tf_mao, ct).warning == ""


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_lock_invariance(tf_cao, fracs):
    ct, _ = derive_named("cao")
    base = log_pvalue(tf_cao, ct).log2_T
    counts = ct.counts.copy()
    for group, frac in zip(cao_locks().sets, fracs):
        i, j = sorted(group)
        tot = counts[i] + counts[j]
        counts[i] = int(round(frac * tot))
        counts[j] = tot - counts[i]
    assert log_pvalue(tf_cao, counts).log2_T == base


def test_reduction_check_flags_corruption(tf_mao, vertex_set):
    r = verify_halfspace_reduction(TestFactor.identity(), vertex_set("saturating-mao"), S)
    assert r["ok"] and abs(r["max_expectation"] - 1) < 1e-12
    bad = tf_mao.values.copy()
    bad[int(np.argmax(tf_mao.q))] *= 1.5
    r = verify_halfspace_reduction(TestFactor(bad, 0.0), vertex_set("saturating-mao"), S)
    assert not r["ok"] and r["n_violations"] > 0


def test_test_factor_json(tf_cao, tmp_path):
    tf_cao.save(tmp_path / "tf.json")
    back = TestFactor.load(tmp_path / "tf.json")
    assert np.array_equal(back.values, tf_cao.values)
    assert back.objective == tf_cao.objective
    assert [sorted(map(sorted, lg.sets)) for lg in back.locks] == \
        [sorted(map(sorted, lg.sets)) for lg in tf_cao.locks]


def test_evidence_curve_short(vertex_set):
    grid = np.concatenate([[GHZ_THRESHOLD - 0.01, GHZ_THRESHOLD], default_grid(5)])
    pts = evidence_curve("mao", vertex_set("saturating-mao"), S, grid)
    assert pts[0].below_threshold and pts[1].below_threshold and pts[0].objective == 0
    obj = [p.objective for p in pts[2:]]
    assert all(b >= a - 1e-9 for a, b in zip(obj, obj[1:]))
    assert obj[0] > 0
    text = curve_csv(pts)
    assert text.count("\n") == len(grid) + 1


def test_default_grid():
    g = default_grid()
    assert len(g) == 120 and g[-1] == 1.0 and g[0] > GHZ_THRESHOLD
    assert np.allclose(np.diff(g), (1 - GHZ_THRESHOLD) / 120)
    with pytest.raises(ValueError):
        default_grid(0)
