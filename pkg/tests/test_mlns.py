import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import golden
from gtnl.behavior import Behavior, depolarized_ghz, uniform_behavior
from gtnl.ingest import CountTable, derive_named, resplit
from gtnl.mlns import (SettingsDistribution, TrialDistribution, empirical_from_counts,
                       grouping_matrix, log_likelihood, mlns_fit, mlns_fit_grouped, zero_adjust)
from gtnl.scenario import TRIPARTITE
from test_behavior import random_ns_behavior


def test_settings_distribution_validation():
    with pytest.raises(ValueError):
        SettingsDistribution(np.full(8, 0.2))
    with pytest.raises(ValueError):
        SettingsDistribution(np.full(7, 1 / 7))
    s = SettingsDistribution.uniform()
    assert np.allclose(s.per_cell(), 1 / 8) and s.per_cell().shape == (64,)


def test_empirical_frequencies():
    ct, _ = derive_named("mao1")
    e = empirical_from_counts(ct)
    assert abs(e.freqs.sum() - 1) < 1e-12 and e.n == 13022
    with pytest.raises(ValueError):
        empirical_from_counts(CountTable(np.zeros(64, dtype=np.int64)))


def test_fit_of_ns_frequencies_is_identity():
    # frequencies that are already a no-signalling trial distribution are their own fit
    q = TrialDistribution.from_behavior(depolarized_ghz(0.9, "cao"))
    counts = np.round(q.joint * 8 * 1e6).astype(np.int64)
    e = empirical_from_counts(CountTable(counts))
    fit = mlns_fit(e)
    assert np.abs(fit.joint - e.freqs).max() < 1e-6


@pytest.mark.parametrize("name", ["mao1", "mao2", "cao"])
def test_fit_feasibility_and_kkt(fits, name):
    _, _, e, q = fits[name]
    assert q.settings_residual() < 1e-12
    assert q.ns_residual() < 1e-10
    assert q.joint.min() >= 0
    assert q.report["converged"]
    assert q.report["stationarity"] < 1e-9


@pytest.mark.parametrize("name", ["mao1", "cao"])
def test_fit_beats_feasible_perturbations(fits, name):
    _, grouped, e, q = fits[name]
    s = q.settings
    best = log_likelihood(q.joint, e.freqs, grouped)
    rng = np.random.default_rng(11)
    for _ in range(20):
        other = TrialDistribution.from_behavior(Behavior(random_ns_behavior(rng), TRIPARTITE, "float"), s)
        for eps in (1e-4, 1e-2, 0.3):
            trial = (1 - eps) * q.joint + eps * other.joint
            assert log_likelihood(trial, e.freqs, grouped) <= best + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.95))
def test_log_likelihood_concave(seed, lam):
    rng = np.random.default_rng(seed)
    ct, _ = derive_named("mao1")
    f = empirical_from_counts(ct).freqs
    s = SettingsDistribution.uniform()
    mix = lambda: TrialDistribution.from_behavior(
        Behavior(random_ns_behavior(rng, n_mix=3), TRIPARTITE, "float").mix(
            uniform_behavior(exact=False), 0.7), s).joint
    q1, q2 = mix(), mix()
    mid = log_likelihood(lam * q1 + (1 - lam) * q2, f)
    assert mid >= lam * log_likelihood(q1, f) + (1 - lam) * log_likelihood(q2, f) - 1e-12


def test_grouping_matrix_pools_b():
    G = grouping_matrix(TRIPARTITE, [(0, 0, 0)])
    assert G.shape[1] == 64
    col = G[:, TRIPARTITE.index((0, 0, 0), (0, 0, 0))]
    assert np.array_equal(col, G[:, TRIPARTITE.index((0, 1, 0), (0, 0, 0))])


def test_grouped_fit_rejects_plain_entry():
    ct, grouped = derive_named("cao")
    with pytest.raises(ValueError):
        mlns_fit(empirical_from_counts(ct, grouped=grouped))


def test_grouped_split_neutrality():
    ct, grouped = derive_named("cao")
    base = mlns_fit_grouped(empirical_from_counts(ct, grouped=grouped))
    for split in (lambda n: 0, lambda n: n, lambda n: n // 3):
        alt = resplit(ct, grouped, split)
        q = mlns_fit_grouped(empirical_from_counts(alt, grouped=grouped))
        assert abs(q.report["objective_log2"] - base.report["objective_log2"]) < 1e-6
        assert np.abs(q.joint - base.joint).max() < 1e-6


def test_zero_adjust_properties(fits):
    _, _, e, q = fits["mao2"]
    raw = mlns_fit(e)
    assert raw.joint.min() < 1e-12 < q.joint.min()
    assert abs(q.joint.sum() - 1) < 1e-12 and q.ns_residual() < 1e-10
    assert np.allclose(q.joint, (e.n * raw.joint + np.full(64, 1 / 64)) / (e.n + 1))
    with pytest.raises(ValueError):
        zero_adjust(raw, 0)


def test_trial_distribution_json(fits):
    q = fits["mao1"][3]
    back = TrialDistribution.from_json_dict(json.loads(json.dumps(q.to_json_dict())))
    assert np.array_equal(back.joint, q.joint)
    assert np.array_equal(back.settings.probs, q.settings.probs)


def test_regression_tables(fits):
    ref = {"mao1": golden("mlns_mao1"), "mao2": golden("mlns_mao2"), "cao": golden("mlns_cao")}
    for name, table in ref.items():
        ct, grouped, e, q = fits[name]
        mask = e.freqs > 0
        if grouped:
            G = grouping_matrix(TRIPARTITE, grouped)
            mask = (G.T @ (G @ e.freqs)) > 0
        assert np.abs(q.joint - table)[mask].max() < 2e-4, name
