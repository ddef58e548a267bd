import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import golden
from gtnl.ingest import (SIGN_COLUMNS, CountTable, DataError, FourPartyCounts, derive_cao,
                         derive_mao, derive_named, load_bundled, load_counts, load_four_party,
                         parse_label, resplit, save_json, swap_b_outcome)
from gtnl.mlns import empirical_from_counts
from gtnl.scenario import TRIPARTITE

GROUPED_ROWS = (0, 2)  # setting indices of xyz = 000 and 010


def _write_csv(path, rows):
    lines = ["measurement," + ",".join(SIGN_COLUMNS)]
    lines += [label + "," + ",".join(str(v) for v in vals) for label, vals in rows]
    path.write_text("\n".join(lines) + "\n")


def test_bundled_cells():
    assert load_bundled("mao1").cell("Z(X+Z)XZ", "++++") == 550
    assert load_bundled("cao").cell("ZZZX", "++++") == 5229


def test_label_parsing():
    assert parse_label("Z(X+Z)XZ") == ("Z", "X+Z", "X", "Z")
    assert parse_label("Z (X−Z)/√2 X Z") == ("Z", "X-Z", "X", "Z")
    with pytest.raises(DataError):
        parse_label("ZQXZ")


def test_empty_and_malformed_files(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(DataError):
        load_four_party(p)
    p.write_text("measurement,++++,+++-\nZZXZ,1,2\n")
    with pytest.raises(DataError):
        load_four_party(p)
    _write_csv(p, [("ZZXZ", [1] * 15 + [-1])])
    with pytest.raises(DataError):
        load_four_party(p)
    _write_csv(p, [("ZZXZ", [1] * 15 + ["2.5"])])
    with pytest.raises(DataError):
        load_four_party(p)
    _write_csv(p, [("ZZXZ", [1] * 15)])
    with pytest.raises(DataError):
        load_four_party(p)


def test_column_order_is_normalised(tmp_path):
    fp = load_bundled("mao1")
    cols = list(reversed(SIGN_COLUMNS))
    lines = ["measurement," + ",".join(cols)]
    for key, row in fp.rows.items():
        lab = "".join(t if len(t) == 1 else f"({t})" for t in key)
        lines.append(lab + "," + ",".join(str(row[SIGN_COLUMNS.index(c)]) for c in cols))
    p = tmp_path / "rev.csv"
    p.write_text("\n".join(lines))
    again = load_four_party(p)
    assert all(np.array_equal(again.rows[k], fp.rows[k]) for k in fp.rows)


@pytest.mark.parametrize("name,table", [("mao1", "emp_mao1"), ("mao2", "emp_mao2")])
def test_mao_empirical_golden(name, table):
    ct, grouped = derive_named(name)
    assert grouped == []
    f = empirical_from_counts(ct).freqs
    assert np.abs(f - golden(table)).max() < 5e-9


def test_mao2_zero_cells_reproduced():
    ct, _ = derive_named("mao2")
    ref = golden("emp_mao2")
    f = empirical_from_counts(ct).freqs
    assert np.array_equal(f == 0, ref == 0) and np.sum(ref == 0) == 3


def test_cao_empirical_golden():
    ct, grouped = derive_named("cao")
    assert grouped == [(0, 0, 0), (0, 1, 0)]
    f = empirical_from_counts(ct, grouped=grouped).freqs.reshape(8, 8)
    ref = golden("emp_cao").reshape(8, 8)
    keep = [i for i in range(8) if i not in GROUPED_ROWS]
    assert np.abs(f[keep] - ref[keep]).max() < 5e-9
    # b-sums: outcomes a0c and a1c pooled
    for i in GROUPED_ROWS:
        fs = f[i].reshape(2, 2, 2).sum(axis=1)
        rs = ref[i].reshape(2, 2, 2).sum(axis=1)
        assert np.abs(fs - rs).max() < 1e-8


def test_b3_first_relation():
    ct, _ = derive_named("cao")
    s = TRIPARTITE
    total = sum(ct.counts[s.index((0, b, 0), (0, 0, 0))] for b in (0, 1))
    assert total == 5229 + 19


def test_cao_missing_zzzx():
    fp = load_bundled("cao")
    with pytest.raises(DataError):
        derive_cao(fp.without("ZZZX"))


def test_mao_missing_row():
    fp = load_bundled("mao1")
    with pytest.raises(DataError):
        derive_mao(fp.without("Z(X+Z)XZ"))


def test_all_zero_table():
    fp = load_bundled("mao1")
    zero = FourPartyCounts({k: np.zeros(16, dtype=np.int64) for k in fp.rows})
    assert derive_mao(zero).total == 0


def test_count_conservation():
    fp = load_bundled("mao1")
    ct = derive_mao(fp)
    kept = sum(int(row[[i for i, c in enumerate(SIGN_COLUMNS) if c[2] == "+"]].sum())
               for row in fp.rows.values())
    assert ct.total == kept == 13022
    assert derive_named("mao2")[0].total == 4089
    assert derive_named("cao")[0].total == 30720


def test_swap_log_records_rows():
    ct = derive_mao(load_bundled("mao1"))
    swaps = [line for line in ct.log if "swapped" in line]
    assert len(swaps) == 4 and all("X-Z" in line for line in swaps)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 10_000), min_size=16, max_size=16))
def test_swap_involution(vals):
    row = np.array(vals, dtype=np.int64)
    once = swap_b_outcome(row)
    assert np.array_equal(swap_b_outcome(once), row)
    assert once.sum() == row.sum()


def test_resplit_keeps_b_sums():
    ct, grouped = derive_named("cao")
    alt = resplit(ct, grouped, lambda n: 0)
    s = TRIPARTITE
    for g in grouped:
        for a in (0, 1):
            for c in (0, 1):
                i0, i1 = s.index((a, 0, c), g), s.index((a, 1, c), g)
                assert alt.counts[i0] == 0
                assert alt.counts[i0] + alt.counts[i1] == ct.counts[i0] + ct.counts[i1]
    with pytest.raises(DataError):
        resplit(ct, grouped, lambda n: n + 1)


def test_count_table_validation_and_json(tmp_path):
    with pytest.raises(DataError):
        CountTable(np.full(64, -1))
    with pytest.raises(DataError):
        CountTable(np.zeros(10))
    ct, grouped = derive_named("cao")
    p = tmp_path / "c.json"
    d = ct.to_json_dict()
    d["grouped"] = [list(g) for g in grouped]
    p.write_text(json.dumps(d))
    back, g2 = load_counts(p)
    assert np.array_equal(back.counts, ct.counts) and g2 == grouped
    save_json(ct, tmp_path / "d.json")
    assert CountTable.from_json_dict(json.loads((tmp_path / "d.json").read_text())).total == ct.total


def test_load_counts_detects_layout(tmp_path):
    for name, has_groups in (("mao1", False), ("cao", True)):
        fp = load_bundled(name)
        rows = [("".join(t if len(t) == 1 else f"({t})" for t in k), v) for k, v in fp.rows.items()]
        p = tmp_path / f"{name}.csv"
        _write_csv(p, rows)
        ct, grouped = load_counts(p)
        assert bool(grouped) == has_groups
        assert np.array_equal(ct.counts, derive_named(name)[0].counts)
