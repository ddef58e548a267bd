import numpy as np
import pytest

from gtnl.behavior import extremal_box, standard_witness
from gtnl.polytope import VRep, build_ns_hrep, enumerate_vertices
from gtnl.polytope.census import REFERENCE_CLASS_COUNT, classify_census
from gtnl.scenario import Scenario


@pytest.fixture(scope="module")
def census(ns_vertices):
    return classify_census(ns_vertices, [standard_witness("mao"), standard_witness("cao")])


def test_class_count_and_total(census):
    assert len(census) == REFERENCE_CLASS_COUNT
    assert sum(c.size for c in census.classes) == 53856
    assert sorted(c.class_id for c in census.classes) == list(range(1, 47))


def test_class_sizes_divide_group_order(census):
    assert all(3072 % c.size == 0 for c in census.classes)


def test_anchored_classes(census):
    assert census.by_id(1).size == 64
    assert census.by_id(2).size == 96
    # the maximal MAO violator lies in class 8 and is its only violating member
    c8 = census.by_id(8)
    assert c8.violating[0] == 1


def test_profiles_are_relabeling_consistent(census, ns_vertices):
    # saturations and violations summed over classes equal direct counts
    for j, w in enumerate(("mao", "cao")):
        sgn = ns_vertices.compare_witness(standard_witness(w))
        assert sum(c.saturating[j] for c in census.classes) == int(np.sum(sgn == 0))
        assert sum(c.violating[j] for c in census.classes) == int(np.sum(sgn > 0))


def test_class_of_vertex(census, ns_vertices):
    members = census.by_id(25).member_indices
    assert census.class_of(int(members[0])) == 25


def test_small_scenario_census():
    v = enumerate_vertices(build_ns_hrep(Scenario((1, 1, 1))))
    c = classify_census(v)
    # all eight deterministic boxes are related by outcome flips
    assert len(c) == 1 and c.classes[0].size == 8


def test_format_and_json(census):
    text = census.format_table()
    assert "46 classes, 53856 vertices" in text
    d = census.to_json_dict()
    assert d["total"] == 53856 and len(d["classes"]) == 46
