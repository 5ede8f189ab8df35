"""Tests for the built-in case-study corpus."""

import pytest

from annograph import corpus
from annograph.annotation import check_correct_typing, check_well_formed
from annograph.patterns import locate_form


@pytest.mark.parametrize("scenario", sorted(corpus.SCENARIOS))
def test_scenario_builds(scenario):
    ws = corpus.SCENARIOS[scenario]()
    assert len(ws) > 0


@pytest.mark.parametrize("name", sorted(corpus.build_workspace().graphs))
def test_graphs_are_well_formed(name):
    ws = corpus.build_workspace()
    g = ws.graphs[name]
    hierarchy = ws.hierarchies["roles"] if name == "credentials" else None
    assert check_well_formed(g, hierarchy) == []
    assert check_correct_typing(g) == []


class TestCorpus:
    def test_scenarios(self):
        assert list(corpus.SCENARIOS) == [
            "driver", "planets", "credentials", "oo-roles", "pingpong", "projects", "accounts", "typing",
        ]

    def test_workspace_names(self):
        names = corpus.build_workspace().names()
        assert names["graph"] == sorted([
            "bruce", "pluto", "pluto-post", "chiron", "credentials", "maria",
            "pingpong", "projects", "accounts", "accounts-owned",
        ])
        assert len(names["rule"]) == 6
        assert len(names["constraint"]) == 8
        assert names["hierarchy"] == ["roles"]
        assert names["typed-graph"] == ["bruce-typed"]
        assert names["pattern"] == ["male-person"]

    def test_roles_hierarchy(self):
        assert corpus.ROLES.chain("T_Arbitrator") == ["T_Arbitrator", "T_TopRole"]
        assert corpus.ROLES.validate(corpus.credentials().graphs["credentials"]) == []

    def test_chiron_has_two_types(self):
        chiron = corpus.planets().graphs["chiron"]
        assert len(chiron.type_annotations_of("chiron")) == 2

    def test_maria_plays_three_roles(self):
        maria = corpus.oo_roles().graphs["maria"]
        assert len(maria.type_annotations_of("maria")) == 3

    def test_every_typed_constraint_has_a_form(self):
        for c in corpus.build_workspace().constraints.values():
            assert locate_form(c).form == c.kind
