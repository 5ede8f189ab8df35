"""Tests for type-change rules, violation detection and repairs."""

import dataclasses

import pytest

from annograph import corpus
from annograph.adapt import (
    Cause,
    RepairError,
    Strategy,
    apply_with_repairs,
    build_pbar,
    change_type_rule,
    detect_violations,
    handle_form2,
    handle_form3,
    plan_repair,
    synthesize_extend_rule,
    synthesize_post_repair,
)
from annograph.annotation import Kind, TypeAnnotatedGraph, add_annotation, ann_type, check_well_formed
from annograph.bgraph import BGraph, GraphBuilder, GraphError, apply_rule, is_isomorphic, subgraph
from annograph.patterns import Constraint, check_constraint
from tests.oracles import with_renamed_conclusion


@pytest.fixture(scope="module")
def ws():
    return corpus.build_workspace()


def change_at(ws, rule_name, graph_name, element):
    rule = ws.rules[rule_name]
    g = ws.graphs[graph_name]
    return g, rule, rule.matches(g, element)[0]


def strategies(result):
    return [a.strategy for r in result.trace for a in r.actions]


# ── Type-change rules ─────────────────────────────────────────────────────────

class TestChangeTypeRule:
    @pytest.mark.parametrize("sort", ["node", "edge", "box"])
    def test_shape(self, sort):
        rule = change_type_rule("r", sort, "Old", "New")
        assert rule.validate() == []
        assert rule.rule.lhs.sort_of(rule.element) == sort
        assert rule.rule.interface.names[rule.old_type] == "Old"
        assert rule.rule.interface.names[rule.new_type] == "New"

    def test_same_type_rejected(self):
        with pytest.raises(GraphError) as exc:
            change_type_rule("noop", "node", "Male", "Male")
        assert {v.constraint for v in exc.value.violations} == {"typeChangeShape"}

    def test_matches_typed_elements_only(self, ws):
        rule = ws.rules["FromMaleToFemale"]
        g = ws.graphs["bruce"]
        (m,) = rule.matches(g)
        assert m(rule.rule.left(rule.element)) == "bruce"
        assert rule.matches(g, "yes") == []


# ── Detection ─────────────────────────────────────────────────────────────────

class TestDetectViolations:
    def test_driver_loses_male(self, ws):
        g, rule, match = change_at(ws, "FromMaleToFemale", "bruce", "bruce")
        (v,) = detect_violations(g, rule, match, [ws.constraints["DriverIsMale"]])
        assert v.constraint.name == "DriverIsMale"
        assert v.cause == Cause.LOST_REQUIRED_TYPE
        assert v.witness("x") == "bruce"

    def test_already_violated_constraints_are_ignored(self, ws):
        g, rule, match = change_at(ws, "fromPlanetToDwarf", "pluto", "pluto")
        cs = [ws.constraints[n] for n in ("isPlanet", "isDwarfPlanet", "isSSSB")]
        assert detect_violations(g, rule, match, cs) == []

    def test_new_premise_match(self, ws):
        g, rule, match = change_at(ws, "CToA", "pingpong", "n0")
        (v,) = detect_violations(g, rule, match, [ws.constraints["NeedsB"], ws.constraints["NeedsA"]])
        assert v.constraint.name == "NeedsB"
        assert v.cause == Cause.PREMISE_NOW_HOLDS

    def test_sole_witness(self, ws):
        g, rule, match = change_at(ws, "ManagerToEngineer", "projects", "alice")
        (v,) = detect_violations(g, rule, match, [ws.constraints["ProjectHasManager"]])
        assert v.cause == Cause.LOST_SOLE_WITNESS
        assert v.witness("x") == "p1"


# ── P̄ and repair synthesis ────────────────────────────────────────────────────

class TestPBar:
    def test_driver_premise(self, ws):
        c = ws.constraints["DriverIsMale"]
        pbar = build_pbar(c)
        assert pbar.element == "x"
        assert pbar.occurrences == 1
        assert pbar.removed == {"d", "ad", "ad.annotates", "ad.with"}
        assert pbar.graph.elements == c.premise.elements - pbar.removed

    def test_symmetric_premise_glues_its_occurrences(self):
        """x points at a directed triangle, so three rotations fix x."""
        premise = BGraph.build(nodes=["x", "a", "b", "c"], edges={
            "xa": ("x", "a"), "xb": ("x", "b"), "xc": ("x", "c"),
            "ab": ("a", "b"), "bc": ("b", "c"), "ca": ("c", "a"),
        })
        conclusion = GraphBuilder(premise)
        conclusion.add_node("tH", Kind.TYPE, "Hub")
        add_annotation(conclusion, "x", "tH", "ah")
        c = Constraint.from_graphs("HubIsTyped", "F1", premise, conclusion.freeze(), element="x")
        pbar = build_pbar(c)
        assert pbar.occurrences == 3
        assert pbar.removed == {"xa", "xb", "xc"}
        assert pbar.graph.elements == {"x", "a", "b", "c", "ab", "bc", "ca"}
        assert is_isomorphic(pbar.graph, subgraph(premise, pbar.graph.elements))
        assert pbar.embedding.is_injective()

    def test_only_for_f1(self, ws):
        with pytest.raises(RepairError):
            build_pbar(ws.constraints["NeedsB"])

    def test_element_must_be_in_premise(self, ws):
        with pytest.raises(RepairError):
            build_pbar(ws.constraints["DriverIsMale"], "nope")

    def test_edges_have_no_pbar(self, ws):
        with pytest.raises(RepairError):
            build_pbar(ws.constraints["DriverIsMale"], "d")

    def test_post_repair_rule(self, ws):
        rule = ws.rules["FromMaleToFemale"]
        c = ws.constraints["DriverIsMale"]
        post = synthesize_post_repair(rule, c, build_pbar(c))
        assert post.rule.name == "repair-DriverIsMale"
        assert post.rule.validate() == []
        assert post.rule.lhs == c.premise
        assert post.directive({rule.rule.right(rule.element): "bruce"}) == {"x": "bruce"}

    def test_f1_plan_offers_both_strategies(self, ws):
        g, rule, match = change_at(ws, "FromMaleToFemale", "bruce", "bruce")
        c = ws.constraints["DriverIsMale"]
        (v,) = detect_violations(g, rule, match, [c])
        plan = plan_repair(rule, c, g, v.witness, v.cause)
        assert plan.strategies == [Strategy.EXTEND_RULE, Strategy.POST_REPAIR]

    def test_extended_rule(self, ws):
        g, rule, match = change_at(ws, "FromMaleToFemale", "bruce", "bruce")
        c = ws.constraints["DriverIsMale"]
        extended = synthesize_extend_rule(rule, c, build_pbar(c))
        assert extended.rule.name == "FromMaleToFemale+DriverIsMale"
        assert extended.constraints == ("DriverIsMale",)
        assert extended.rule.validate() == []
        assert len(extended.rule.lhs.elements) > len(rule.rule.lhs.elements)
        assert extended.lift_match(match, g.carrier) is not None


class TestPlans:
    def test_sole_witness_can_block_or_create(self, ws):
        g, rule, match = change_at(ws, "ManagerToEngineer", "projects", "alice")
        c = ws.constraints["ProjectHasManager"]
        (v,) = detect_violations(g, rule, match, [c])
        plan = handle_form2(rule, c, g, v.witness, v.cause)
        assert plan.strategies == [Strategy.BLOCK_NAC, Strategy.CREATE_TYPED_ELEMENT]
        assert plan.choose(["blockNAC"]).strategy == Strategy.BLOCK_NAC
        assert plan.options[0].replaces_change

    def test_missing_owner_is_completed(self, ws):
        g, rule, match = change_at(ws, "LeadToAccount", "accounts", "n")
        c = ws.constraints["AccountHasOwner"]
        (v,) = detect_violations(g, rule, match, [c])
        after = TypeAnnotatedGraph(apply_rule(rule.rule, g.carrier, match))
        plan = handle_form3(rule, c, after, v.witness, v.cause)
        assert plan.strategies[-1] == Strategy.POST_REPAIR
        assert plan.options[-1].rule.name == "complete-AccountHasOwner"


# ── Adaptation runs ───────────────────────────────────────────────────────────

class TestApplyWithRepairs:
    def test_driver_post_repair(self, ws):
        g, rule, match = change_at(ws, "FromMaleToFemale", "bruce", "bruce")
        result = apply_with_repairs(g, rule, match, [ws.constraints["DriverIsMale"]], policy="post")
        assert result.status == "converged"
        assert result.rounds == 1
        (action,) = result.trace[0].actions
        assert action.strategy == Strategy.POST_REPAIR
        assert action.rule == "repair-DriverIsMale"
        assert action.cause == Cause.LOST_REQUIRED_TYPE
        h = result.graph
        assert "drives" not in h.carrier
        assert "a_drives_T_canDrive" not in h.carrier
        assert ann_type(h, "bruce") == {"T_Person", "T_Female"}
        assert check_well_formed(h) == []
        assert result.residual == []
        assert result.maintained == ["DriverIsMale"]

    def test_driver_extended_rule(self, ws):
        g, rule, match = change_at(ws, "FromMaleToFemale", "bruce", "bruce")
        constraints = [ws.constraints["DriverIsMale"]]
        extended = apply_with_repairs(g, rule, match, constraints, policy="extend")
        post = apply_with_repairs(g, rule, match, constraints, policy="post")
        assert extended.status == "converged"
        assert extended.rounds == 1
        assert extended.trace[0].index == 0
        assert strategies(extended) == [Strategy.EXTEND_RULE]
        assert is_isomorphic(extended.graph.carrier, post.graph.carrier)

    @pytest.mark.parametrize("second_first", [False, True])
    def test_two_driver_constraints_extend_one_rule(self, ws, second_first):
        g, rule, match = change_at(ws, "FromMaleToFemale", "bruce", "bruce")
        first = ws.constraints["DriverIsMale"]
        second = dataclasses.replace(first, name="DriverIsMaleB")
        constraints = [second, first] if second_first else [first, second]
        extended = apply_with_repairs(g, rule, match, constraints, policy="extend")
        post = apply_with_repairs(g, rule, match, constraints, policy="post")
        assert extended.status == "converged"
        assert extended.rounds == 1
        assert [a.constraint for a in extended.trace[0].actions] == [c.name for c in constraints]
        assert strategies(extended) == [Strategy.EXTEND_RULE] * 2
        assert extended.trace[0].actions[-1].rule == "+".join(["FromMaleToFemale"] + [c.name for c in constraints])
        assert check_well_formed(extended.graph) == []
        assert is_isomorphic(extended.graph.carrier, post.graph.carrier)

    def test_account_owner_strategies_agree(self, ws):
        g, rule, match = change_at(ws, "LeadToAccount", "accounts", "n")
        constraints = [ws.constraints["AccountHasOwner"]]
        extended = apply_with_repairs(g, rule, match, constraints, policy="extend")
        post = apply_with_repairs(g, rule, match, constraints, policy="post")
        assert extended.status == post.status == "converged"
        assert strategies(extended) == [Strategy.EXTEND_RULE]
        assert strategies(post) == [Strategy.POST_REPAIR]
        assert is_isomorphic(extended.graph.carrier, post.graph.carrier)

    @pytest.mark.parametrize("policy", ["post", "extend"])
    def test_conclusion_ids_need_not_match_premise_ids(self, ws, policy):
        g, rule, match = change_at(ws, "LeadToAccount", "accounts", "n")
        plain = apply_with_repairs(g, rule, match, [ws.constraints["AccountHasOwner"]], policy=policy)
        renamed = apply_with_repairs(g, rule, match, [with_renamed_conclusion(ws.constraints["AccountHasOwner"])],
                                     policy=policy)
        assert renamed.status == "converged"
        assert strategies(renamed) == strategies(plain)
        assert is_isomorphic(renamed.graph.carrier, plain.graph.carrier)

    def test_pingpong_with_renamed_conclusions(self, ws):
        g, rule, match = change_at(ws, "CToA", "pingpong", "n0")
        cs = [with_renamed_conclusion(ws.constraints[n]) for n in ("NeedsB", "NeedsA")]
        result = apply_with_repairs(g, rule, match, cs, max_cascade=2)
        assert result.status == "unconverged"
        assert strategies(result) == [Strategy.CREATE_TYPED_ELEMENT] * 2
        assert [v.constraint.name for v in result.residual] == ["NeedsB"]

    def test_pluto_needs_no_repair(self, ws):
        g, rule, match = change_at(ws, "fromPlanetToDwarf", "pluto", "pluto")
        cs = [ws.constraints[n] for n in ("isPlanet", "isDwarfPlanet", "isSSSB")]
        result = apply_with_repairs(g, rule, match, cs)
        assert result.status == "converged"
        assert result.rounds == 0
        assert result.maintained == ["isPlanet", "isSSSB"]
        assert check_constraint(result.graph, ws.constraints["isDwarfPlanet"]).satisfied
        assert check_well_formed(result.graph) == []

    def test_pingpong_runs_out_of_budget(self, ws):
        g, rule, match = change_at(ws, "CToA", "pingpong", "n0")
        cs = [ws.constraints["NeedsB"], ws.constraints["NeedsA"]]
        result = apply_with_repairs(g, rule, match, cs, max_cascade=2)
        assert result.status == "unconverged"
        assert result.rounds == 2
        assert strategies(result) == [Strategy.CREATE_TYPED_ELEMENT] * 2
        assert result.trace[0].actions[0].cause == Cause.PREMISE_NOW_HOLDS
        assert [v.constraint.name for v in result.residual] == ["NeedsB"]

    def test_manager_replaced_by_new_one(self, ws):
        g, rule, match = change_at(ws, "ManagerToEngineer", "projects", "alice")
        result = apply_with_repairs(g, rule, match, [ws.constraints["ProjectHasManager"]])
        assert result.status == "converged"
        (action,) = result.trace[0].actions
        assert action.strategy == Strategy.CREATE_TYPED_ELEMENT
        assert action.cause == Cause.LOST_SOLE_WITNESS
        assert action.options == (Strategy.BLOCK_NAC, Strategy.CREATE_TYPED_ELEMENT)

    def test_manager_change_blocked(self, ws):
        g, rule, match = change_at(ws, "ManagerToEngineer", "projects", "alice")
        result = apply_with_repairs(g, rule, match, [ws.constraints["ProjectHasManager"]],
                                    option_order=["blockNAC", "createTypedElement"])
        assert result.status == "blocked"
        assert result.graph == g
        assert strategies(result) == [Strategy.BLOCK_NAC]

    def test_existing_member_becomes_manager(self, ws):
        g, rule, match = change_at(ws, "DraftToProject", "projects", "p2")
        result = apply_with_repairs(g, rule, match, [ws.constraints["ProjectHasManager"]])
        assert result.status == "converged"
        assert strategies(result) == [Strategy.ADD_TYPE_ANNOTATION]
        assert "T_Manager" in ann_type(result.graph, "bob")
        assert len(result.graph.carrier.nodes) == len(g.carrier.nodes) + 1  # the new annotation node

    def test_account_gets_owner(self, ws):
        g, rule, match = change_at(ws, "LeadToAccount", "accounts", "n")
        result = apply_with_repairs(g, rule, match, [ws.constraints["AccountHasOwner"]])
        assert result.status == "converged"
        assert result.rounds == 1
        (action,) = result.trace[0].actions
        assert action.strategy == Strategy.POST_REPAIR
        assert action.rule == "complete-AccountHasOwner"
        assert check_constraint(result.graph, ws.constraints["AccountHasOwner"]).satisfied

    def test_owned_account_needs_nothing(self, ws):
        g, rule, match = change_at(ws, "LeadToAccount", "accounts-owned", "n")
        result = apply_with_repairs(g, rule, match, [ws.constraints["AccountHasOwner"]])
        assert result.status == "converged"
        assert result.rounds == 0

    def test_unknown_policy(self, ws):
        g, rule, match = change_at(ws, "FromMaleToFemale", "bruce", "bruce")
        with pytest.raises(ValueError, match="unknown repair policy"):
            apply_with_repairs(g, rule, match, [], policy="later")
