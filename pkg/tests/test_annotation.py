"""Tests for type annotations, bundles and their validators."""

import logging

import pytest

from annograph.annotation import (
    AnnotationError,
    Kind,
    TypeAnnotatedGraph,
    TypeHierarchy,
    add_annotation,
    ann_type,
    annotate,
    annotate_value,
    annotate_with_bundle,
    check_correct_typing,
    check_well_formed,
    remove_annotation_at,
    remove_annotations_of,
)
from annograph.bgraph import GraphBuilder


def names(report):
    return {v.constraint for v in report}


def driver_builder() -> GraphBuilder:
    """Types Person, Male, Boolean and canDrive; instances x -d-> v and a value node."""
    b = GraphBuilder()
    b.add_node("TP", Kind.TYPE, "Person")
    b.add_node("TM", Kind.TYPE, "Male")
    b.add_node("TB", Kind.TYPE, "Boolean")
    b.add_edge("TP", "TB", "TE", Kind.TYPE, "canDrive")
    b.add_node("x", Kind.INSTANCE)
    b.add_node("v", Kind.INSTANCE)
    b.add_node("val", Kind.INSTANCE, "true")
    b.add_edge("x", "v", "d", Kind.INSTANCE)
    return b


def chain_builder() -> GraphBuilder:
    b = GraphBuilder()
    for t in ("A", "B", "C", "Top"):
        b.add_node(t, Kind.TYPE, t)
    b.add_node("x", Kind.INSTANCE)
    b.add_node("y", Kind.INSTANCE)
    b.add_edge("x", "y", "d", Kind.INSTANCE)
    return b


@pytest.fixture
def driver():
    return TypeAnnotatedGraph(driver_builder().freeze())


@pytest.fixture
def chain():
    """A ≤ B ≤ C ≤ Top"""
    return TypeHierarchy(parent={"A": "B", "B": "C", "C": "Top"}, top={"node": "Top"})


@pytest.fixture
def bundled(chain):
    g = TypeAnnotatedGraph(chain_builder().freeze())
    return annotate_with_bundle(g, "x", chain, "A")


# ── Plain annotations ─────────────────────────────────────────────────────────

class TestAnnotate:
    def test_annotate_node(self, driver):
        g = annotate(driver, "x", "TP")
        assert ann_type(g, "x") == {"TP"}
        assert check_well_formed(g) == []
        assert len(g.annotations) == 1
        assert g.annotations[0].element == "x"

    def test_multiple_types(self, driver):
        g = annotate(annotate(driver, "x", "TP"), "x", "TM")
        assert ann_type(g, "x") == {"TP", "TM"}
        assert check_well_formed(g) == []

    def test_annotate_edge_marks_link(self, driver):
        g = annotate(driver, "d", "TE")
        ann = g.annotations_of("d")[0]
        assert ann.annotates in g.carrier.edge_links
        assert ann.with_edge in g.carrier.edge_links
        assert ann_type(g, "d") == {"TE"}

    def test_annotate_twice_rejected(self, driver):
        g = annotate(driver, "x", "TP")
        with pytest.raises(AnnotationError) as exc:
            annotate(g, "x", "TP")
        assert exc.value.constraint == "notTypedTwice"

    @pytest.mark.parametrize("element,type_", [
        ("x", "TE"),   # edge type on a node
        ("d", "TP"),   # node type on an edge
        ("TP", "TM"),  # types are not annotated
        ("x", "v"),    # v is not a type
    ])
    def test_sort_violation(self, driver, element, type_):
        with pytest.raises(AnnotationError) as exc:
            annotate(driver, element, type_)
        assert exc.value.constraint == "annotationSortViolation"

    def test_unknown_element(self, driver):
        with pytest.raises(AnnotationError) as exc:
            annotate(driver, "nope", "TP")
        assert exc.value.constraint == "unknownElement"

    def test_machinery_not_annotatable(self, driver):
        g = annotate(driver, "x", "TP")
        a = g.annotations[0].node
        with pytest.raises(AnnotationError) as exc:
            annotate(g, a, "TP")
        assert exc.value.constraint == "annotatedMachinery"

    def test_input_graph_untouched(self, driver):
        annotate(driver, "x", "TP")
        assert driver.annotations == ()

    def test_type_named(self, driver):
        assert driver.type_named("Person") == "TP"
        assert driver.type_named("canDrive", "edge") == "TE"
        assert driver.type_named("canDrive", "node") is None


class TestAnnotateValue:
    def test_value_is_not_a_type(self, driver):
        g = annotate_value(driver, "x", "val")
        assert ann_type(g, "x") == frozenset()
        assert g.annotations_of("x")[0].value == "val"
        assert check_well_formed(g) == []

    def test_unnamed_value_rejected(self, driver):
        with pytest.raises(AnnotationError):
            annotate_value(driver, "x", "v")


class TestRemoveAnnotations:
    def test_remove_all_of_element(self, driver):
        g = annotate(annotate(annotate(driver, "x", "TP"), "x", "TM"), "v", "TB")
        g, removed = remove_annotations_of(g, ["x"])
        assert len(removed) == 2
        assert ann_type(g, "x") == frozenset()
        assert ann_type(g, "v") == {"TB"}
        assert len(g.elements_of_kind(Kind.ANNOTATION)) == 1
        assert check_well_formed(g) == []

    def test_removing_bundle_annotation_drops_box(self, bundled):
        g, removed = remove_annotations_of(bundled, ["x"])
        assert len(removed) == 1
        assert g.elements_of_kind(Kind.BUNDLE) == []


# ── Hierarchies and bundles ───────────────────────────────────────────────────

class TestTypeHierarchy:
    def test_chain_and_order(self, chain):
        assert chain.chain("A") == ["A", "B", "C", "Top"]
        assert chain.upper_set("B") == {"B", "C", "Top"}
        assert chain.leq("A", "C")
        assert not chain.leq("C", "A")
        assert chain.sort_of("A") == "node"
        assert chain.validate() == []

    def test_cycle(self):
        h = TypeHierarchy(parent={"A": "B", "B": "A"}, top={"node": "Top"})
        assert names(h.validate()) == {"hierarchyCycle"}

    def test_top_with_parent(self):
        h = TypeHierarchy(parent={"A": "Top", "Top": "Other"}, top={"node": "Top", "edge": "Other"})
        assert "topHasParent" in names(h.validate())

    def test_disconnected(self):
        h = TypeHierarchy(parent={"A": "Z"}, top={"node": "Top"})
        report = h.validate()
        assert names(report) == {"hierarchyDisconnected"}
        assert {v.elements for v in report} == {("A",), ("Z",)}

    def test_against_graph(self, chain, driver):
        assert "hierarchyNotType" in names(chain.validate(driver))
        g = TypeAnnotatedGraph(chain_builder().freeze())
        assert chain.validate(g) == []


class TestBundles:
    def test_bundle_annotates_whole_chain(self, bundled, chain):
        assert ann_type(bundled, "x") == {"A", "B", "C", "Top"}
        assert len(bundled.elements_of_kind(Kind.BUNDLE)) == 1
        assert check_well_formed(bundled, chain) == []

    def test_bundle_is_upward_closed(self, bundled, chain):
        types = ann_type(bundled, "x")
        for t in types:
            assert chain.upper_set(t) <= types

    def test_remove_at_middle(self, bundled, chain):
        g = remove_annotation_at(bundled, "x", "B", chain)
        assert ann_type(g, "x") == {"C", "Top"}
        assert len(g.elements_of_kind(Kind.BUNDLE)) == 1
        assert check_well_formed(g, chain) == []

    def test_remove_at_leaf(self, bundled, chain):
        g = remove_annotation_at(bundled, "x", "A", chain)
        assert ann_type(g, "x") == {"B", "C", "Top"}

    def test_top_never_removed(self, bundled, chain):
        with pytest.raises(AnnotationError) as exc:
            remove_annotation_at(bundled, "x", "Top", chain)
        assert exc.value.constraint == "topNotRemovable"

    def test_remove_missing_type_is_a_logged_noop(self, bundled, chain, caplog):
        g = remove_annotation_at(bundled, "x", "B", chain)
        with caplog.at_level(logging.WARNING, logger="annograph"):
            again = remove_annotation_at(g, "x", "A", chain)
        assert again is g
        assert "Annotation removal skipped" in caplog.text

    def test_same_bundle_twice(self, bundled, chain):
        with pytest.raises(AnnotationError) as exc:
            annotate_with_bundle(bundled, "x", chain, "A")
        assert exc.value.constraint == "notTypedTwice"

    def test_plain_on_bundled_element(self, bundled):
        with pytest.raises(AnnotationError) as exc:
            annotate(bundled, "x", "A")
        assert exc.value.constraint == "mixedAnnotationRegime"

    def test_bundle_on_plainly_typed_element(self, chain):
        g = annotate(TypeAnnotatedGraph(chain_builder().freeze()), "x", "A")
        with pytest.raises(AnnotationError) as exc:
            annotate_with_bundle(g, "x", chain, "B")
        assert exc.value.constraint == "mixedAnnotationRegime"

    def test_edges_cannot_carry_bundles(self, chain):
        g = TypeAnnotatedGraph(chain_builder().freeze())
        with pytest.raises(AnnotationError) as exc:
            annotate_with_bundle(g, "d", chain, "A")
        assert exc.value.constraint == "bundleSortViolation"

    def test_unknown_leaf(self, chain):
        g = TypeAnnotatedGraph(chain_builder().freeze())
        with pytest.raises(AnnotationError) as exc:
            annotate_with_bundle(g, "x", chain, "Q")
        assert exc.value.constraint == "unknownType"


# ── Well-formedness ───────────────────────────────────────────────────────────

class TestWellFormed:
    def test_typed_twice(self):
        b = driver_builder()
        add_annotation(b, "x", "TP", "a1")
        add_annotation(b, "x", "TP", "a2")
        report = check_well_formed(TypeAnnotatedGraph(b.freeze()))
        assert names(report) == {"notTypedTwice"}

    def test_annotation_node_with_two_targets(self):
        b = driver_builder()
        add_annotation(b, "x", "TP", "a1")
        b.add_edge("a1", "v", "extra", Kind.ANNOTATES)
        assert "annPatternUnique" in names(check_well_formed(TypeAnnotatedGraph(b.freeze())))

    def test_machinery_as_edge_endpoint(self):
        b = driver_builder()
        add_annotation(b, "x", "TP", "a1")
        b.add_edge("v", "a1", "bad", Kind.INSTANCE)
        assert "machineryAsEndpoint" in names(check_well_formed(TypeAnnotatedGraph(b.freeze())))

    def test_annotates_edge_from_instance(self):
        b = driver_builder()
        b.add_edge("x", "TP", "weird", Kind.ANNOTATES)
        assert "annLinkSource" in names(check_well_formed(TypeAnnotatedGraph(b.freeze())))

    def test_node_annotated_with_edge_type(self):
        b = driver_builder()
        add_annotation(b, "x", "TE", "a1")
        report = names(check_well_formed(TypeAnnotatedGraph(b.freeze())))
        assert {"annEdgeType", "annNodeInstance"} <= report

    def test_mixed_regime(self):
        b = chain_builder()
        add_annotation(b, "x", "A", "a1")
        b.add_box("bun", ["A", "B", "C", "Top"], Kind.BUNDLE)
        add_annotation(b, "x", "bun", "a2")
        assert "mixedAnnotationRegime" in names(check_well_formed(TypeAnnotatedGraph(b.freeze())))

    def test_bundle_with_gap(self, chain):
        b = chain_builder()
        b.add_box("bun", ["A", "C", "Top"], Kind.BUNDLE)
        add_annotation(b, "x", "bun", "a1")
        g = TypeAnnotatedGraph(b.freeze())
        assert names(check_well_formed(g, chain)) == {"bundleChain"}
        assert check_well_formed(g) == []

    def test_bundle_holding_instances(self):
        b = chain_builder()
        b.add_box("bun", ["y"], Kind.BUNDLE)
        add_annotation(b, "x", "bun", "a1")
        assert "bundleChain" in names(check_well_formed(TypeAnnotatedGraph(b.freeze())))


# ── Correct typing ────────────────────────────────────────────────────────────

def two_drivers() -> TypeAnnotatedGraph:
    """d1 from a Person, d2 from a Male only; both typed canDrive."""
    b = driver_builder()
    b.add_node("y", Kind.INSTANCE)
    b.add_edge("y", "v", "d2", Kind.INSTANCE)
    add_annotation(b, "x", "TP", "ax")
    add_annotation(b, "y", "TM", "ay")
    add_annotation(b, "v", "TB", "av")
    add_annotation(b, "d", "TE", "ad")
    add_annotation(b, "d2", "TE", "ad2")
    return TypeAnnotatedGraph(b.freeze())


class TestCorrectTyping:
    def test_consistent_graph(self, driver):
        g = annotate(annotate(annotate(driver, "x", "TP"), "v", "TB"), "d", "TE")
        assert check_well_formed(g) == []
        assert check_correct_typing(g) == []

    def test_edge_type_consistency(self):
        report = check_well_formed(two_drivers())
        assert names(report) == {"edgeTypeConsistency"}
        assert report[0].elements == ("d", "d2", "TE")

    def test_endpoint_not_annotated(self):
        report = check_correct_typing(two_drivers())
        assert names(report) == {"edgeTypeEndpoint"}
        assert {v.elements for v in report} == {("d2", "TE")}

    def test_box_type_content(self):
        b = GraphBuilder()
        b.add_node("TP", Kind.TYPE, "Person")
        b.add_node("TQ", Kind.TYPE, "Pet")
        b.add_box("TBox", ["TP"], Kind.TYPE, "Household")
        b.add_node("x", Kind.INSTANCE)
        b.add_box("home", ["x"], Kind.INSTANCE)
        add_annotation(b, "x", "TQ", "ax")
        add_annotation(b, "home", "TBox", "ah")
        g = TypeAnnotatedGraph(b.freeze())
        assert check_well_formed(g) == []
        assert [v.elements for v in check_correct_typing(g)] == [("home", "x", "TBox")]
