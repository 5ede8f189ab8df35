"""
Type annotations carried inside the graph.

An annotation node ``a`` attaches a value ``y`` to an element ``x`` through the
pattern ``x <-annotates- a -with-> y``. When ``y`` is a type element the pattern
is a type annotation; when ``y`` is a bundle box it annotates ``x`` with every
type of an inheritance chain at once. Other values (named instance elements of
a value domain) model attributes and are ignored by the type validators.
"""

import logging
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property

import networkx as nx

from annograph.bgraph import (
    AnnographError,
    BGraph,
    GraphBuilder,
    Sort,
    Violation,
    validate_bgraph,
)

log = logging.getLogger("annograph")


class Kind(StrEnum):
    INSTANCE = "instance"
    TYPE = "type"
    ANNOTATION = "annotation"
    BUNDLE = "bundle"
    ANNOTATES = "annotates"
    WITH = "with"
    PLAIN = "plain"


MACHINERY = frozenset({Kind.ANNOTATION, Kind.BUNDLE, Kind.ANNOTATES, Kind.WITH})


class AnnotationError(AnnographError):
    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


@dataclass(frozen=True)
class Annotation:
    node: str
    annotates: str
    with_edge: str
    element: str
    value: str


@dataclass(frozen=True)
class TypeAnnotatedGraph:
    carrier: BGraph = field(default_factory=BGraph)

    @property
    def sort_of(self) -> Mapping[str, str]:
        return self.carrier.kinds

    @property
    def names(self) -> Mapping[str, str]:
        return self.carrier.names

    def kind(self, x: str) -> Kind | None:
        k = self.carrier.kinds.get(x)
        return Kind(k) if k is not None else None

    def elements_of_kind(self, kind: Kind, sort: Sort | None = None) -> list[str]:
        pool = self.carrier.elements if sort is None else self.carrier.of_sort(sort)
        return sorted(x for x in pool if self.carrier.kinds.get(x) == kind)

    def type_named(self, name: str, sort: Sort | None = None) -> str | None:
        for t in self.elements_of_kind(Kind.TYPE, sort):
            if self.carrier.names.get(t) == name:
                return t
        return None

    @cached_property
    def annotations(self) -> tuple[Annotation, ...]:
        """Annotation nodes taking part in exactly one annotation pattern."""
        found = []
        g = self.carrier
        for a in self.elements_of_kind(Kind.ANNOTATION, "node"):
            outs = g.out_edges(a)
            ann = [e for e in outs if g.kinds.get(e) == Kind.ANNOTATES]
            wth = [e for e in outs if g.kinds.get(e) == Kind.WITH]
            if len(ann) == 1 and len(wth) == 1:
                found.append(Annotation(a, ann[0], wth[0], g.tgt[ann[0]], g.tgt[wth[0]]))
        return tuple(found)

    @cached_property
    def _by_element(self) -> dict[str, list[Annotation]]:
        index: dict[str, list[Annotation]] = {}
        for ann in self.annotations:
            index.setdefault(ann.element, []).append(ann)
        return index

    def annotations_of(self, x: str) -> list[Annotation]:
        return self._by_element.get(x, [])

    def type_annotations_of(self, x: str) -> list[Annotation]:
        return [a for a in self.annotations_of(x) if self.kind(a.value) == Kind.TYPE]

    def bundle_annotations_of(self, x: str) -> list[Annotation]:
        return [a for a in self.annotations_of(x) if self.kind(a.value) == Kind.BUNDLE]

    def is_machinery(self, x: str) -> bool:
        return self.kind(x) in MACHINERY


def ann_type(g: TypeAnnotatedGraph, element: str) -> frozenset[str]:
    """The set of types annotating ``element``, through plain or bundle annotations."""
    types: set[str] = set()
    for ann in g.annotations_of(element):
        kind = g.kind(ann.value)
        if kind == Kind.TYPE:
            types.add(ann.value)
        elif kind == Kind.BUNDLE:
            types.update(t for t in g.carrier.contents(ann.value) if g.kind(t) == Kind.TYPE)
    return frozenset(types)


# ── Type hierarchies ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TypeHierarchy:
    """Single inheritance per sort: ``parent`` maps a type to its direct supertype."""

    parent: Mapping[str, str] = field(default_factory=dict)
    top: Mapping[str, str] = field(default_factory=dict)  # sort → ⊤

    @cached_property
    def _digraph(self) -> nx.DiGraph:
        dg = nx.DiGraph()
        dg.add_nodes_from(self.top.values())
        dg.add_edges_from(self.parent.items())
        return dg

    def types(self) -> frozenset[str]:
        return frozenset(self._digraph.nodes)

    def __contains__(self, t: object) -> bool:
        return t in self._digraph

    def chain(self, leaf: str) -> list[str]:
        """``leaf ≤ … ≤ ⊤``, most specific first."""
        chain = [leaf]
        while chain[-1] in self.parent:
            chain.append(self.parent[chain[-1]])
            if len(chain) > len(self._digraph):
                raise AnnotationError("hierarchyCycle", f"inheritance cycle through {leaf}")
        return chain

    def upper_set(self, t: str) -> frozenset[str]:
        return frozenset(nx.descendants(self._digraph, t) | {t})

    def leq(self, a: str, b: str) -> bool:
        return b in self.upper_set(a)

    def sort_of(self, t: str) -> str | None:
        root = self.chain(t)[-1]
        return next((s for s, top in self.top.items() if top == root), None)

    def validate(self, g: TypeAnnotatedGraph | None = None) -> list[Violation]:
        report: list[Violation] = []
        if not nx.is_directed_acyclic_graph(self._digraph):
            cycle = [u for u, _ in nx.find_cycle(self._digraph)]
            report.append(Violation("hierarchyCycle", tuple(cycle), "inheritance is not a partial order"))
            return report
        tops = set(self.top.values())
        for t in sorted(tops & set(self.parent)):
            report.append(Violation("topHasParent", (t,), f"⊤ type {t} has a parent"))
        for t in sorted(self.types()):
            if self.chain(t)[-1] not in tops:
                report.append(Violation("hierarchyDisconnected", (t,), f"{t} does not reach a ⊤"))
        if g is not None:
            for t in sorted(self.types()):
                if g.kind(t) != Kind.TYPE:
                    report.append(Violation("hierarchyNotType", (t,), f"{t} is not a type element"))
                elif (sort := self.sort_of(t)) and g.carrier.sort_of(t) != sort:
                    report.append(Violation("hierarchySort", (t,), f"{t} is not a {sort} type"))
        return report


# ── Building annotations ──────────────────────────────────────────────────────

def _check_annotatable(g: TypeAnnotatedGraph, element: str) -> None:
    if element not in g.carrier:
        raise AnnotationError("unknownElement", f"{element} does not exist")
    if g.is_machinery(element):
        raise AnnotationError("annotatedMachinery", f"{element} is annotation machinery")


def add_annotation(builder: GraphBuilder, element: str, value: str,
                   node_id: str | None = None) -> Annotation:
    """Add the pattern ``element <-annotates- a -with-> value`` to an open builder, unchecked."""
    a = builder.add_node(node_id, kind=Kind.ANNOTATION)
    e1 = builder.add_edge(a, element, f"{node_id}.annotates" if node_id else None,
                          kind=Kind.ANNOTATES, link=element in builder.edges)
    e2 = builder.add_edge(a, value, f"{node_id}.with" if node_id else None,
                          kind=Kind.WITH, link=value in builder.edges)
    return Annotation(a, e1, e2, element, value)


def _attach(g: TypeAnnotatedGraph, element: str, value: str,
            builder: GraphBuilder | None = None) -> tuple[TypeAnnotatedGraph, Annotation]:
    builder = builder or GraphBuilder(g.carrier)
    ann = add_annotation(builder, element, value)
    return TypeAnnotatedGraph(builder.freeze()), ann


def annotate(g: TypeAnnotatedGraph, element: str, type_: str) -> TypeAnnotatedGraph:
    """Annotate an instance element with a type element of the same sort."""
    _check_annotatable(g, element)
    carrier = g.carrier
    if g.kind(element) != Kind.INSTANCE:
        raise AnnotationError("annotationSortViolation", f"{element} is not an instance element")
    if g.kind(type_) != Kind.TYPE or carrier.sort_of(type_) != carrier.sort_of(element):
        raise AnnotationError("annotationSortViolation",
                              f"{type_} is not a {carrier.sort_of(element)} type")
    if any(a.value == type_ for a in g.type_annotations_of(element)):
        raise AnnotationError("notTypedTwice", f"{element} is already annotated with {type_}")
    if g.bundle_annotations_of(element):
        raise AnnotationError("mixedAnnotationRegime", f"{element} already carries a type bundle")
    return _attach(g, element, type_)[0]


def annotate_value(g: TypeAnnotatedGraph, element: str, value: str) -> TypeAnnotatedGraph:
    """Attribute-style annotation with a named element of a value domain."""
    _check_annotatable(g, element)
    if g.kind(value) not in (Kind.INSTANCE, Kind.PLAIN) or value not in g.names:
        raise AnnotationError("annotationSortViolation", f"{value} is not a named value")
    return _attach(g, element, value)[0]


def remove_annotation(g: TypeAnnotatedGraph, annotation: Annotation) -> TypeAnnotatedGraph:
    builder = GraphBuilder(g.carrier)
    for x in (annotation.annotates, annotation.with_edge, annotation.node):
        builder.remove(x)
    if g.kind(annotation.value) == Kind.BUNDLE and not any(
            a.value == annotation.value and a.node != annotation.node for a in g.annotations):
        builder.remove(annotation.value)
    return TypeAnnotatedGraph(builder.freeze())


def remove_annotations_of(g: TypeAnnotatedGraph,
                          elements: Iterable[str]) -> tuple[TypeAnnotatedGraph, list[Annotation]]:
    """Drop every annotation pattern anchored at ``elements``."""
    removed = [a for x in sorted(set(elements)) for a in g.annotations_of(x)]
    for ann in removed:
        g = remove_annotation(g, ann)
    return g, removed


def annotate_with_bundle(g: TypeAnnotatedGraph, element: str, hierarchy: TypeHierarchy,
                         leaf: str) -> TypeAnnotatedGraph:
    """Annotate ``element`` with a fresh bundle box holding ``leaf ≤ … ≤ ⊤``."""
    _check_annotatable(g, element)
    if leaf not in hierarchy:
        raise AnnotationError("unknownType", f"{leaf} is not in the hierarchy")
    carrier = g.carrier
    sort = carrier.sort_of(element)
    if g.kind(element) != Kind.INSTANCE:
        raise AnnotationError("annotationSortViolation", f"{element} is not an instance element")
    if sort == "edge":
        raise AnnotationError("bundleSortViolation", "boxes contain nodes and boxes only, edge types cannot be bundled")
    chain = hierarchy.chain(leaf)
    for t in chain:
        if g.kind(t) != Kind.TYPE or carrier.sort_of(t) != sort:
            raise AnnotationError("annotationSortViolation", f"{t} is not a {sort} type of the graph")
    if g.type_annotations_of(element):
        raise AnnotationError("mixedAnnotationRegime", f"{element} already carries plain type annotations")
    if any(carrier.contents(a.value) == frozenset(chain) for a in g.bundle_annotations_of(element)):
        raise AnnotationError("notTypedTwice", f"{element} already carries the bundle of {leaf}")

    builder = GraphBuilder(carrier)
    box = builder.add_box(contents=chain, kind=Kind.BUNDLE)
    return _attach(g, element, box, builder)[0]


def remove_annotation_at(g: TypeAnnotatedGraph, element: str, type_: str,
                         hierarchy: TypeHierarchy) -> TypeAnnotatedGraph:
    """Drop ``type_`` and everything below it from the bundle annotating ``element``.

    The bundle is replaced by a fresh one holding the chain that starts at the
    parent of ``type_``. Bundles holding only ⊤ are never removed.
    """
    if type_ in hierarchy.top.values():
        raise AnnotationError("topNotRemovable", "annotations with a bundle holding only ⊤ can never be removed")
    bundle = next((a for a in g.bundle_annotations_of(element)
                   if type_ in g.carrier.contents(a.value)), None)
    if bundle is None:
        log.warning(f"Annotation removal skipped | element={element} | type={type_} | reason=not in any bundle")
        return g
    g = remove_annotation(g, bundle)
    return annotate_with_bundle(g, element, hierarchy, hierarchy.parent[type_])


# ── Validators ────────────────────────────────────────────────────────────────

def _sort_label(sort: str | None) -> str:
    return (sort or "unknown").capitalize()


def check_well_formed(g: TypeAnnotatedGraph,
                      hierarchy: TypeHierarchy | None = None) -> list[Violation]:
    """All annotation well-formedness constraints; empty iff ``g`` is well formed."""
    carrier = g.carrier
    report = validate_bgraph(carrier)

    for a in g.elements_of_kind(Kind.ANNOTATION):
        outs = carrier.out_edges(a)
        n_ann = sum(carrier.kinds.get(e) == Kind.ANNOTATES for e in outs)
        n_with = sum(carrier.kinds.get(e) == Kind.WITH for e in outs)
        stray = len(outs) - n_ann - n_with + len(carrier.in_edges(a))
        if carrier.sort_of(a) != "node" or n_ann != 1 or n_with != 1 or stray:
            report.append(Violation("annPatternUnique", (a,),
                                    f"annotation node {a} has {n_ann} annotates, {n_with} with "
                                    f"and {stray} other edges"))

    for e in sorted(carrier.edges):
        kind = g.kind(e)
        if kind in (Kind.ANNOTATES, Kind.WITH):
            if g.kind(carrier.src[e]) != Kind.ANNOTATION:
                report.append(Violation("annLinkSource", (e,), f"{kind} edge {e} does not leave an annotation node"))
        else:
            for end in (carrier.src[e], carrier.tgt[e]):
                if g.kind(end) in (Kind.ANNOTATION, Kind.BUNDLE):
                    report.append(Violation("machineryAsEndpoint", (e, end),
                                            f"edge {e} touches annotation machinery {end}"))

    plain: dict[str, Counter] = {}
    bundles: dict[str, list[frozenset[str]]] = {}
    for ann in g.annotations:
        x, y = ann.element, ann.value
        if g.is_machinery(x):
            report.append(Violation("annotatedMachinery", (ann.node, x), f"{x} is annotation machinery"))
            continue
        x_sort, y_sort = carrier.sort_of(x), carrier.sort_of(y)
        if g.kind(y) == Kind.TYPE:
            plain.setdefault(x, Counter())[y] += 1
            if g.kind(x) != Kind.INSTANCE or x_sort != y_sort:
                report.append(Violation(f"ann{_sort_label(y_sort)}Type", (ann.node, x, y),
                                        f"{y_sort} type {y} annotates {x}, not a {y_sort} instance"))
            if g.kind(x) == Kind.INSTANCE and x_sort != y_sort:
                report.append(Violation(f"ann{_sort_label(x_sort)}Instance", (ann.node, x, y),
                                        f"{x_sort} instance {x} annotated with {y_sort} type {y}"))
        elif g.kind(y) == Kind.BUNDLE:
            content = carrier.contents(y)
            bundles.setdefault(x, []).append(content)
            if g.kind(x) != Kind.INSTANCE or any(carrier.sort_of(t) != x_sort for t in content):
                report.append(Violation(f"ann{_sort_label(x_sort)}Instance", (ann.node, x, y),
                                        f"bundle {y} holds types of another sort than {x}"))
        elif g.is_machinery(y):
            report.append(Violation("annotatedMachinery", (ann.node, y), f"{y} is used as annotation value"))

    for x in sorted(set(plain) & set(bundles)):
        report.append(Violation("mixedAnnotationRegime", (x,), f"{x} mixes plain and bundle type annotations"))
    for x in sorted(plain):
        for t, n in sorted(plain[x].items()):
            if n > 1:
                report.append(Violation("notTypedTwice", (x, t), f"{x} is annotated {n} times with {t}"))
    for x in sorted(bundles):
        seen: set[frozenset[str]] = set()
        for content in bundles[x]:
            if content in seen:
                report.append(Violation("notTypedTwice", (x,), f"{x} carries the same bundle twice"))
            seen.add(content)

    report.extend(_check_bundles(g, hierarchy))
    report.extend(_check_edge_type_consistency(g))
    return report


def _check_bundles(g: TypeAnnotatedGraph, hierarchy: TypeHierarchy | None) -> list[Violation]:
    report = []
    carrier = g.carrier
    for b in g.elements_of_kind(Kind.BUNDLE):
        content = carrier.contents(b)
        if carrier.sort_of(b) != "box" or not content or any(g.kind(t) != Kind.TYPE for t in content):
            report.append(Violation("bundleChain", (b,), f"bundle {b} must be a box holding types only"))
            continue
        if len({carrier.sort_of(t) for t in content}) > 1:
            report.append(Violation("bundleChain", (b,), f"bundle {b} mixes type sorts"))
            continue
        if hierarchy is not None:
            leaves = [t for t in content if t in hierarchy and hierarchy.upper_set(t) >= content]
            if not leaves or set(hierarchy.chain(leaves[0])) != content:
                report.append(Violation("bundleChain", (b,),
                                        f"bundle {b} is not a contiguous chain up to ⊤"))
    return report


def _check_edge_type_consistency(g: TypeAnnotatedGraph) -> list[Violation]:
    """Edges sharing an edge type have sources (and targets) sharing a type."""
    report = []
    carrier = g.carrier
    by_type: dict[str, list[str]] = {}
    for e in g.elements_of_kind(Kind.INSTANCE, "edge"):
        for t in ann_type(g, e):
            if carrier.sort_of(t) == "edge":
                by_type.setdefault(t, []).append(e)
    for t in sorted(by_type):
        edges = by_type[t]
        for i, e1 in enumerate(edges):
            for e2 in edges[i + 1:]:
                for role, fn in (("source", carrier.src), ("target", carrier.tgt)):
                    if not ann_type(g, fn[e1]) & ann_type(g, fn[e2]):
                        report.append(Violation("edgeTypeConsistency", (e1, e2, t),
                                                f"edges {e1}, {e2} typed {t} have differently typed {role}s"))
    return report


def check_correct_typing(g: TypeAnnotatedGraph) -> list[Violation]:
    """Correctness under type annotation: edge and box types respected by instances."""
    report = []
    carrier = g.carrier
    for e in g.elements_of_kind(Kind.INSTANCE, "edge"):
        for t in sorted(ann_type(g, e)):
            if carrier.sort_of(t) != "edge":
                continue
            for role, fn in (("source", carrier.src), ("target", carrier.tgt)):
                if fn[t] not in ann_type(g, fn[e]):
                    report.append(Violation("edgeTypeEndpoint", (e, t),
                                            f"{role} of {e} is not annotated with {fn[t]} as {t} requires"))
    for b in g.elements_of_kind(Kind.INSTANCE, "box"):
        for tb in sorted(ann_type(g, b)):
            if carrier.sort_of(tb) != "box":
                continue
            allowed = carrier.contents(tb)
            for x in sorted(carrier.contents(b)):
                if g.kind(x) == Kind.INSTANCE and not ann_type(g, x) & allowed:
                    report.append(Violation("boxTypeContent", (b, x, tb),
                                            f"{x} in {b} has no type allowed in box type {tb}"))
    return report
