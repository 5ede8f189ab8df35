"""
From typed graphs to type-annotated graphs and back.

``type_ann_ob`` places an instance graph and its type graph side by side in
one graph and records the typing as annotation patterns; ``type_ann_hom``
carries type-preserving morphisms along. ``extract_typed`` reads typings
back out of annotations. The correspondence triples relate both worlds
element by element, and ``satisfies_ann_type_patterns`` checks that every
instance element, its annotated copy and its type line up.
"""

import dataclasses
import itertools
import logging
from dataclasses import dataclass, field

from annograph.annotation import (
    Kind,
    TypeAnnotatedGraph,
    TypeHierarchy,
    add_annotation,
    ann_type,
    check_well_formed,
)
from annograph.bgraph import (
    SORTS,
    BGraph,
    GraphBuilder,
    GraphError,
    GraphMorphism,
    Sort,
    TypedGraph,
    TypingError,
    Violation,
    coproduct,
    find_matches,
    is_isomorphic,
    subgraph,
    validate_morphism,
)

log = logging.getLogger("annograph")


@dataclass(frozen=True)
class AnnotatedImage:
    typed: TypedGraph
    h: TypeAnnotatedGraph
    fg: GraphMorphism  # G → h
    ft: GraphMorphism  # TG → h


def type_ann_ob(t: TypedGraph) -> AnnotatedImage:
    """The minimal type-annotated graph holding ``t``'s instance, its type graph and its typing."""
    report = t.validate()
    if report:
        raise TypingError("typed graph is not valid", report)

    base, fg, ft = coproduct(t.instance, t.type_graph, tags=("g", "t"))
    builder = GraphBuilder(base)
    for x in fg.image():
        builder.kinds[x] = Kind.INSTANCE
    for x in ft.image():
        builder.kinds[x] = Kind.TYPE
    for x in sorted(t.instance.elements):
        add_annotation(builder, fg(x), ft(t.type_of(x)))

    h = TypeAnnotatedGraph(builder.freeze())
    log.debug(f"Built type annotation | instance={len(t.instance)} | types={len(t.type_graph)}")
    return AnnotatedImage(t, h, fg.retarget(h.carrier), ft.retarget(h.carrier))


def type_ann_hom(m: GraphMorphism, img_src: AnnotatedImage, img_tgt: AnnotatedImage) -> GraphMorphism:
    """Image of a type-preserving ``m: G → G'`` between the annotated graphs."""
    src, tgt = img_src.typed, img_tgt.typed
    if m.source != src.instance or m.target != tgt.instance:
        raise TypingError("morphism does not connect the two instance graphs")
    if src.type_graph != tgt.type_graph:
        raise TypingError("typed graphs are over different type graphs")
    broken = [Violation("notTypePreserving", (x,), f"type of {x} changes along the morphism")
              for x in sorted(src.instance.elements) if tgt.type_of(m(x)) != src.type_of(x)]
    if broken:
        raise TypingError("morphism is not type-preserving", broken)

    mapping: dict[str, str] = {}
    for t in src.type_graph.elements:
        mapping[img_src.ft(t)] = img_tgt.ft(t)
    for x in src.instance.elements:
        x_img, y_img = img_src.fg(x), img_tgt.fg(m(x))
        mapping[x_img] = y_img
        a = _type_annotation(img_src, x_img)
        b = _type_annotation(img_tgt, y_img)
        mapping.update({a.node: b.node, a.annotates: b.annotates, a.with_edge: b.with_edge})
    return GraphMorphism.from_mapping(img_src.h.carrier, img_tgt.h.carrier, mapping)


def _type_annotation(img: AnnotatedImage, x: str):
    anns = img.h.type_annotations_of(x)
    if len(anns) != 1:
        raise TypingError(f"{x} is not annotated with exactly one type")
    return anns[0]


def _without_kinds(g: BGraph) -> BGraph:
    return dataclasses.replace(g, kinds={})


def extract_typed(h: TypeAnnotatedGraph, hierarchy: TypeHierarchy | None = None) -> list[TypedGraph]:
    """Every typed graph readable from the annotations of ``h``.

    Unannotated instance elements are dropped (with edges left dangling by
    them); an element carrying several types yields one typed graph per
    choice. With a hierarchy, bundles contribute only their most specific type.
    """
    report = check_well_formed(h, hierarchy)
    if report:
        raise TypingError("graph with type annotation is not well formed", report)

    carrier = h.carrier
    type_graph = _without_kinds(subgraph(carrier, h.elements_of_kind(Kind.TYPE)))
    choices: dict[str, list[str]] = {}
    for x in h.elements_of_kind(Kind.INSTANCE):
        types = {t for t in ann_type(h, x) if carrier.sort_of(t) == carrier.sort_of(x)}
        if hierarchy is not None:
            types = {t for t in types
                     if not any(u != t and u in hierarchy and hierarchy.leq(u, t) for u in types)}
        if types:
            choices[x] = sorted(types)
    instance = _without_kinds(subgraph(carrier, choices))

    order = sorted(instance.elements)
    found: list[TypedGraph] = []
    for combo in itertools.product(*(choices[x] for x in order)):
        typing = GraphMorphism.from_mapping(instance, type_graph, dict(zip(order, combo)))
        if not validate_morphism(typing):
            found.append(TypedGraph(instance, type_graph, typing))
    log.debug(f"Extracted typings | instance={len(instance)} | candidates={len(found)}")
    return found


def typed_isomorphic(t1: TypedGraph, t2: TypedGraph) -> bool:
    return is_isomorphic(type_ann_ob(t1).h.carrier, type_ann_ob(t2).h.carrier)


# ── Correspondence triples ────────────────────────────────────────────────────

@dataclass(frozen=True)
class Correspondence:
    corr: str
    source: str
    target: str


@dataclass(frozen=True)
class TripleGraph:
    """``source ← corr → target`` with a discrete middle, one link per correspondence."""

    source: BGraph
    target: BGraph
    links: tuple[Correspondence, ...] = ()

    @property
    def corr(self) -> frozenset[str]:
        return frozenset(c.corr for c in self.links)

    @property
    def left(self) -> dict[str, str]:
        return {c.corr: c.source for c in self.links}

    @property
    def right(self) -> dict[str, str]:
        return {c.corr: c.target for c in self.links}

    def link_of(self, source_element: str) -> Correspondence | None:
        return next((c for c in self.links if c.source == source_element), None)

    def validate(self) -> list[Violation]:
        report = []
        if len(self.corr) != len(self.links):
            report.append(Violation("corrNotUnique", (), "correspondence ids repeat"))
        for c in self.links:
            if c.source not in self.source or c.target not in self.target:
                report.append(Violation("corrNotTotal", (c.corr,), f"{c.corr} points outside the triple"))
            elif self.source.sort_of(c.source) != self.target.sort_of(c.target):
                report.append(Violation("corrSortNotRespected", (c.corr,),
                                        f"{c.corr} relates {c.source} and {c.target} of different sorts"))
        for side, fmap in (("left", self.left), ("right", self.right)):
            if len(set(fmap.values())) != len(fmap):
                report.append(Violation("corrNotInjective", (), f"{side} correspondence map is not injective"))
        return report


@dataclass(frozen=True)
class TriplePattern:
    """Triples sharing one target plus map-membership atoms ``(instance, type)``."""

    triples: tuple[TripleGraph, ...]
    gamma: tuple[tuple[str, str], ...] = ()

    def validate(self) -> list[Violation]:
        report = [v for trip in self.triples for v in trip.validate()]
        if any(trip.target != self.triples[0].target for trip in self.triples[1:]):
            report.append(Violation("tripleTargetMismatch", (), "composed triples must share their target"))
        first, last = self.triples[0].source, self.triples[-1].source
        for a, b in self.gamma:
            if a not in first or b not in last:
                report.append(Violation("gammaOutOfScope", (a, b), f"atom ({a}, {b}) names unknown elements"))
        return report

    def holds(self, typing: GraphMorphism) -> bool:
        return all(typing.get(a) == b for a, b in self.gamma)


def build_correspondences(t: TypedGraph, img: AnnotatedImage) -> tuple[TripleGraph, TripleGraph]:
    """Type and instance correspondence triples of ``img = type_ann_ob(t)``."""
    if img.typed != t:
        raise GraphError("annotated image was not built from this typed graph")
    target = img.h.carrier
    tri_type = TripleGraph(t.type_graph, target, tuple(
        Correspondence(f"t~{x}", x, img.ft(x)) for x in sorted(t.type_graph.elements)))
    tri_inst = TripleGraph(t.instance, target, tuple(
        Correspondence(f"g~{x}", x, img.fg(x)) for x in sorted(t.instance.elements)))
    return tri_type, tri_inst


@dataclass(frozen=True)
class PatternWitness:
    sort: Sort
    element: str
    type_: str
    pattern: TriplePattern
    match: GraphMorphism  # annotation shape → h


@dataclass
class PatternVerdict:
    satisfied: bool
    witnesses: dict[str, list[PatternWitness]] = field(default_factory=lambda: {s: [] for s in SORTS})
    failing_element: str | None = None
    reason: str = ""


def _add_end(builder: GraphBuilder, end_id: str, sort: str | None) -> str:
    if sort == "box":
        return builder.add_box(end_id)
    return builder.add_node(end_id)


def _annotation_shape(host: BGraph, x: str, y: str) -> BGraph:
    """The pattern ``x <-annotates- a -with-> y`` shaped after the sorts of ``x`` and ``y`` in ``host``."""
    builder = GraphBuilder()
    for role, element, kind in (("x", x, Kind.INSTANCE), ("y", y, Kind.TYPE)):
        sort = host.sort_of(element)
        if sort == "edge":
            s, t = host.src[element], host.tgt[element]
            s_id = _add_end(builder, f"{role}s", host.sort_of(s))
            t_id = s_id if s == t else _add_end(builder, f"{role}t", host.sort_of(t))
            builder.add_edge(s_id, t_id, role, kind=kind)
        elif sort == "box":
            builder.add_box(role, kind=kind)
        else:
            builder.add_node(role, kind=kind)
    builder.add_node("a", kind=Kind.ANNOTATION)
    builder.add_edge("a", "x", "annotates", kind=Kind.ANNOTATES, link="x" in builder.edges)
    builder.add_edge("a", "y", "with", kind=Kind.WITH, link="y" in builder.edges)
    return builder.freeze()


def satisfies_ann_type_patterns(t: TypedGraph, img: AnnotatedImage,
                                corr: tuple[TripleGraph, TripleGraph]) -> PatternVerdict:
    """Check, per sort and element of G, the composed correspondence pattern.

    Each instance element must correspond to an element of ``h`` annotated
    with the copy of its type, with incidence and containment carried along.
    """
    tri_type, tri_inst = corr
    verdict = PatternVerdict(satisfied=True)
    for trip in (tri_type, tri_inst):
        broken = trip.validate()
        if broken:
            return PatternVerdict(False, failing_element=None, reason=str(broken[0]))

    for sort in SORTS:
        for x in sorted(t.instance.of_sort(sort)):
            failure = _check_element(t, img, tri_type, tri_inst, sort, x, verdict)
            if failure:
                log.info(f"Annotation pattern failed | element={x} | reason={failure}")
                return PatternVerdict(False, verdict.witnesses, x, failure)
    return verdict


def _check_element(t: TypedGraph, img: AnnotatedImage, tri_type: TripleGraph, tri_inst: TripleGraph,
                   sort: Sort, x: str, verdict: PatternVerdict) -> str:
    g, host = t.instance, img.h.carrier
    c = tri_inst.link_of(x)
    if c is None:
        return "no instance correspondence"
    type_ = t.type_of(x)
    d = tri_type.link_of(type_)
    if d is None:
        return "no type correspondence"
    if host.sort_of(c.target) != sort:
        return "correspondence changes sort"

    if sort == "edge":
        for fn_g, fn_h in ((g.src, host.src), (g.tgt, host.tgt)):
            end = tri_inst.link_of(fn_g[x])
            if end is None or fn_h.get(c.target) != end.target:
                return "incidence not preserved"
    if sort == "box":
        for z in g.contents(x):
            inner = tri_inst.link_of(z)
            if inner is None or inner.target not in host.contents(c.target):
                return "containment not preserved"

    shape = _annotation_shape(host, c.target, d.target)
    copies = {link.target: link.source for link in tri_type.links}
    matches = [m for m in find_matches(shape, host, injective=True, partial={"x": c.target})
               if m("y") in copies]
    if not matches:
        return "not annotated with a copy of any type"
    annotated = sorted({copies[m("y")] for m in matches})

    keep_g = {x} | ({g.src[x], g.tgt[x]} if sort == "edge" else set())
    tg = t.type_graph
    keep_t = {y for a in annotated for y in ({a} | ({tg.src[a], tg.tgt[a]} if a in tg.edges else set()))}
    type_links = tuple(link for link in tri_type.links if link.source in keep_t)
    pattern = TriplePattern(
        (TripleGraph(subgraph(g, keep_g), host, (c,)),
         TripleGraph(subgraph(tg, keep_t), host, type_links)),
        gamma=tuple((x, a) for a in annotated),
    )
    if not pattern.holds(t.typing):
        return f"typing atom fails: annotated with {', '.join(annotated)}, typed {type_}"
    verdict.witnesses[sort].append(PatternWitness(sort, x, type_, pattern, matches[0]))
    return ""
