"""
B-graphs: directed graphs with boxes, their morphisms, typed graphs,
coproducts and colimits, matching, and double-pushout rule application.

Graphs are immutable values. Every operation returns a new graph, a
morphism, or a list of violations; nothing is mutated in place.
"""

import hashlib
import json
import logging
from collections import deque
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import networkx as nx
from networkx.algorithms import isomorphism
from networkx.utils import UnionFind

log = logging.getLogger("annograph")

Sort = Literal["node", "edge", "box"]
SORTS: tuple[Sort, ...] = ("node", "edge", "box")


class AnnographError(Exception):
    """Base class for every error raised by the engine."""


class GraphError(AnnographError):
    def __init__(self, message: str, violations: Iterable["Violation"] = ()):
        super().__init__(message)
        self.violations = list(violations)


class RuleApplicationError(GraphError):
    """A rule could not be applied at a match (gluing or application condition)."""


class TypingError(GraphError):
    """A typed graph does not carry a valid typing morphism."""


@dataclass(frozen=True)
class Violation:
    constraint: str
    elements: tuple[str, ...]
    message: str

    def __str__(self) -> str:
        return f"{self.constraint}: {self.message}"


# ── B-graphs ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class BGraph:
    """A graph with boxes, optionally labelled with kinds and names.

    ``cnt`` is expected transitively closed; graphs built through
    :class:`GraphBuilder` or :meth:`build` always are. ``edge_links`` lists
    the edges whose target may be another edge (annotation links onto edges).
    """

    nodes: frozenset[str] = frozenset()
    edges: frozenset[str] = frozenset()
    boxes: frozenset[str] = frozenset()
    src: Mapping[str, str] = field(default_factory=dict)
    tgt: Mapping[str, str] = field(default_factory=dict)
    cnt: Mapping[str, frozenset[str]] = field(default_factory=dict)
    edge_links: frozenset[str] = frozenset()
    kinds: Mapping[str, str] = field(default_factory=dict)
    names: Mapping[str, str] = field(default_factory=dict)
    counter: int = 0

    @classmethod
    def build(
        cls,
        nodes: Iterable[str] = (),
        edges: Mapping[str, tuple[str, str]] | None = None,
        boxes: Mapping[str, Iterable[str]] | None = None,
        edge_links: Iterable[str] = (),
        kinds: Mapping[str, str] | None = None,
        names: Mapping[str, str] | None = None,
        counter: int = 0,
    ) -> "BGraph":
        edges = edges or {}
        boxes = boxes or {}
        return cls(
            nodes=frozenset(nodes),
            edges=frozenset(edges),
            boxes=frozenset(boxes),
            src={e: s for e, (s, _) in edges.items()},
            tgt={e: t for e, (_, t) in edges.items()},
            cnt=close_containment(boxes.keys(), {b: frozenset(xs) for b, xs in boxes.items()}),
            edge_links=frozenset(edge_links),
            kinds=dict(kinds or {}),
            names=dict(names or {}),
            counter=counter,
        )

    @cached_property
    def elements(self) -> frozenset[str]:
        return self.nodes | self.edges | self.boxes

    def __contains__(self, x: object) -> bool:
        return x in self.elements

    def __len__(self) -> int:
        return len(self.nodes) + len(self.edges) + len(self.boxes)

    def sort_of(self, x: str) -> Sort | None:
        if x in self.nodes:
            return "node"
        if x in self.edges:
            return "edge"
        if x in self.boxes:
            return "box"
        return None

    def of_sort(self, sort: Sort) -> frozenset[str]:
        return {"node": self.nodes, "edge": self.edges, "box": self.boxes}[sort]

    def contents(self, box: str) -> frozenset[str]:
        return self.cnt.get(box, frozenset())

    @cached_property
    def _incidence(self) -> dict[str, tuple[list[str], list[str]]]:
        index: dict[str, tuple[list[str], list[str]]] = {}
        for e in sorted(self.edges):
            if e in self.src:
                index.setdefault(self.src[e], ([], []))[0].append(e)
            if e in self.tgt:
                index.setdefault(self.tgt[e], ([], []))[1].append(e)
        return index

    @cached_property
    def _parents(self) -> dict[str, list[str]]:
        index: dict[str, list[str]] = {}
        for b in sorted(self.cnt):
            for x in self.cnt[b]:
                index.setdefault(x, []).append(b)
        return index

    def out_edges(self, x: str) -> list[str]:
        return self._incidence.get(x, ([], []))[0]

    def in_edges(self, x: str) -> list[str]:
        return self._incidence.get(x, ([], []))[1]

    def incident(self, x: str) -> list[str]:
        outs, ins = self._incidence.get(x, ([], []))
        return sorted(set(outs) | set(ins))

    def parents(self, x: str) -> list[str]:
        return self._parents.get(x, [])

    def containment_pairs(self) -> set[tuple[str, str]]:
        return {(b, x) for b, xs in self.cnt.items() for x in xs}


def close_containment(boxes: Iterable[str], cnt: Mapping[str, Iterable[str]]) -> dict[str, frozenset[str]]:
    """Transitive closure of ``cnt``; a box reaching itself keeps itself as content."""
    dg = nx.DiGraph()
    dg.add_nodes_from(boxes)
    for b, xs in cnt.items():
        dg.add_edges_from((b, x) for x in xs)
    closed: dict[str, frozenset[str]] = {}
    for b in boxes:
        reach = nx.descendants(dg, b)
        if dg.has_edge(b, b) or any(dg.has_edge(x, b) for x in reach):
            reach.add(b)
        closed[b] = frozenset(reach)
    return closed


class GraphBuilder:
    """Mutable scratch space producing immutable :class:`BGraph` values."""

    _PREFIX = {"node": "_n", "edge": "_e", "box": "_b"}

    def __init__(self, base: BGraph | None = None):
        base = base or BGraph()
        self.nodes = set(base.nodes)
        self.edges = set(base.edges)
        self.boxes = set(base.boxes)
        self.src = dict(base.src)
        self.tgt = dict(base.tgt)
        self.cnt = {b: set(xs) for b, xs in base.cnt.items()}
        self.edge_links = set(base.edge_links)
        self.kinds = dict(base.kinds)
        self.names = dict(base.names)
        self.counter = base.counter

    def __contains__(self, x: object) -> bool:
        return x in self.nodes or x in self.edges or x in self.boxes

    def fresh(self, sort: Sort) -> str:
        """Next unused id; the counter only moves forward, so ids are never reused."""
        while True:
            candidate = f"{self._PREFIX[sort]}{self.counter}"
            self.counter += 1
            if candidate not in self:
                return candidate

    def _label(self, x: str, kind: str | None, name: str | None) -> None:
        if kind is not None:
            self.kinds[x] = kind
        if name is not None:
            self.names[x] = name

    def add_node(self, node_id: str | None = None, kind: str | None = None,
                 name: str | None = None) -> str:
        x = node_id or self.fresh("node")
        self.nodes.add(x)
        self._label(x, kind, name)
        return x

    def add_box(self, box_id: str | None = None, contents: Iterable[str] = (),
                kind: str | None = None, name: str | None = None) -> str:
        x = box_id or self.fresh("box")
        self.boxes.add(x)
        self.cnt.setdefault(x, set()).update(contents)
        self._label(x, kind, name)
        return x

    def add_edge(self, source: str, target: str, edge_id: str | None = None,
                 kind: str | None = None, name: str | None = None,
                 link: bool = False) -> str:
        x = edge_id or self.fresh("edge")
        self.edges.add(x)
        self.src[x] = source
        self.tgt[x] = target
        if link:
            self.edge_links.add(x)
        self._label(x, kind, name)
        return x

    def contain(self, box: str, x: str) -> None:
        self.cnt.setdefault(box, set()).add(x)

    def uncontain(self, box: str, x: str) -> None:
        self.cnt.get(box, set()).discard(x)

    def remove(self, x: str) -> None:
        self.nodes.discard(x)
        self.edges.discard(x)
        self.boxes.discard(x)
        self.src.pop(x, None)
        self.tgt.pop(x, None)
        self.cnt.pop(x, None)
        self.edge_links.discard(x)
        self.kinds.pop(x, None)
        self.names.pop(x, None)
        for xs in self.cnt.values():
            xs.discard(x)

    def freeze(self) -> BGraph:
        return BGraph(
            nodes=frozenset(self.nodes),
            edges=frozenset(self.edges),
            boxes=frozenset(self.boxes),
            src=dict(self.src),
            tgt=dict(self.tgt),
            cnt=close_containment(self.boxes, self.cnt),
            edge_links=frozenset(self.edge_links),
            kinds=dict(self.kinds),
            names=dict(self.names),
            counter=self.counter,
        )


def subgraph(g: BGraph, keep: Iterable[str]) -> BGraph:
    """Restriction of ``g`` to ``keep``; edges whose endpoints leave are dropped too."""
    keep_set = set(keep) & g.elements
    changed = True
    while changed:
        changed = False
        for e in list(keep_set & g.edges):
            if g.src.get(e) not in keep_set or g.tgt.get(e) not in keep_set:
                keep_set.discard(e)
                changed = True
    builder = GraphBuilder(g)
    for x in g.elements - keep_set:
        builder.remove(x)
    return builder.freeze()


def validate_bgraph(g: BGraph) -> list[Violation]:
    """Check every B-graph invariant; never raises."""
    report: list[Violation] = []

    for a, b, label in ((g.nodes, g.edges, "node/edge"), (g.nodes, g.boxes, "node/box"),
                        (g.edges, g.boxes, "edge/box")):
        for x in sorted(a & b):
            report.append(Violation("sortCollision", (x,), f"{x} is used as {label}"))

    endpoints = g.nodes | g.boxes
    for e in sorted(g.edges):
        allowed = endpoints | (g.edges - {e}) if e in g.edge_links else endpoints
        for role, fn in (("source", g.src), ("target", g.tgt)):
            if e not in fn:
                report.append(Violation(f"missing{role.title()}", (e,), f"edge {e} has no {role}"))
            elif fn[e] not in allowed:
                report.append(Violation(f"dangling{role.title()}", (e, fn[e]),
                                        f"{role} of edge {e} is {fn[e]}, not a node or box"))
        if e in g.edge_links and g.src.get(e) in g.edges:
            report.append(Violation("danglingSource", (e,), f"source of link {e} is an edge"))
    for e in sorted((set(g.src) | set(g.tgt)) - g.edges):
        report.append(Violation("strayIncidence", (e,), f"{e} has a source/target but is no edge"))
    for e in sorted(g.edge_links - g.edges):
        report.append(Violation("strayIncidence", (e,), f"link {e} is no edge"))

    for b in sorted(g.cnt):
        if b not in g.boxes:
            report.append(Violation("strayContainment", (b,), f"{b} has content but is no box"))
            continue
        if b in g.cnt[b]:
            report.append(Violation("selfContainment", (b,), f"self-containment at {b}"))
        for x in sorted(g.cnt[b] - endpoints):
            report.append(Violation("danglingContent", (b, x), f"box {b} contains unknown {x}"))

    closed = close_containment(g.boxes, {b: xs for b, xs in g.cnt.items() if b in g.boxes})
    for b in sorted(closed):
        for x in sorted(closed[b] - g.contents(b) - {b}):
            report.append(Violation("containmentNotTransitive", (x, b),
                                    f"{x} is nested in {b} but missing from cnt({b})"))

    for label_map, what in ((g.kinds, "kind"), (g.names, "name")):
        for x in sorted(set(label_map) - g.elements):
            report.append(Violation("strayLabel", (x,), f"{what} given for unknown element {x}"))
    return report


# ── Morphisms ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GraphMorphism:
    source: BGraph
    target: BGraph
    node_map: Mapping[str, str] = field(default_factory=dict)
    edge_map: Mapping[str, str] = field(default_factory=dict)
    box_map: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, source: BGraph, target: BGraph,
                     mapping: Mapping[str, str]) -> "GraphMorphism":
        return cls(
            source, target,
            node_map={x: y for x, y in mapping.items() if x in source.nodes},
            edge_map={x: y for x, y in mapping.items() if x in source.edges},
            box_map={x: y for x, y in mapping.items() if x in source.boxes},
        )

    @classmethod
    def identity(cls, g: BGraph) -> "GraphMorphism":
        return cls.inclusion(g, g)

    @classmethod
    def inclusion(cls, sub: BGraph, sup: BGraph) -> "GraphMorphism":
        return cls.from_mapping(sub, sup, {x: x for x in sub.elements})

    @cached_property
    def mapping(self) -> dict[str, str]:
        return {**self.node_map, **self.edge_map, **self.box_map}

    def __call__(self, x: str) -> str:
        return self.mapping[x]

    def get(self, x: str, default: str | None = None) -> str | None:
        return self.mapping.get(x, default)

    def image(self) -> frozenset[str]:
        return frozenset(self.mapping.values())

    def is_injective(self) -> bool:
        return all(len(set(m.values())) == len(m)
                   for m in (self.node_map, self.edge_map, self.box_map))

    def inverse(self) -> dict[str, str]:
        """Preimage map of an injective morphism."""
        return {y: x for x, y in self.mapping.items()}

    def then(self, other: "GraphMorphism") -> "GraphMorphism":
        """Composition ``other ∘ self``."""
        return GraphMorphism.from_mapping(
            self.source, other.target, {x: other(y) for x, y in self.mapping.items()})

    def retarget(self, target: BGraph) -> "GraphMorphism":
        return GraphMorphism(self.source, target, self.node_map, self.edge_map, self.box_map)

    def key(self) -> tuple[str, ...]:
        return tuple(self.mapping[x] for x in sorted(self.source.elements))


def validate_morphism(m: GraphMorphism) -> list[Violation]:
    """Empty iff ``m`` is a total, sort-respecting map preserving src, tgt and cnt."""
    report: list[Violation] = []
    src, tgt = m.source, m.target
    for sort, fmap in (("node", m.node_map), ("edge", m.edge_map), ("box", m.box_map)):
        for x in sorted(src.of_sort(sort)):
            if x not in fmap:
                report.append(Violation("notTotal", (x,), f"{sort} {x} is not mapped"))
            elif fmap[x] not in tgt.of_sort(sort):
                report.append(Violation("sortNotRespected", (x, fmap[x]),
                                        f"{sort} {x} mapped to {fmap[x]}, not a {sort} of the target"))
        for x in sorted(set(fmap) - src.of_sort(sort)):
            report.append(Violation("strayMapping", (x,), f"{x} is not a {sort} of the source"))
    if report:
        return report

    f = m.mapping
    for e in sorted(src.edges):
        fe = f[e]
        if f.get(src.src[e]) != tgt.src.get(fe):
            report.append(Violation("sourceNotPreserved", (e,), f"source not preserved at {e}"))
        if f.get(src.tgt[e]) != tgt.tgt.get(fe):
            report.append(Violation("targetNotPreserved", (e,), f"target not preserved at {e}"))
    for b in sorted(src.cnt):
        for x in sorted(src.cnt[b]):
            if f[x] not in tgt.contents(f[b]):
                report.append(Violation("containmentNotPreserved", (x, b),
                                        f"{x} in {b} but {f[x]} not in {f[b]}"))
    return report


@dataclass(frozen=True)
class TypedGraph:
    instance: BGraph
    type_graph: BGraph
    typing: GraphMorphism

    def type_of(self, x: str) -> str:
        return self.typing(x)

    def validate(self) -> list[Violation]:
        report = validate_bgraph(self.instance) + validate_bgraph(self.type_graph)
        if self.typing.source != self.instance or self.typing.target != self.type_graph:
            report.append(Violation("typingMismatch", (), "typing morphism does not go G → TG"))
            return report
        report.extend(validate_morphism(self.typing))
        for sort in SORTS:
            seen: dict[str, str] = {}
            for t in sorted(self.type_graph.of_sort(sort)):
                name = self.type_graph.names.get(t)
                if not name:
                    report.append(Violation("typeNameMissing", (t,), f"type {t} has no name"))
                elif name in seen:
                    report.append(Violation("typeNameClash", (seen[name], t),
                                            f"{sort} types {seen[name]} and {t} share name {name}"))
                else:
                    seen[name] = t
        return report


# ── Coproducts and colimits ───────────────────────────────────────────────────

def coproduct(g1: BGraph, g2: BGraph,
              tags: tuple[str, str] = ("1", "2")) -> tuple[BGraph, GraphMorphism, GraphMorphism]:
    """Disjoint union with its two injections; ids are prefixed with the tags."""
    builder = GraphBuilder()
    injections: list[dict[str, str]] = []
    for tag, g in zip(tags, (g1, g2)):
        rename = {x: f"{tag}:{x}" for x in g.elements}
        injections.append(rename)
        for x in g.nodes:
            builder.add_node(rename[x], g.kinds.get(x), g.names.get(x))
        for b in g.boxes:
            builder.add_box(rename[b], (rename[x] for x in g.contents(b)),
                            g.kinds.get(b), g.names.get(b))
        for e in g.edges:
            builder.add_edge(rename[g.src[e]], rename[g.tgt[e]], rename[e],
                             g.kinds.get(e), g.names.get(e), link=e in g.edge_links)
    result = builder.freeze()
    return (result,
            GraphMorphism.from_mapping(g1, result, injections[0]),
            GraphMorphism.from_mapping(g2, result, injections[1]))


def mediating_morphism(in1: GraphMorphism, in2: GraphMorphism,
                       h1: GraphMorphism, h2: GraphMorphism) -> GraphMorphism:
    """The unique ``u`` with ``u ∘ in1 = h1`` and ``u ∘ in2 = h2``."""
    if h1.target != h2.target:
        raise GraphError("cocone legs must share a target")
    mapping = {in1(x): h1(x) for x in in1.source.elements}
    mapping.update({in2(x): h2(x) for x in in2.source.elements})
    return GraphMorphism.from_mapping(in1.target, h1.target, mapping)


def colimit(graphs: Sequence[BGraph],
            arrows: Iterable[tuple[int, int, GraphMorphism]]) -> tuple[BGraph, list[GraphMorphism]]:
    """Colimit of a finite diagram of B-graphs.

    ``arrows`` are ``(i, j, m)`` with ``m: graphs[i] → graphs[j]``. The result is
    the disjoint union quotiented by the identifications the arrows induce; each
    class keeps the id of its member from the lowest-indexed graph when free.
    """
    uf = UnionFind()
    for i, g in enumerate(graphs):
        for x in g.elements:
            uf[(i, x)]
    for i, j, m in arrows:
        for x, y in m.mapping.items():
            uf.union((i, x), (j, y))

    classes = sorted((sorted(c) for c in uf.to_sets()), key=lambda c: c[0])
    rep: dict[tuple[int, str], str] = {}
    taken: set[str] = set()
    for members in classes:
        i, x = members[0]
        candidate = x if x not in taken else f"{i}:{x}"
        while candidate in taken:
            candidate += "'"
        taken.add(candidate)
        for member in members:
            rep[member] = candidate

    builder = GraphBuilder()
    builder.counter = max((g.counter for g in graphs), default=0)
    for members in classes:
        target = rep[members[0]]
        sorts = {graphs[i].sort_of(x) for i, x in members}
        if len(sorts) != 1:
            raise GraphError(f"colimit identifies elements of different sorts at {target}")
        sort = sorts.pop()
        kind = next((graphs[i].kinds[x] for i, x in members if x in graphs[i].kinds), None)
        name = next((graphs[i].names[x] for i, x in members if x in graphs[i].names), None)
        i, x = members[0]
        if sort == "node":
            builder.add_node(target, kind, name)
        elif sort == "box":
            builder.add_box(target, (), kind, name)
        else:
            g = graphs[i]
            builder.add_edge(rep[(i, g.src[x])], rep[(i, g.tgt[x])], target, kind, name,
                             link=any(y in graphs[k].edge_links for k, y in members))
    for i, g in enumerate(graphs):
        for b, xs in g.cnt.items():
            for x in xs:
                builder.contain(rep[(i, b)], rep[(i, x)])

    result = builder.freeze()
    injections = [GraphMorphism.from_mapping(g, result, {x: rep[(i, x)] for x in g.elements})
                  for i, g in enumerate(graphs)]
    return result, injections


def pushout(f: GraphMorphism, g: GraphMorphism) -> tuple[BGraph, GraphMorphism, GraphMorphism]:
    """Pushout of the span ``B ← A → C``; ids of B win, then C."""
    if f.source != g.source:
        raise GraphError("pushout needs a span with a common source")
    result, (inj_b, inj_c, _) = colimit([f.target, g.target, f.source], [(2, 0, f), (2, 1, g)])
    return result, inj_b, inj_c


# ── Matching ──────────────────────────────────────────────────────────────────

def label_check(pattern: BGraph, host: BGraph) -> Callable[[str, str], bool]:
    """Kinds and names set on a pattern element must agree on its image."""
    def ok(x: str, y: str) -> bool:
        kind = pattern.kinds.get(x)
        if kind is not None and host.kinds.get(y) != kind:
            return False
        name = pattern.names.get(x)
        return name is None or host.names.get(y) == name
    return ok


def _neighbours(g: BGraph, x: str) -> list[str]:
    found = set(g.incident(x)) | set(g.parents(x)) | set(g.contents(x))
    if x in g.edges:
        found.update((g.src[x], g.tgt[x]))
    found.discard(x)
    return sorted(found)


def _search_order(pattern: BGraph, seeds: Iterable[str]) -> list[str]:
    """Breadth-first over incidence, so edges follow one endpoint and fix the other."""
    seen = set(seeds)
    queue = deque(sorted(seen))
    order: list[str] = []
    remaining = sorted(pattern.elements - seen, key=lambda x: (x not in pattern.names, x))
    while True:
        while queue:
            for y in _neighbours(pattern, queue.popleft()):
                if y not in seen:
                    seen.add(y)
                    order.append(y)
                    queue.append(y)
        root = next((r for r in remaining if r not in seen), None)
        if root is None:
            return order
        seen.add(root)
        order.append(root)
        queue.append(root)


def iter_matches(pattern: BGraph, host: BGraph, injective: bool = True,
                 partial: Mapping[str, str] | None = None,
                 labelled: bool = True) -> Iterator[GraphMorphism]:
    """Backtracking enumeration of morphisms ``pattern → host`` extending ``partial``."""
    accept = label_check(pattern, host) if labelled else (lambda x, y: True)
    assignment: dict[str, str] = {}
    used: set[str] = set()

    def consistent(x: str, y: str) -> bool:
        if host.sort_of(y) != pattern.sort_of(x):
            return False
        for e in pattern.incident(x):
            he = assignment.get(e)
            if he is None:
                continue
            if pattern.src[e] == x and host.src[he] != y:
                return False
            if pattern.tgt[e] == x and host.tgt[he] != y:
                return False
        if x in pattern.edges:
            for end, fn in ((pattern.src[x], host.src), (pattern.tgt[x], host.tgt)):
                if end in assignment and fn.get(y) != assignment[end]:
                    return False
        for b in pattern.parents(x):
            if b in assignment and y not in host.contents(assignment[b]):
                return False
        for z in pattern.contents(x):
            if z in assignment and assignment[z] not in host.contents(y):
                return False
        return True

    def candidates(x: str) -> Iterable[str]:
        if x in pattern.edges:
            for link in pattern.in_edges(x):
                if link in assignment:
                    return [host.tgt[assignment[link]]]
            s, t = pattern.src[x], pattern.tgt[x]
            if s in assignment:
                return host.out_edges(assignment[s])
            if t in assignment:
                return host.in_edges(assignment[t])
            return sorted(host.edges)
        for e in pattern.incident(x):
            he = assignment.get(e)
            if he is not None:
                return [host.src[he] if pattern.src[e] == x else host.tgt[he]]
        return sorted(host.of_sort(pattern.sort_of(x) or "node"))

    for x, y in (partial or {}).items():
        if x not in pattern or y not in host or not accept(x, y) or not consistent(x, y):
            return
        if injective and y in used:
            return
        assignment[x] = y
        used.add(y)

    order = _search_order(pattern, assignment)

    def extend(i: int) -> Iterator[GraphMorphism]:
        if i == len(order):
            yield GraphMorphism.from_mapping(pattern, host, dict(assignment))
            return
        x = order[i]
        for y in candidates(x):
            if injective and y in used:
                continue
            if not accept(x, y) or not consistent(x, y):
                continue
            assignment[x] = y
            if injective:
                used.add(y)
            yield from extend(i + 1)
            del assignment[x]
            if injective:
                used.discard(y)

    yield from extend(0)


def find_matches(pattern: BGraph, host: BGraph, injective: bool = True,
                 partial: Mapping[str, str] | None = None,
                 labelled: bool = True) -> list[GraphMorphism]:
    """All matches, ordered lexicographically by the images of the sorted pattern ids."""
    return sorted(iter_matches(pattern, host, injective, partial, labelled), key=GraphMorphism.key)


def has_match(pattern: BGraph, host: BGraph, injective: bool = True,
              partial: Mapping[str, str] | None = None, labelled: bool = True) -> bool:
    return next(iter_matches(pattern, host, injective, partial, labelled), None) is not None


# ── Rules ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ApplicationCondition:
    morphism: GraphMorphism  # L → AC
    polarity: Literal["positive", "negative"] = "negative"
    name: str = ""


@dataclass(frozen=True)
class Rule:
    name: str
    lhs: BGraph
    interface: BGraph
    rhs: BGraph
    left: GraphMorphism   # K → L
    right: GraphMorphism  # K → R
    conditions: tuple[ApplicationCondition, ...] = ()

    @classmethod
    def from_graphs(cls, name: str, lhs: BGraph, interface: BGraph, rhs: BGraph,
                    conditions: Iterable[ApplicationCondition] = ()) -> "Rule":
        """Span whose morphisms are inclusions by id (K's ids occur in L and R)."""
        return cls(name, lhs, interface, rhs,
                   GraphMorphism.inclusion(interface, lhs),
                   GraphMorphism.inclusion(interface, rhs),
                   tuple(conditions))

    def with_conditions(self, *conditions: ApplicationCondition) -> "Rule":
        return Rule(self.name, self.lhs, self.interface, self.rhs, self.left, self.right,
                    self.conditions + conditions)

    def validate(self) -> list[Violation]:
        report: list[Violation] = []
        for label, m in (("left", self.left), ("right", self.right)):
            report.extend(validate_morphism(m))
            if not m.is_injective():
                report.append(Violation("ruleNotInjective", (), f"{label} morphism of {self.name} is not injective"))
        for ac in self.conditions:
            if ac.morphism.source != self.lhs:
                report.append(Violation("conditionMismatch", (), f"condition {ac.name} does not start at L"))
            report.extend(validate_morphism(ac.morphism))
            if not ac.morphism.is_injective():
                report.append(Violation("conditionNotInjective", (), f"condition {ac.name} is not injective"))
        return report


@dataclass(frozen=True)
class Rewrite:
    result: BGraph
    comatch: dict[str, str]   # R → result
    deleted: frozenset[str]
    created: frozenset[str]


def check_application(rule: Rule, host: BGraph, match: GraphMorphism) -> list[Violation]:
    """Reasons why ``rule`` cannot be applied at ``match``; empty when it can."""
    report = validate_morphism(match)
    if report or not match.is_injective():
        report.append(Violation("invalidMatch", (), f"match for {rule.name} is not an injective morphism"))
        return report

    for ac in rule.conditions:
        seed = {ac.morphism(x): match(x) for x in rule.lhs.elements}
        found = has_match(ac.morphism.target, host, injective=True, partial=seed)
        if found != (ac.polarity == "positive"):
            report.append(Violation("applicationCondition", (ac.name,),
                                    f"{ac.polarity} condition {ac.name or '<unnamed>'} fails"))

    kept_l = rule.left.image()
    deleted = {match(x) for x in rule.lhs.elements - kept_l}
    for e in sorted(host.edges - deleted):
        for end in (host.src[e], host.tgt[e]):
            if end in deleted:
                report.append(Violation("danglingEdge", (e, end),
                                        f"edge {e} would dangle on deleted {end}"))
    matched_pairs = {(match(b), match(x)) for b, x in rule.lhs.containment_pairs()}
    for b, x in sorted(host.containment_pairs()):
        if (b in deleted) != (x in deleted) and (b, x) not in matched_pairs:
            victim = b if b in deleted else x
            report.append(Violation("danglingContainment", (b, x),
                                    f"containment {x} in {b} would dangle on deleted {victim}"))
    return report


def rewrite(rule: Rule, host: BGraph, match: GraphMorphism) -> Rewrite:
    """Double-pushout step; raises :class:`RuleApplicationError` when not applicable."""
    report = check_application(rule, host, match)
    if report:
        log.info(f"Rule rejected | rule={rule.name} | reasons={[str(v) for v in report]}")
        raise RuleApplicationError(f"rule {rule.name} is not applicable at the match", report)

    builder = GraphBuilder(host)
    kept_l = rule.left.image()
    deleted = frozenset(match(x) for x in rule.lhs.elements - kept_l)
    for x in deleted:
        builder.remove(x)

    k_pairs = rule.interface.containment_pairs()
    left_inv = rule.left.inverse()
    for bl, xl in rule.lhs.containment_pairs():
        if bl in kept_l and xl in kept_l and (left_inv[bl], left_inv[xl]) not in k_pairs:
            builder.uncontain(match(bl), match(xl))

    comatch: dict[str, str] = {rule.right(k): match(rule.left(k)) for k in rule.interface.elements}
    rhs = rule.rhs
    fresh = rhs.elements - rule.right.image()
    # nodes and boxes first, then edges, links onto edges last
    for y in sorted(fresh, key=lambda y: (rhs.sort_of(y) == "edge", y in rhs.edge_links, y)):
        sort = rhs.sort_of(y)
        kind, name = rhs.kinds.get(y), rhs.names.get(y)
        if sort == "node":
            comatch[y] = builder.add_node(None, kind, name)
        elif sort == "box":
            comatch[y] = builder.add_box(None, (), kind, name)
        else:
            comatch[y] = builder.add_edge(comatch[rhs.src[y]], comatch[rhs.tgt[y]], None,
                                          kind, name, link=y in rhs.edge_links)
    right_inv = rule.right.inverse()
    for b, x in rhs.containment_pairs():
        if b in right_inv and x in right_inv and (right_inv[b], right_inv[x]) in k_pairs:
            continue
        builder.contain(comatch[b], comatch[x])

    result = builder.freeze()
    broken = validate_bgraph(result)
    if broken:
        raise GraphError(f"rule {rule.name} produced an invalid graph", broken)
    created = frozenset(comatch[y] for y in fresh)
    log.debug(f"Applied rule | rule={rule.name} | deleted={len(deleted)} | created={len(created)}")
    return Rewrite(result, comatch, deleted, created)


def apply_rule(rule: Rule, host: BGraph, match: GraphMorphism) -> BGraph:
    return rewrite(rule, host, match).result


# ── Isomorphism and hashing ───────────────────────────────────────────────────

def to_networkx(g: BGraph, labelled: bool = True) -> nx.DiGraph:
    """Incidence encoding: one vertex per element, arcs for src, tgt and cnt."""
    dg = nx.DiGraph()
    for x in g.elements:
        dg.add_node(x, sort=g.sort_of(x),
                    kind=g.kinds.get(x) if labelled else None,
                    name=g.names.get(x) if labelled else None)
    for e in g.edges:
        for role, end in (("s", g.src[e]), ("t", g.tgt[e])):
            roles = dg.edges[e, end]["roles"] if dg.has_edge(e, end) else ()
            dg.add_edge(e, end, roles=tuple(sorted((*roles, role))))
    for b, xs in g.cnt.items():
        for x in xs:
            dg.add_edge(b, x, roles=("c",))
    return dg


def is_isomorphic(g1: BGraph, g2: BGraph, labelled: bool = True) -> bool:
    if len(g1) != len(g2):
        return False
    return nx.is_isomorphic(
        to_networkx(g1, labelled), to_networkx(g2, labelled),
        node_match=isomorphism.categorical_node_match(["sort", "kind", "name"], [None] * 3),
        edge_match=isomorphism.categorical_edge_match("roles", ()),
    )


def canonical_form(g: BGraph) -> dict:
    return {
        "nodes": sorted(g.nodes),
        "edges": sorted([e, g.src[e], g.tgt[e]] for e in g.edges),
        "boxes": sorted([b, sorted(g.contents(b))] for b in g.boxes),
        "edge_links": sorted(g.edge_links),
        "kinds": dict(sorted(g.kinds.items())),
        "names": dict(sorted(g.names.items())),
    }


def canonical_hash(g: BGraph) -> str:
    payload = json.dumps(canonical_form(g), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]
