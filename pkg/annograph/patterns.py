"""
Tree-structured patterns and graph constraints.

A constraint ``c: P → C`` holds in a graph when every match of the premise P
extends to a match of the conclusion C; a forbidden graph holds when P has no
match at all. Type requirements are ordinary graph structure (annotation
patterns), so the same matcher serves typed and untyped constraints.
"""

import logging
from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Literal

from annograph.annotation import Annotation, Kind, TypeAnnotatedGraph
from annograph.bgraph import (
    AnnographError,
    BGraph,
    GraphMorphism,
    Violation,
    find_matches,
    has_match,
    validate_morphism,
)

log = logging.getLogger("annograph")

ConstraintKind = Literal["positive", "forbidden", "F1", "F2", "F3"]


class ConstraintFormError(AnnographError):
    pass


class ConstraintForm(StrEnum):
    F1 = "F1"
    F2 = "F2"
    F3 = "F3"
    UNTYPED = "untyped"


def carrier_of(g: TypeAnnotatedGraph | BGraph) -> BGraph:
    return g.carrier if isinstance(g, TypeAnnotatedGraph) else g


# ── Patterns ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Pattern:
    """Graphs ``G0..Gn`` linked by injective morphisms forming a tree rooted at ``G0``.

    ``tree`` maps a child index ``j`` to ``(i, m)`` with ``m: Gi → Gj``.
    """

    graphs: tuple[BGraph, ...]
    tree: Mapping[int, tuple[int, GraphMorphism]] = field(default_factory=dict)

    @classmethod
    def single(cls, graph: BGraph) -> "Pattern":
        return cls((graph,))

    def order(self) -> list[int]:
        """Indices parent-before-child."""
        children: dict[int, list[int]] = {}
        for j, (i, _) in self.tree.items():
            children.setdefault(i, []).append(j)
        order, queue = [], deque([0])
        while queue:
            i = queue.popleft()
            order.append(i)
            queue.extend(sorted(children.get(i, [])))
        return order

    def validate(self) -> list[Violation]:
        report: list[Violation] = []
        n = len(self.graphs)
        if n == 0:
            return [Violation("patternEmpty", (), "a pattern needs at least one graph")]
        if 0 in self.tree:
            report.append(Violation("patternRoot", ("0",), "the root graph cannot have a parent"))
        for j in range(1, n):
            if j not in self.tree:
                report.append(Violation("patternDetached", (str(j),), f"graph {j} is not involved in any morphism"))
        for j, (i, m) in sorted(self.tree.items()):
            if not (0 <= i < n and 0 <= j < n):
                report.append(Violation("patternIndex", (str(i), str(j)), f"morphism {i}→{j} names no graph"))
                continue
            if m.source != self.graphs[i] or m.target != self.graphs[j]:
                report.append(Violation("patternMorphism", (str(i), str(j)), f"morphism {i}→{j} has wrong ends"))
            report.extend(validate_morphism(m))
            if not m.is_injective():
                report.append(Violation("patternNotInjective", (str(i), str(j)), f"morphism {i}→{j} is not injective"))
        if not report and len(self.order()) != n:
            report.append(Violation("patternNotTree", (), "morphisms do not form a tree rooted at the first graph"))
        return report


@dataclass(frozen=True)
class PatternMorphism:
    """Per-graph injective morphisms ``π → π'`` commuting with both trees."""

    source: Pattern
    target: Pattern
    maps: tuple[GraphMorphism, ...]

    def validate(self) -> list[Violation]:
        report: list[Violation] = []
        if len(self.maps) != len(self.source.graphs) or len(self.maps) != len(self.target.graphs):
            return [Violation("patternShape", (), "pattern morphism needs one map per graph")]
        for k, m in enumerate(self.maps):
            report.extend(validate_morphism(m))
            if not m.is_injective():
                report.append(Violation("patternNotInjective", (str(k),), f"map {k} is not injective"))
        for j, (i, m) in sorted(self.source.tree.items()):
            if self.target.tree.get(j, (None,))[0] != i:
                report.append(Violation("treeNotPreserved", (str(i), str(j)), f"tree edge {i}→{j} is missing"))
                continue
            m_t = self.target.tree[j][1]
            for x in m.source.elements:
                if self.maps[j](m(x)) != m_t(self.maps[i](x)):
                    report.append(Violation("imageNotPreserved", (str(i), str(j), x),
                                            f"image of {x} along {i}→{j} is not preserved"))
        return report


@dataclass
class PatternSatisfaction:
    satisfied: bool
    collections: list[tuple[GraphMorphism, ...]]


def satisfies_pattern(g: TypeAnnotatedGraph | BGraph, p: Pattern) -> PatternSatisfaction:
    """All collections of injective matches ``Gi → g`` that commute with the tree morphisms."""
    host = carrier_of(g)
    order = p.order()
    partial: list[dict[int, GraphMorphism]] = [{}]
    for j in order:
        extended = []
        for chosen in partial:
            seed = None
            if j in p.tree:
                i, m = p.tree[j]
                seed = {m(x): chosen[i](x) for x in m.source.elements}
            for match in find_matches(p.graphs[j], host, injective=True, partial=seed):
                extended.append({**chosen, j: match})
        partial = extended
    collections = [tuple(c[k] for k in range(len(p.graphs))) for c in partial]
    return PatternSatisfaction(bool(collections), collections)


# ── Constraints ───────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Constraint:
    """A graph constraint.

    ``element`` is the distinguished element of a typed form: a premise element
    for F1 and F3, the required new element of the conclusion for F2.
    ``required_type`` is the type element the form asks for.
    """

    name: str
    kind: ConstraintKind
    premise: BGraph
    conclusion: BGraph | None = None
    morphism: GraphMorphism | None = None  # premise → conclusion
    element: str | None = None
    required_type: str | None = None
    injective: bool = False

    @classmethod
    def from_graphs(cls, name: str, kind: ConstraintKind, premise: BGraph,
                    conclusion: BGraph | None = None, **kwargs) -> "Constraint":
        morphism = GraphMorphism.inclusion(premise, conclusion) if conclusion is not None else None
        return cls(name, kind, premise, conclusion, morphism, **kwargs)

    def validate(self) -> list[Violation]:
        if self.kind == "forbidden":
            if self.conclusion is not None:
                return [Violation("constraintShape", (self.name,), "a forbidden graph has no conclusion")]
            return []
        if self.conclusion is None or self.morphism is None:
            return [Violation("constraintShape", (self.name,), f"{self.kind} constraint needs a conclusion")]
        report = validate_morphism(self.morphism)
        if not self.morphism.is_injective():
            report.append(Violation("constraintNotInjective", (self.name,), "premise → conclusion is not injective"))
        home = self.conclusion if self.kind == "F2" else self.premise
        if self.element is not None and self.element not in home:
            report.append(Violation("constraintElement", (self.name, self.element),
                                    f"{self.element} is not in the {'conclusion' if self.kind == 'F2' else 'premise'}"))
        return report


@dataclass
class ConstraintVerdict:
    constraint: Constraint
    satisfied: bool
    witnesses: list[GraphMorphism] = field(default_factory=list)  # premise matches lacking extension
    premise_matches: int = 0


def premise_matches(g: TypeAnnotatedGraph | BGraph, c: Constraint) -> list[GraphMorphism]:
    return find_matches(c.premise, carrier_of(g), injective=c.injective)


def extends(g: TypeAnnotatedGraph | BGraph, c: Constraint, match: GraphMorphism) -> bool:
    assert c.conclusion is not None and c.morphism is not None
    seed = {c.morphism(x): match(x) for x in c.premise.elements}
    return has_match(c.conclusion, carrier_of(g), injective=c.injective, partial=seed)


def check_constraint(g: TypeAnnotatedGraph | BGraph, c: Constraint) -> ConstraintVerdict:
    """Evaluate ``c`` on ``g``; an empty premise asks for at least one conclusion match."""
    matches = premise_matches(g, c)
    if c.kind == "forbidden":
        return ConstraintVerdict(c, not matches, matches, len(matches))
    witnesses = [m for m in matches if not extends(g, c, m)]
    return ConstraintVerdict(c, not witnesses, witnesses, len(matches))


def check_constraints(g: TypeAnnotatedGraph | BGraph,
                      constraints: Iterable[Constraint]) -> list[ConstraintVerdict]:
    """Evaluate a cascaded list in order."""
    verdicts = []
    for c in constraints:
        verdict = check_constraint(g, c)
        if not verdict.satisfied:
            log.debug(f"Constraint violated | constraint={c.name} | witnesses={len(verdict.witnesses)}")
        verdicts.append(verdict)
    return verdicts


# ── Typed constraint forms ────────────────────────────────────────────────────

@dataclass(frozen=True)
class FormInfo:
    form: ConstraintForm
    element: str | None = None          # premise element (F1, F3) or new conclusion element (F2)
    required_types: tuple[str, ...] = ()
    new_annotations: tuple[Annotation, ...] = ()


def _type_annotations(g: BGraph) -> list[Annotation]:
    view = TypeAnnotatedGraph(g)
    return [a for a in view.annotations if view.kind(a.value) == Kind.TYPE]


def locate_form(c: Constraint) -> FormInfo:
    """Find which typed form ``c`` instantiates and its distinguished element."""
    if c.kind == "forbidden":
        return FormInfo(ConstraintForm.UNTYPED)
    if c.conclusion is None or c.morphism is None:
        raise ConstraintFormError(f"{c.name}: constraint has no conclusion")

    conclusion = c.conclusion
    image = c.morphism.image()
    to_premise = c.morphism.inverse()
    premise_anns = _type_annotations(c.premise)
    conclusion_anns = _type_annotations(conclusion)
    if not premise_anns and not conclusion_anns:
        info = FormInfo(ConstraintForm.UNTYPED)
        return _check_declared(c, info)

    new = conclusion.elements - image
    new_anns = [a for a in conclusion_anns if a.node in new]
    on_premise = [a for a in new_anns if a.element in image]
    on_new = [a for a in new_anns if a.element in new and conclusion.kinds.get(a.element) == Kind.INSTANCE]

    candidates: list[FormInfo] = []
    if on_premise and not on_new:
        anchors = {a.element for a in on_premise}
        machinery = {x for a in on_premise for x in (a.node, a.annotates, a.with_edge)}
        values = {a.value for a in on_premise}
        if len(anchors) == 1 and new <= machinery | values:
            anchor = anchors.pop()
            candidates.append(FormInfo(ConstraintForm.F1, to_premise[anchor],
                                       tuple(sorted(values)), tuple(on_premise)))
    if on_new:
        anchors = {a.element for a in on_new}
        if len(anchors) == 1:
            y = anchors.pop()
            candidates.append(FormInfo(ConstraintForm.F2, y,
                                       tuple(sorted(a.value for a in on_new if a.element == y)),
                                       tuple(new_anns)))
    if not new_anns and new:
        typed = {a.element for a in premise_anns}
        attached = set()
        for x in new:
            if x in conclusion.edges:
                attached.update(to_premise.get(end) for end in (conclusion.src[x], conclusion.tgt[x]))
            attached.update(to_premise.get(b) for b in conclusion.parents(x))
            attached.update(to_premise.get(z) for z in conclusion.contents(x))
        anchors = typed & attached
        if c.element is not None:
            anchors &= {c.element}
        if len(anchors) == 1:
            e = anchors.pop()
            types = tuple(sorted(c.morphism(a.value) for a in premise_anns if a.element == e))
            candidates.append(FormInfo(ConstraintForm.F3, e, types))
        elif len(anchors) > 1:
            raise ConstraintFormError(f"{c.name}: ambiguous F3 anchor among {sorted(anchors)}")

    if len(candidates) != 1:
        found = [str(info.form) for info in candidates]
        raise ConstraintFormError(f"{c.name}: cannot classify, candidate forms {found or 'none'}")
    return _check_declared(c, candidates[0])


def _check_declared(c: Constraint, info: FormInfo) -> FormInfo:
    if c.kind in ("F1", "F2", "F3") and c.kind != info.form:
        raise ConstraintFormError(f"{c.name}: declared {c.kind} but has the shape of {info.form}")
    return info


def classify_constraint_form(c: Constraint) -> ConstraintForm:
    return locate_form(c).form
