"""
Dynamic typing: rules that change a type annotation, detection of the
constraints such a change breaks, and synthesis of the rules that repair them.

Repairs follow the typed constraint forms:

- F1 (an element in a pattern must carry a type): disrupt the premise, either
  by extending the change rule with the premise or by a repair rule applied
  afterwards at the co-match.
- F2 (a typed pattern needs a typed element): block the change with a negative
  condition, create a fresh typed element, or annotate an existing candidate.
- F3 (a typed element needs a pattern): add the pattern, inside the change
  rule or afterwards.

``apply_with_repairs`` runs a change and repairs in rounds until the
constraints that held before the change hold again or the budget runs out.
"""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Literal

from annograph.annotation import Kind, TypeAnnotatedGraph, check_well_formed, remove_annotation
from annograph.bgraph import (
    ApplicationCondition,
    BGraph,
    GraphBuilder,
    GraphError,
    GraphMorphism,
    Rule,
    Sort,
    Violation,
    canonical_hash,
    check_application,
    colimit,
    find_matches,
    pushout,
    rewrite,
    subgraph,
)
from annograph.config import DEFAULT_CONFIG
from annograph.patterns import (
    Constraint,
    ConstraintForm,
    ConstraintFormError,
    ConstraintVerdict,
    FormInfo,
    check_constraint,
    extends,
    locate_form,
    premise_matches,
)

log = logging.getLogger("annograph")

Status = Literal["converged", "unconverged", "blocked"]


class RepairError(GraphError):
    pass


class Cause(StrEnum):
    LOST_REQUIRED_TYPE = "lost-required-type"
    LOST_SOLE_WITNESS = "lost-sole-witness"
    PREMISE_NOW_HOLDS = "premise-now-holds"


class Strategy(StrEnum):
    EXTEND_RULE = "extendRule"
    POST_REPAIR = "postRepair"
    BLOCK_NAC = "blockNAC"
    CREATE_TYPED_ELEMENT = "createTypedElement"
    ADD_TYPE_ANNOTATION = "addTypeAnnotation"


# ── Type-change rules ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class TypeChangeRule:
    """A rule replacing one type annotation of ``element`` by another.

    K holds the element and both types; L adds the old annotation pattern and
    R the new one. ``element``, ``old_type`` and ``new_type`` are K ids, kept
    unchanged in L and R.
    """

    rule: Rule
    sort: Sort
    element: str
    old_type: str
    new_type: str

    @property
    def name(self) -> str:
        return self.rule.name

    def validate(self) -> list[Violation]:
        report = self.rule.validate()
        if report:
            return report
        r = self.rule
        for side, graph, morphism, type_ in (("deleted", r.lhs, r.left, self.old_type),
                                              ("created", r.rhs, r.right, self.new_type)):
            part = graph.elements - morphism.image()
            anns = [a for a in TypeAnnotatedGraph(graph).annotations if a.node in part]
            if len(anns) != 1 or part != {anns[0].node, anns[0].annotates, anns[0].with_edge}:
                report.append(Violation("typeChangeShape", (self.name,),
                                        f"{side} part must be exactly one annotation pattern"))
                continue
            if anns[0].element != morphism(self.element) or anns[0].value != morphism(type_):
                report.append(Violation("typeChangeShape", (self.name,),
                                        f"{side} annotation must link {self.element} and {type_}"))
        if r.interface.names.get(self.old_type) == r.interface.names.get(self.new_type):
            report.append(Violation("typeChangeShape", (self.name,), "old and new type coincide"))
        return report

    def matches(self, g: TypeAnnotatedGraph, element: str | None = None) -> list[GraphMorphism]:
        seed = {self.rule.left(self.element): element} if element is not None else None
        return find_matches(self.rule.lhs, g.carrier, injective=True, partial=seed)


def change_type_rule(name: str, sort: Sort, old_type: str, new_type: str) -> TypeChangeRule:
    """The rule changing the type annotation of an element of ``sort`` from ``old_type`` to ``new_type`` (type names)."""
    def add(builder: GraphBuilder, role: str, kind: Kind, type_name: str | None = None) -> str:
        if sort == "edge":
            s = builder.add_node(f"{role}_src", kind=kind)
            t = builder.add_node(f"{role}_tgt", kind=kind)
            return builder.add_edge(s, t, role, kind=kind, name=type_name)
        if sort == "box":
            return builder.add_box(role, kind=kind, name=type_name)
        return builder.add_node(role, kind=kind, name=type_name)

    builder = GraphBuilder()
    x = add(builder, "x", Kind.INSTANCE)
    t_old = add(builder, "T_old", Kind.TYPE, old_type)
    t_new = add(builder, "T_new", Kind.TYPE, new_type)
    interface = builder.freeze()

    graphs = []
    for a, value in (("a_old", t_old), ("a_new", t_new)):
        side = GraphBuilder(interface)
        side.add_node(a, kind=Kind.ANNOTATION)
        side.add_edge(a, x, f"{a}_annotates", kind=Kind.ANNOTATES, link=sort == "edge")
        side.add_edge(a, value, f"{a}_with", kind=Kind.WITH, link=sort == "edge")
        graphs.append(side.freeze())

    rule = TypeChangeRule(Rule.from_graphs(name, graphs[0], interface, graphs[1]), sort, x, t_old, t_new)
    report = rule.validate()
    if report:
        raise GraphError(f"type change rule {name} is malformed", report)
    return rule


# ── Violation detection ───────────────────────────────────────────────────────

@dataclass(frozen=True)
class DetectedViolation:
    constraint: Constraint
    witness: GraphMorphism
    cause: Cause


def classify_cause(before: TypeAnnotatedGraph, c: Constraint, witness: GraphMorphism) -> Cause:
    """Which way a change broke ``c`` at ``witness``."""
    known = {m.key() for m in premise_matches(before, c)}
    if c.kind == "forbidden" or witness.key() not in known:
        return Cause.PREMISE_NOW_HOLDS
    try:
        form = locate_form(c).form
    except ConstraintFormError:
        form = ConstraintForm.UNTYPED
    return Cause.LOST_SOLE_WITNESS if form == ConstraintForm.F2 else Cause.LOST_REQUIRED_TYPE


def _violations(before: TypeAnnotatedGraph, after: TypeAnnotatedGraph,
                constraints: Sequence[Constraint]) -> list[DetectedViolation]:
    found = []
    for c in constraints:
        if not check_constraint(before, c).satisfied:
            continue
        verdict = check_constraint(after, c)
        for w in verdict.witnesses:
            found.append(DetectedViolation(c, w, classify_cause(before, c, w)))
    return found


def detect_violations(before: TypeAnnotatedGraph, rule: TypeChangeRule, match: GraphMorphism,
                      constraints: Sequence[Constraint]) -> list[DetectedViolation]:
    """Constraints that hold in ``before`` and fail once ``rule`` is applied at ``match``."""
    after = TypeAnnotatedGraph(rewrite(rule.rule, before.carrier, match).result)
    found = _violations(before, after, constraints)
    for v in found:
        log.info(f"Change breaks constraint | rule={rule.name} | constraint={v.constraint.name} | cause={v.cause}")
    return found


# ── Gluing ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Glued:
    graph: BGraph
    inj_a: GraphMorphism
    inj_b: GraphMorphism


def _pair(a: BGraph, b: BGraph, pairs: dict[str, str], x: str, y: str) -> None:
    if a.sort_of(x) != b.sort_of(y):
        raise RepairError(f"cannot glue {x} with {y}: different sorts")
    if x in pairs or y in pairs.values():
        if pairs.get(x) == y:
            return
        raise RepairError(f"inconsistent glue points at {x} and {y}")
    pairs[x] = y
    if x in a.edges:
        _pair(a, b, pairs, a.src[x], b.src[y])
        _pair(a, b, pairs, a.tgt[x], b.tgt[y])


def _pair_if_possible(a: BGraph, b: BGraph, pairs: dict[str, str], x: str, y: str) -> dict[str, str]:
    trial = dict(pairs)
    try:
        _pair(a, b, trial, x, y)
    except RepairError:
        return pairs
    return trial


def glue(a: BGraph, a_element: str | None, b: BGraph, b_element: str | None,
         extra: Mapping[str, str] | None = None) -> Glued:
    """``a ⊕ b``: identify the two elements, equally named types, and annotations of the element with paired types.

    ``extra`` pairs further elements of ``a`` with elements of ``b``, typically
    those two matches send to the same host element. Pairs that clash with
    the ones already made are skipped.
    """
    pairs: dict[str, str] = {}
    if a_element is not None and b_element is not None:
        _pair(a, b, pairs, a_element, b_element)
    for x, y in sorted((extra or {}).items()):
        pairs = _pair_if_possible(a, b, pairs, x, y)

    types = {(a.sort_of(t), a.names[t]): t for t in a.elements
             if a.kinds.get(t) == Kind.TYPE and t in a.names}
    for t in sorted(b.elements, key=lambda t: (b.sort_of(t) == "edge", t)):
        key = (b.sort_of(t), b.names.get(t))
        if b.kinds.get(t) == Kind.TYPE and key in types:
            pairs = _pair_if_possible(a, b, pairs, types[key], t)

    if a_element is not None and b_element is not None:
        b_anns = TypeAnnotatedGraph(b).annotations_of(b_element)
        for an in TypeAnnotatedGraph(a).annotations_of(a_element):
            bn = next((bn for bn in b_anns
                       if pairs.get(an.value) == bn.value and bn.node not in pairs.values()), None)
            if bn is not None and an.node not in pairs:
                pairs.update({an.node: bn.node, an.annotates: bn.annotates, an.with_edge: bn.with_edge})

    builder = GraphBuilder()
    for x in sorted(pairs):
        if x in a.nodes:
            builder.add_node(x)
        elif x in a.boxes:
            builder.add_box(x)
    for x in sorted(pairs, key=lambda x: (x in a.edge_links, x)):
        if x in a.edges:
            builder.add_edge(a.src[x], a.tgt[x], x, link=x in a.edge_links)
    interface = builder.freeze()

    graph, (inj_a, inj_b, _) = colimit(
        [a, b, interface],
        [(2, 0, GraphMorphism.inclusion(interface, a)),
         (2, 1, GraphMorphism.from_mapping(interface, b, pairs))],
    )
    return Glued(graph, inj_a, inj_b)


def _mediate(src: Glued, dst: Glued, a_map: Mapping[str, str], b_map: Mapping[str, str]) -> GraphMorphism:
    mapping: dict[str, str] = {}
    for inj, fmap, dst_inj in ((src.inj_a, a_map, dst.inj_a), (src.inj_b, b_map, dst.inj_b)):
        for x, y in fmap.items():
            key, value = inj(x), dst_inj(y)
            if mapping.setdefault(key, value) != value:
                raise RepairError(f"glue points disagree at {key}")
    return GraphMorphism.from_mapping(src.graph, dst.graph, mapping)


def _type_elements(g: BGraph) -> set[str]:
    found = {x for x in g.elements if g.kinds.get(x) == Kind.TYPE}
    for e in list(found & g.edges):
        found.update((g.src[e], g.tgt[e]))
    return found


def premise_with_types(c: Constraint) -> BGraph:
    """The premise inside the conclusion together with every type the conclusion uses (conclusion ids)."""
    assert c.conclusion is not None and c.morphism is not None
    return subgraph(c.conclusion, set(c.morphism.image()) | _type_elements(c.conclusion))


# ── P̄ and the F1 repairs ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class PBar:
    graph: BGraph
    embedding: GraphMorphism  # P̄ → P
    element: str
    removed: frozenset[str]
    occurrences: int


def _connecting(p: BGraph, e: str) -> set[str]:
    """Edges attaching ``e`` to the rest of ``p``, with the annotations anchored at them."""
    view = TypeAnnotatedGraph(p)
    found: set[str] = set()
    for edge in p.incident(e):
        if p.kinds.get(edge) in (Kind.ANNOTATES, Kind.WITH):
            continue
        found.add(edge)
        for ann in view.annotations_of(edge):
            found.update((ann.node, ann.annotates, ann.with_edge))
    return found


def build_pbar(c: Constraint, element: str | None = None) -> PBar:
    """The premise of an F1 constraint without the elements connecting ``element`` to it.

    Each occurrence of the premise in itself that fixes the element gives a
    restriction; P̄ is their colimit.
    """
    info = locate_form(c)
    if info.form != ConstraintForm.F1:
        raise RepairError(f"{c.name} is not an F1 constraint")
    e = element if element is not None else info.element
    p = c.premise
    if e not in p:
        raise RepairError(f"{e} is not an element of the premise of {c.name}")
    if p.sort_of(e) == "edge":
        raise RepairError(f"{e} is an edge, P̄ is defined for nodes and boxes")

    keep = p.elements - _connecting(p, e)
    occurrences = find_matches(p, p, injective=True, partial={e: e})
    pieces = [subgraph(p, {sigma(x) for x in keep}) for sigma in occurrences]
    graphs: list[BGraph] = list(pieces)
    arrows = []
    for i in range(len(pieces)):
        for j in range(i + 1, len(pieces)):
            overlap = subgraph(p, pieces[i].elements & pieces[j].elements)
            graphs.append(overlap)
            k = len(graphs) - 1
            arrows += [(k, i, GraphMorphism.inclusion(overlap, pieces[i])),
                       (k, j, GraphMorphism.inclusion(overlap, pieces[j]))]
    graph, _ = colimit(graphs, arrows)
    embedding = GraphMorphism.inclusion(graph, p)
    log.debug(f"Built P-bar | constraint={c.name} | occurrences={len(occurrences)} | "
              f"removed={len(p.elements - graph.elements)}")
    return PBar(graph, embedding, e, frozenset(p.elements - graph.elements), len(occurrences))


@dataclass(frozen=True)
class ExtendedRule:
    rule: Rule
    source: TypeChangeRule
    lhs_map: Mapping[str, str]  # L of the change rule → extended L
    element_l: str
    element_k: str
    element_r: str
    constraints: tuple[str, ...] = ()

    @classmethod
    def of(cls, rule: TypeChangeRule) -> "ExtendedRule":
        x = rule.element
        return cls(rule.rule, rule, {y: y for y in rule.rule.lhs.elements},
                   rule.rule.left(x), x, rule.rule.right(x))

    def lift_match(self, match: GraphMorphism, host: BGraph) -> GraphMorphism | None:
        seed = {self.lhs_map[x]: match(x) for x in self.source.rule.lhs.elements}
        found = find_matches(self.rule.lhs, host, injective=True, partial=seed)
        return found[0] if found else None


def _carry_condition(ac: ApplicationCondition, inj: GraphMorphism) -> ApplicationCondition:
    _, along, _ = pushout(inj, ac.morphism)
    return ApplicationCondition(along, ac.polarity, ac.name)


def _extend_span(cur: ExtendedRule, label: str, e: str, l_part: BGraph, k_part: BGraph, r_part: BGraph,
                 k_to_l: Mapping[str, str], k_to_r: Mapping[str, str],
                 host_pairs: Mapping[str, str] | None = None) -> ExtendedRule:
    """Glue the three parts into the span of ``cur`` at ``e``.

    ``host_pairs`` identifies elements of the current L with elements of
    ``l_part``; the pairs carry over to K and R wherever both sides are kept.
    """
    r = cur.rule
    l_pairs = dict(host_pairs or {})
    l_to_k = {y: x for x, y in k_to_l.items()}
    k_pairs = {xk: l_to_k[l_pairs[r.left(xk)]] for xk in r.interface.elements
               if l_pairs.get(r.left(xk)) in l_to_k}
    r_pairs = {r.right(xk): k_to_r[yk] for xk, yk in k_pairs.items()}
    gl = glue(r.lhs, cur.element_l, l_part, e, l_pairs)
    gk = glue(r.interface, cur.element_k, k_part, e, k_pairs)
    gr = glue(r.rhs, cur.element_r, r_part, e, r_pairs)
    left = _mediate(gk, gl, r.left.mapping, k_to_l)
    right = _mediate(gk, gr, r.right.mapping, k_to_r)
    conditions = tuple(_carry_condition(ac, gl.inj_a) for ac in r.conditions)
    rule = Rule(f"{r.name}+{label}", gl.graph, gk.graph, gr.graph, left, right, conditions)
    report = rule.validate()
    if report:
        raise RepairError(f"extended rule {rule.name} is invalid", report)
    log.info(f"Extended rule | rule={r.name} | constraint={label} | lhs={len(rule.lhs)} | rhs={len(rule.rhs)}")
    return ExtendedRule(rule, cur.source, {x: gl.inj_a(y) for x, y in cur.lhs_map.items()},
                        gl.inj_a(cur.element_l), gk.inj_a(cur.element_k), gr.inj_a(cur.element_r),
                        cur.constraints + (label,))


def synthesize_extend_rule(rule: TypeChangeRule, c: Constraint, pbar: PBar,
                           base: ExtendedRule | None = None,
                           host_pairs: Mapping[str, str] | None = None) -> ExtendedRule:
    """``L ⊕_e P ← K ⊕_e P̄ → R ⊕_e P̄``: the change also disrupts the premise.

    Passing the result of a previous call as ``base`` glues further F1
    constraints at the same element; ``host_pairs`` then says which premise
    elements coincide with elements already in the rule.
    """
    if pbar.embedding.target != c.premise:
        raise RepairError(f"P-bar was not built from the premise of {c.name}")
    cur = base or ExtendedRule.of(rule)
    identity = {x: x for x in pbar.graph.elements}
    return _extend_span(cur, c.name, pbar.element, c.premise, pbar.graph, pbar.graph,
                        pbar.embedding.mapping, identity, host_pairs)


@dataclass(frozen=True)
class PostRepair:
    rule: Rule              # L = P, K = R = P̄
    element: str            # e in P
    change_element: str     # retyped element in R of the change rule

    def directive(self, comatch: Mapping[str, str]) -> dict[str, str]:
        """Bind e to the co-image of the retyped element."""
        return {self.element: comatch[self.change_element]}


def synthesize_post_repair(rule: TypeChangeRule, c: Constraint, pbar: PBar) -> PostRepair:
    """Repair rule removing the connection of e with the premise after the change."""
    if pbar.embedding.target != c.premise:
        raise RepairError(f"P-bar was not built from the premise of {c.name}")
    repair = Rule(f"repair-{c.name}", c.premise, pbar.graph, pbar.graph,
                  pbar.embedding, GraphMorphism.identity(pbar.graph))
    return PostRepair(repair, pbar.element, rule.rule.right(rule.element))


# ── Plans ─────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RepairOption:
    strategy: Strategy
    rule: Rule
    seed: Mapping[str, str] = field(default_factory=dict)  # rule L → graph
    replaces_change: bool = False  # applies instead of the change, not after it


@dataclass
class RepairPlan:
    constraint: Constraint
    form: ConstraintForm
    cause: Cause
    witness: GraphMorphism
    options: list[RepairOption] = field(default_factory=list)

    @property
    def strategies(self) -> list[str]:
        return [str(o.strategy) for o in self.options]

    def ranked(self, order: Sequence[str]) -> list[RepairOption]:
        """Options in ``order``; strategies not listed keep their place at the end."""
        return sorted(self.options, key=lambda o: order.index(o.strategy) if o.strategy in order else len(order))

    def choose(self, order: Sequence[str]) -> RepairOption | None:
        ranked = self.ranked(order)
        return ranked[0] if ranked else None


def _witness_seed(c: Constraint, witness: GraphMorphism, element: str | None = None) -> dict[str, str]:
    """Seed for a rule whose L uses conclusion ids of ``c`` around its premise."""
    seed = {c.morphism(x) if c.morphism else x: witness(x) for x in c.premise.elements}
    if len(set(seed.values())) != len(seed) and element is not None:
        return {c.morphism(element) if c.morphism else element: witness(element)}
    return seed


def plan_form1(rule: TypeChangeRule, c: Constraint, witness: GraphMorphism,
               cause: Cause = Cause.LOST_REQUIRED_TYPE) -> RepairPlan:
    """Both F1 strategies: extend the change rule, or repair after it."""
    info = locate_form(c)
    pbar = build_pbar(c, info.element)
    plan = RepairPlan(c, ConstraintForm.F1, cause, witness)
    try:
        extended = synthesize_extend_rule(rule, c, pbar)
        plan.options.append(RepairOption(Strategy.EXTEND_RULE, extended.rule, replaces_change=True))
    except RepairError as exc:
        log.warning(f"Rule extension failed | rule={rule.name} | constraint={c.name} | error={exc}")
    post = synthesize_post_repair(rule, c, pbar)
    seed = {x: witness(x) for x in c.premise.elements}
    if len(set(seed.values())) != len(seed):
        seed = {pbar.element: witness(pbar.element)}
    plan.options.append(RepairOption(Strategy.POST_REPAIR, post.rule, seed))
    return plan


def handle_form2(rule: TypeChangeRule, c: Constraint, g: TypeAnnotatedGraph,
                 witness: GraphMorphism, cause: Cause) -> RepairPlan:
    """Options for an F2 constraint the change broke at ``witness`` (a premise match in ``g``)."""
    assert c.conclusion is not None and c.morphism is not None
    info = locate_form(c)
    y = info.element
    plan = RepairPlan(c, ConstraintForm.F2, cause, witness)
    seed = _witness_seed(c, witness)
    base = premise_with_types(c)

    if cause == Cause.LOST_SOLE_WITNESS:
        glued = glue(rule.rule.lhs, rule.rule.left(rule.element), c.conclusion, y)
        nac = ApplicationCondition(glued.inj_a, "negative", f"block-{c.name}")
        plan.options.append(RepairOption(Strategy.BLOCK_NAC, rule.rule.with_conditions(nac), replaces_change=True))

    create = Rule.from_graphs(f"create-{c.name}", base, base, c.conclusion)
    plan.options.append(RepairOption(Strategy.CREATE_TYPED_ELEMENT, create, seed))

    if cause == Cause.PREMISE_NOW_HOLDS:
        dropped = {x for a in info.new_annotations if a.element == y
                   for x in (a.node, a.annotates, a.with_edge)}
        connection = subgraph(c.conclusion, c.conclusion.elements - dropped)
        candidates = find_matches(connection, g.carrier, injective=c.injective, partial=seed)
        if candidates:
            annotate = Rule.from_graphs(f"annotate-{c.name}", connection, connection, c.conclusion)
            found = candidates[0]
            plan.options.append(RepairOption(Strategy.ADD_TYPE_ANNOTATION, annotate,
                                             {x: found(x) for x in connection.elements}))
    return plan


def _f3_premise(c: Constraint, info: FormInfo) -> BGraph:
    """Premise with types, minus the type annotation of e the change itself creates."""
    assert c.morphism is not None
    base = premise_with_types(c)
    view = TypeAnnotatedGraph(base)
    e = c.morphism(info.element)
    dropped = {x for a in view.type_annotations_of(e) if a.value in info.required_types
               for x in (a.node, a.annotates, a.with_edge)}
    return subgraph(base, base.elements - dropped)


def handle_form3(rule: TypeChangeRule, c: Constraint, g: TypeAnnotatedGraph,
                 witness: GraphMorphism, cause: Cause = Cause.PREMISE_NOW_HOLDS) -> RepairPlan:
    """Add the required pattern, in the change rule's R or by a repair afterwards."""
    assert c.conclusion is not None and c.morphism is not None
    info = locate_form(c)
    plan = RepairPlan(c, ConstraintForm.F3, cause, witness)
    if extends(g, c, witness):
        return plan

    e = c.morphism(info.element)
    reduced = _f3_premise(c, info)
    identity = {x: x for x in reduced.elements}
    try:
        extended = _extend_span(ExtendedRule.of(rule), c.name, e, reduced, reduced, c.conclusion,
                                identity, identity)
        plan.options.append(RepairOption(Strategy.EXTEND_RULE, extended.rule, replaces_change=True))
    except RepairError as exc:
        log.warning(f"Rule extension failed | rule={rule.name} | constraint={c.name} | error={exc}")

    base = premise_with_types(c)
    repair = Rule.from_graphs(f"complete-{c.name}", base, base, c.conclusion)
    plan.options.append(RepairOption(Strategy.POST_REPAIR, repair, _witness_seed(c, witness, info.element)))
    return plan


def plan_repair(rule: TypeChangeRule, c: Constraint, g: TypeAnnotatedGraph,
                witness: GraphMorphism, cause: Cause) -> RepairPlan | None:
    try:
        info = locate_form(c)
    except ConstraintFormError as exc:
        log.warning(f"No repair for unclassified constraint | constraint={c.name} | error={exc}")
        return None
    if info.form == ConstraintForm.F1:
        return plan_form1(rule, c, witness, cause)
    if info.form == ConstraintForm.F2:
        return handle_form2(rule, c, g, witness, cause)
    if info.form == ConstraintForm.F3:
        return handle_form3(rule, c, g, witness, cause)
    log.warning(f"No repair for untyped constraint | constraint={c.name}")
    return None


# ── Execution ─────────────────────────────────────────────────────────────────

def _apply(g: TypeAnnotatedGraph, rule: Rule, match: GraphMorphism, cleanup_orphans: bool) -> TypeAnnotatedGraph:
    """Apply ``rule``; annotations left anchored at deleted elements are removed first."""
    if cleanup_orphans:
        deleted = {match(x) for x in rule.lhs.elements - rule.left.image()}
        image = match.image()
        orphans = [a for x in sorted(deleted) for a in g.annotations_of(x) if a.node not in image]
        for ann in orphans:
            g = remove_annotation(g, ann)
        if orphans:
            log.info(f"Removed orphan annotations | rule={rule.name} | count={len(orphans)}")
            match = match.retarget(g.carrier)
    return TypeAnnotatedGraph(rewrite(rule, g.carrier, match).result)


def execute_option(g: TypeAnnotatedGraph, option: RepairOption,
                   cleanup_orphans: bool = True) -> TypeAnnotatedGraph | None:
    """Apply a post-change repair at its seed; None when it has no match."""
    matches = find_matches(option.rule.lhs, g.carrier, injective=True, partial=option.seed)
    if not matches:
        log.warning(f"Repair has no match | rule={option.rule.name} | strategy={option.strategy}")
        return None
    return _apply(g, option.rule, matches[0], cleanup_orphans)


@dataclass(frozen=True)
class TraceAction:
    constraint: str
    form: str
    cause: str
    strategy: str
    rule: str
    options: tuple[str, ...] = ()


@dataclass
class TraceRound:
    index: int
    actions: list[TraceAction]
    graph_hash: str
    well_formed: bool = True


@dataclass
class AdaptResult:
    graph: TypeAnnotatedGraph
    status: Status
    trace: list[TraceRound]
    residual: list[ConstraintVerdict]
    maintained: list[str]

    @property
    def rounds(self) -> int:
        return len(self.trace)


def _host_pairs(lhs_match: GraphMorphism, part: Mapping[str, str], host: BGraph) -> dict[str, str]:
    """Elements of the rule's L and of a constraint part that land on the same host element."""
    by_host: dict[str, str] = {}
    for y, h in sorted(part.items()):
        if h in host:
            by_host.setdefault(h, y)
    return {x: by_host[h] for x, h in lhs_match.mapping.items() if h in by_host}


def _extend_with(rule: TypeChangeRule, base: ExtendedRule | None, v: DetectedViolation, info: FormInfo,
                 host: BGraph, lhs_match: GraphMorphism) -> ExtendedRule:
    c = v.constraint
    if info.form == ConstraintForm.F1:
        part = {y: v.witness(y) for y in c.premise.elements}
        return synthesize_extend_rule(rule, c, build_pbar(c, info.element), base,
                                      _host_pairs(lhs_match, part, host))
    assert c.morphism is not None and c.conclusion is not None
    reduced = _f3_premise(c, info)
    identity = {x: x for x in reduced.elements}
    part = {c.morphism(p): v.witness(p) for p in c.premise.elements if c.morphism(p) in reduced}
    return _extend_span(base or ExtendedRule.of(rule), c.name, c.morphism(info.element),
                        reduced, reduced, c.conclusion, identity, identity, _host_pairs(lhs_match, part, host))


def _extend_for(rule: TypeChangeRule, violations: list[DetectedViolation], g: TypeAnnotatedGraph,
                match: GraphMorphism) -> tuple[ExtendedRule | None, list[TraceAction]]:
    """Glue every F1 premise and F3 conclusion the change breaks into one extended rule.

    Constraint parts are glued where their witness meets the match of the rule
    built so far. A constraint whose gluing fails, or whose extended rule no
    longer matches where the change did, is left to the repair rounds.
    """
    ext: ExtendedRule | None = None
    lhs_match = match
    actions = []
    seen: set[str] = set()
    for v in violations:
        c = v.constraint
        if c.name in seen:
            continue
        seen.add(c.name)
        try:
            info = locate_form(c)
        except ConstraintFormError:
            continue
        if info.form not in (ConstraintForm.F1, ConstraintForm.F3):
            continue
        try:
            candidate = _extend_with(rule, ext, v, info, g.carrier, lhs_match)
        except GraphError as exc:
            log.warning(f"Rule extension failed | rule={rule.name} | constraint={c.name} | error={exc}")
            continue
        lifted = candidate.lift_match(match, g.carrier)
        if lifted is None:
            log.warning(f"Extended rule does not match | rule={candidate.rule.name} | constraint={c.name}")
            continue
        ext, lhs_match = candidate, lifted
        actions.append(TraceAction(c.name, str(info.form), str(v.cause), str(Strategy.EXTEND_RULE), ext.rule.name))
    return ext, actions


def apply_with_repairs(
    g: TypeAnnotatedGraph,
    rule: TypeChangeRule,
    match: GraphMorphism,
    constraints: Sequence[Constraint],
    policy: str | None = None,
    max_cascade: int | None = None,
    option_order: Sequence[str] | None = None,
    cleanup_orphans: bool | None = None,
) -> AdaptResult:
    """Apply a type change, then repair in rounds.

    Only constraints holding before the change are maintained. Each round
    repairs every violated one once; the result is ``unconverged`` when the
    round budget is spent with violations left, and ``blocked`` when a
    negative condition vetoes the change.
    """
    defaults = DEFAULT_CONFIG["adapt"]
    policy = policy or defaults["policy"]
    max_cascade = defaults["max_cascade"] if max_cascade is None else max_cascade
    option_order = list(option_order or defaults["option_order"])
    cleanup = defaults["cleanup_orphans"] if cleanup_orphans is None else cleanup_orphans
    if policy not in ("post", "extend"):
        raise ValueError(f"unknown repair policy: {policy}")

    maintained = [c for c in constraints if check_constraint(g, c).satisfied]
    log.info(f"Adapting | rule={rule.name} | policy={policy} | maintained={len(maintained)} | budget={max_cascade}")
    trace: list[TraceRound] = []
    current = TypeAnnotatedGraph(rewrite(rule.rule, g.carrier, match).result)

    if policy == "extend":
        ext, actions = _extend_for(rule, _violations(g, current, maintained), g, match)
        if ext is not None:
            lifted = ext.lift_match(match, g.carrier)
            if lifted is None:
                raise RepairError(f"extended rule {ext.rule.name} does not match where {rule.name} did")
            current = _apply(g, ext.rule, lifted, cleanup)
            trace.append(TraceRound(0, actions, canonical_hash(current.carrier),
                                    not check_well_formed(current)))

    previous = g
    status: Status = "converged"
    repair_rounds = 0
    while True:
        violated = [c for c in maintained if not check_constraint(current, c).satisfied]
        if not violated:
            break
        if repair_rounds >= max_cascade:
            status = "unconverged"
            break
        repair_rounds += 1
        actions = []
        start = current
        for c in violated:
            verdict = check_constraint(current, c)
            if verdict.satisfied:
                continue
            witness = verdict.witnesses[0]
            cause = classify_cause(previous, c, witness)
            plan = plan_repair(rule, c, current, witness, cause)
            if plan is None:
                continue
            if plan.form == ConstraintForm.F2:
                ranked = plan.ranked(option_order)
            else:
                # the change already happened, only repairs applied after it remain
                ranked = [o for o in plan.options if not o.replaces_change]
            for option in ranked:
                action = TraceAction(c.name, str(plan.form), str(cause), str(option.strategy),
                                     option.rule.name, tuple(plan.strategies))
                if option.strategy == Strategy.BLOCK_NAC:
                    if check_application(option.rule, g.carrier, match):
                        log.info(f"Change blocked | rule={rule.name} | constraint={c.name}")
                        trace.append(TraceRound(repair_rounds, [action], canonical_hash(g.carrier)))
                        return AdaptResult(g, "blocked", trace, [], [m.name for m in maintained])
                    continue
                repaired = execute_option(current, option, cleanup)
                if repaired is None:
                    continue
                current = repaired
                actions.append(action)
                log.info(f"Repair applied | round={repair_rounds} | constraint={c.name} | "
                         f"strategy={option.strategy}")
                break

        well_formed = not check_well_formed(current)
        if not well_formed:
            log.warning(f"Repair round left an ill-formed graph | round={repair_rounds}")
        trace.append(TraceRound(repair_rounds, actions, canonical_hash(current.carrier), well_formed))
        previous = start
        if not actions:
            status = "unconverged"
            break

    residual = [v for v in (check_constraint(current, c) for c in maintained) if not v.satisfied]
    log.info(f"Adaptation finished | rule={rule.name} | status={status} | rounds={len(trace)} | "
             f"residual={len(residual)}")
    return AdaptResult(current, status, trace, residual, [c.name for c in maintained])
