"""
Case-study fixtures built in code.

Each scenario returns a :class:`Workspace`; ``build_workspace`` merges them all
and ``annograph corpus DIR`` writes them out as files, one directory per
scenario and one file per artifact.
"""

from collections.abc import Callable

from annograph.adapt import change_type_rule
from annograph.annotation import Kind, TypeAnnotatedGraph, TypeHierarchy, add_annotation, annotate_with_bundle
from annograph.bgraph import BGraph, GraphBuilder, GraphMorphism, TypedGraph, apply_rule
from annograph.patterns import Constraint, Pattern
from annograph.serialize import Workspace


class _Sketch:
    """Chainable builder with explicit ids, so fixtures read like their drawings."""

    def __init__(self, base: BGraph | None = None):
        self.builder = GraphBuilder(base)

    def node(self, x: str, name: str | None = None, kind: Kind = Kind.INSTANCE) -> "_Sketch":
        self.builder.add_node(x, kind, name)
        return self

    def type(self, x: str, name: str) -> "_Sketch":
        return self.node(x, name, Kind.TYPE)

    def edge(self, x: str, src: str, tgt: str, name: str | None = None,
             kind: Kind = Kind.INSTANCE) -> "_Sketch":
        self.builder.add_edge(src, tgt, x, kind, name)
        return self

    def type_edge(self, x: str, src: str, tgt: str, name: str) -> "_Sketch":
        return self.edge(x, src, tgt, name, Kind.TYPE)

    def ann(self, element: str, value: str, node_id: str | None = None) -> "_Sketch":
        add_annotation(self.builder, element, value, node_id or f"a_{element}_{value}")
        return self

    def done(self) -> BGraph:
        return self.builder.freeze()


def _f1(name: str, premise: BGraph, element: str, type_id: str, type_name: str) -> Constraint:
    """Every match of ``premise`` must annotate ``element`` with the type named ``type_name``."""
    conclusion = _Sketch(premise).type(type_id, type_name).ann(element, type_id).done()
    return Constraint.from_graphs(name, "F1", premise, conclusion,
                                  element=element, required_type=type_id)


def _typed_successor(name: str, edge_name: str, source_type: str, target_type: str) -> Constraint:
    """F2: an element typed ``source_type`` needs a ``edge_name`` successor typed ``target_type``."""
    premise = _Sketch().node("x").type("tS", source_type).ann("x", "tS").done()
    conclusion = (_Sketch(premise).type("tT", target_type).node("y")
                  .edge("link", "x", "y", edge_name).ann("y", "tT").done())
    return Constraint.from_graphs(name, "F2", premise, conclusion, element="y", required_type="tT")


# ── Driver ────────────────────────────────────────────────────────────────────

def _driver_types() -> _Sketch:
    return (_Sketch()
            .type("T_Person", "Person").type("T_Male", "Male").type("T_Female", "Female")
            .type("T_Boolean", "Boolean")
            .type_edge("T_canDrive", "T_Person", "T_Boolean", "canDrive"))


def driver() -> Workspace:
    bruce = (_driver_types()
             .node("bruce", "Bruce").node("yes", "true")
             .edge("drives", "bruce", "yes")
             .ann("bruce", "T_Person").ann("bruce", "T_Male").ann("yes", "T_Boolean")
             .ann("drives", "T_canDrive")
             .done())
    premise = (_Sketch()
               .node("x").node("v").edge("d", "x", "v")
               .type("tP", "Person").type("tB", "Boolean").type_edge("tcd", "tP", "tB", "canDrive")
               .ann("x", "tP", "ap").ann("d", "tcd", "ad")
               .done())

    ws = Workspace()
    ws.register("graph", "bruce", TypeAnnotatedGraph(bruce))
    ws.register("rule", "FromMaleToFemale", change_type_rule("FromMaleToFemale", "node", "Male", "Female"))
    ws.register("constraint", "DriverIsMale", _f1("DriverIsMale", premise, "x", "tM", "Male"))
    return ws


# ── Planets ───────────────────────────────────────────────────────────────────

_BODY_TYPES = (("T_Planet", "Planet"), ("T_Dwarf", "DwarfPlanet"), ("T_SSSB", "SmallSolarSystemBody"),
               ("T_Comet", "Comet"), ("T_Minor", "MinorPlanet"))


def _sky() -> _Sketch:
    sketch = _Sketch()
    for x, name in _BODY_TYPES:
        sketch.type(x, name)
    for x in ("Sun", "round", "irregular", "cleared", "notCleared"):
        sketch.node(x, x)
    return sketch


def _criteria(shape: str, neighbourhood: str | None) -> BGraph:
    sketch = (_Sketch()
              .node("x").node("sun", "Sun").node("s", shape)
              .edge("o", "x", "sun", "orbits").edge("sh", "x", "s", "shape"))
    if neighbourhood is not None:
        sketch.node("n", neighbourhood).edge("nb", "x", "n", "neighbourhood")
    return sketch.done()


def planets() -> Workspace:
    pluto = (_sky()
             .node("pluto", "Pluto")
             .edge("pluto_orbits", "pluto", "Sun", "orbits")
             .edge("pluto_shape", "pluto", "round", "shape")
             .edge("pluto_neighbourhood", "pluto", "notCleared", "neighbourhood")
             .ann("pluto", "T_Planet")
             .done())
    chiron = (_sky()
              .node("chiron", "Chiron")
              .edge("chiron_orbits", "chiron", "Sun", "orbits")
              .edge("chiron_shape", "chiron", "irregular", "shape")
              .ann("chiron", "T_Comet").ann("chiron", "T_Minor")
              .done())
    rule = change_type_rule("fromPlanetToDwarf", "node", "Planet", "DwarfPlanet")
    host = TypeAnnotatedGraph(pluto)
    pluto_post = apply_rule(rule.rule, pluto, rule.matches(host)[0])

    ws = Workspace()
    ws.register("graph", "pluto", host)
    ws.register("graph", "pluto-post", TypeAnnotatedGraph(pluto_post))
    ws.register("graph", "chiron", TypeAnnotatedGraph(chiron))
    ws.register("rule", "fromPlanetToDwarf", rule)
    ws.register("constraint", "isPlanet", _f1("isPlanet", _criteria("round", "cleared"), "x", "tPl", "Planet"))
    ws.register("constraint", "isDwarfPlanet",
                _f1("isDwarfPlanet", _criteria("round", "notCleared"), "x", "tDw", "DwarfPlanet"))
    ws.register("constraint", "isSSSB",
                _f1("isSSSB", _criteria("irregular", None), "x", "tSB", "SmallSolarSystemBody"))
    return ws


# ── Credentials ───────────────────────────────────────────────────────────────

ROLES = TypeHierarchy(
    parent={"T_CivilServant": "T_TopRole", "T_AgencyAManager": "T_CivilServant",
            "T_AgencyBManager": "T_CivilServant", "T_Arbitrator": "T_TopRole"},
    top={"node": "T_TopRole"},
)


def credentials() -> Workspace:
    sketch = _Sketch()
    for t in sorted(ROLES.types()):
        sketch.type(t, t.removeprefix("T_"))
    g = TypeAnnotatedGraph(sketch.node("anna", "Anna").node("ben", "Ben").done())
    g = annotate_with_bundle(g, "anna", ROLES, "T_AgencyAManager")
    g = annotate_with_bundle(g, "ben", ROLES, "T_Arbitrator")

    ws = Workspace()
    ws.register("hierarchy", "roles", ROLES)
    ws.register("graph", "credentials", g)
    return ws


# ── OO roles ──────────────────────────────────────────────────────────────────

def oo_roles() -> Workspace:
    maria = (_Sketch()
             .type("T_Person", "Person").type("T_Student", "Student").type("T_Employee", "Employee")
             .node("maria", "Maria")
             .ann("maria", "T_Person").ann("maria", "T_Student").ann("maria", "T_Employee")
             .done())
    ws = Workspace()
    ws.register("graph", "maria", TypeAnnotatedGraph(maria))
    return ws


# ── Cascades ──────────────────────────────────────────────────────────────────

def pingpong() -> Workspace:
    """Two F2 constraints feeding each other: repairs never settle."""
    g = _Sketch().type("T_A", "A").type("T_B", "B").type("T_C", "C").node("n0").ann("n0", "T_C").done()
    ws = Workspace()
    ws.register("graph", "pingpong", TypeAnnotatedGraph(g))
    ws.register("rule", "CToA", change_type_rule("CToA", "node", "C", "A"))
    ws.register("constraint", "NeedsB", _typed_successor("NeedsB", "next", "A", "B"))
    ws.register("constraint", "NeedsA", _typed_successor("NeedsA", "next", "B", "A"))
    return ws


def projects() -> Workspace:
    g = (_Sketch()
         .type("T_Project", "Project").type("T_Draft", "Draft")
         .type("T_Manager", "Manager").type("T_Engineer", "Engineer")
         .node("p1", "Apollo").node("p2", "Gemini").node("alice", "Alice").node("bob", "Bob")
         .edge("m1", "p1", "alice", "member").edge("m2", "p2", "bob", "member")
         .ann("p1", "T_Project").ann("alice", "T_Manager")
         .ann("p2", "T_Draft").ann("bob", "T_Engineer")
         .done())
    ws = Workspace()
    ws.register("graph", "projects", TypeAnnotatedGraph(g))
    ws.register("rule", "ManagerToEngineer", change_type_rule("ManagerToEngineer", "node", "Manager", "Engineer"))
    ws.register("rule", "DraftToProject", change_type_rule("DraftToProject", "node", "Draft", "Project"))
    ws.register("constraint", "ProjectHasManager", _typed_successor("ProjectHasManager", "member", "Project", "Manager"))
    return ws


def accounts() -> Workspace:
    base = _Sketch().type("T_Account", "Account").type("T_Lead", "Lead").node("n", "Acme").ann("n", "T_Lead")
    owned = (_Sketch(base.done()).node("o", "Carol").edge("own", "n", "o", "owner").done())
    premise = _Sketch().node("x").type("tA", "Account").ann("x", "tA").done()
    conclusion = _Sketch(premise).node("o").edge("owner", "x", "o", "owner").done()

    ws = Workspace()
    ws.register("graph", "accounts", TypeAnnotatedGraph(base.done()))
    ws.register("graph", "accounts-owned", TypeAnnotatedGraph(owned))
    ws.register("rule", "LeadToAccount", change_type_rule("LeadToAccount", "node", "Lead", "Account"))
    ws.register("constraint", "AccountHasOwner",
                Constraint.from_graphs("AccountHasOwner", "F3", premise, conclusion, element="x"))
    return ws


# ── Classic typing ────────────────────────────────────────────────────────────

def typing() -> Workspace:
    instance = _Sketch().node("bruce", "Bruce").node("yes", "true").edge("drives", "bruce", "yes").done()
    instance = _plain(instance)
    type_graph = (_Sketch().node("Person", "Person").node("Boolean", "Boolean")
                  .edge("canDrive", "Person", "Boolean", "canDrive").done())
    type_graph = _plain(type_graph)
    typing_map = GraphMorphism.from_mapping(instance, type_graph,
                                            {"bruce": "Person", "yes": "Boolean", "drives": "canDrive"})

    g0 = _Sketch().node("x").type("tP", "Person").ann("x", "tP").done()
    g1 = _Sketch(g0).type("tM", "Male").ann("x", "tM").done()

    ws = Workspace()
    ws.register("typed-graph", "bruce-typed", TypedGraph(instance, type_graph, typing_map))
    ws.register("pattern", "male-person", Pattern((g0, g1), {1: (0, GraphMorphism.inclusion(g0, g1))}))
    return ws


def _plain(g: BGraph) -> BGraph:
    """Drop kind flags; classic typed graphs carry names only."""
    builder = GraphBuilder(g)
    builder.kinds.clear()
    return builder.freeze()


SCENARIOS: dict[str, Callable[[], Workspace]] = {
    "driver": driver,
    "planets": planets,
    "credentials": credentials,
    "oo-roles": oo_roles,
    "pingpong": pingpong,
    "projects": projects,
    "accounts": accounts,
    "typing": typing,
}


def build_workspace() -> Workspace:
    ws = Workspace()
    for build in SCENARIOS.values():
        ws.merge(build())
    return ws
