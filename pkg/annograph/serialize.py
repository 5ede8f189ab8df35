"""
Reading and writing artifacts.

Every artifact is one document with an ``artifact`` field naming what it is
(graph, typed-graph, rule, constraint, hierarchy, pattern) and a ``name``; a
``workspace`` document bundles several. Annotations are stored as the plain
nodes and edges they are, flagged by ``kind``. Files ending in ``.json`` are
JSON, ``.yml``/``.yaml`` are YAML; output is canonical (sorted keys, fixed
indent) so saving what was loaded reproduces the file byte for byte.
"""

import json
import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from annograph.adapt import TypeChangeRule
from annograph.annotation import Kind, TypeAnnotatedGraph, TypeHierarchy
from annograph.bgraph import (
    AnnographError,
    ApplicationCondition,
    BGraph,
    GraphBuilder,
    GraphMorphism,
    Rule,
    TypedGraph,
    Violation,
    validate_bgraph,
    validate_morphism,
)
from annograph.patterns import Constraint, Pattern

log = logging.getLogger("annograph")

ARTIFACTS = ("graph", "typed-graph", "rule", "constraint", "hierarchy", "pattern")
KINDS = {k.value for k in Kind}
SUFFIXES = (".json", ".yml", ".yaml")


class SchemaError(AnnographError):
    def __init__(self, message: str, file: str | None = None, field: str | None = None,
                 line: int | None = None, violations: list[Violation] | None = None):
        self.file, self.field, self.line = file, field, line
        self.violations = violations or []
        where = ":".join(str(p) for p in (file, line) if p is not None)
        prefix = f"{where}: " if where else ""
        suffix = f" (at {field})" if field else ""
        super().__init__(f"{prefix}{message}{suffix}")


# ── Workspace ─────────────────────────────────────────────────────────────────

@dataclass
class Workspace:
    graphs: dict[str, TypeAnnotatedGraph] = field(default_factory=dict)
    typed_graphs: dict[str, TypedGraph] = field(default_factory=dict)
    rules: dict[str, Rule | TypeChangeRule] = field(default_factory=dict)
    constraints: dict[str, Constraint] = field(default_factory=dict)
    hierarchies: dict[str, TypeHierarchy] = field(default_factory=dict)
    patterns: dict[str, Pattern] = field(default_factory=dict)

    def table(self, artifact: str) -> dict:
        return {
            "graph": self.graphs, "typed-graph": self.typed_graphs, "rule": self.rules,
            "constraint": self.constraints, "hierarchy": self.hierarchies, "pattern": self.patterns,
        }[artifact]

    def register(self, artifact: str, name: str, value: Any) -> None:
        """Add a validated artifact; invalid ones are refused with their violations."""
        report = _validate(artifact, value)
        if report:
            raise SchemaError(f"{artifact} {name} is invalid: {report[0]}", field=name, violations=report)
        table = self.table(artifact)
        if name in table:
            raise SchemaError(f"duplicate {artifact} name {name}", field=name)
        table[name] = value

    def merge(self, other: "Workspace") -> None:
        for artifact, name, value in other.items():
            self.register(artifact, name, value)

    def items(self) -> Iterator[tuple[str, str, Any]]:
        for artifact in ARTIFACTS:
            for name, value in sorted(self.table(artifact).items()):
                yield artifact, name, value

    def names(self) -> dict[str, list[str]]:
        return {artifact: sorted(self.table(artifact)) for artifact in ARTIFACTS}

    def get(self, artifact: str, name: str) -> Any:
        table = self.table(artifact)
        if name not in table:
            raise KeyError(f"no {artifact} named {name}")
        return table[name]

    def __len__(self) -> int:
        return sum(len(self.table(a)) for a in ARTIFACTS)


def _validate(artifact: str, value: Any) -> list[Violation]:
    if artifact == "graph":
        return validate_bgraph(value.carrier)
    if artifact in ARTIFACTS:
        return value.validate()
    return [Violation("unknownArtifact", (artifact,), f"unknown artifact {artifact}")]


# ── Writing ───────────────────────────────────────────────────────────────────

def _labels(g: BGraph, x: str) -> dict[str, str]:
    out = {}
    if x in g.kinds:
        out["kind"] = str(g.kinds[x])
    if x in g.names:
        out["name"] = g.names[x]
    return out


def graph_to_dict(g: BGraph) -> dict:
    doc: dict[str, Any] = {
        "nodes": [{"id": x, **_labels(g, x)} for x in sorted(g.nodes)],
        "edges": [{"id": e, "src": g.src[e], "tgt": g.tgt[e], **_labels(g, e),
                   **({"link": True} if e in g.edge_links else {})} for e in sorted(g.edges)],
        "boxes": [{"id": b, "contains": sorted(g.contents(b)), **_labels(g, b)} for b in sorted(g.boxes)],
    }
    if g.counter:
        doc["counter"] = g.counter
    return doc


def _mapping(m: GraphMorphism) -> dict[str, str]:
    return dict(sorted(m.mapping.items()))


def to_document(artifact: str, name: str, value: Any) -> dict:
    doc: dict[str, Any] = {"artifact": artifact, "name": name}
    if artifact == "graph":
        doc["graph"] = graph_to_dict(value.carrier)
    elif artifact == "typed-graph":
        doc.update(instance=graph_to_dict(value.instance), type_graph=graph_to_dict(value.type_graph),
                   typing=_mapping(value.typing))
    elif artifact == "rule":
        rule = value.rule if isinstance(value, TypeChangeRule) else value
        doc.update(lhs=graph_to_dict(rule.lhs), interface=graph_to_dict(rule.interface),
                   rhs=graph_to_dict(rule.rhs), left=_mapping(rule.left), right=_mapping(rule.right))
        if rule.conditions:
            doc["conditions"] = [{"name": ac.name, "polarity": ac.polarity,
                                  "graph": graph_to_dict(ac.morphism.target),
                                  "morphism": _mapping(ac.morphism)} for ac in rule.conditions]
        if isinstance(value, TypeChangeRule):
            doc["type_change"] = {"sort": value.sort, "element": value.element,
                                  "old_type": value.old_type, "new_type": value.new_type}
    elif artifact == "constraint":
        doc.update(form=value.kind, premise=graph_to_dict(value.premise), injective=value.injective)
        if value.conclusion is not None and value.morphism is not None:
            doc.update(conclusion=graph_to_dict(value.conclusion), morphism=_mapping(value.morphism))
        if value.element is not None:
            doc["element"] = value.element
        if value.required_type is not None:
            doc["required_type"] = value.required_type
    elif artifact == "hierarchy":
        doc.update(parent=dict(sorted(value.parent.items())), top=dict(sorted(value.top.items())))
    elif artifact == "pattern":
        doc["graphs"] = [graph_to_dict(g) for g in value.graphs]
        doc["tree"] = [{"child": j, "parent": i, "morphism": _mapping(m)}
                       for j, (i, m) in sorted(value.tree.items())]
    return doc


def workspace_document(ws: Workspace) -> dict:
    return {"artifact": "workspace",
            "artifacts": [to_document(a, n, v) for a, n, v in ws.items()]}


def dumps(doc: Mapping, fmt: str = "json", indent: int = 2) -> str:
    if fmt == "json":
        return json.dumps(doc, indent=indent, sort_keys=True, ensure_ascii=False) + "\n"
    return yaml.safe_dump(dict(doc), sort_keys=True, indent=indent, default_flow_style=False, allow_unicode=True)


def _format_of(path: Path) -> str:
    if path.suffix == ".json":
        return "json"
    if path.suffix in (".yml", ".yaml"):
        return "yaml"
    raise SchemaError(f"unsupported file type {path.suffix or '<none>'}", file=str(path))


def save(ws: Workspace, path: str | Path, indent: int = 2) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(workspace_document(ws), _format_of(path), indent))
    log.debug(f"Saved workspace | path={path} | artifacts={len(ws)}")
    return path


def save_artifact(artifact: str, name: str, value: Any, path: str | Path, indent: int = 2) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(to_document(artifact, name, value), _format_of(path), indent))
    return path


# ── Reading ───────────────────────────────────────────────────────────────────

Path_ = tuple[str | int, ...]


def _render(path: Path_) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


class _Reader:
    """Field access with diagnostics that point at the offending line."""

    def __init__(self, file: str, text: str):
        self.file = file
        try:
            self.root = yaml.compose(text)
        except yaml.YAMLError:
            self.root = None

    def line(self, path: Path_) -> int | None:
        node = self.root
        if node is None:
            return None
        line = node.start_mark.line + 1
        for part in path:
            nxt = None
            if isinstance(node, yaml.MappingNode):
                nxt = next((v for k, v in node.value if k.value == part), None)
            elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
                nxt = node.value[part]
            if nxt is None:
                break
            node, line = nxt, nxt.start_mark.line + 1
        return line

    def fail(self, path: Path_, message: str, violations: list[Violation] | None = None):
        raise SchemaError(message, self.file, _render(path) or None, self.line(path), violations)

    def get(self, data: Any, path: Path_, key: str, expected: type | tuple = str,
            required: bool = True, default: Any = None, what: str = "") -> Any:
        if not isinstance(data, dict):
            self.fail(path, "expected a mapping")
        if key not in data:
            if required:
                self.fail(path, f"{what + ': ' if what else ''}missing required field '{key}'")
            return default
        value = data[key]
        if not isinstance(value, expected) or isinstance(value, bool) and expected is int:
            self.fail(path + (key,), f"{what + ': ' if what else ''}field '{key}' has the wrong type")
        return value

    def labels(self, item: dict, path: Path_) -> tuple[str | None, str | None]:
        kind = self.get(item, path, "kind", required=False)
        if kind is not None and kind not in KINDS:
            self.fail(path + ("kind",), f"unknown element kind {kind}")
        return kind, self.get(item, path, "name", required=False)

    def graph(self, data: Any, path: Path_) -> BGraph:
        if not isinstance(data, dict):
            self.fail(path, "expected a graph")
        builder = GraphBuilder()

        def new_id(item: dict, p: Path_, what: str) -> str:
            x = self.get(item, p, "id", what=what)
            if x in builder:
                self.fail(p + ("id",), f"duplicate id {x}")
            return x

        for i, item in enumerate(self.get(data, path, "nodes", list, required=False, default=[])):
            p = path + ("nodes", i)
            builder.add_node(new_id(item, p, "node"), *self.labels(item, p))
        boxes = self.get(data, path, "boxes", list, required=False, default=[])
        for i, item in enumerate(boxes):
            p = path + ("boxes", i)
            builder.add_box(new_id(item, p, "box"), (), *self.labels(item, p))
        for i, item in enumerate(self.get(data, path, "edges", list, required=False, default=[])):
            p = path + ("edges", i)
            what = f"edge {item.get('id', f'#{i}')}" if isinstance(item, dict) else f"edge #{i}"
            e = new_id(item, p, what)
            src = self.get(item, p, "src", what=what)
            tgt = self.get(item, p, "tgt", what=what)
            link = self.get(item, p, "link", bool, required=False, default=False)
            builder.add_edge(src, tgt, e, *self.labels(item, p), link=link)
        for i, item in enumerate(boxes):
            p = path + ("boxes", i)
            for j, x in enumerate(self.get(item, p, "contains", list, required=False, default=[])):
                if not isinstance(x, str):
                    self.fail(p + ("contains", j), "expected an element id")
                if x not in builder:
                    self.fail(p + ("contains",), f"box {item['id']} contains unknown element {x}")
                builder.contain(item["id"], x)
        builder.counter = self.get(data, path, "counter", int, required=False, default=0)

        g = builder.freeze()
        report = validate_bgraph(g)
        if report:
            self.fail(path, f"invalid graph: {report[0]}", report)
        return g

    def morphism(self, data: Any, path: Path_, source: BGraph, target: BGraph,
                 default_identity: bool = False) -> GraphMorphism:
        if data is None and default_identity:
            return GraphMorphism.inclusion(source, target)
        if not isinstance(data, dict):
            self.fail(path, "expected an element map")
        m = GraphMorphism.from_mapping(source, target, data)
        report = validate_morphism(m)
        if report:
            self.fail(path, f"invalid morphism: {report[0]}", report)
        return m


def _read_artifact(r: _Reader, doc: Any, path: Path_) -> tuple[str, str, Any]:
    artifact = r.get(doc, path, "artifact")
    if artifact not in ARTIFACTS:
        r.fail(path + ("artifact",), f"unknown artifact {artifact}")
    name = r.get(doc, path, "name")

    if artifact == "graph":
        return artifact, name, TypeAnnotatedGraph(r.graph(r.get(doc, path, "graph", dict), path + ("graph",)))

    if artifact == "typed-graph":
        instance = r.graph(r.get(doc, path, "instance", dict), path + ("instance",))
        type_graph = r.graph(r.get(doc, path, "type_graph", dict), path + ("type_graph",))
        typing = r.morphism(r.get(doc, path, "typing", dict), path + ("typing",), instance, type_graph)
        return artifact, name, TypedGraph(instance, type_graph, typing)

    if artifact == "rule":
        lhs = r.graph(r.get(doc, path, "lhs", dict), path + ("lhs",))
        interface = r.graph(r.get(doc, path, "interface", dict), path + ("interface",))
        rhs = r.graph(r.get(doc, path, "rhs", dict), path + ("rhs",))
        left = r.morphism(doc.get("left"), path + ("left",), interface, lhs, default_identity=True)
        right = r.morphism(doc.get("right"), path + ("right",), interface, rhs, default_identity=True)
        conditions = []
        for i, item in enumerate(r.get(doc, path, "conditions", list, required=False, default=[])):
            p = path + ("conditions", i)
            graph = r.graph(r.get(item, p, "graph", dict), p + ("graph",))
            m = r.morphism(item.get("morphism"), p + ("morphism",), lhs, graph, default_identity=True)
            polarity = r.get(item, p, "polarity", required=False, default="negative")
            if polarity not in ("positive", "negative"):
                r.fail(p + ("polarity",), f"unknown polarity {polarity}")
            conditions.append(ApplicationCondition(m, polarity, r.get(item, p, "name", required=False, default="")))
        rule = Rule(name, lhs, interface, rhs, left, right, tuple(conditions))
        change = r.get(doc, path, "type_change", dict, required=False)
        if change is None:
            return artifact, name, rule
        p = path + ("type_change",)
        sort = r.get(change, p, "sort")
        if sort not in ("node", "edge", "box"):
            r.fail(p + ("sort",), f"unknown sort {sort}")
        return artifact, name, TypeChangeRule(rule, sort, r.get(change, p, "element"),
                                              r.get(change, p, "old_type"), r.get(change, p, "new_type"))

    if artifact == "constraint":
        form = r.get(doc, path, "form")
        if form not in ("positive", "forbidden", "F1", "F2", "F3"):
            r.fail(path + ("form",), f"unknown constraint form {form}")
        premise = r.graph(r.get(doc, path, "premise", dict), path + ("premise",))
        conclusion = morphism = None
        if form != "forbidden":
            conclusion = r.graph(r.get(doc, path, "conclusion", dict), path + ("conclusion",))
            morphism = r.morphism(doc.get("morphism"), path + ("morphism",), premise, conclusion,
                                  default_identity=True)
        return artifact, name, Constraint(
            name, form, premise, conclusion, morphism,
            element=r.get(doc, path, "element", required=False),
            required_type=r.get(doc, path, "required_type", required=False),
            injective=r.get(doc, path, "injective", bool, required=False, default=False),
        )

    if artifact == "hierarchy":
        parent = r.get(doc, path, "parent", dict, required=False, default={})
        top = r.get(doc, path, "top", dict)
        return artifact, name, TypeHierarchy(dict(parent), dict(top))

    graphs = [r.graph(g, path + ("graphs", i))
              for i, g in enumerate(r.get(doc, path, "graphs", list))]
    tree = {}
    for i, item in enumerate(r.get(doc, path, "tree", list, required=False, default=[])):
        p = path + ("tree", i)
        child, parent = r.get(item, p, "child", int), r.get(item, p, "parent", int)
        if not (0 <= parent < len(graphs) and 0 < child < len(graphs)):
            r.fail(p, f"tree edge {parent}→{child} names no graph")
        tree[child] = (parent, r.morphism(item.get("morphism"), p + ("morphism",),
                                          graphs[parent], graphs[child], default_identity=True))
    return artifact, name, Pattern(tuple(graphs), tree)


def _parse(path: Path) -> tuple[_Reader, Any]:
    text = path.read_text()
    r = _Reader(str(path), text)
    try:
        data = json.loads(text) if _format_of(path) == "json" else yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc.msg}", str(path), line=exc.lineno) from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SchemaError(f"malformed YAML: {exc}", str(path), line=mark.line + 1 if mark else None) from exc
    if not isinstance(data, dict):
        raise SchemaError("expected a document mapping", str(path), line=1)
    return r, data


def load_file(path: str | Path) -> Workspace:
    path = Path(path)
    r, data = _parse(path)
    ws = Workspace()
    if data.get("artifact") == "workspace":
        docs = [(("artifacts", i), doc) for i, doc in enumerate(r.get(data, (), "artifacts", list))]
    else:
        docs = [((), data)]
    for p, doc in docs:
        artifact, name, value = _read_artifact(r, doc, p)
        try:
            ws.register(artifact, name, value)
        except SchemaError as exc:
            raise SchemaError(str(exc), str(path), _render(p + ("name",)) or "name",
                              r.line(p), exc.violations) from exc
    return ws


def load(path: str | Path) -> Workspace:
    """A workspace from one file, or from every artifact file of a directory tree."""
    path = Path(path)
    if not path.exists():
        raise SchemaError("no such file or directory", str(path))
    if path.is_file():
        ws = load_file(path)
    else:
        ws = Workspace()
        for f in sorted(p for p in path.rglob("*") if p.suffix in SUFFIXES):
            ws.merge(load_file(f))
    log.debug(f"Loaded workspace | path={path} | artifacts={len(ws)}")
    return ws
