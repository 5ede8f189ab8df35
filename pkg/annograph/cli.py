#!/usr/bin/env python3
"""
annograph command line.

Every subcommand prints one JSON report on stdout; logs go to stderr.
Exit code 0 = all checks passed / the application succeeded, 1 = a check
failed or a rule was not applicable, 2 = bad input (unknown name, schema
error, usage error).
"""

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any

from annograph import corpus
from annograph.adapt import TypeChangeRule, apply_with_repairs
from annograph.annotation import TypeAnnotatedGraph, TypeHierarchy, check_correct_typing, check_well_formed
from annograph.bgraph import (
    AnnographError,
    GraphError,
    GraphMorphism,
    Rule,
    RuleApplicationError,
    Violation,
    canonical_hash,
    find_matches,
    rewrite,
)
from annograph.config import load_config
from annograph.functor import build_correspondences, extract_typed, satisfies_ann_type_patterns, type_ann_ob
from annograph.logger import setup_logger
from annograph.patterns import check_constraints, satisfies_pattern
from annograph.serialize import (
    SUFFIXES,
    SchemaError,
    Workspace,
    graph_to_dict,
    load,
    save_artifact,
    to_document,
)

log = logging.getLogger("annograph")

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2


class UsageError(AnnographError):
    pass


@dataclass
class CommandResult:
    code: int
    report: dict[str, Any]
    indent: int = 2


# ── Reports ───────────────────────────────────────────────────────────────────

def _violations(report: Sequence[Violation]) -> list[dict]:
    return [{"constraint": v.constraint, "elements": list(v.elements), "message": v.message} for v in report]


def _mapping(m: GraphMorphism) -> dict[str, str]:
    return dict(sorted(m.mapping.items()))


def _graph_report(g: TypeAnnotatedGraph) -> dict:
    return {"graph": graph_to_dict(g.carrier), "hash": canonical_hash(g.carrier)}


# ── Session ───────────────────────────────────────────────────────────────────

class _Session:
    """Resolves artifact references: a file or directory path, else a workspace name."""

    def __init__(self, config: dict, workspace: str | None):
        self.config = config
        self.workspace_path = workspace or config.get("cli", {}).get("workspace")

    @cached_property
    def workspace(self) -> Workspace:
        if self.workspace_path:
            return load(self.workspace_path)
        return corpus.build_workspace()

    def resolve_all(self, artifact: str, ref: str) -> list[tuple[str, Any]]:
        path = Path(ref)
        if path.exists() and (path.is_dir() or path.suffix in SUFFIXES):
            found = sorted(load(path).table(artifact).items())
            if not found:
                raise UsageError(f"{ref} holds no {artifact}")
            return found
        try:
            return [(ref, self.workspace.get(artifact, ref))]
        except KeyError:
            raise UsageError(f"unknown {artifact}: {ref}") from None

    def resolve(self, artifact: str, ref: str) -> tuple[str, Any]:
        found = self.resolve_all(artifact, ref)
        if len(found) > 1:
            raise UsageError(f"{ref} holds {len(found)} {artifact} artifacts, expected one")
        return found[0]

    def hierarchy(self, ref: str | None) -> TypeHierarchy | None:
        return self.resolve("hierarchy", ref)[1] if ref else None


def _base_rule(rule: Rule | TypeChangeRule) -> Rule:
    return rule.rule if isinstance(rule, TypeChangeRule) else rule


def _pick_match(rule: Rule, g: TypeAnnotatedGraph, index: int, injective: bool) -> tuple[list[GraphMorphism], GraphMorphism | None]:
    matches = find_matches(rule.lhs, g.carrier, injective=injective)
    return matches, matches[index] if 0 <= index < len(matches) else None


# ── Subcommands ───────────────────────────────────────────────────────────────

def cmd_validate(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    name, g = s.resolve("graph", args.graph)
    hierarchy = s.hierarchy(args.hierarchy)
    report = check_well_formed(g, hierarchy)
    typing = check_correct_typing(g) if not report else []
    if hierarchy is not None:
        report += hierarchy.validate(g)
    ok = not report and not typing
    return (EXIT_OK if ok else EXIT_FAILED), {
        "command": "validate", "graph": name, "well_formed": not report, "ok": ok,
        "violations": _violations(report), "typing_violations": _violations(typing),
    }


def cmd_check(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    name, g = s.resolve("graph", args.graph)
    constraints = [c for ref in args.constraints for _, c in s.resolve_all("constraint", ref)]
    if s.config.get("matching", {}).get("constraint_injective"):
        constraints = [dataclasses.replace(c, injective=True) for c in constraints]
    verdicts = check_constraints(g, constraints)
    ok = all(v.satisfied for v in verdicts)
    return (EXIT_OK if ok else EXIT_FAILED), {
        "command": "check", "graph": name, "ok": ok,
        "verdicts": [{"constraint": v.constraint.name, "satisfied": v.satisfied,
                      "premise_matches": v.premise_matches,
                      "witnesses": [_mapping(w) for w in v.witnesses]} for v in verdicts],
    }


def cmd_match(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    pname, pattern = s.resolve("pattern", args.pattern)
    gname, g = s.resolve("graph", args.graph)
    result = satisfies_pattern(g, pattern)
    return (EXIT_OK if result.satisfied else EXIT_FAILED), {
        "command": "match", "pattern": pname, "graph": gname, "ok": result.satisfied,
        "count": len(result.collections),
        "collections": [[_mapping(m) for m in c] for c in result.collections],
    }


def cmd_apply(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    rname, rule = s.resolve("rule", args.rule)
    gname, g = s.resolve("graph", args.graph)
    base = _base_rule(rule)
    injective = s.config.get("matching", {}).get("rule_injective", True)
    matches, match = _pick_match(base, g, args.match_index, injective)
    report: dict[str, Any] = {"command": "apply", "rule": rname, "graph": gname,
                              "matches": len(matches), "match_index": args.match_index, "ok": False}
    if match is None:
        report["reason"] = "no match" if not matches else f"match index out of range (0..{len(matches) - 1})"
        return EXIT_FAILED, report
    report["match"] = _mapping(match)
    try:
        step = rewrite(base, g.carrier, match)
    except RuleApplicationError as exc:
        report.update(reason=str(exc), violations=_violations(exc.violations))
        return EXIT_FAILED, report
    result = TypeAnnotatedGraph(step.result)
    if args.output:
        save_artifact("graph", args.output_name or f"{gname}-{rname}", result, args.output)
    report.update(ok=True, deleted=sorted(step.deleted), created=sorted(step.created), **_graph_report(result))
    return EXIT_OK, report


def cmd_typeann(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    name, typed = s.resolve("typed-graph", args.typed_graph)
    img = type_ann_ob(typed)
    report = check_well_formed(img.h) + check_correct_typing(img.h)
    return (EXIT_OK if not report else EXIT_FAILED), {
        "command": "typeann", "typed_graph": name, "ok": not report,
        "fg": _mapping(img.fg), "ft": _mapping(img.ft), "violations": _violations(report),
        **_graph_report(img.h),
    }


def cmd_extract(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    name, g = s.resolve("graph", args.graph)
    typed = extract_typed(g, s.hierarchy(args.hierarchy))
    return EXIT_OK, {
        "command": "extract", "graph": name, "ok": True, "count": len(typed),
        "typed_graphs": [to_document("typed-graph", f"{name}#{i}", t) for i, t in enumerate(typed)],
    }


def cmd_triple_check(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    name, typed = s.resolve("typed-graph", args.typed_graph)
    img = type_ann_ob(typed)
    verdict = satisfies_ann_type_patterns(typed, img, build_correspondences(typed, img))
    return (EXIT_OK if verdict.satisfied else EXIT_FAILED), {
        "command": "triple-check", "typed_graph": name, "ok": verdict.satisfied,
        "witnesses": {sort: len(ws) for sort, ws in verdict.witnesses.items()},
        "failing_element": verdict.failing_element, "reason": verdict.reason,
    }


def cmd_adapt(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    rname, rule = s.resolve("rule", args.rule)
    gname, g = s.resolve("graph", args.graph)
    if not isinstance(rule, TypeChangeRule):
        raise UsageError(f"rule {rname} is not a type change rule")
    constraints = [c for ref in args.constraints for _, c in s.resolve_all("constraint", ref)]
    matches = rule.matches(g)
    report: dict[str, Any] = {"command": "adapt", "rule": rname, "graph": gname,
                              "matches": len(matches), "match_index": args.match_index}
    if not 0 <= args.match_index < len(matches):
        report.update(ok=False, status="inapplicable", reason="no match" if not matches else "match index out of range")
        return EXIT_FAILED, report

    adapt_cfg = s.config.get("adapt", {})
    result = apply_with_repairs(
        g, rule, matches[args.match_index], constraints,
        policy=args.policy or adapt_cfg.get("policy"),
        max_cascade=args.max_cascade if args.max_cascade is not None else adapt_cfg.get("max_cascade"),
        option_order=adapt_cfg.get("option_order"),
        cleanup_orphans=adapt_cfg.get("cleanup_orphans"),
    )
    before, after = g.carrier.elements, result.graph.carrier.elements
    if args.output:
        save_artifact("graph", args.output_name or f"{gname}-{rname}", result.graph, args.output)
    ok = result.status == "converged"
    report.update(
        ok=ok, status=result.status, rounds=result.rounds, maintained=result.maintained,
        residual=[v.constraint.name for v in result.residual],
        trace=[{"round": r.index, "graph_hash": r.graph_hash, "well_formed": r.well_formed,
                "actions": [dataclasses.asdict(a) for a in r.actions]} for r in result.trace],
        removed=sorted(before - after), added=sorted(after - before),
        **_graph_report(result.graph),
    )
    return (EXIT_OK if ok else EXIT_FAILED), report


def cmd_corpus(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    root = Path(args.directory)
    written = []
    for scenario, build in corpus.SCENARIOS.items():
        for artifact, name, value in build().items():
            path = save_artifact(artifact, name, value, root / scenario / f"{name}.{args.format}")
            written.append(str(path))
    log.info(f"Corpus written | directory={root} | files={len(written)}")
    return EXIT_OK, {"command": "corpus", "ok": True, "directory": str(root), "written": written}


def cmd_list(s: _Session, args: argparse.Namespace) -> tuple[int, dict]:
    return EXIT_OK, {"command": "list", "ok": True, "artifacts": s.workspace.names()}


# ── Parser ────────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annograph", description="Type-annotated graph rewriting")
    parser.add_argument("--workspace", help="workspace file or directory (default: built-in corpus)")
    parser.add_argument("--config", help="configuration file")
    parser.add_argument("--log-level", help="override logging.level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="well-formedness of a type-annotated graph")
    p.add_argument("graph")
    p.add_argument("--hierarchy")
    p.set_defaults(handler=cmd_validate)

    p = sub.add_parser("check", help="evaluate constraints on a graph")
    p.add_argument("graph")
    p.add_argument("constraints", nargs="+")
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("match", help="matches of a pattern in a graph")
    p.add_argument("pattern")
    p.add_argument("graph")
    p.set_defaults(handler=cmd_match)

    for command, handler in (("apply", cmd_apply), ("adapt", cmd_adapt)):
        p = sub.add_parser(command, help="apply a rule" if command == "apply" else "apply a type change with repairs")
        p.add_argument("rule")
        p.add_argument("graph")
        p.add_argument("--match-index", type=int, default=0)
        p.add_argument("--output", help="write the resulting graph to this file")
        p.add_argument("--output-name", help="artifact name of the written graph")
        if command == "adapt":
            p.add_argument("--constraints", nargs="+", default=[])
            p.add_argument("--policy", choices=["post", "extend"])
            p.add_argument("--max-cascade", type=int)
        p.set_defaults(handler=handler)

    p = sub.add_parser("typeann", help="type-annotated image of a typed graph")
    p.add_argument("typed_graph")
    p.set_defaults(handler=cmd_typeann)

    p = sub.add_parser("extract", help="typed graphs encoded by a type-annotated graph")
    p.add_argument("graph")
    p.add_argument("--hierarchy")
    p.set_defaults(handler=cmd_extract)

    p = sub.add_parser("triple-check", help="correspondence patterns of a typed graph's image")
    p.add_argument("typed_graph")
    p.set_defaults(handler=cmd_triple_check)

    p = sub.add_parser("corpus", help="write the case-study fixtures")
    p.add_argument("directory")
    p.add_argument("--format", choices=["json", "yml"], default="json")
    p.set_defaults(handler=cmd_corpus)

    p = sub.add_parser("list", help="artifact names in the workspace")
    p.set_defaults(handler=cmd_list)
    return parser


def run_command(argv: Sequence[str] | None = None) -> CommandResult:
    """Parse ``argv`` and run one subcommand; usage errors exit with code 2."""
    args = build_parser().parse_args(argv)
    config = load_config(args.config)
    if args.log_level:
        config["logging"] = {**config.get("logging", {}), "level": args.log_level}
    setup_logger(config.get("logging", {}))
    indent = config.get("cli", {}).get("indent", 2)
    session = _Session(config, args.workspace)

    try:
        code, report = args.handler(session, args)
    except SchemaError as exc:
        log.error(f"Invalid input | command={args.command} | error={exc}")
        report = {"command": args.command, "ok": False, "error": str(exc), "file": exc.file,
                  "field": exc.field, "line": exc.line, "violations": _violations(exc.violations)}
        return CommandResult(EXIT_INPUT, report, indent)
    except UsageError as exc:
        log.error(f"Invalid input | command={args.command} | error={exc}")
        return CommandResult(EXIT_INPUT, {"command": args.command, "ok": False, "error": str(exc)}, indent)
    except GraphError as exc:
        log.warning(f"Command failed | command={args.command} | error={exc}")
        return CommandResult(EXIT_FAILED, {"command": args.command, "ok": False, "error": str(exc),
                                           "violations": _violations(exc.violations)}, indent)
    except AnnographError as exc:
        log.warning(f"Command failed | command={args.command} | error={exc}")
        return CommandResult(EXIT_FAILED, {"command": args.command, "ok": False, "error": str(exc)}, indent)
    return CommandResult(code, report, indent)


def main(argv: Sequence[str] | None = None) -> None:
    try:
        result = run_command(argv)
        print(json.dumps(result.report, indent=result.indent, sort_keys=True, ensure_ascii=False))
        sys.exit(result.code)
    except SystemExit:
        raise
    except Exception:
        # Top-level safety net
        import traceback
        print(traceback.format_exc(), file=sys.stderr)
        sys.exit(EXIT_INPUT)


if __name__ == "__main__":
    main()
