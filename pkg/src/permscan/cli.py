"""Command-line entry point wiring the pipeline stages together.

Exit codes: 0 = ran clean, 2 = ran clean but findings were emitted
(CI-friendly), 1 = any stage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .catalog import load_catalog, object_census, validate_catalog
from .classify import classify_catalog
from .detector import build_report, detect_full, report_to_json
from .errors import PermscanError
from .executor import (
    SimulatorBackend,
    records_from_jsonl,
    records_to_jsonl,
    run_role_matrix,
    run_scope_ladder,
)
from .graph import build_graph, to_dot
from .simulator import instantiate_template, load_capability_matrix, load_faults
from .testgen import TestgenConfig, generate_suite, suite_from_jsonl, suite_to_jsonl

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FINDINGS = 2


def default_matrix_path() -> Path:
    return Path(str(resources.files("permscan").joinpath("data/capability_matrix.json")))


def _load_matrix(path):
    return load_capability_matrix(path or default_matrix_path())


def cmd_ingest(args) -> int:
    catalog = load_catalog(args.catalog)
    report = validate_catalog(catalog)
    census = object_census(catalog)
    print(json.dumps({"census": census, "total": sum(census.values())}, indent=2))
    if not report.empty:
        print(str(report), file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def cmd_classify(args) -> int:
    catalog = load_catalog(args.catalog)
    labels = classify_catalog(catalog)
    out = {api_id: label.to_json() for api_id, label in sorted(labels.items())}
    Path(args.out).write_text(json.dumps(out, indent=2) + "\n", encoding="utf-8")
    print(f"labeled {len(out)} APIs -> {args.out}")
    return EXIT_OK


def cmd_graph_export(args) -> int:
    catalog = load_catalog(args.catalog)
    graph = build_graph(catalog)
    Path(args.out).write_text(to_dot(graph), encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    catalog = load_catalog(args.catalog)
    labels = classify_catalog(catalog)
    graph = build_graph(catalog)
    config = TestgenConfig(seed=args.seed)
    result = generate_suite(graph, labels, config)
    Path(args.out).write_text(suite_to_jsonl(result.cases), encoding="utf-8")
    print(
        f"generated {len(result.cases)} cases "
        f"(excluded {len(result.excluded)}, pruned {len(result.pruned)}) -> {args.out}"
    )
    return EXIT_OK


def cmd_run(args) -> int:
    catalog = load_catalog(args.catalog)
    suite = suite_from_jsonl(Path(args.suite).read_text(encoding="utf-8"))
    matrix = _load_matrix(args.matrix)
    faults = load_faults(args.faults) if args.faults else []
    backend = SimulatorBackend(catalog, args.template, matrix, faults)
    if args.mode == "role-matrix":
        records = run_role_matrix(suite, backend)
    else:
        records = run_scope_ladder(suite, backend)
    Path(args.out).write_text(records_to_jsonl(records), encoding="utf-8")
    print(f"executed {len(suite)} cases in mode {args.mode} -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    catalog = load_catalog(args.catalog)
    labels = classify_catalog(catalog)
    matrix = _load_matrix(args.matrix)
    records = records_from_jsonl(Path(args.records).read_text(encoding="utf-8"))
    ground_truth = None
    if args.template:
        ground_truth = instantiate_template(args.template, catalog, matrix)
    detection = detect_full(records, labels, matrix, ground_truth)
    report = build_report(detection, records, catalog)
    Path(args.out).write_text(report_to_json(report), encoding="utf-8")
    print(report.to_text())
    return EXIT_FINDINGS if report.findings else EXIT_OK


def cmd_pipeline(args) -> int:
    if args.config:
        cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        cfg = {}
    catalog_path = args.catalog or cfg.get("catalog")
    template_path = args.template or cfg.get("template")
    faults_path = args.faults or cfg.get("faults")
    out_dir = Path(args.out_dir or cfg.get("out_dir", "."))
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not catalog_path or not template_path:
        print("pipeline: --catalog and --template are required", file=sys.stderr)
        return EXIT_ERROR

    out_dir.mkdir(parents=True, exist_ok=True)

    catalog = load_catalog(catalog_path)
    labels = classify_catalog(catalog)
    graph = build_graph(catalog)
    result = generate_suite(graph, labels, TestgenConfig(seed=seed))
    (out_dir / "suite.jsonl").write_text(suite_to_jsonl(result.cases), encoding="utf-8")

    matrix = _load_matrix(args.matrix)
    faults = load_faults(faults_path) if faults_path else []
    backend = SimulatorBackend(catalog, template_path, matrix, faults)
    records = run_role_matrix(result.cases, backend)
    records += run_scope_ladder(result.cases, backend)
    (out_dir / "records.jsonl").write_text(records_to_jsonl(records), encoding="utf-8")

    ground_truth = instantiate_template(template_path, catalog, matrix)
    detection = detect_full(records, labels, matrix, ground_truth)
    exclusions = {
        "generated": len(result.cases),
        "excluded": len(result.excluded),
        "pruned": len(result.pruned),
    }
    report = build_report(detection, records, catalog, exclusions)
    (out_dir / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(), encoding="utf-8")
    print(report.to_text())
    return EXIT_FINDINGS if report.findings else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="permscan",
        description="Permission-escalation testing for add-on host APIs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load, validate and summarize a catalog")
    p.add_argument("--catalog", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("classify", help="label every API in a catalog")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("graph", help="dependency graph utilities")
    gsub = p.add_subparsers(dest="graph_command", required=True)
    ge = gsub.add_parser("export", help="export the dependency graph as DOT")
    ge.add_argument("--catalog", required=True)
    ge.add_argument("--out", required=True)
    ge.set_defaults(func=cmd_graph_export)

    p = sub.add_parser("gen", help="generate the ordered test suite")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("run", help="execute a suite against the simulator")
    p.add_argument("--suite", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--faults")
    p.add_argument("--matrix")
    p.add_argument("--mode", choices=("role-matrix", "scope-ladder"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="classify records into findings")
    p.add_argument("--records", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--template")
    p.add_argument("--matrix")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config")
    p.add_argument("--catalog")
    p.add_argument("--template")
    p.add_argument("--faults")
    p.add_argument("--matrix")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PermscanError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except FileNotFoundError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
