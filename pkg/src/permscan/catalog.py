"""Offline API catalogs: loading, validation and indexing.

A catalog file describes one host application: its object classes (a
containment forest rooted at the app class), the host APIs each class
exposes, and the return type of each API.  Catalogs replace live developer
documentation so the whole pipeline stays hermetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateApi, MalformedFile, SchemaViolation

HOST_APPS = ("calendar", "document", "drive", "form", "gmail", "spreadsheet", "slide")

PARAM_KINDS = ("class", "string", "integer", "boolean", "enum")

PRIMITIVES = ("string", "integer", "boolean")


@dataclass(frozen=True)
class TypeRef:
    """Return type of an API: void, a class, an array of a class, or a primitive."""

    kind: str  # "void" | "class" | "array" | "primitive"
    name: str | None = None

    @property
    def is_class(self) -> bool:
        return self.kind in ("class", "array")

    @property
    def class_name(self) -> str | None:
        return self.name if self.is_class else None

    def to_json(self) -> dict:
        if self.kind == "void":
            return {"void": True}
        if self.kind == "class":
            return {"class": self.name}
        if self.kind == "array":
            return {"array_of": self.name}
        return {"primitive": self.name}

    @staticmethod
    def from_json(obj: dict) -> "TypeRef":
        if not isinstance(obj, dict):
            raise SchemaViolation(f"bad returns value: {obj!r}")
        if obj.get("void") is True:
            return TypeRef("void")
        if "class" in obj:
            return TypeRef("class", _expect_str(obj["class"], "returns.class"))
        if "array_of" in obj:
            return TypeRef("array", _expect_str(obj["array_of"], "returns.array_of"))
        if "primitive" in obj:
            prim = obj["primitive"]
            if prim not in PRIMITIVES:
                raise SchemaViolation(f"unknown primitive {prim!r}")
            return TypeRef("primitive", prim)
        raise SchemaViolation(f"bad returns value: {obj!r}")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str  # one of PARAM_KINDS
    type: str

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind, "type": self.type}


@dataclass(frozen=True)
class ApiSpec:
    id: str
    host_app: str
    parent_class: str
    method: str
    description: str
    params: tuple[ParamSpec, ...]
    returns: TypeRef
    tutorial: tuple[str, ...] | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "parent_class": self.parent_class,
            "method": self.method,
            "description": self.description,
            "params": [p.to_json() for p in self.params],
            "returns": self.returns.to_json(),
            "tutorial": list(self.tutorial) if self.tutorial is not None else None,
        }


@dataclass(frozen=True)
class Catalog:
    """Immutable index over one or more host-app catalog files."""

    apis: dict  # id -> ApiSpec
    classes: dict  # class name -> tuple of child class names
    class_apps: dict  # class name -> host_app
    roots: dict  # host_app -> root class name
    external_types: frozenset

    def apis_of(self, class_name: str) -> list[ApiSpec]:
        return sorted(
            (a for a in self.apis.values() if a.parent_class == class_name),
            key=lambda a: a.id,
        )

    def resolves(self, class_name: str) -> bool:
        return class_name in self.classes or class_name in self.external_types

    def merge(self, other: "Catalog") -> "Catalog":
        dup = set(self.apis) & set(other.apis)
        if dup:
            raise DuplicateApi(f"duplicate API ids across catalogs: {sorted(dup)}")
        return Catalog(
            apis={**self.apis, **other.apis},
            classes={**self.classes, **other.classes},
            class_apps={**self.class_apps, **other.class_apps},
            roots={**self.roots, **other.roots},
            external_types=self.external_types | other.external_types,
        )

    def to_json(self) -> dict:
        """Serialize a single-app catalog back to the file schema."""
        if len(self.roots) != 1:
            raise ValueError("to_json only supports single-app catalogs")
        host_app, root = next(iter(self.roots.items()))
        return {
            "host_app": host_app,
            "root": root,
            "external_types": sorted(self.external_types),
            "classes": [
                {"name": name, "children": list(self.classes[name])}
                for name in sorted(self.classes)
            ],
            "apis": [self.apis[i].to_json() for i in sorted(self.apis)],
        }


@dataclass(frozen=True)
class Problem:
    kind: str  # DanglingTypeRef | OrphanClass | CycleDetected | BadId | MissingRoot
    detail: str


@dataclass
class ValidationReport:
    problems: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not self.problems

    def add(self, kind: str, detail: str) -> None:
        self.problems.append(Problem(kind, detail))

    def __str__(self) -> str:
        return "\n".join(f"{p.kind}: {p.detail}" for p in self.problems) or "ok"


def _expect_str(value, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaViolation(f"{where} must be a non-empty string, got {value!r}")
    return value


def _parse_api(entry: dict, host_app: str) -> ApiSpec:
    for key in ("id", "parent_class", "method", "description", "params", "returns"):
        if key not in entry:
            raise SchemaViolation(f"api entry missing field {key!r}: {entry.get('id')!r}")
    api_id = _expect_str(entry["id"], "api.id")
    parent = _expect_str(entry["parent_class"], "api.parent_class")
    method = _expect_str(entry["method"], "api.method")
    if api_id != f"{parent}.{method}":
        raise SchemaViolation(f"api id {api_id!r} != parent_class.method")
    params = []
    for p in entry["params"]:
        if not isinstance(p, dict) or not {"name", "kind", "type"} <= set(p):
            raise SchemaViolation(f"{api_id}: bad param entry {p!r}")
        if p["kind"] not in PARAM_KINDS:
            raise SchemaViolation(f"{api_id}: unknown param kind {p['kind']!r}")
        params.append(ParamSpec(_expect_str(p["name"], "param.name"), p["kind"], p["type"]))
    tutorial = entry.get("tutorial")
    if tutorial is not None:
        if not isinstance(tutorial, list) or not all(isinstance(s, str) for s in tutorial):
            raise SchemaViolation(f"{api_id}: tutorial must be a list of strings")
        tutorial = tuple(tutorial)
    return ApiSpec(
        id=api_id,
        host_app=host_app,
        parent_class=parent,
        method=method,
        description=str(entry["description"]),
        params=tuple(params),
        returns=TypeRef.from_json(entry["returns"]),
        tutorial=tutorial,
    )


def parse_catalog(doc: dict) -> Catalog:
    """Build a Catalog from an already-parsed JSON document (no validation pass)."""
    if not isinstance(doc, dict):
        raise SchemaViolation("catalog document must be a JSON object")
    for key in ("host_app", "root", "classes", "apis"):
        if key not in doc:
            raise SchemaViolation(f"catalog missing top-level field {key!r}")
    host_app = _expect_str(doc["host_app"], "host_app")
    if host_app not in HOST_APPS:
        raise SchemaViolation(f"unknown host_app {host_app!r}")
    root = _expect_str(doc["root"], "root")
    external = doc.get("external_types", [])
    if not isinstance(external, list) or not all(isinstance(e, str) for e in external):
        raise SchemaViolation("external_types must be a list of strings")

    classes: dict = {}
    for entry in doc["classes"]:
        if not isinstance(entry, dict) or "name" not in entry:
            raise SchemaViolation(f"bad class entry {entry!r}")
        name = _expect_str(entry["name"], "class.name")
        if name in classes:
            raise SchemaViolation(f"class {name!r} declared twice")
        children = entry.get("children", [])
        if not isinstance(children, list) or not all(isinstance(c, str) for c in children):
            raise SchemaViolation(f"class {name!r}: children must be a list of strings")
        classes[name] = tuple(children)
    if root not in classes:
        raise SchemaViolation(f"root {root!r} not in class set")

    apis: dict = {}
    for entry in doc["apis"]:
        api = _parse_api(entry, host_app)
        if api.id in apis:
            raise DuplicateApi(f"duplicate API id {api.id!r}")
        apis[api.id] = api

    return Catalog(
        apis=apis,
        classes=classes,
        class_apps={name: host_app for name in classes},
        roots={host_app: root},
        external_types=frozenset(external),
    )


def validate_catalog(catalog: Catalog) -> ValidationReport:
    """Report dangling type refs, orphan classes and hierarchy cycles."""
    report = ValidationReport()

    referenced: set = set(catalog.roots.values())
    for api in catalog.apis.values():
        if api.parent_class not in catalog.classes:
            report.add("DanglingTypeRef", f"{api.id}: parent class {api.parent_class!r} unknown")
        ret = api.returns
        if ret.is_class and not catalog.resolves(ret.name):
            report.add("DanglingTypeRef", f"{api.id}: return class {ret.name!r} unknown")
        for p in api.params:
            if p.kind == "class" and not catalog.resolves(p.type):
                report.add("DanglingTypeRef", f"{api.id}: param {p.name!r} class {p.type!r} unknown")
            referenced.add(p.type)
        if ret.is_class:
            referenced.add(ret.name)
        referenced.add(api.parent_class)

    child_of: set = set()
    for name, children in catalog.classes.items():
        for c in children:
            child_of.add(c)
            if c not in catalog.classes:
                report.add("DanglingTypeRef", f"class {name!r} lists unknown child {c!r}")

    # hierarchy cycle check over the children edges
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in catalog.classes}

    def visit(name: str, path: tuple) -> None:
        color[name] = GREY
        for c in catalog.classes.get(name, ()):
            if c not in color:
                continue
            if color[c] == GREY:
                report.add("CycleDetected", " -> ".join(path + (name, c)))
            elif color[c] == WHITE:
                visit(c, path + (name,))
        color[name] = BLACK

    for name in sorted(catalog.classes):
        if color[name] == WHITE:
            visit(name, ())

    for name in sorted(catalog.classes):
        has_api = any(a.parent_class == name for a in catalog.apis.values())
        if not has_api and name not in referenced and name not in child_of:
            report.add("OrphanClass", f"class {name!r} has no APIs and is never referenced")

    return report


def load_catalog(path: str | Path) -> Catalog:
    """Load and validate a single-app catalog file.

    Raises MalformedFile for unparseable input, DuplicateApi for repeated
    ids, and SchemaViolation for any other structural problem (including
    dangling type references found by validation).
    """
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    catalog = parse_catalog(doc)
    report = validate_catalog(catalog)
    if not report.empty:
        raise SchemaViolation(f"{path}: {report}")
    return catalog


def load_catalogs(paths) -> Catalog:
    """Load several catalog files and merge them into one index."""
    merged: Catalog | None = None
    for p in paths:
        cat = load_catalog(p)
        merged = cat if merged is None else merged.merge(cat)
    if merged is None:
        raise ValueError("no catalog paths given")
    return merged


def object_census(catalog: Catalog) -> dict:
    """Distinct object classes per host app (external types do not count)."""
    counts: dict = {}
    for name, app in catalog.class_apps.items():
        counts[app] = counts.get(app, 0) + 1
    return dict(sorted(counts.items()))
