"""Class/method dependency graph and producer-path queries.

The graph connects every class to the APIs it owns and every API to its
return type.  Call chains are synthesized by walking from the root app
class along producer APIs until the requested class is reached.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .catalog import ApiSpec, Catalog, TypeRef
from .errors import NoProducer, UnresolvableReturn


@dataclass(frozen=True)
class ChainStep:
    api_id: str
    index_zero: bool = False  # array-typed producer: take element [0]
    args: object | None = None  # ArgPlan, attached by testgen

    def to_json(self) -> dict:
        out: dict = {"api": self.api_id}
        if self.index_zero:
            out["index_zero"] = True
        if self.args is not None:
            out["args"] = self.args.to_json()
        return out


@dataclass(frozen=True)
class CallChain:
    steps: tuple[ChainStep, ...]
    produces: TypeRef

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def api_ids(self) -> tuple[str, ...]:
        return tuple(s.api_id for s in self.steps)

    def to_json(self) -> dict:
        return {"steps": [s.to_json() for s in self.steps], "produces": self.produces.to_json()}


@dataclass(frozen=True)
class DepGraph:
    class_nodes: frozenset
    method_edges: dict  # class name -> tuple of api ids, sorted
    return_edges: dict  # api id -> TypeRef
    root: str
    catalog: Catalog = field(repr=False, compare=False, default=None)

    def api(self, api_id: str) -> ApiSpec:
        return self.catalog.apis[api_id]


def build_graph(catalog: Catalog, host_app: str | None = None) -> DepGraph:
    """One node per class, one method edge per API, one return edge per
    non-void API.  Raises UnresolvableReturn for undeclared return classes."""
    if host_app is None:
        if len(catalog.roots) != 1:
            raise ValueError("catalog spans several apps; pass host_app")
        host_app = next(iter(catalog.roots))
    root = catalog.roots[host_app]
    class_nodes = frozenset(
        name for name, app in catalog.class_apps.items() if app == host_app
    )
    method_edges: dict = {name: [] for name in class_nodes}
    return_edges: dict = {}
    for api_id in sorted(catalog.apis):
        api = catalog.apis[api_id]
        if api.host_app != host_app:
            continue
        method_edges[api.parent_class].append(api_id)
        ret = api.returns
        if ret.kind != "void":
            if ret.is_class and not (ret.name in class_nodes or ret.name in catalog.external_types):
                raise UnresolvableReturn(f"{api_id}: returns unknown class {ret.name!r}")
            return_edges[api_id] = ret
    return DepGraph(
        class_nodes=class_nodes,
        method_edges={k: tuple(v) for k, v in method_edges.items()},
        return_edges=return_edges,
        root=root,
        catalog=catalog,
    )


def producible_class(graph: DepGraph, api_id: str) -> str | None:
    """The internal class an API produces, unwrapping arrays; None otherwise."""
    ret = graph.return_edges.get(api_id)
    if ret is None or not ret.is_class:
        return None
    return ret.name if ret.name in graph.class_nodes else None


def eligible_producer(graph: DepGraph, api_id: str) -> bool:
    """Chain steps must be self-contained: no class- or enum-typed parameters."""
    api = graph.api(api_id)
    return all(p.kind in ("string", "integer", "boolean") for p in api.params)


def _step_for(graph: DepGraph, api_id: str) -> ChainStep:
    ret = graph.return_edges[api_id]
    return ChainStep(api_id, index_zero=(ret.kind == "array"))


def _chain_key(graph: DepGraph, ids: tuple[str, ...]) -> tuple:
    # shorter first, then fewer parameterized steps, then lexicographic
    n_params = sum(1 for i in ids if graph.api(i).params)
    return (len(ids), n_params, ids)


def shortest_producer_path(
    graph: DepGraph, target: str, rng: random.Random | None = None
) -> CallChain:
    """Minimum-length chain from the root to an API producing `target`.

    Deterministic tie-break: parameterless steps preferred, then the
    lexicographically smallest id sequence.  Pass `rng` to instead pick
    uniformly among the minimum-length chains.
    """
    if target not in graph.class_nodes:
        raise NoProducer(f"{target!r} is not an internal class")
    best: dict = {graph.root: ()}  # class -> best id tuple
    # small graphs: relax to a fixpoint
    changed = True
    while changed:
        changed = False
        for cls in sorted(best, key=lambda c: _chain_key(graph, best[c])):
            base = best[cls]
            for api_id in graph.method_edges.get(cls, ()):
                if not eligible_producer(graph, api_id):
                    continue
                nxt = producible_class(graph, api_id)
                if nxt is None:
                    continue
                cand = base + (api_id,)
                if nxt not in best or _chain_key(graph, cand) < _chain_key(graph, best[nxt]):
                    best[nxt] = cand
                    changed = True
    if target not in best or not best[target]:
        raise NoProducer(f"no chain from {graph.root} produces {target!r}")

    if rng is not None:
        chains = _all_chains_to(graph, target, len(best[target]))
        ids = rng.choice(sorted(chains))
    else:
        ids = best[target]
    steps = tuple(_step_for(graph, i) for i in ids)
    ret = graph.return_edges[ids[-1]]
    produces = TypeRef("class", ret.name)
    return CallChain(steps=steps, produces=produces)


def _all_chains_to(graph: DepGraph, target: str, length: int) -> list:
    out: list = []

    def walk(cls: str, ids: tuple) -> None:
        if len(ids) == length:
            return
        for api_id in graph.method_edges.get(cls, ()):
            if not eligible_producer(graph, api_id):
                continue
            nxt = producible_class(graph, api_id)
            if nxt is None:
                continue
            if nxt == target and len(ids) + 1 == length:
                out.append(ids + (api_id,))
            walk(nxt, ids + (api_id,))

    walk(graph.root, ())
    return out


def to_dot(graph: DepGraph) -> str:
    """DOT export: class nodes, solid method-ownership edges, dashed return edges."""
    lines = ["digraph dependencies {", "  rankdir=LR;"]
    for cls in sorted(graph.class_nodes):
        shape = "doubleoctagon" if cls == graph.root else "ellipse"
        lines.append(f'  "{cls}" [shape={shape}];')
    for cls in sorted(graph.method_edges):
        for api_id in graph.method_edges[cls]:
            lines.append(f'  "{api_id}" [shape=box, label="{graph.api(api_id).method}"];')
            lines.append(f'  "{cls}" -> "{api_id}" [style=solid];')
            ret = graph.return_edges.get(api_id)
            if ret is not None and ret.is_class:
                suffix = "[]" if ret.kind == "array" else ""
                lines.append(
                    f'  "{api_id}" -> "{ret.name}" [style=dashed, label="{suffix}"];'
                )
    lines.append("}")
    return "\n".join(lines) + "\n"
