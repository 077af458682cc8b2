"""Suite generation: BFS over the dependency graph with visited-class
pruning, parameter resolution strategies, and operation-ordered output."""

from __future__ import annotations

import heapq
import json
import random
import re
from dataclasses import dataclass, field

from .catalog import ApiSpec, TypeRef
from .classify import Operation, PermissionLabel
from .errors import CyclicDependency, NoProducer, UnresolvableParameter
from .graph import CallChain, ChainStep, DepGraph, producible_class, shortest_producer_path

INTEGER_VALUES = (0, 1, 5, 10)
BOOLEAN_VALUES = (True, False)
PAIR_FALLBACK = (1, 2)
COMBO_CAP = 4

ATTR_ROLES = ("id", "url", "name")


# --- parameter strategies ----------------------------------------------------


@dataclass(frozen=True)
class ProducerPlan:
    """Class-typed parameter: run a producer chain and pass its product."""

    chain: CallChain

    def to_json(self) -> dict:
        return {"strategy": "producer", "chain": self.chain.to_json()}


@dataclass(frozen=True)
class AttributePlan:
    """String parameter looked up from the runtime attribute table."""

    role: str  # id | url | name

    def to_json(self) -> dict:
        return {"strategy": "attribute", "role": self.role}


@dataclass(frozen=True)
class PrimitivePlan:
    """Integer/boolean parameter enumerated from the fixed value table."""

    values: tuple

    def to_json(self) -> dict:
        return {"strategy": "primitive", "values": list(self.values)}


@dataclass(frozen=True)
class PairPlan:
    """Mutually dependent integer pair (lo, hi); offline fallback (lo, lo+1)."""

    partner: str
    position: str  # "lo" | "hi"
    fallback: tuple = PAIR_FALLBACK

    def to_json(self) -> dict:
        return {
            "strategy": "pair",
            "partner": self.partner,
            "position": self.position,
            "fallback": list(self.fallback),
        }


@dataclass(frozen=True)
class ArgPlan:
    tutorial: CallChain | None = None
    params: tuple = ()  # tuple of (param name, strategy)

    def to_json(self) -> dict:
        out: dict = {}
        if self.tutorial is not None:
            out["tutorial"] = self.tutorial.to_json()
        out["params"] = {name: strat.to_json() for name, strat in self.params}
        return out


_STRATEGY_PARSERS = {}


def _plan_from_json(obj: dict):
    kind = obj["strategy"]
    if kind == "producer":
        return ProducerPlan(_chain_from_json(obj["chain"]))
    if kind == "attribute":
        return AttributePlan(obj["role"])
    if kind == "primitive":
        return PrimitivePlan(tuple(obj["values"]))
    if kind == "pair":
        return PairPlan(obj["partner"], obj["position"], tuple(obj["fallback"]))
    raise ValueError(f"unknown strategy {kind!r}")


def _argplan_from_json(obj: dict) -> ArgPlan:
    tutorial = _chain_from_json(obj["tutorial"]) if "tutorial" in obj else None
    params = tuple((name, _plan_from_json(s)) for name, s in obj["params"].items())
    return ArgPlan(tutorial=tutorial, params=params)


def _chain_from_json(obj: dict) -> CallChain:
    steps = []
    for s in obj["steps"]:
        args = _argplan_from_json(s["args"]) if "args" in s else None
        steps.append(ChainStep(s["api"], s.get("index_zero", False), args))
    ret = obj["produces"]
    return CallChain(steps=tuple(steps), produces=TypeRef.from_json(ret))


# --- test cases ---------------------------------------------------------------


@dataclass(frozen=True)
class TestCase:
    __test__ = False  # keep pytest from collecting this as a test class

    id: str
    target_api: str
    label: PermissionLabel
    chain: CallChain
    depends_on: str | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "target_api": self.target_api,
            "label": self.label.to_json(),
            "chain": self.chain.to_json(),
            "depends_on": self.depends_on,
        }

    @staticmethod
    def from_json(obj: dict) -> "TestCase":
        return TestCase(
            id=obj["id"],
            target_api=obj["target_api"],
            label=PermissionLabel.from_json(obj["label"]),
            chain=_chain_from_json(obj["chain"]),
            depends_on=obj["depends_on"],
        )


@dataclass
class GenResult:
    cases: list = field(default_factory=list)
    excluded: list = field(default_factory=list)  # (api id, reason)
    pruned: list = field(default_factory=list)  # api ids of unreached classes


@dataclass(frozen=True)
class TestgenConfig:
    __test__ = False  # keep pytest from collecting this as a test class

    seed: int = 0
    random_tiebreak: bool = False
    integer_values: tuple = INTEGER_VALUES
    combo_cap: int = COMBO_CAP


# --- parameter resolution ------------------------------------------------------

_TUTORIAL_CALL = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\((.*)\)")
_STRING_LITERAL = re.compile(r'"([^"]*)"')


def _infer_attr_role(param_name: str) -> str:
    low = param_name.lower()
    if "url" in low:
        return "url"
    if "id" in low:
        return "id"
    return "name"


def _pair_partners(api: ApiSpec) -> dict:
    """Detect (x, xEnd) integer pairs with an implicit lo < hi dependency."""
    names = {p.name for p in api.params if p.kind == "integer"}
    pairs: dict = {}
    for name in names:
        end = name + "End"
        if end in names:
            pairs[name] = (end, "lo")
            pairs[end] = (name, "hi")
    return pairs


def _parse_tutorial(api: ApiSpec, graph: DepGraph) -> CallChain:
    """Tutorial steps are call strings 'Class.method(args)'; resource-naming
    string literals become attribute-table markers resolved at run time."""
    steps = []
    for raw in api.tutorial or ():
        m = _TUTORIAL_CALL.search(raw)
        if m is None:
            raise UnresolvableParameter(api.id, "<tutorial>", f"(unparseable step {raw!r})")
        cls, method, argtext = m.groups()
        api_id = f"{cls}.{method}"
        if api_id not in graph.catalog.apis:
            raise UnresolvableParameter(api.id, "<tutorial>", f"(unknown step {api_id})")
        step_api = graph.api(api_id)
        params = []
        literals = _STRING_LITERAL.findall(argtext)
        for spec_param, value in zip(step_api.params, literals):
            if spec_param.kind == "string":
                params.append((spec_param.name, AttributePlan(_infer_attr_role(spec_param.name))))
        ret = graph.return_edges.get(api_id, TypeRef("void"))
        steps.append(ChainStep(api_id, ret.kind == "array", ArgPlan(params=tuple(params))))
    last = steps[-1].api_id if steps else api.id
    ret = graph.return_edges.get(last, TypeRef("void"))
    produces = TypeRef("class", ret.name) if ret.is_class else ret
    return CallChain(steps=tuple(steps), produces=produces)


def resolve_parameters(
    api: ApiSpec, graph: DepGraph, config: TestgenConfig | None = None
) -> ArgPlan:
    """Pick a strategy per parameter, in the fixed priority order.

    Raises UnresolvableParameter for enum or external-class parameters with
    no producer; callers exclude the API from the suite.
    """
    config = config or TestgenConfig()
    if api.tutorial:
        return ArgPlan(tutorial=_parse_tutorial(api, graph))

    pairs = _pair_partners(api)
    params = []
    for p in api.params:
        if p.kind == "class":
            if p.type not in graph.class_nodes:
                raise UnresolvableParameter(api.id, p.name, f"(external class {p.type})")
            try:
                chain = shortest_producer_path(graph, p.type)
            except NoProducer as exc:
                raise UnresolvableParameter(api.id, p.name, f"({exc})") from exc
            params.append((p.name, ProducerPlan(_attach_plans(chain, graph, config))))
        elif p.kind == "enum":
            raise UnresolvableParameter(api.id, p.name, "(enum type)")
        elif p.kind == "string":
            params.append((p.name, AttributePlan(_infer_attr_role(p.name))))
        elif p.kind == "integer":
            if p.name in pairs:
                partner, position = pairs[p.name]
                params.append((p.name, PairPlan(partner, position)))
            else:
                params.append((p.name, PrimitivePlan(config.integer_values)))
        elif p.kind == "boolean":
            params.append((p.name, PrimitivePlan(BOOLEAN_VALUES)))
    return ArgPlan(params=tuple(params))


def _attach_plans(chain: CallChain, graph: DepGraph, config: TestgenConfig) -> CallChain:
    """Producer chains carry only primitive/string params; resolve each step."""
    steps = []
    for step in chain.steps:
        plan = resolve_parameters(graph.api(step.api_id), graph, config)
        steps.append(ChainStep(step.api_id, step.index_zero, plan))
    return CallChain(steps=tuple(steps), produces=chain.produces)


# --- generation -----------------------------------------------------------------


def generate_cases(
    graph: DepGraph, labels: dict, config: TestgenConfig | None = None
) -> GenResult:
    """BFS from the root; every method of an expanded class is emitted once,
    but an already-visited return class is never re-expanded (Pruning #1)."""
    config = config or TestgenConfig()
    rng = random.Random(config.seed) if config.random_tiebreak else None
    result = GenResult()
    visited = {graph.root}
    queue = [graph.root]
    class_chain: dict = {graph.root: CallChain((), TypeRef("class", graph.root))}
    case_by_api: dict = {}

    while queue:
        cls = queue.pop(0)
        base = class_chain[cls]
        producer_case = case_by_api.get(base.steps[-1].api_id) if base.steps else None
        for api_id in graph.method_edges.get(cls, ()):
            api = graph.api(api_id)
            try:
                plan = resolve_parameters(api, graph, config)
            except UnresolvableParameter as exc:
                result.excluded.append((api_id, str(exc)))
                continue
            if plan.tutorial is not None:
                chain = plan.tutorial
            else:
                ret = graph.return_edges.get(api_id, TypeRef("void"))
                step = ChainStep(api_id, ret.kind == "array", plan)
                chain = CallChain(base.steps + (step,), _produced_type(ret))
            case = TestCase(
                id=f"tc{len(result.cases) + 1:04d}",
                target_api=api_id,
                label=labels[api_id],
                chain=chain,
                depends_on=producer_case,
            )
            result.cases.append(case)
            case_by_api.setdefault(api_id, case.id)
            nxt = producible_class(graph, api_id)
            if nxt is not None and nxt not in visited:
                visited.add(nxt)
                queue.append(nxt)
                class_chain[nxt] = _class_chain_for(nxt, chain, graph, config, rng)

    for cls in sorted(graph.class_nodes - visited):
        result.pruned.extend(graph.method_edges.get(cls, ()))
    return result


def _produced_type(ret: TypeRef) -> TypeRef:
    return TypeRef("class", ret.name) if ret.is_class else ret


def _class_chain_for(cls, fallback_chain, graph, config, rng) -> CallChain:
    """Prefer the shortest producer chain; fall back to the BFS emission chain
    when the class is only reachable through parameterized producers."""
    try:
        chain = shortest_producer_path(graph, cls, rng=rng)
        return _attach_plans(chain, graph, config)
    except (NoProducer, UnresolvableParameter):
        return fallback_chain


# --- ordering --------------------------------------------------------------------

_SHARING_ADD = ("add",)
_SHARING_REMOVE = ("remove", "delete", "revoke", "transfer")


def _order_key(case: TestCase, seq: int, method: str) -> tuple:
    first = re.match(r"[a-z]+", method)
    stem = first.group(0) if first else ""
    if case.label.touches_sharing:
        if stem in _SHARING_ADD:
            return (Operation.CREATE, 0, seq)
        if stem in _SHARING_REMOVE or (stem == "set" and "owner" in method.lower()):
            return (Operation.DELETE, 2, seq)
        return (case.label.operation, 1, seq)
    return (case.label.operation, 1, seq)


def order_suite(cases: list) -> list:
    """Stable operation-rank ordering (Create first, Delete last), sharing
    additions first and removals/ownership transfers last, with every
    dependency prefix case kept ahead of its dependents."""
    by_id = {c.id: c for c in cases}
    dependents: dict = {c.id: [] for c in cases}
    blocked: dict = {}
    for c in cases:
        dep = c.depends_on
        if dep is not None and dep in by_id:
            dependents[dep].append(c.id)
            blocked[c.id] = 1
        else:
            blocked[c.id] = 0

    seq = {c.id: i for i, c in enumerate(cases)}
    method = {c.id: by_id[c.id].target_api.split(".", 1)[1] for c in cases}
    heap = [
        (_order_key(c, seq[c.id], method[c.id]), c.id)
        for c in cases
        if blocked[c.id] == 0
    ]
    heapq.heapify(heap)
    out = []
    while heap:
        _, cid = heapq.heappop(heap)
        case = by_id[cid]
        out.append(case)
        for d in dependents[cid]:
            blocked[d] -= 1
            if blocked[d] == 0:
                heapq.heappush(heap, (_order_key(by_id[d], seq[d], method[d]), d))
    if len(out) != len(cases):
        stuck = sorted(set(by_id) - {c.id for c in out})
        raise CyclicDependency(f"unorderable cases: {stuck}")
    return out


def generate_suite(
    graph: DepGraph, labels: dict, config: TestgenConfig | None = None
) -> GenResult:
    """Full generation: BFS emission followed by suite ordering."""
    result = generate_cases(graph, labels, config)
    result.cases = order_suite(result.cases)
    return result


# --- serialization -----------------------------------------------------------------


def suite_to_jsonl(cases: list) -> str:
    return "".join(json.dumps(c.to_json(), sort_keys=False) + "\n" for c in cases)


def suite_from_jsonl(text: str) -> list:
    return [TestCase.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]
