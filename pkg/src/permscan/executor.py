"""Suite execution against a backend: role-matrix and scope-ladder
campaigns, per-session dependency pruning (Pruning #2), outcome records."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Protocol

from .classify import Operation
from .errors import BackendUnavailable
from .graph import CallChain
from .simulator import (
    GRANT_FULL,
    GRANT_READ,
    GRANT_READ_EDIT,
    InvocationResult,
    ObjectNode,
    Role,
    Subject,
    WorkspaceState,
    inject_fault,
    instantiate_template,
    invoke_host_api,
    sharing_digest,
)
from .testgen import (
    ArgPlan,
    AttributePlan,
    PairPlan,
    PrimitivePlan,
    ProducerPlan,
    TestCase,
)

CASE_TIMEOUT_SECONDS = 10.0

OUTCOME_SUCCESS = "Success"
OUTCOME_PERMISSION_ERROR = "PermissionError"
OUTCOME_OTHER_ERROR = "OtherError"
OUTCOME_PRUNED = "Pruned"


@dataclass
class ExecutionRecord:
    case_id: str
    api: str
    mode: str  # "role-matrix" | "scope-ladder"
    role: Role
    installer: str
    grant: frozenset
    outcome: str
    error: str | None = None
    digest_before: str = ""
    digest_after: str = ""
    touched: list = field(default_factory=list)  # [(object id, kind), ...]
    evidence: str | None = None  # present only on Success
    target_object: str | None = None  # final-step receiver id
    produced_object: str | None = None  # final-step produced id

    def to_json(self) -> dict:
        return {
            "case": self.case_id,
            "api": self.api,
            "mode": self.mode,
            "role": self.role.label,
            "installer": self.installer,
            "grant": sorted(self.grant),
            "outcome": self.outcome,
            "error": self.error,
            "digest_before": self.digest_before,
            "digest_after": self.digest_after,
            "touched": [list(t) for t in self.touched],
            "evidence": self.evidence,
            "target_object": self.target_object,
            "produced_object": self.produced_object,
        }

    @staticmethod
    def from_json(obj: dict) -> "ExecutionRecord":
        return ExecutionRecord(
            case_id=obj["case"],
            api=obj["api"],
            mode=obj["mode"],
            role=Role.parse(obj["role"]),
            installer=obj["installer"],
            grant=frozenset(obj["grant"]),
            outcome=obj["outcome"],
            error=obj["error"],
            digest_before=obj["digest_before"],
            digest_after=obj["digest_after"],
            touched=[tuple(t) for t in obj["touched"]],
            evidence=obj["evidence"],
            target_object=obj.get("target_object"),
            produced_object=obj.get("produced_object"),
        )


class Backend(Protocol):
    """Adapter surface a real-platform driver would implement."""

    def start_session(self, installer: str, grant: frozenset) -> "Session": ...

    def user_with_role(self, role: Role) -> str: ...


@dataclass
class Session:
    state: WorkspaceState
    ctx: Subject
    role: Role
    mode: str
    failed_cases: set = field(default_factory=set)  # case ids that did not succeed


class SimulatorBackend:
    """Runs suites against the in-process workspace simulator."""

    def __init__(self, catalog, template_path, matrix, faults=()):
        self.catalog = catalog
        self.template_path = template_path
        self.matrix = matrix
        self.faults = list(faults)

    def user_with_role(self, role: Role) -> str:
        probe = instantiate_template(self.template_path, self.catalog, self.matrix)
        candidates = sorted(
            u for cfg in probe.sharing.values() for u, r in cfg.roles.items() if r == role
        )
        if not candidates:
            raise BackendUnavailable(f"template has no user with role {role.label}")
        return candidates[0]

    def start_session(self, installer: str, grant: frozenset, mode: str = "role-matrix") -> Session:
        state = instantiate_template(self.template_path, self.catalog, self.matrix)
        for fault in self.faults:
            inject_fault(state, fault)
        role = None
        for cfg in state.sharing.values():
            if installer in cfg.roles:
                role = cfg.roles[installer]
                break
        if role is None:
            raise BackendUnavailable(f"installer {installer!r} is not a collaborator")
        return Session(state=state, ctx=Subject(installer, grant), role=role, mode=mode)


# --- chain execution -----------------------------------------------------------


class _StepFailure(Exception):
    def __init__(self, result: InvocationResult):
        self.result = result
        super().__init__(result.error)


def _resolve_args(session: Session, plan: ArgPlan, combo: dict, touched: list) -> dict:
    args: dict = {}
    pair_values: dict = {}
    for name, strat in plan.params:
        if isinstance(strat, PairPlan) and strat.position == "lo":
            pair_values[name] = strat.fallback[0]
            pair_values[strat.partner] = strat.fallback[1]
    for name, strat in plan.params:
        if isinstance(strat, ProducerPlan):
            result = _run_chain(session, strat.chain, {}, touched)
            args[name] = result.node
        elif isinstance(strat, AttributePlan):
            value = session.state.lookup_attribute(strat.role)
            if value is None:
                # cold start: mint a fresh resource so the lookup can succeed
                state = session.state
                state._fresh_counter += 1
                kind = next(iter(state.catalog.roots.values()))
                value = f"fresh-{kind.lower()}-{state._fresh_counter}"
                state.record_attribute(kind, strat.role, value)
            args[name] = value
        elif isinstance(strat, PrimitivePlan):
            args[name] = combo.get(name, strat.values[0])
        elif isinstance(strat, PairPlan):
            args[name] = pair_values[name]
    return args


def _run_chain(session: Session, chain: CallChain, combo: dict, touched: list) -> InvocationResult:
    receiver: ObjectNode | None = None
    result = InvocationResult(True)
    for i, step in enumerate(chain.steps):
        api = session.state.catalog.apis[step.api_id]
        from .classify import classify_api  # local import to avoid a cycle

        label, _ = classify_api(api, session.state.catalog)
        plan = step.args or ArgPlan()
        is_final = i == len(chain.steps) - 1
        args = _resolve_args(session, plan, combo if is_final else {}, touched)
        result = invoke_host_api(
            session.state, session.ctx, step.api_id, label, receiver=receiver, args=args
        )
        if receiver is not None:
            touched.append((receiver.id, receiver.kind))
        if result.node is not None:
            touched.append((result.node.id, result.node.kind))
        if not result.ok:
            raise _StepFailure(result)
        receiver = result.node
    return result


def _combos(case: TestCase, cap: int) -> list:
    """Up to `cap` value combinations for the final step's enumerated params;
    first values preferred."""
    final = case.chain.steps[-1] if case.chain.steps else None
    if final is None or final.args is None:
        return [{}]
    enum_params = [
        (name, strat.values)
        for name, strat in final.args.params
        if isinstance(strat, PrimitivePlan)
    ]
    if not enum_params:
        return [{}]
    names = [n for n, _ in enum_params]
    products = itertools.product(*(v for _, v in enum_params))
    return [dict(zip(names, values)) for values in itertools.islice(products, cap)]


def _dependency_failed(session: Session, case: TestCase, suite_index: dict) -> bool:
    dep = case.depends_on
    seen = set()
    while dep is not None and dep not in seen:
        if dep in session.failed_cases:
            return True
        seen.add(dep)
        parent = suite_index.get(dep)
        dep = parent.depends_on if parent is not None else None
    return False


def run_case(
    session: Session, case: TestCase, suite_index: dict | None = None, cap: int = 4
) -> ExecutionRecord:
    """Execute one case in a session.  Cases whose dependency prefix already
    failed are recorded as Pruned and never sent to the backend."""
    suite_index = suite_index or {}
    base = dict(
        case_id=case.id,
        api=case.target_api,
        mode=session.mode,
        role=session.role,
        installer=session.ctx.user,
        grant=session.ctx.grant,
    )
    if _dependency_failed(session, case, suite_index):
        session.failed_cases.add(case.id)
        return ExecutionRecord(outcome=OUTCOME_PRUNED, **base)

    digest_before = sharing_digest(session.state)
    touched: list = []
    started = time.monotonic()
    last_failure: InvocationResult | None = None
    result: InvocationResult | None = None
    final_receiver: str | None = None
    final_produced: str | None = None
    for combo in _combos(case, cap):
        touched.clear()
        try:
            result = _run_chain(session, case.chain, combo, touched)
            last_failure = None
            break
        except _StepFailure as exc:
            last_failure = exc.result
            result = None
    elapsed = time.monotonic() - started
    digest_after = sharing_digest(session.state)

    if touched:
        final_produced = touched[-1][0]
        final_receiver = touched[-2][0] if len(touched) >= 2 else touched[-1][0]

    if elapsed > CASE_TIMEOUT_SECONDS:
        session.failed_cases.add(case.id)
        return ExecutionRecord(
            outcome=OUTCOME_OTHER_ERROR, error="Timeout", digest_before=digest_before,
            digest_after=digest_after, touched=list(touched), **base,
        )
    if result is not None:
        return ExecutionRecord(
            outcome=OUTCOME_SUCCESS,
            digest_before=digest_before,
            digest_after=digest_after,
            touched=list(touched),
            evidence=result.value,
            target_object=final_receiver,
            produced_object=result.node.id if result.node is not None else final_produced,
            **base,
        )
    session.failed_cases.add(case.id)
    # failure detection keys on the Exception: prefix, like the platform log
    is_permission = (last_failure.error or "").startswith("Exception:")
    return ExecutionRecord(
        outcome=OUTCOME_PERMISSION_ERROR if is_permission else OUTCOME_OTHER_ERROR,
        error=last_failure.error,
        digest_before=digest_before,
        digest_after=digest_after,
        touched=list(touched),
        target_object=final_receiver,
        produced_object=final_produced,
        **base,
    )


def _run_session(backend, installer: str, grant: frozenset, suite: list, mode: str) -> list:
    session = backend.start_session(installer, grant, mode=mode)
    index = {c.id: c for c in suite}
    return [run_case(session, case, index) for case in suite]


def run_role_matrix(suite: list, backend) -> list:
    """Viewer, commenter and editor sessions, each with the full grant and a
    fresh template."""
    records: list = []
    for role in (Role.VIEWER, Role.COMMENTER, Role.EDITOR):
        installer = backend.user_with_role(role)
        records.extend(_run_session(backend, installer, GRANT_FULL, suite, "role-matrix"))
    return records


def run_scope_ladder(suite: list, backend) -> list:
    """Owner sessions with progressively wider grants: {read}, then
    {read, edit}."""
    records: list = []
    installer = backend.user_with_role(Role.OWNER)
    for grant in (GRANT_READ, GRANT_READ_EDIT):
        records.extend(_run_session(backend, installer, grant, suite, "scope-ladder"))
    return records


def records_to_jsonl(records: list) -> str:
    import json

    return "".join(json.dumps(r.to_json()) + "\n" for r in records)


def records_from_jsonl(text: str) -> list:
    import json

    return [
        ExecutionRecord.from_json(json.loads(line))
        for line in text.splitlines()
        if line.strip()
    ]
