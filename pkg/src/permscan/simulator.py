"""Reference two-level access-control simulator over hierarchical shared
resources.

Level 1 checks the add-on's granted OAuth scope, level 2 the installer's
role on the target resource plus object-level constraints (hidden objects,
protected ranges, sharing mutation).  Fault injection selectively skips a
check level for matching APIs so the detector can be validated against
known ground truth.
"""

from __future__ import annotations

import enum
import fnmatch
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .catalog import ApiSpec, Catalog
from .classify import Operation, PermissionLabel
from .errors import (
    DuplicateResourceId,
    MalformedFile,
    NotFound,
    PatternMatchesNothing,
    SchemaViolation,
    UnknownKind,
)

PERMISSION_DENIED_MESSAGE = (
    "Exception: You do not have permission to access the requested document."
)


class Role(enum.IntEnum):
    VIEWER = 0
    COMMENTER = 1
    EDITOR = 2
    OWNER = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @staticmethod
    def parse(text: str) -> "Role":
        return Role[text.strip().upper()]


# OAuth scope lattice: {read} < {read, edit} < {read, edit, delete}
SCOPE_READ = "read"
SCOPE_EDIT = "edit"
SCOPE_DELETE = "delete"

GRANT_READ = frozenset({SCOPE_READ})
GRANT_READ_EDIT = frozenset({SCOPE_READ, SCOPE_EDIT})
GRANT_FULL = frozenset({SCOPE_READ, SCOPE_EDIT, SCOPE_DELETE})

_VALID_GRANTS = (GRANT_READ, GRANT_READ_EDIT, GRANT_FULL, frozenset())

_SCOPE_FOR_OPERATION = {
    Operation.VIEW: SCOPE_READ,
    Operation.CREATE: SCOPE_EDIT,
    Operation.COMMENT: SCOPE_EDIT,
    Operation.MODIFY: SCOPE_EDIT,
    Operation.DELETE: SCOPE_DELETE,
}


def validate_grant(grant: frozenset) -> frozenset:
    grant = frozenset(grant)
    if SCOPE_EDIT in grant and SCOPE_READ not in grant:
        raise SchemaViolation("edit scope requires read")
    if SCOPE_DELETE in grant and SCOPE_EDIT not in grant:
        raise SchemaViolation("delete scope requires edit")
    return grant


def scope_covers(grant: frozenset, operation: Operation) -> bool:
    return _SCOPE_FOR_OPERATION[operation] in grant


class Decision(enum.Enum):
    ALLOW = "allow"
    DENY_SCOPE = "deny_scope"
    DENY_ROLE = "deny_role"


PROTECTABLE_KINDS = frozenset({"Range", "Sheet", "Row", "Column"})
HIDEABLE_KINDS = frozenset({"Range", "Sheet", "Row", "Column", "Cell"})


@dataclass
class ObjectNode:
    kind: str
    id: str
    content: str = ""
    hidden: bool = False
    protection: frozenset | None = None  # privileged user ids, None = unprotected
    children: list = field(default_factory=list)

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def to_json(self) -> dict:
        attrs: dict = {"content": self.content, "hidden": self.hidden}
        if self.protection is not None:
            attrs["protection"] = sorted(self.protection)
        return {
            "kind": self.kind,
            "id": self.id,
            "attrs": attrs,
            "children": [c.to_json() for c in self.children],
        }


@dataclass
class SharingConfig:
    roles: dict  # user id -> Role
    copy_download_print_allowed: bool = True

    @property
    def owner(self) -> str:
        owners = [u for u, r in self.roles.items() if r == Role.OWNER]
        return owners[0]

    def digest(self) -> str:
        payload = {
            "roles": {u: r.label for u, r in sorted(self.roles.items())},
            "copy_download_print_allowed": self.copy_download_print_allowed,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class FaultSpec:
    kind: str  # SkipScopeCheck | SkipRoleCheck | AllowSharingMutation
    api_pattern: str
    note: str = ""

    def matches(self, api_id: str) -> bool:
        return fnmatch.fnmatchcase(api_id, self.api_pattern)


FAULT_KINDS = ("SkipScopeCheck", "SkipRoleCheck", "AllowSharingMutation")


@dataclass(frozen=True)
class RoleCapabilityMatrix:
    """(role, operation, object kind) -> allowed.  '*' is the kind wildcard."""

    table: dict  # (role, operation, kind) -> bool

    def allows(self, role: Role, operation: Operation, kind: str) -> bool:
        key = (role, operation, kind)
        if key in self.table:
            return self.table[key]
        return self.table.get((role, operation, "*"), False)

    @staticmethod
    def from_json(doc: dict) -> "RoleCapabilityMatrix":
        table: dict = {}
        for role_name, ops in doc.items():
            role = Role.parse(role_name)
            for op_name, kinds in ops.items():
                op = Operation.parse(op_name)
                for kind, allowed in kinds.items():
                    table[(role, op, kind)] = bool(allowed)
        matrix = RoleCapabilityMatrix(table)
        matrix._check_invariants()
        return matrix

    def _check_invariants(self) -> None:
        for (role, op, kind), allowed in self.table.items():
            if allowed:
                for higher in Role:
                    if higher > role and not self.allows(higher, op, kind):
                        raise SchemaViolation(
                            f"matrix not monotone: {role.label}/{op.label}/{kind} allowed "
                            f"but {higher.label} denied"
                        )
        for op in Operation:
            if not self.allows(Role.OWNER, op, "*"):
                raise SchemaViolation(f"owner must be allowed {op.label}")


def load_capability_matrix(path: str | Path) -> RoleCapabilityMatrix:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    return RoleCapabilityMatrix.from_json(doc)


@dataclass(frozen=True)
class Subject:
    """A human collaborator, or an add-on acting on behalf of its installer."""

    user: str
    grant: frozenset | None = None  # None = human subject, no scope check

    @property
    def is_addon(self) -> bool:
        return self.grant is not None


@dataclass
class WorkspaceState:
    catalog: Catalog
    matrix: RoleCapabilityMatrix
    users: set = field(default_factory=set)
    resources: dict = field(default_factory=dict)  # resource id -> ObjectNode
    sharing: dict = field(default_factory=dict)  # resource id -> SharingConfig
    faults: list = field(default_factory=list)
    attribute_table: dict = field(default_factory=dict)  # (kind, role) -> [values]
    _fresh_counter: int = 0

    # --- indexing -----------------------------------------------------------

    def node(self, node_id: str) -> ObjectNode:
        for root in self.resources.values():
            for n in root.walk():
                if n.id == node_id:
                    return n
        raise NotFound(f"no object with id {node_id!r}")

    def resource_of(self, node: ObjectNode) -> str:
        for rid, root in self.resources.items():
            for n in root.walk():
                if n is node:
                    return rid
        raise NotFound(f"object {node.id!r} not attached to any resource")

    def role_of(self, user: str, resource_id: str) -> Role | None:
        cfg = self.sharing.get(resource_id)
        return cfg.roles.get(user) if cfg else None

    def record_attribute(self, kind: str, role: str, value: str) -> None:
        self.attribute_table.setdefault((kind, role), [])
        if value not in self.attribute_table[(kind, role)]:
            self.attribute_table[(kind, role)].append(value)

    def lookup_attribute(self, role: str, kind: str | None = None) -> str | None:
        for (k, r), values in sorted(self.attribute_table.items()):
            if r == role and (kind is None or k == kind) and values:
                return values[0]
        return None

    def state_digest(self) -> str:
        payload = {
            "resources": {rid: n.to_json() for rid, n in sorted(self.resources.items())},
            "sharing": {
                rid: {"roles": {u: r.label for u, r in sorted(c.roles.items())},
                      "flags": c.copy_download_print_allowed}
                for rid, c in sorted(self.sharing.items())
            },
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def faults_for(self, api_id: str) -> set:
        return {f.kind for f in self.faults if f.matches(api_id)}


# --- template loading -------------------------------------------------------


def _parse_node(entry: dict, catalog: Catalog, seen: set) -> ObjectNode:
    kind = entry.get("kind")
    if kind not in catalog.classes:
        raise UnknownKind(f"template names unknown kind {kind!r}")
    node_id = entry.get("id")
    if not isinstance(node_id, str) or not node_id:
        raise SchemaViolation(f"template node missing id: {entry!r}")
    if node_id in seen:
        raise DuplicateResourceId(f"duplicate resource id {node_id!r}")
    seen.add(node_id)
    attrs = entry.get("attrs", {})
    hidden = bool(attrs.get("hidden", False))
    if hidden and kind not in HIDEABLE_KINDS:
        raise SchemaViolation(f"{node_id}: kind {kind!r} is not hideable")
    protection = attrs.get("protection")
    if protection is not None:
        if kind not in PROTECTABLE_KINDS:
            raise SchemaViolation(f"{node_id}: kind {kind!r} is not protectable")
        protection = frozenset(protection)
    node = ObjectNode(
        kind=kind,
        id=node_id,
        content=str(attrs.get("content", "")),
        hidden=hidden,
        protection=protection,
    )
    for child in entry.get("children", []):
        node.children.append(_parse_node(child, catalog, seen))
    return node


def instantiate_template(
    template: str | Path, catalog: Catalog, matrix: RoleCapabilityMatrix
) -> WorkspaceState:
    """Fresh workspace from a template file: resources, sharing, seeded
    attribute table, no faults."""
    try:
        doc = json.loads(Path(template).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{template}: {exc}") from exc
    state = WorkspaceState(catalog=catalog, matrix=matrix)
    seen: set = set()
    for entry in doc.get("resources", []):
        node = _parse_node(entry, catalog, seen)
        state.resources[node.id] = node
    for rid, cfg in doc.get("sharing", {}).items():
        if rid not in state.resources:
            raise NotFound(f"sharing entry for unknown resource {rid!r}")
        roles = {u: Role.parse(r) for u, r in cfg.get("roles", {}).items()}
        owners = [u for u, r in roles.items() if r == Role.OWNER]
        if len(owners) != 1:
            raise SchemaViolation(f"{rid}: sharing must name exactly one owner")
        state.sharing[rid] = SharingConfig(
            roles=roles,
            copy_download_print_allowed=bool(cfg.get("copy_download_print_allowed", True)),
        )
        state.users.update(roles)
    for root in state.resources.values():
        for n in root.walk():
            state.record_attribute(n.kind, "id", n.id)
            state.record_attribute(n.kind, "name", n.id)
            state.record_attribute(n.kind, "url", f"https://workspace.local/{n.id}")
    return state


# --- access decisions ---------------------------------------------------------


def _unhide_privileged(state: WorkspaceState, user: str, node: ObjectNode, resource_id: str) -> bool:
    role = state.role_of(user, resource_id)
    if role == Role.OWNER:
        return True
    if node.protection is not None and user in node.protection:
        return True
    # editors may unhide whole sheets, but not protection-hidden finer objects
    return role == Role.EDITOR and node.kind == "Sheet" and node.protection is None


def _role_level_denies(
    state: WorkspaceState,
    user: str,
    label: PermissionLabel,
    target: ObjectNode,
    produced: ObjectNode | None = None,
) -> bool:
    resource_id = state.resource_of(target)
    role = state.role_of(user, resource_id)
    if role is None:
        return True
    if not state.matrix.allows(role, label.operation, label.object_kind):
        return True
    for node in filter(None, (target, produced)):
        if node.hidden and not _unhide_privileged(state, user, node, resource_id):
            return True
        if (
            node.protection is not None
            and label.operation in (Operation.CREATE, Operation.MODIFY, Operation.DELETE)
            and role != Role.OWNER
            and user not in node.protection
        ):
            return True
    return False


def _sharing_denies(
    state: WorkspaceState, user: str, label: PermissionLabel, target: ObjectNode
) -> bool:
    if not label.touches_sharing:
        return False
    if label.operation == Operation.VIEW:
        return False
    return state.role_of(user, state.resource_of(target)) != Role.OWNER


def check_access(
    state: WorkspaceState,
    subject: Subject,
    label: PermissionLabel,
    target: ObjectNode,
    produced: ObjectNode | None = None,
) -> Decision:
    """Fault-free reference decision for one (subject, operation, object)."""
    if subject.is_addon and not scope_covers(subject.grant, label.operation):
        return Decision.DENY_SCOPE
    if _role_level_denies(state, subject.user, label, target, produced):
        return Decision.DENY_ROLE
    if _sharing_denies(state, subject.user, label, target):
        return Decision.DENY_ROLE
    return Decision.ALLOW


# --- invocation ----------------------------------------------------------------


@dataclass
class InvocationResult:
    ok: bool
    value: str = ""  # summary of the returned / mutated value
    node: ObjectNode | None = None  # produced object, when class-typed
    error: str | None = None  # PermissionError message or error kind
    error_kind: str | None = None  # "PermissionError" | "TypeError" | "NotFound"


def _deny() -> InvocationResult:
    return InvocationResult(
        ok=False, error=PERMISSION_DENIED_MESSAGE, error_kind="PermissionError"
    )


def _find_of_kind(state: WorkspaceState, kind: str, receiver: ObjectNode | None):
    if receiver is not None:
        for n in receiver.walk():
            if n.kind == kind and n is not receiver:
                return n
    for root in state.resources.values():
        for n in root.walk():
            if n.kind == kind:
                return n
    return None


_VIEW_STEMS = ("get", "is", "has", "find", "list", "read", "open", "wait")


def _apply_effect(
    state: WorkspaceState,
    ctx: Subject,
    api: ApiSpec,
    label: PermissionLabel,
    receiver: ObjectNode | None,
    produced: ObjectNode | None,
    args: dict,
) -> InvocationResult:
    method = api.method
    low = method.lower()

    if label.touches_sharing and label.operation != Operation.VIEW:
        rid = state.resource_of(receiver) if receiver is not None else next(iter(state.resources))
        cfg = state.sharing[rid]
        subject_user = str(args.get(api.params[0].name)) if api.params else "collaborator-1"
        if low.startswith(("set", "transfer")) and "owner" in low:
            old_owner = cfg.owner
            cfg.roles[old_owner] = Role.EDITOR
            cfg.roles[subject_user] = Role.OWNER
            return InvocationResult(True, f"ownership transferred to {subject_user}")
        if low.startswith("add"):
            new_role = Role.EDITOR if "editor" in low else (
                Role.VIEWER if "viewer" in low else Role.COMMENTER
            )
            cfg.roles[subject_user] = new_role
            return InvocationResult(True, f"added {subject_user} as {new_role.label}")
        if low.startswith(("remove", "revoke", "delete")):
            # unknown collaborator ids resolve to an arbitrary existing
            # non-owner collaborator so revocation paths stay exercisable
            if subject_user not in cfg.roles or cfg.roles[subject_user] == Role.OWNER:
                others = sorted(u for u, r in cfg.roles.items() if r != Role.OWNER)
                subject_user = others[0] if others else None
            if subject_user is not None:
                del cfg.roles[subject_user]
                return InvocationResult(True, f"removed {subject_user}")
            return InvocationResult(True, "no collaborator removed")

    if label.touches_sharing and label.operation == Operation.VIEW:
        rid = state.resource_of(receiver) if receiver is not None else next(iter(state.resources))
        cfg = state.sharing[rid]
        names = ",".join(sorted(cfg.roles))
        return InvocationResult(True, names)

    if label.operation == Operation.VIEW or any(low.startswith(s) for s in _VIEW_STEMS):
        if produced is not None:
            value = produced.content or produced.id
            state.record_attribute(produced.kind, "id", produced.id)
            state.record_attribute(produced.kind, "name", produced.id)
            return InvocationResult(True, value, node=produced)
        target = receiver
        value = (target.content or target.id) if target is not None else ""
        return InvocationResult(True, value, node=receiver)

    if label.operation == Operation.CREATE:
        kind = api.returns.class_name
        parent = receiver if receiver is not None else None
        state._fresh_counter += 1
        if kind is not None and kind in state.catalog.classes:
            new = ObjectNode(kind=kind, id=f"{kind.lower()}-{state._fresh_counter}")
            if parent is not None:
                parent.children.append(new)
            else:
                state.resources[new.id] = new
                state.sharing[new.id] = SharingConfig(roles={ctx.user: Role.OWNER})
            state.record_attribute(new.kind, "id", new.id)
            state.record_attribute(new.kind, "name", new.id)
            return InvocationResult(True, f"created {new.id}", node=new)
        return InvocationResult(True, f"created item {state._fresh_counter}")

    if label.operation == Operation.COMMENT:
        target = receiver
        if target is not None:
            target.content = (target.content + " [comment]").strip()
        return InvocationResult(True, "comment added", node=receiver)

    if label.operation == Operation.MODIFY:
        target = receiver
        if target is None:
            return InvocationResult(True, "modified")
        if low.startswith("unhide"):
            unhidden = [n for n in target.walk() if n.hidden]
            for n in unhidden:
                n.hidden = False
            which = ",".join(n.id for n in unhidden) or target.id
            return InvocationResult(True, f"unhid {which}", node=target)
        if low.startswith("hide"):
            target.hidden = target.kind in HIDEABLE_KINDS
            return InvocationResult(True, f"hid {target.id}", node=target)
        new_value = next((str(v) for v in args.values()), "updated")
        target.content = new_value
        return InvocationResult(True, f"set {target.id} content={new_value}", node=target)

    if label.operation == Operation.DELETE:
        target = produced if produced is not None else receiver
        if target is None:
            return InvocationResult(True, "deleted nothing")
        removed = None
        if receiver is not None:
            for child in list(receiver.children):
                removed = child
                receiver.children.remove(child)
                break
        if removed is None:
            for rid, root in list(state.resources.items()):
                if root is target:
                    del state.resources[rid]
                    self_cfg = state.sharing.pop(rid, None)
                    removed = root
                    break
        name = removed.id if removed is not None else target.id
        return InvocationResult(True, f"deleted {name}")

    return InvocationResult(True, "ok")


def invoke_host_api(
    state: WorkspaceState,
    ctx: Subject,
    api_id: str,
    label: PermissionLabel,
    receiver: ObjectNode | None = None,
    args: dict | None = None,
) -> InvocationResult:
    """Execute one chain step: fault-aware two-level check, then the
    semantic effect.  Denials never mutate state."""
    args = args or {}
    api = state.catalog.apis.get(api_id)
    if api is None:
        raise NotFound(f"unknown API {api_id!r}")
    if receiver is not None and receiver.kind != api.parent_class:
        return InvocationResult(
            ok=False,
            error=f"receiver is {receiver.kind}, expected {api.parent_class}",
            error_kind="TypeError",
        )

    faults = state.faults_for(api_id)

    produced: ObjectNode | None = None
    is_create = label.operation == Operation.CREATE
    if api.returns.is_class and not is_create:
        produced = _find_of_kind(state, api.returns.name, receiver)

    check_target = receiver if receiver is not None else produced

    if ctx.is_addon and "SkipScopeCheck" not in faults:
        if not scope_covers(ctx.grant, label.operation):
            return _deny()

    if check_target is not None:
        if "SkipRoleCheck" not in faults:
            if _role_level_denies(state, ctx.user, label, check_target, produced):
                return _deny()
        if "AllowSharingMutation" not in faults:
            if _sharing_denies(state, ctx.user, label, check_target):
                return _deny()

    if api.returns.is_class and not is_create and produced is None:
        return InvocationResult(
            ok=False, error=f"no {api.returns.name} object available", error_kind="NotFound"
        )

    return _apply_effect(state, ctx, api, label, receiver, produced, args)


# --- fault injection ------------------------------------------------------------


def inject_fault(state: WorkspaceState, fault: FaultSpec) -> WorkspaceState:
    """Record a fault; idempotent; pattern must match at least one API."""
    if fault.kind not in FAULT_KINDS:
        raise SchemaViolation(f"unknown fault kind {fault.kind!r}")
    if not any(fault.matches(api_id) for api_id in state.catalog.apis):
        raise PatternMatchesNothing(f"pattern {fault.api_pattern!r} matches no API")
    if fault not in state.faults:
        state.faults.append(fault)
    return state


def load_faults(path: str | Path) -> list:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"{path}: {exc}") from exc
    return [
        FaultSpec(kind=e["kind"], api_pattern=e["api_pattern"], note=e.get("note", ""))
        for e in doc
    ]


def sharing_digest(state: WorkspaceState, resource_id: str | None = None) -> str:
    """Order-insensitive digest of the sharing configuration.  Without a
    resource id, digests the whole sharing map (campaign-level tracking)."""
    if resource_id is not None:
        if resource_id not in state.sharing:
            raise NotFound(f"no resource {resource_id!r}")
        return state.sharing[resource_id].digest()
    combined = {rid: cfg.digest() for rid, cfg in sorted(state.sharing.items())}
    return hashlib.sha256(json.dumps(combined, sort_keys=True).encode()).hexdigest()
