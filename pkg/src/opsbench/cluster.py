"""Simulated microservice cluster: topology, per-service config documents,
replica runtime state, and the patch/describe surface agents operate on.

State transitions are pure: every operation returns a new ClusterState and
never mutates its input. Error messages that agents can trigger replicate
kubectl's wording exactly, because agent-facing feedback quality matters as
much as the state change itself.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Iterable, Mapping

PORT_MIN = 1
PORT_MAX = 65535

DEFAULT_REPLICAS = 1
DEFAULT_CPU_LIMIT = 500
DEFAULT_MEM_LIMIT_MB = 256
DEFAULT_BASE_LATENCY_MS = 10.0


class TopologyError(ValueError):
    """Raised when a topology document fails validation."""


class ClusterError(Exception):
    """Operation-level failure whose str() is the agent-visible message."""


def unknown_namespace(namespace: str) -> ClusterError:
    return ClusterError(f'Error: namespaces "{namespace}" not found')


def unknown_service(name: str) -> ClusterError:
    return ClusterError(f'Error: services "{name}" not found')


class ReplicaState(str, Enum):
    RUNNING = "Running"
    CRASH_LOOP = "CrashLoopBackOff"
    TERMINATED = "Terminated"


@dataclass(frozen=True)
class ServiceSpec:
    """Declared shape of one service, before any overlays."""

    name: str
    namespace: str
    listen_port: int
    target_port: int
    dependencies: tuple[str, ...] = ()
    replicas: int = DEFAULT_REPLICAS
    cpu_limit: int = DEFAULT_CPU_LIMIT
    mem_limit_mb: int = DEFAULT_MEM_LIMIT_MB
    base_latency_ms: float = DEFAULT_BASE_LATENCY_MS
    entrypoint: bool = False

    def base_config(self) -> dict:
        """Two-level config document that patch paths resolve against."""
        return {
            "metadata": {
                "name": self.name,
                "namespace": self.namespace,
                "labels": {"service": self.name},
            },
            "spec": {
                "ports": [{"port": self.listen_port, "targetPort": self.target_port}],
                "replicas": self.replicas,
            },
        }


@dataclass(frozen=True)
class Topology:
    app_name: str
    namespace: str
    services: dict[str, ServiceSpec]

    @property
    def entrypoints(self) -> tuple[str, ...]:
        return tuple(n for n, s in self.services.items() if s.entrypoint)

    def callers(self) -> dict[str, tuple[str, ...]]:
        """Reverse dependency map: service -> services that call it."""
        rev: dict[str, list[str]] = {name: [] for name in self.services}
        for name, spec in self.services.items():
            for dep in spec.dependencies:
                rev[dep].append(name)
        return {name: tuple(callers) for name, callers in rev.items()}


@dataclass(frozen=True)
class ConfigPatch:
    op: str  # replace | add | remove
    path: str
    value: Any = None

    def to_doc(self) -> dict:
        doc: dict[str, Any] = {"op": self.op, "path": self.path}
        if self.op != "remove":
            doc["value"] = self.value
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping[str, Any]) -> "ConfigPatch":
        return cls(op=str(doc["op"]), path=str(doc["path"]), value=doc.get("value"))


# Overlay entries remember who appended them so clearing a fault can remove
# exactly its own patches while keeping any the agent applied.
@dataclass(frozen=True)
class Overlay:
    patch: ConfigPatch
    origin: str  # "patch" for agent/orchestrator actions, else a fault id


@dataclass(frozen=True)
class ClusterState:
    topology: Topology
    replica_status: dict[tuple[str, int], ReplicaState]
    overlays: dict[str, tuple[Overlay, ...]]
    partitions: frozenset[tuple[str, str]]
    resource_usage: dict[str, tuple[float, float]]  # service -> (cpu mcores, mem MB)
    restarts: dict[tuple[str, int], int]
    clock_ms: float = 0.0
    active_faults: dict[str, Any] = field(default_factory=dict)

    def with_clock(self, clock_ms: float) -> "ClusterState":
        if clock_ms < self.clock_ms:
            raise ValueError(f"clock must not go backwards: {clock_ms} < {self.clock_ms}")
        return replace(self, clock_ms=clock_ms)

    def running_replicas(self, service: str) -> int:
        spec = self.topology.services[service]
        return sum(
            1
            for idx in range(spec.replicas)
            if self.replica_status.get((service, idx)) == ReplicaState.RUNNING
        )


def base_resources(spec: ServiceSpec) -> tuple[float, float]:
    """Idle resource point a fresh replica set starts from."""
    return (spec.cpu_limit / 10.0, spec.mem_limit_mb / 4.0)


def initial_state(topology: Topology) -> ClusterState:
    replica_status = {
        (name, idx): ReplicaState.RUNNING
        for name, spec in topology.services.items()
        for idx in range(spec.replicas)
    }
    return ClusterState(
        topology=topology,
        replica_status=replica_status,
        overlays={name: () for name in topology.services},
        partitions=frozenset(),
        resource_usage={name: base_resources(s) for name, s in topology.services.items()},
        restarts={key: 0 for key in replica_status},
        clock_ms=0.0,
        active_faults={},
    )


# --- topology loading ---


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise TopologyError(message)


def load_topology(document: Mapping[str, Any]) -> Topology:
    """Validate a topology document (parsed YAML/JSON) into a Topology.

    Rejects cycles, duplicate (name, namespace) pairs, ports outside
    1-65535, unknown dependency names, and topologies without an
    entrypoint.
    """
    _require(isinstance(document, Mapping), "topology document must be a mapping")
    app = document.get("app")
    namespace = document.get("namespace")
    _require(isinstance(app, str) and bool(app), "topology requires a non-empty 'app'")
    _require(isinstance(namespace, str) and bool(namespace), "topology requires a non-empty 'namespace'")
    raw_services = document.get("services")
    _require(isinstance(raw_services, list) and bool(raw_services), "topology requires a non-empty 'services' list")

    services: dict[str, ServiceSpec] = {}
    for entry in raw_services:
        _require(isinstance(entry, Mapping), "each service entry must be a mapping")
        name = entry.get("name")
        _require(isinstance(name, str) and bool(name), "service requires a non-empty 'name'")
        _require(name not in services, f"duplicate service ({name}, {namespace})")
        port = entry.get("port")
        _require(isinstance(port, int) and PORT_MIN <= port <= PORT_MAX, f"service {name}: port must be in {PORT_MIN}-{PORT_MAX}")
        target = entry.get("targetPort", port)
        _require(isinstance(target, int) and PORT_MIN <= target <= PORT_MAX, f"service {name}: targetPort must be in {PORT_MIN}-{PORT_MAX}")
        deps = entry.get("dependencies", [])
        _require(isinstance(deps, list) and all(isinstance(d, str) for d in deps), f"service {name}: dependencies must be a list of names")
        _require(len(set(deps)) == len(deps), f"service {name}: duplicate dependency")
        replicas = entry.get("replicas", DEFAULT_REPLICAS)
        _require(isinstance(replicas, int) and replicas >= 0, f"service {name}: replicas must be >= 0")
        services[name] = ServiceSpec(
            name=name,
            namespace=namespace,
            listen_port=port,
            target_port=target,
            dependencies=tuple(deps),
            replicas=replicas,
            cpu_limit=int(entry.get("cpuLimit", DEFAULT_CPU_LIMIT)),
            mem_limit_mb=int(entry.get("memLimitMb", DEFAULT_MEM_LIMIT_MB)),
            base_latency_ms=float(entry.get("baseLatencyMs", DEFAULT_BASE_LATENCY_MS)),
            entrypoint=bool(entry.get("entrypoint", False)),
        )

    for name, spec in services.items():
        for dep in spec.dependencies:
            _require(dep in services, f"service {name}: unknown dependency '{dep}'")

    _detect_cycle(services)
    topology = Topology(app_name=app, namespace=namespace, services=services)
    _require(bool(topology.entrypoints), "topology requires at least one entrypoint service")
    return topology


def _detect_cycle(services: Mapping[str, ServiceSpec]) -> None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in services}
    for root in services:
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, Iterable[str]]] = [(root, iter(services[root].dependencies))]
        color[root] = GREY
        while stack:
            node, deps = stack[-1]
            advanced = False
            for dep in deps:
                if color[dep] == GREY:
                    raise TopologyError(f"dependency cycle detected through '{dep}'")
                if color[dep] == WHITE:
                    color[dep] = GREY
                    stack.append((dep, iter(services[dep].dependencies)))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()


# --- effective configuration ---


def _resolve_parent(doc: Any, segments: list[str], path: str) -> tuple[Any, str]:
    node = doc
    for seg in segments[:-1]:
        node = _step(node, seg, path)
    return node, segments[-1]


def _step(node: Any, seg: str, path: str) -> Any:
    if isinstance(node, list):
        if not re.fullmatch(r"\d+", seg) or int(seg) >= len(node):
            raise ClusterError(f'Error: path "{path}" not found')
        return node[int(seg)]
    if isinstance(node, dict):
        if seg not in node:
            raise ClusterError(f'Error: path "{path}" not found')
        return node[seg]
    raise ClusterError(f'Error: path "{path}" not found')


def apply_patch_to_doc(doc: dict, patch: ConfigPatch) -> dict:
    """Apply one slash-path patch to a config document, returning a copy."""
    if patch.op not in ("replace", "add", "remove"):
        raise ClusterError(f'Error: unknown patch op "{patch.op}"')
    if not patch.path.startswith("/") or patch.path == "/":
        raise ClusterError(f'Error: path "{patch.path}" not found')
    out = copy.deepcopy(doc)
    segments = patch.path[1:].split("/")
    parent, key = _resolve_parent(out, segments, patch.path)

    if isinstance(parent, list):
        if not re.fullmatch(r"\d+", key):
            raise ClusterError(f'Error: path "{patch.path}" not found')
        idx = int(key)
        if patch.op == "add":
            if idx > len(parent):
                raise ClusterError(f'Error: path "{patch.path}" not found')
            parent.insert(idx, patch.value)
        elif idx >= len(parent):
            raise ClusterError(f'Error: path "{patch.path}" not found')
        elif patch.op == "replace":
            parent[idx] = patch.value
        else:
            del parent[idx]
    elif isinstance(parent, dict):
        if patch.op == "add":
            parent[key] = patch.value
        elif key not in parent:
            raise ClusterError(f'Error: path "{patch.path}" not found')
        elif patch.op == "replace":
            parent[key] = patch.value
        else:
            del parent[key]
    else:
        raise ClusterError(f'Error: path "{patch.path}" not found')
    return out


def effective_config(state: ClusterState, service: str) -> dict:
    """Base config document with the service's overlays applied in order."""
    spec = state.topology.services[service]
    doc = spec.base_config()
    for overlay in state.overlays.get(service, ()):
        doc = apply_patch_to_doc(doc, overlay.patch)
    return doc


def effective_ports(state: ClusterState, service: str) -> tuple[int, int]:
    """(listen port, target port) after overlays."""
    doc = effective_config(state, service)
    entry = doc["spec"]["ports"][0]
    return int(entry["port"]), int(entry["targetPort"])


def _check_target(state: ClusterState, service: str, namespace: str) -> ServiceSpec:
    if namespace != state.topology.namespace:
        raise unknown_namespace(namespace)
    spec = state.topology.services.get(service)
    if spec is None:
        raise unknown_service(service)
    return spec


def apply_patch(
    state: ClusterState,
    service: str,
    namespace: str,
    patch: ConfigPatch,
    telemetry: Any = None,
    origin: str = "patch",
) -> ClusterState:
    """Append a validated overlay; pure with respect to the input state.

    When a telemetry sink is given, a config-change log record is emitted;
    fault injection passes none so injections stay invisible to agents.
    """
    _check_target(state, service, namespace)
    # Validate against the current effective document so errors surface now,
    # not on the next describe.
    apply_patch_to_doc(effective_config(state, service), patch)
    overlays = dict(state.overlays)
    overlays[service] = overlays.get(service, ()) + (Overlay(patch=patch, origin=origin),)
    new_state = replace(state, overlays=overlays)
    if telemetry is not None:
        telemetry.log_config_change(state.clock_ms, service, namespace)
    return new_state


def remove_overlays(state: ClusterState, service: str, origin: str) -> ClusterState:
    """Drop every overlay a given origin appended to one service."""
    overlays = dict(state.overlays)
    overlays[service] = tuple(o for o in overlays.get(service, ()) if o.origin != origin)
    return replace(state, overlays=overlays)


# --- describe rendering ---

_LABEL_WIDTH = 19  # kubectl's describe column


def _line(label: str, value: str) -> str:
    return f"{label:<{_LABEL_WIDTH}}{value}"


def release_name(app_name: str) -> str:
    """Helm release name derived from the app name (CamelCase to kebab)."""
    return re.sub(r"(?<!^)(?=[A-Z])", "-", app_name).lower()


def describe_service(state: ClusterState, name: str, namespace: str) -> str:
    """kubectl-describe-style text for a service's effective config."""
    spec = _check_target(state, name, namespace)
    port, target = effective_ports(state, name)
    release = release_name(state.topology.app_name)
    running = [
        idx for idx in range(spec.replicas)
        if state.replica_status.get((name, idx)) == ReplicaState.RUNNING
    ]
    service_index = list(state.topology.services).index(name)
    if running:
        endpoints = ",".join(f"10.244.0.{service_index * 8 + idx + 1}:{target}" for idx in running)
    else:
        endpoints = "<none>"
    lines = [
        _line("Name:", name),
        _line("Namespace:", namespace),
        _line("Labels:", "app.kubernetes.io/managed-by=Helm"),
        _line("Annotations:", f"meta.helm.sh/release-name: {release}"),
        " " * _LABEL_WIDTH + f"meta.helm.sh/release-namespace: {namespace}",
        _line("Selector:", f"service={name}"),
        _line("Type:", "ClusterIP"),
        _line("IP:", f"10.96.0.{service_index + 1}"),
        _line("Port:", f"{port}  {port}/TCP"),
        _line("TargetPort:", f"{target}/TCP"),
        _line("Endpoints:", endpoints),
        _line("Events:", "<none>"),
    ]
    return "\n".join(lines)
