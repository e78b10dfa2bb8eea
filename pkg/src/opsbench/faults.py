"""Fault kinds, injection, clearing, and per-kind recovery predicates.

Injection rewrites cluster state the way the underlying breakage would
(config overlay, blocked link, crashing pods, growing memory, saturated
cpu) and leaves no agent-visible marker of its own; agents only see the
behavioural consequences through telemetry. cleared() is the mechanical
ground truth the judge uses: it reads only ClusterState, never agent
claims.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from .cluster import (
    ClusterState,
    ConfigPatch,
    ReplicaState,
    Topology,
    apply_patch,
    base_resources,
    effective_ports,
    remove_overlays,
)
from .rng import SplitMix64, derive_seed

TARGET_PORT_MISCONFIG = "TargetPortMisconfig"
NETWORK_PARTITION = "NetworkPartition"
POD_CRASH_LOOP = "PodCrashLoop"
MEMORY_LEAK = "MemoryLeak"
CPU_EXHAUSTION = "CpuExhaustion"

KINDS = (
    TARGET_PORT_MISCONFIG,
    NETWORK_PARTITION,
    POD_CRASH_LOOP,
    MEMORY_LEAK,
    CPU_EXHAUSTION,
)

# Which layer of the stack each kind breaks.
LAYERS = {
    TARGET_PORT_MISCONFIG: "virtualization",
    NETWORK_PARTITION: "network",
    POD_CRASH_LOOP: "application",
    MEMORY_LEAK: "os",
    CPU_EXHAUSTION: "os",
}

MEMORY_WARN_FRACTION = 0.9


@dataclass(frozen=True)
class FaultInstance:
    id: str
    kind: str
    namespace: str
    service: str | None = None  # single-service kinds
    src: str | None = None      # partition endpoints
    dst: str | None = None
    wrong_port: int = 0
    leak_rate_mb_per_s: float = 0.0
    crash_period_ms: float = 0.0
    latency_multiplier: float = 1.0
    start_ms: float = 0.0
    duration_ms: float | None = None  # None: persists until mitigated

    @property
    def layer(self) -> str:
        return LAYERS[self.kind]

    @property
    def target_service(self) -> str:
        """The service an operator should point at. For a partition the
        callee is the one that looks unreachable."""
        if self.kind == NETWORK_PARTITION:
            assert self.dst is not None
            return self.dst
        assert self.service is not None
        return self.service

    @property
    def end_ms(self) -> float | None:
        if self.duration_ms is None:
            return None
        return self.start_ms + self.duration_ms

    def validate(self, topology: Topology) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown fault kind '{self.kind}'")
        if self.namespace != topology.namespace:
            raise ValueError(f"fault {self.id}: unknown namespace '{self.namespace}'")
        if self.start_ms < 0:
            raise ValueError(f"fault {self.id}: start_ms must be >= 0")
        if self.duration_ms is not None and self.duration_ms <= 0:
            raise ValueError(f"fault {self.id}: duration_ms must be positive")
        if self.kind == NETWORK_PARTITION:
            for end in (self.src, self.dst):
                if end not in topology.services:
                    raise ValueError(f"fault {self.id}: unknown service '{end}'")
            if self.src == self.dst:
                raise ValueError(f"fault {self.id}: partition endpoints must differ")
            return
        if self.service not in topology.services:
            raise ValueError(f"fault {self.id}: unknown service '{self.service}'")
        spec = topology.services[self.service]
        if self.kind == TARGET_PORT_MISCONFIG:
            if not 1 <= self.wrong_port <= 65535:
                raise ValueError(f"fault {self.id}: wrong_port out of range")
            if self.wrong_port == spec.listen_port:
                raise ValueError(f"fault {self.id}: wrong_port equals the listen port")
        elif self.kind == POD_CRASH_LOOP and self.crash_period_ms <= 0:
            raise ValueError(f"fault {self.id}: crash_period_ms must be positive")
        elif self.kind == MEMORY_LEAK and self.leak_rate_mb_per_s <= 0:
            raise ValueError(f"fault {self.id}: leak_rate_mb_per_s must be positive")
        elif self.kind == CPU_EXHAUSTION and self.latency_multiplier <= 1.0:
            raise ValueError(f"fault {self.id}: latency_multiplier must exceed 1")

    def to_doc(self) -> dict:
        doc: dict = {
            "id": self.id,
            "kind": self.kind,
            "namespace": self.namespace,
            "startMs": self.start_ms,
            "durationMs": self.duration_ms,
        }
        if self.kind == NETWORK_PARTITION:
            doc["src"] = self.src
            doc["dst"] = self.dst
        else:
            doc["service"] = self.service
        params: dict = {}
        if self.kind == TARGET_PORT_MISCONFIG:
            params["wrongPort"] = self.wrong_port
        elif self.kind == POD_CRASH_LOOP:
            params["crashPeriodMs"] = self.crash_period_ms
        elif self.kind == MEMORY_LEAK:
            params["leakRateMbPerS"] = self.leak_rate_mb_per_s
        elif self.kind == CPU_EXHAUSTION:
            params["latencyMultiplier"] = self.latency_multiplier
        if params:
            doc["params"] = params
        return doc

    @classmethod
    def from_doc(cls, doc: Mapping) -> "FaultInstance":
        params = doc.get("params", {}) or {}
        duration = doc.get("durationMs")
        return cls(
            id=str(doc["id"]),
            kind=str(doc["kind"]),
            namespace=str(doc["namespace"]),
            service=doc.get("service"),
            src=doc.get("src"),
            dst=doc.get("dst"),
            wrong_port=int(params.get("wrongPort", 0)),
            leak_rate_mb_per_s=float(params.get("leakRateMbPerS", 0.0)),
            crash_period_ms=float(params.get("crashPeriodMs", 0.0)),
            latency_multiplier=float(params.get("latencyMultiplier", 1.0)),
            start_ms=float(doc.get("startMs", 0.0)),
            duration_ms=None if duration is None else float(duration),
        )


def _set_all_replicas(state: ClusterState, service: str, status: ReplicaState) -> ClusterState:
    spec = state.topology.services[service]
    replica_status = dict(state.replica_status)
    for idx in range(spec.replicas):
        replica_status[(service, idx)] = status
    return replace(state, replica_status=replica_status)


def inject(state: ClusterState, fault: FaultInstance) -> ClusterState:
    """Activate a fault's effect on the cluster. Pure; emits no telemetry
    (behavioural consequences surface later through the simulation)."""
    fault.validate(state.topology)
    if fault.id in state.active_faults:
        raise ValueError(f"fault {fault.id} already active")

    if fault.kind == TARGET_PORT_MISCONFIG:
        patch = ConfigPatch(op="replace", path="/spec/ports/0/targetPort", value=fault.wrong_port)
        state = apply_patch(state, fault.service, fault.namespace, patch, telemetry=None, origin=fault.id)
    elif fault.kind == NETWORK_PARTITION:
        state = replace(state, partitions=state.partitions | {(fault.src, fault.dst)})
    elif fault.kind == POD_CRASH_LOOP:
        # phase zero of the cycle: every replica is down immediately
        state = _set_all_replicas(state, fault.service, ReplicaState.CRASH_LOOP)
    elif fault.kind == CPU_EXHAUSTION:
        spec = state.topology.services[fault.service]
        usage = dict(state.resource_usage)
        _, mem = usage[fault.service]
        usage[fault.service] = (float(spec.cpu_limit), mem)
        state = replace(state, resource_usage=usage)
    # MEMORY_LEAK only registers; growth is integrated by the simulation tick.

    active = dict(state.active_faults)
    active[fault.id] = fault
    return replace(state, active_faults=active)


def clear(state: ClusterState, fault_id: str) -> ClusterState:
    """Deactivate a fault: undo its standing effect and unregister it.

    Residue follows the physics of each kind: a stopped memory leak keeps
    its bloated heap until the service restarts, while cpu pressure drops
    as soon as the spin stops."""
    fault = state.active_faults.get(fault_id)
    if fault is None:
        raise ValueError(f"fault {fault_id} is not active")

    if fault.kind == TARGET_PORT_MISCONFIG:
        state = remove_overlays(state, fault.service, origin=fault.id)
    elif fault.kind == NETWORK_PARTITION:
        state = replace(state, partitions=state.partitions - {(fault.src, fault.dst)})
    elif fault.kind == POD_CRASH_LOOP:
        state = _set_all_replicas(state, fault.service, ReplicaState.RUNNING)
    elif fault.kind == CPU_EXHAUSTION:
        spec = state.topology.services[fault.service]
        usage = dict(state.resource_usage)
        _, mem = usage[fault.service]
        usage[fault.service] = (base_resources(spec)[0], mem)
        state = replace(state, resource_usage=usage)

    active = dict(state.active_faults)
    del active[fault_id]
    return replace(state, active_faults=active)


def cleared(state: ClusterState, fault: FaultInstance) -> bool:
    """Mechanical recovery check for one fault, computed from cluster state
    alone. All of these must hold for a mitigation to count."""
    if fault.kind == TARGET_PORT_MISCONFIG:
        spec = state.topology.services[fault.service]
        listen, target = effective_ports(state, fault.service)
        return listen == spec.listen_port and target == spec.listen_port
    if fault.kind == NETWORK_PARTITION:
        return (fault.src, fault.dst) not in state.partitions
    if fault.kind == POD_CRASH_LOOP:
        spec = state.topology.services[fault.service]
        all_running = all(
            state.replica_status.get((fault.service, idx)) == ReplicaState.RUNNING
            for idx in range(spec.replicas)
        )
        return all_running and fault.id not in state.active_faults
    if fault.kind == MEMORY_LEAK:
        spec = state.topology.services[fault.service]
        _, mem = state.resource_usage[fault.service]
        below_warn = mem < MEMORY_WARN_FRACTION * spec.mem_limit_mb
        return below_warn and fault.id not in state.active_faults
    if fault.kind == CPU_EXHAUSTION:
        spec = state.topology.services[fault.service]
        cpu, _ = state.resource_usage[fault.service]
        return cpu < spec.cpu_limit and fault.id not in state.active_faults
    raise ValueError(f"unknown fault kind '{fault.kind}'")


def sample_fault(topology: Topology, seed: int, kinds: tuple[str, ...] = KINDS) -> FaultInstance:
    """Draw a valid fault uniformly over kinds and eligible targets.
    Deterministic in (topology, seed, kinds)."""
    rng = SplitMix64(derive_seed(seed, "fault"))
    edges = sorted(
        (caller, callee)
        for caller, spec in topology.services.items()
        for callee in spec.dependencies
    )
    eligible = [k for k in sorted(kinds) if k != NETWORK_PARTITION or edges]
    if not eligible:
        raise ValueError("no eligible fault kinds for this topology")
    kind = rng.choice(eligible)
    namespace = topology.namespace

    if kind == NETWORK_PARTITION:
        src, dst = rng.choice(edges)
        return FaultInstance(
            id=f"fault-{seed}", kind=kind, namespace=namespace, src=src, dst=dst
        )

    service = rng.choice(sorted(topology.services))
    spec = topology.services[service]
    if kind == TARGET_PORT_MISCONFIG:
        wrong = spec.listen_port
        while wrong in (spec.listen_port, spec.target_port):
            wrong = rng.randint(1024, 65535)
        return FaultInstance(
            id=f"fault-{seed}", kind=kind, namespace=namespace, service=service, wrong_port=wrong
        )
    if kind == POD_CRASH_LOOP:
        return FaultInstance(
            id=f"fault-{seed}",
            kind=kind,
            namespace=namespace,
            service=service,
            crash_period_ms=float(rng.randint(2, 20) * 1000),
        )
    if kind == MEMORY_LEAK:
        return FaultInstance(
            id=f"fault-{seed}",
            kind=kind,
            namespace=namespace,
            service=service,
            leak_rate_mb_per_s=float(rng.randint(1, 10)),
        )
    return FaultInstance(
        id=f"fault-{seed}",
        kind=kind,
        namespace=namespace,
        service=service,
        latency_multiplier=float(rng.randint(5, 50)),
    )
