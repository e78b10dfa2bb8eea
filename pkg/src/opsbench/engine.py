"""Discrete-event simulation of the cluster under workload and faults.

The engine owns the virtual clock (float milliseconds) and an event queue
ordered by (time, priority, sequence): integration ticks run first at a
given instant, then fault starts, fault ends, request arrivals, and
finally metric-window boundaries, so a window always sees every event of
its closing instant. Running the same scenario and seed twice produces
byte-identical telemetry.

Requests route depth-first through the dependency graph in declaration
order and abort on the first failed hop; failures propagate to every
caller on the path, which is what makes cascades look like cascades in
the error counters.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from typing import Iterable

from .cluster import (
    ClusterError,
    ClusterState,
    ConfigPatch,
    ReplicaState,
    Topology,
    apply_patch,
    base_resources,
    effective_ports,
    initial_state,
)
from .faults import (
    CPU_EXHAUSTION,
    MEMORY_LEAK,
    MEMORY_WARN_FRACTION,
    NETWORK_PARTITION,
    POD_CRASH_LOOP,
    TARGET_PORT_MISCONFIG,
    FaultInstance,
    cleared,
    clear,
    inject,
)
from .telemetry import Span, TelemetryStore
from .workload import WorkloadPlan

TICK_MS = 100.0
WINDOW_MS = 10000.0
DEFAULT_LATENCY_CEILING_MS = 1000.0

# event priorities; lower runs first at equal times
_P_TICK = 0
_P_FAULT_START = 1
_P_FAULT_END = 2
_P_ARRIVAL = 3
_P_WINDOW = 9


@dataclass(frozen=True)
class SpanDraft:
    service: str
    caller: str
    start_ms: float
    duration_ms: float
    status: str  # ok | error
    parent: int | None  # index into the draft list


@dataclass(frozen=True)
class RouteResult:
    spans: tuple[SpanDraft, ...]
    ok: bool
    total_latency_ms: float
    failed_edge: tuple[str, str] | None
    failure: str | None  # refused | timeout
    any_inflated: bool


def reverse_reachable(topology: Topology, service: str) -> frozenset[str]:
    """The service plus every transitive caller of it."""
    callers = topology.callers()
    seen = {service}
    frontier = [service]
    while frontier:
        node = frontier.pop()
        for caller in callers[node]:
            if caller not in seen:
                seen.add(caller)
                frontier.append(caller)
    return frozenset(seen)


def affected_set(topology: Topology, fault: FaultInstance) -> frozenset[str]:
    """Services whose telemetry can legitimately look anomalous under the
    fault: the failure point and everyone upstream of it."""
    if fault.kind == NETWORK_PARTITION:
        return reverse_reachable(topology, fault.src) | {fault.src, fault.dst}
    return reverse_reachable(topology, fault.service)


def _exhaustion_multiplier(state: ClusterState, service: str) -> float:
    mult = 1.0
    for fault in state.active_faults.values():
        if fault.kind == CPU_EXHAUSTION and fault.service == service:
            mult = max(mult, fault.latency_multiplier)
    return mult


def route_request(
    state: ClusterState,
    entry: str,
    start_ms: float,
    latency_ceiling_ms: float = DEFAULT_LATENCY_CEILING_MS,
) -> RouteResult:
    """Walk the dependency closure from an entry service.

    A hop is refused when the callee has no running replica, its effective
    target port drifted from the listen port, or the (caller, callee) link
    is partitioned. A refused hop still costs the callee's base latency on
    the caller side. Timeouts exist only when cpu pressure inflated some
    hop and the running total crosses the ceiling.
    """
    services = state.topology.services
    drafts: list[SpanDraft | None] = []
    failure: list = [None, None]
    saw_inflation = [False]

    def call(caller: str, callee: str, start: float, cum: float, parent: int | None):
        spec = services[callee]
        listen, target = effective_ports(state, callee)
        refused = (
            state.running_replicas(callee) == 0
            or target != listen
            or (caller, callee) in state.partitions
        )
        base = spec.base_latency_ms
        idx = len(drafts)
        drafts.append(None)
        if refused:
            drafts[idx] = SpanDraft(callee, caller, start, base, "error", parent)
            failure[0] = (caller, callee)
            failure[1] = "refused"
            return False, base, cum + base

        mult = _exhaustion_multiplier(state, callee)
        own = base * mult
        if mult > 1.0:
            saw_inflation[0] = True
        cum += own
        if saw_inflation[0] and cum > latency_ceiling_ms:
            drafts[idx] = SpanDraft(callee, caller, start, own, "error", parent)
            failure[0] = (caller, callee)
            failure[1] = "timeout"
            return False, own, cum

        duration = own
        child_start = start + own
        ok = True
        for dep in spec.dependencies:
            child_ok, child_dur, cum = call(callee, dep, child_start, cum, idx)
            duration += child_dur
            child_start += child_dur
            if not child_ok:
                ok = False
                break
        drafts[idx] = SpanDraft(callee, caller, start, duration, "ok" if ok else "error", parent)
        return ok, duration, cum

    ok, duration, _ = call("client", entry, start_ms, 0.0, None)
    spans = tuple(d for d in drafts if d is not None)
    return RouteResult(
        spans=spans,
        ok=ok,
        total_latency_ms=duration,
        failed_edge=failure[0],
        failure=failure[1],
        any_inflated=saw_inflation[0],
    )


class Engine:
    """Event-driven simulation over one topology, plan, and fault list."""

    def __init__(
        self,
        topology: Topology,
        plan: WorkloadPlan,
        faults: Iterable[FaultInstance] = (),
        latency_ceiling_ms: float = DEFAULT_LATENCY_CEILING_MS,
        telemetry: TelemetryStore | None = None,
    ):
        self.topology = topology
        self.plan = plan
        self.faults = {f.id: f for f in faults}
        for fault in self.faults.values():
            fault.validate(topology)
        self.latency_ceiling_ms = latency_ceiling_ms
        self.telemetry = telemetry if telemetry is not None else TelemetryStore()

        self.state = initial_state(topology)
        self.requests_total = {name: 0 for name in topology.services}
        self.errors_total = {name: 0 for name in topology.services}
        self.request_log: list[tuple[float, str, bool]] = []  # (time, service, ok)
        self.onsets: dict[str, float] = {}
        self._window_samples: dict[str, list[float]] = {name: [] for name in topology.services}
        self._warned: set[str] = set()
        self._last_tick = 0.0
        self._trace_seq = 0
        self._event_seq = 0
        self._heap: list[tuple[float, int, int, tuple]] = []

        self._push(0.0, _P_TICK, ("tick",))
        self._push(WINDOW_MS, _P_WINDOW, ("window",))
        for fault in self.faults.values():
            self._push(fault.start_ms, _P_FAULT_START, ("fault_start", fault.id))
            if fault.end_ms is not None:
                self._push(fault.end_ms, _P_FAULT_END, ("fault_end", fault.id))
        for arrival in plan.arrivals:
            self._push(arrival.time_ms, _P_ARRIVAL, ("arrival", arrival.entry))

    # --- plumbing ---

    @property
    def clock_ms(self) -> float:
        return self.state.clock_ms

    @property
    def namespace(self) -> str:
        return self.topology.namespace

    def _push(self, time_ms: float, priority: int, payload: tuple) -> None:
        self._event_seq += 1
        heapq.heappush(self._heap, (time_ms, priority, self._event_seq, payload))

    def clone(self) -> "Engine":
        """Independent copy sharing only immutable inputs. Used to answer
        what-if questions (post-mitigation stability) without disturbing
        the live run."""
        twin = object.__new__(Engine)
        twin.topology = self.topology
        twin.plan = self.plan
        twin.faults = self.faults
        twin.latency_ceiling_ms = self.latency_ceiling_ms
        twin.telemetry = self.telemetry.clone()
        twin.state = self.state  # frozen; transitions replace, never mutate
        twin.requests_total = dict(self.requests_total)
        twin.errors_total = dict(self.errors_total)
        twin.request_log = list(self.request_log)
        twin.onsets = dict(self.onsets)
        twin._window_samples = {k: list(v) for k, v in self._window_samples.items()}
        twin._warned = set(self._warned)
        twin._last_tick = self._last_tick
        twin._trace_seq = self._trace_seq
        twin._event_seq = self._event_seq
        twin._heap = list(self._heap)
        return twin

    # --- main loop ---

    def run(self, until_ms: float) -> None:
        """Process every event at or before the target time, then park the
        clock there. Safe to call repeatedly with increasing targets."""
        if until_ms < self.state.clock_ms:
            raise ValueError(f"cannot run backwards to {until_ms}")
        while self._heap and self._heap[0][0] <= until_ms:
            time_ms, _, _, payload = heapq.heappop(self._heap)
            handler = getattr(self, f"_on_{payload[0]}")
            handler(time_ms, *payload[1:])
        if until_ms > self.state.clock_ms:
            self.state = self.state.with_clock(until_ms)

    def _on_tick(self, time_ms: float) -> None:
        dt_s = (time_ms - self._last_tick) / 1000.0
        self._last_tick = time_ms
        if self.state.clock_ms < time_ms:
            self.state = self.state.with_clock(time_ms)
        if dt_s > 0:
            self._integrate_leaks(time_ms, dt_s)
        self._cycle_crash_loops(time_ms)
        self._check_memory_warnings(time_ms)
        self._push(time_ms + TICK_MS, _P_TICK, ("tick",))

    def _integrate_leaks(self, time_ms: float, dt_s: float) -> None:
        usage = None
        for fault in self.state.active_faults.values():
            if fault.kind != MEMORY_LEAK:
                continue
            if usage is None:
                usage = dict(self.state.resource_usage)
            cpu, mem = usage[fault.service]
            limit = float(self.topology.services[fault.service].mem_limit_mb)
            usage[fault.service] = (cpu, min(limit, mem + fault.leak_rate_mb_per_s * dt_s))
        if usage is not None:
            self.state = replace(self.state, resource_usage=usage)

    def _cycle_crash_loops(self, time_ms: float) -> None:
        for fault in list(self.state.active_faults.values()):
            if fault.kind != POD_CRASH_LOOP:
                continue
            phase = (time_ms - fault.start_ms) % fault.crash_period_ms
            want = ReplicaState.CRASH_LOOP if phase < fault.crash_period_ms / 2 else ReplicaState.RUNNING
            current = self.state.replica_status.get((fault.service, 0))
            if current == want:
                continue
            self._transition_replicas(time_ms, fault.service, want)

    def _transition_replicas(self, time_ms: float, service: str, want: ReplicaState) -> None:
        spec = self.topology.services[service]
        status = dict(self.state.replica_status)
        restarts = dict(self.state.restarts)
        listen, _ = effective_ports(self.state, service)
        for idx in range(spec.replicas):
            status[(service, idx)] = want
            if want == ReplicaState.RUNNING:
                restarts[(service, idx)] = restarts.get((service, idx), 0) + 1
                self.telemetry.log_restart(time_ms, service, self.namespace, idx, listen)
            else:
                self.telemetry.log_crash(time_ms, service, self.namespace, idx)
        self.state = replace(self.state, replica_status=status, restarts=restarts)

    def _check_memory_warnings(self, time_ms: float) -> None:
        for name, spec in self.topology.services.items():
            _, mem = self.state.resource_usage[name]
            threshold = MEMORY_WARN_FRACTION * spec.mem_limit_mb
            if mem >= threshold and name not in self._warned:
                self._warned.add(name)
                self.telemetry.log_memory_warning(time_ms, name, self.namespace, mem, spec.mem_limit_mb)
                for fault in self.state.active_faults.values():
                    if fault.kind == MEMORY_LEAK and fault.service == name:
                        self.onsets.setdefault(fault.id, time_ms)
            elif mem < threshold:
                self._warned.discard(name)

    def _on_fault_start(self, time_ms: float, fault_id: str) -> None:
        fault = self.faults[fault_id]
        if self.state.clock_ms < time_ms:
            self.state = self.state.with_clock(time_ms)
        self.state = inject(self.state, fault)
        if fault.kind == POD_CRASH_LOOP:
            spec = self.topology.services[fault.service]
            for idx in range(spec.replicas):
                self.telemetry.log_crash(time_ms, fault.service, self.namespace, idx)

    def _on_fault_end(self, time_ms: float, fault_id: str) -> None:
        if fault_id not in self.state.active_faults:
            return  # already mitigated
        fault = self.state.active_faults[fault_id]
        was_down = (
            fault.kind == POD_CRASH_LOOP
            and self.state.replica_status.get((fault.service, 0)) == ReplicaState.CRASH_LOOP
        )
        self.state = clear(self.state, fault_id)
        if was_down:
            self._transition_replicas(time_ms, fault.service, ReplicaState.RUNNING)

    def _on_arrival(self, time_ms: float, entry: str) -> None:
        if self.state.clock_ms < time_ms:
            self.state = self.state.with_clock(time_ms)
        result = route_request(self.state, entry, time_ms, self.latency_ceiling_ms)
        self._record_route(time_ms, result)

    def _record_route(self, time_ms: float, result: RouteResult) -> None:
        self._trace_seq += 1
        trace_id = f"t-{self._trace_seq:06d}"
        for i, draft in enumerate(result.spans):
            self.telemetry.record_span(
                Span(
                    trace_id=trace_id,
                    span_id=f"{trace_id}.{i}",
                    parent_id=None if draft.parent is None else f"{trace_id}.{draft.parent}",
                    service=draft.service,
                    operation=f"call {draft.service}",
                    start_ms=draft.start_ms,
                    duration_ms=draft.duration_ms,
                    status=draft.status,
                )
            )
            self.requests_total[draft.service] += 1
            ok = draft.status == "ok"
            if not ok:
                self.errors_total[draft.service] += 1
            self.request_log.append((time_ms, draft.service, ok))
            self._window_samples[draft.service].append(draft.duration_ms)

        if result.failure is not None:
            caller, callee = result.failed_edge
            listen, _ = effective_ports(self.state, callee)
            failing = result.spans[-1]  # DFS aborts right after the failing hop
            log_time = failing.start_ms + failing.duration_ms
            if result.failure == "refused":
                self.telemetry.log_connection_refused(log_time, caller, self.namespace, callee, listen)
            else:
                self.telemetry.log_timeout(log_time, caller, self.namespace, callee, listen)
            self._attribute_onset(time_ms, result)
        elif result.any_inflated:
            self._attribute_inflation_onset(time_ms, result)

    def _attribute_onset(self, time_ms: float, result: RouteResult) -> None:
        caller, callee = result.failed_edge
        for fault in self.state.active_faults.values():
            if fault.id in self.onsets:
                continue
            hit = (
                (fault.kind == TARGET_PORT_MISCONFIG and fault.service == callee)
                or (fault.kind == POD_CRASH_LOOP and fault.service == callee)
                or (fault.kind == NETWORK_PARTITION and (fault.src, fault.dst) == (caller, callee))
                or (
                    fault.kind == CPU_EXHAUSTION
                    and result.failure == "timeout"
                    and any(d.service == fault.service for d in result.spans)
                )
            )
            if hit:
                self.onsets[fault.id] = time_ms

    def _attribute_inflation_onset(self, time_ms: float, result: RouteResult) -> None:
        touched = {d.service for d in result.spans}
        for fault in self.state.active_faults.values():
            if fault.kind == CPU_EXHAUSTION and fault.service in touched:
                self.onsets.setdefault(fault.id, time_ms)

    def _on_window(self, time_ms: float) -> None:
        if self.state.clock_ms < time_ms:
            self.state = self.state.with_clock(time_ms)
        for name in self.topology.services:
            samples = sorted(self._window_samples[name])
            self._window_samples[name] = []
            cpu, mem = self.state.resource_usage[name]
            t = self.telemetry
            t.record_metric(time_ms, name, "requests_total", float(self.requests_total[name]))
            t.record_metric(time_ms, name, "errors_total", float(self.errors_total[name]))
            t.record_metric(time_ms, name, "latency_ms_p50", percentile(samples, 50))
            t.record_metric(time_ms, name, "latency_ms_p95", percentile(samples, 95))
            t.record_metric(time_ms, name, "cpu_mcores", cpu)
            t.record_metric(time_ms, name, "memory_mb", mem)
            t.log_heartbeat(time_ms, name, self.namespace, self.requests_total[name])
        self._push(time_ms + WINDOW_MS, _P_WINDOW, ("window",))

    # --- operator actions (run at the current clock) ---

    def agent_patch(self, service: str, namespace: str, patch: ConfigPatch) -> None:
        self.state = apply_patch(self.state, service, namespace, patch, telemetry=self.telemetry)

    def delete_pod(self, service: str, replica: int) -> None:
        spec = self.topology.services.get(service)
        if spec is None or not 0 <= replica < spec.replicas:
            name = f"{service}-{replica}"
            raise ClusterError(f'Error: pods "{name}" not found')
        status = dict(self.state.replica_status)
        restarts = dict(self.state.restarts)
        status[(service, replica)] = ReplicaState.RUNNING
        restarts[(service, replica)] = restarts.get((service, replica), 0) + 1
        self.state = replace(self.state, replica_status=status, restarts=restarts)
        listen, _ = effective_ports(self.state, service)
        self.telemetry.log_restart(self.state.clock_ms, service, self.namespace, replica, listen)

    def rollout_restart(self, service: str) -> None:
        """Fresh processes: clears runtime faults (crash loops, leaks, cpu
        pressure) on the service; config overlays and partitions survive."""
        spec = self.topology.services.get(service)
        if spec is None:
            raise ClusterError(f'Error: services "{service}" not found')
        for fault_id, fault in list(self.state.active_faults.items()):
            if fault.service == service and fault.kind in (POD_CRASH_LOOP, MEMORY_LEAK, CPU_EXHAUSTION):
                self.state = clear(self.state, fault_id)
        usage = dict(self.state.resource_usage)
        usage[service] = base_resources(spec)
        self.state = replace(self.state, resource_usage=usage)
        self._warned.discard(service)
        self._transition_replicas(self.state.clock_ms, service, ReplicaState.RUNNING)

    # --- ground-truth queries ---

    def fault_cleared(self, fault_id: str) -> bool:
        return cleared(self.state, self.faults[fault_id])

    def all_cleared(self) -> bool:
        return all(self.fault_cleared(fid) for fid in self.faults)

    def onset_ms(self, fault_id: str) -> float | None:
        return self.onsets.get(fault_id)

    def error_rates(self, since_ms: float, until_ms: float) -> dict[str, float]:
        """Per-service error fraction over (since, until]."""
        attempts = {name: 0 for name in self.topology.services}
        errors = {name: 0 for name in self.topology.services}
        for time_ms, service, ok in self.request_log:
            if since_ms < time_ms <= until_ms:
                attempts[service] += 1
                if not ok:
                    errors[service] += 1
        return {
            name: (errors[name] / attempts[name] if attempts[name] else 0.0)
            for name in self.topology.services
        }


def percentile(sorted_samples: list[float], pct: int) -> float:
    """Nearest-rank percentile over pre-sorted samples; 0.0 when empty.
    Integer arithmetic so rank selection never drifts on float rounding."""
    if not sorted_samples:
        return 0.0
    n = len(sorted_samples)
    rank = -(-pct * n // 100)  # ceil(pct * n / 100)
    rank = min(max(rank, 1), n)
    return sorted_samples[rank - 1]
