import dataclasses

from opsbench.cluster import ConfigPatch, ReplicaState, initial_state, load_topology
from opsbench.engine import (
    Engine,
    affected_set,
    percentile,
    reverse_reachable,
    route_request,
)
from opsbench.faults import FaultInstance, inject, sample_fault
from opsbench.workload import Arrival, WorkloadPlan, WorkloadSpec, generate_plan

from sim_helpers import oracle_route_ok, random_topology, reverse_reachable_oracle


def chain_topology():
    return load_topology(
        {
            "app": "Chain",
            "namespace": "test-chain",
            "services": [
                {
                    "name": "front",
                    "port": 8080,
                    "dependencies": ["mid"],
                    "entrypoint": True,
                    "baseLatencyMs": 5,
                },
                {"name": "mid", "port": 9000, "dependencies": ["back"], "baseLatencyMs": 7},
                {"name": "back", "port": 9001, "baseLatencyMs": 3, "memLimitMb": 100},
            ],
        }
    )


def one_shot_plan(entry: str, at_ms: float = 500.0) -> WorkloadPlan:
    return WorkloadPlan(arrivals=(Arrival(at_ms, entry),), seed=0, duration_ms=at_ms + 1)


def per_service_plan(topology, spacing_ms=10.0):
    arrivals = tuple(
        Arrival((i + 1) * spacing_ms, name) for i, name in enumerate(topology.services)
    )
    return WorkloadPlan(arrivals=arrivals, seed=0, duration_ms=arrivals[-1].time_ms + 1)


# --- routing ---


def test_route_success_walks_full_closure():
    topo = chain_topology()
    result = route_request(initial_state(topo), "front", 0.0)
    assert result.ok
    assert [d.service for d in result.spans] == ["front", "mid", "back"]
    assert result.total_latency_ms == 15.0
    assert result.failed_edge is None


def test_route_aborts_on_first_failure():
    topo = chain_topology()
    state = inject(
        initial_state(topo),
        FaultInstance(
            id="f", kind="TargetPortMisconfig", namespace="test-chain", service="back", wrong_port=9999
        ),
    )
    result = route_request(state, "front", 0.0)
    assert not result.ok
    assert result.failure == "refused"
    assert result.failed_edge == ("mid", "back")
    assert [d.status for d in result.spans] == ["error", "error", "error"]
    # refused hop still contributes the callee's base latency
    assert result.total_latency_ms == 15.0


def test_route_refused_when_no_running_replica():
    topo = chain_topology()
    state = initial_state(topo)
    status = dict(state.replica_status)
    status[("mid", 0)] = ReplicaState.CRASH_LOOP
    state = dataclasses.replace(state, replica_status=status)
    result = route_request(state, "front", 0.0)
    assert result.failure == "refused"
    assert result.failed_edge == ("front", "mid")
    assert [d.service for d in result.spans] == ["front", "mid"]  # back never attempted


def test_route_partition_blocks_single_direction():
    topo = chain_topology()
    state = inject(
        initial_state(topo),
        FaultInstance(id="p", kind="NetworkPartition", namespace="test-chain", src="mid", dst="back"),
    )
    assert not route_request(state, "front", 0.0).ok
    assert route_request(state, "mid", 0.0).failure == "refused"
    assert route_request(state, "back", 0.0).ok  # back itself is healthy


def test_route_timeout_requires_inflated_hop():
    topo = chain_topology()
    state = initial_state(topo)
    # sum of base latencies is far below the ceiling: success
    assert route_request(state, "front", 0.0, latency_ceiling_ms=1000.0).ok
    exhausted = inject(
        state,
        FaultInstance(
            id="c",
            kind="CpuExhaustion",
            namespace="test-chain",
            service="mid",
            latency_multiplier=300.0,
        ),
    )
    result = route_request(exhausted, "front", 0.0, latency_ceiling_ms=1000.0)
    assert result.failure == "timeout"
    assert result.failed_edge == ("front", "mid")
    assert result.any_inflated
    # mild inflation stays under the ceiling and merely slows the request
    mild = inject(
        state,
        FaultInstance(
            id="c2",
            kind="CpuExhaustion",
            namespace="test-chain",
            service="mid",
            latency_multiplier=10.0,
        ),
    )
    slow = route_request(mild, "front", 0.0, latency_ceiling_ms=1000.0)
    assert slow.ok and slow.any_inflated
    assert slow.total_latency_ms == 5.0 + 70.0 + 3.0


def test_route_child_spans_nest_inside_parents():
    for seed in range(40):
        topo = random_topology(seed)
        entry = list(topo.services)[0]
        result = route_request(initial_state(topo), entry, 100.0)
        drafts = result.spans
        for i, draft in enumerate(drafts):
            if draft.parent is None:
                continue
            parent = drafts[draft.parent]
            assert draft.start_ms >= parent.start_ms
            assert draft.start_ms + draft.duration_ms <= parent.start_ms + parent.duration_ms + 1e-9


def test_route_outcome_matches_reachability_oracle():
    # Oracle: success iff the whole closure is healthy; checked across
    # random topologies and random single faults.
    checked_failures = 0
    for seed in range(120):
        topo = random_topology(seed)
        state = initial_state(topo)
        fault = sample_fault(topo, seed)
        if fault.kind in ("MemoryLeak", "CpuExhaustion"):
            continue  # these never refuse connections
        state = inject(state, fault)
        for entry in topo.services:
            result = route_request(state, entry, 0.0)
            assert result.ok == oracle_route_ok(state, entry), (seed, entry, fault)
            checked_failures += 0 if result.ok else 1
    assert checked_failures > 50


def test_reverse_reachable_matches_bruteforce():
    for seed in range(60):
        topo = random_topology(seed)
        for name in topo.services:
            assert reverse_reachable(topo, name) == reverse_reachable_oracle(topo, name)


# --- engine accounting ---


def test_counters_match_span_recount():
    topo = chain_topology()
    spec = WorkloadSpec(pattern="exponential", rate=40, duration_ms=30000, mix={"front": 1.0})
    fault = FaultInstance(
        id="f",
        kind="TargetPortMisconfig",
        namespace="test-chain",
        service="back",
        wrong_port=9999,
        start_ms=10000,
        duration_ms=10000,
    )
    engine = Engine(topo, generate_plan(spec, 5), [fault])
    engine.run(30000)
    requests = {name: 0 for name in topo.services}
    errors = {name: 0 for name in topo.services}
    for span in engine.telemetry.spans:
        requests[span.service] += 1
        if span.status == "error":
            errors[span.service] += 1
    assert requests == engine.requests_total
    assert errors == engine.errors_total
    assert errors["back"] > 0 and errors["front"] > 0
    # healthy before the fault and after it expires
    assert any(ok for t, s, ok in engine.request_log if t < 10000 and s == "back")
    assert any(ok for t, s, ok in engine.request_log if t > 20500 and s == "back")


def test_cascade_errors_equal_reverse_reachability():
    # One arrival per service with everything as an entrypoint turns the
    # errored-services set into exactly the reverse-reachable set.
    hits = 0
    for seed in range(100):
        topo = random_topology(seed)
        target = sorted(topo.services)[SplitMixPick(seed, len(topo.services))]
        spec = topo.services[target]
        fault = FaultInstance(
            id="f",
            kind="TargetPortMisconfig",
            namespace=topo.namespace,
            service=target,
            wrong_port=spec.listen_port + 1 if spec.listen_port < 65535 else 1024,
        )
        engine = Engine(topo, per_service_plan(topo), [fault])
        engine.run(1000)
        errored = {name for name, count in engine.errors_total.items() if count > 0}
        assert errored == set(reverse_reachable(topo, target)), (seed, target)
        hits += 1
    assert hits == 100


def SplitMixPick(seed: int, n: int) -> int:
    from opsbench.rng import SplitMix64

    return SplitMix64(seed ^ 0xABCDEF).next_u64() % n


def test_memory_leak_integrates_to_rate_times_time():
    topo = chain_topology()
    fault = FaultInstance(
        id="leak", kind="MemoryLeak", namespace="test-chain", service="back", leak_rate_mb_per_s=5.0
    )
    engine = Engine(topo, WorkloadPlan((), 0, 60000), [fault])
    engine.run(10000)
    # base 100/4 = 25 MB plus 5 MB/s for 10 s
    assert engine.state.resource_usage["back"][1] == 25.0 + 50.0
    [point] = [
        p for p in engine.telemetry.query_metrics("back") if p.name == "memory_mb" and p.time_ms == 10000
    ]
    assert point.value == 75.0


def test_memory_leak_caps_at_limit_and_warns_once():
    topo = chain_topology()
    fault = FaultInstance(
        id="leak", kind="MemoryLeak", namespace="test-chain", service="back", leak_rate_mb_per_s=5.0
    )
    engine = Engine(topo, WorkloadPlan((), 0, 120000), [fault])
    engine.run(60000)
    assert engine.state.resource_usage["back"][1] == 100.0  # clamped at the limit
    warns = [r for r in engine.telemetry.query_logs("back") if r.level == "WARN"]
    assert len(warns) == 1
    # warn threshold 90 MB reached from 25 MB at 5 MB/s: 13 s
    assert warns[0].time_ms == 13000.0
    assert engine.onset_ms("leak") == 13000.0


def test_crash_loop_cycles_and_counts_restarts():
    topo = chain_topology()
    fault = FaultInstance(
        id="crash",
        kind="PodCrashLoop",
        namespace="test-chain",
        service="mid",
        crash_period_ms=4000,
        start_ms=1000,
    )
    engine = Engine(topo, WorkloadPlan((), 0, 30000), [fault])
    engine.run(900)
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.RUNNING
    engine.run(1000)
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.CRASH_LOOP
    engine.run(3500)  # second half of the first period
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.RUNNING
    assert engine.state.restarts[("mid", 0)] == 1
    engine.run(5200)  # crash phase of the second period
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.CRASH_LOOP
    crashes = [r for r in engine.telemetry.query_logs("mid") if "exited" in r.message]
    restarts = [r for r in engine.telemetry.query_logs("mid") if "starting" in r.message]
    assert len(crashes) == 2 and len(restarts) == 1


def test_refusal_log_names_callee_listen_port():
    topo = chain_topology()
    fault = FaultInstance(
        id="f", kind="TargetPortMisconfig", namespace="test-chain", service="back", wrong_port=9999
    )
    engine = Engine(topo, one_shot_plan("front"), [fault])
    engine.run(1000)
    [record] = [r for r in engine.telemetry.query_logs("mid") if "refused" in r.message]
    assert "<Host: back Port: 9001>" in record.message  # listen port, not 9999
    assert engine.telemetry.query_logs("back") == []  # callee saw nothing


def test_timeout_log_and_onset():
    topo = chain_topology()
    fault = FaultInstance(
        id="hot",
        kind="CpuExhaustion",
        namespace="test-chain",
        service="mid",
        latency_multiplier=300.0,
    )
    engine = Engine(topo, one_shot_plan("front", at_ms=700.0), [fault])
    engine.run(1000)
    [record] = [r for r in engine.telemetry.query_logs("front") if "timed out" in r.message]
    assert "<Host: mid Port: 9000>" in record.message
    assert engine.onset_ms("hot") == 700.0
    assert engine.errors_total == {"front": 1, "mid": 1, "back": 0}


def test_inflation_without_timeout_still_marks_onset():
    topo = chain_topology()
    fault = FaultInstance(
        id="warm",
        kind="CpuExhaustion",
        namespace="test-chain",
        service="mid",
        latency_multiplier=10.0,
    )
    engine = Engine(topo, one_shot_plan("front", at_ms=300.0), [fault])
    engine.run(1000)
    assert engine.onset_ms("warm") == 300.0
    assert engine.errors_total["front"] == 0


def test_port_fault_onset_is_first_failed_arrival():
    topo = chain_topology()
    spec = WorkloadSpec(pattern="constant", rate=10, duration_ms=20000, mix={"front": 1.0})
    fault = FaultInstance(
        id="f",
        kind="TargetPortMisconfig",
        namespace="test-chain",
        service="back",
        wrong_port=9999,
        start_ms=5000,
    )
    engine = Engine(topo, generate_plan(spec, 3), [fault])
    engine.run(20000)
    # constant arrivals every 100 ms; first failure is the arrival at 5000
    # (fault_start priority beats arrival priority at the same instant)
    assert engine.onset_ms("f") == 5000.0


def test_window_metrics_cumulative_and_percentiles_exact():
    topo = chain_topology()
    spec = WorkloadSpec(pattern="exponential", rate=30, duration_ms=30000, mix={"front": 1.0})
    engine = Engine(topo, generate_plan(spec, 9), [])
    engine.run(30000)
    points = engine.telemetry.query_metrics("front")
    req_series = [p.value for p in points if p.name == "requests_total"]
    assert len(req_series) == 3
    assert req_series == sorted(req_series)  # cumulative counter
    assert req_series[-1] == engine.requests_total["front"]
    # second window percentiles recomputed from raw spans
    window_samples = sorted(
        s.duration_ms
        for s in engine.telemetry.spans
        if s.service == "front" and 10000 < s.start_ms <= 20000
    )
    [p50] = [p.value for p in points if p.name == "latency_ms_p50" and p.time_ms == 20000]
    [p95] = [p.value for p in points if p.name == "latency_ms_p95" and p.time_ms == 20000]
    assert p50 == percentile(window_samples, 50)
    assert p95 == percentile(window_samples, 95)
    hearts = [r for r in engine.telemetry.query_logs("front") if "healthy" in r.message]
    assert len(hearts) == 3


def test_percentile_nearest_rank():
    samples = [float(i) for i in range(1, 101)]
    assert percentile(samples, 50) == 50.0
    assert percentile(samples, 95) == 95.0
    assert percentile([7.0], 95) == 7.0
    assert percentile([1.0, 2.0], 50) == 1.0
    assert percentile([], 50) == 0.0


def test_run_is_deterministic():
    topo = chain_topology()
    spec = WorkloadSpec(pattern="exponential", rate=50, duration_ms=20000, mix={"front": 1.0})
    fault = FaultInstance(
        id="f",
        kind="TargetPortMisconfig",
        namespace="test-chain",
        service="back",
        wrong_port=9999,
        start_ms=3000,
    )

    def run_once():
        engine = Engine(topo, generate_plan(spec, 21), [fault])
        engine.run(20000)
        return engine.telemetry.export_jsonl()

    assert run_once() == run_once()


def test_incremental_run_equals_single_run():
    topo = chain_topology()
    spec = WorkloadSpec(pattern="exponential", rate=50, duration_ms=20000, mix={"front": 1.0})
    whole = Engine(topo, generate_plan(spec, 2), [])
    whole.run(20000)
    stepped = Engine(topo, generate_plan(spec, 2), [])
    for t in (1, 999, 1000, 7321, 15000, 20000):
        stepped.run(t)
    assert whole.telemetry.export_jsonl() == stepped.telemetry.export_jsonl()
    assert whole.requests_total == stepped.requests_total


def test_fault_end_event_restores_health():
    topo = chain_topology()
    fault = FaultInstance(
        id="f",
        kind="NetworkPartition",
        namespace="test-chain",
        src="mid",
        dst="back",
        start_ms=1000,
        duration_ms=2000,
    )
    engine = Engine(topo, WorkloadPlan((), 0, 10000), [fault])
    engine.run(1500)
    assert not engine.fault_cleared("f")
    engine.run(3000)
    assert engine.fault_cleared("f")
    assert engine.state.partitions == frozenset()


def test_delete_pod_recovers_replica_but_fault_returns():
    topo = chain_topology()
    fault = FaultInstance(
        id="crash", kind="PodCrashLoop", namespace="test-chain", service="mid", crash_period_ms=4000
    )
    engine = Engine(topo, WorkloadPlan((), 0, 60000), [fault])
    engine.run(1050)
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.CRASH_LOOP
    engine.delete_pod("mid", 0)
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.RUNNING
    assert "crash" in engine.state.active_faults
    engine.run(1150)  # next tick puts the cycle back in charge
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.CRASH_LOOP


def test_rollout_restart_clears_runtime_faults_only():
    topo = chain_topology()
    crash = FaultInstance(
        id="crash", kind="PodCrashLoop", namespace="test-chain", service="mid", crash_period_ms=4000
    )
    port = FaultInstance(
        id="port", kind="TargetPortMisconfig", namespace="test-chain", service="mid", wrong_port=9999
    )
    engine = Engine(topo, WorkloadPlan((), 0, 60000), [crash, port])
    engine.run(500)
    engine.rollout_restart("mid")
    assert "crash" not in engine.state.active_faults
    assert "port" in engine.state.active_faults  # config overlays survive restarts
    assert engine.fault_cleared("crash")
    assert not engine.fault_cleared("port")
    engine.run(2000)
    assert engine.state.replica_status[("mid", 0)] == ReplicaState.RUNNING


def test_rollout_restart_resets_leaked_memory():
    topo = chain_topology()
    leak = FaultInstance(
        id="leak", kind="MemoryLeak", namespace="test-chain", service="back", leak_rate_mb_per_s=5.0
    )
    engine = Engine(topo, WorkloadPlan((), 0, 120000), [leak])
    engine.run(14000)  # past the 90% warning
    assert engine.state.resource_usage["back"][1] >= 90.0
    engine.rollout_restart("back")
    assert engine.state.resource_usage["back"][1] == 25.0
    assert engine.fault_cleared("leak")
    engine.run(24000)
    # leak is gone, memory stays at base
    assert engine.state.resource_usage["back"][1] == 25.0


def test_agent_patch_emits_config_change_log():
    topo = chain_topology()
    engine = Engine(topo, WorkloadPlan((), 0, 10000), [])
    engine.run(2000)
    engine.agent_patch(
        "back", "test-chain", ConfigPatch(op="replace", path="/spec/ports/0/targetPort", value=9001)
    )
    [record] = [r for r in engine.telemetry.query_logs("back") if "configuration changed" in r.message]
    assert record.time_ms == 2000


def test_fault_injection_emits_no_config_change_log():
    topo = chain_topology()
    fault = FaultInstance(
        id="f", kind="TargetPortMisconfig", namespace="test-chain", service="back", wrong_port=9999
    )
    engine = Engine(topo, WorkloadPlan((), 0, 10000), [fault])
    engine.run(5000)
    assert all("configuration changed" not in r.message for r in engine.telemetry.logs)


def test_error_rates_window():
    topo = chain_topology()
    spec = WorkloadSpec(pattern="constant", rate=10, duration_ms=30000, mix={"front": 1.0})
    fault = FaultInstance(
        id="f",
        kind="TargetPortMisconfig",
        namespace="test-chain",
        service="back",
        wrong_port=9999,
        start_ms=0,
        duration_ms=10000,
    )
    engine = Engine(topo, generate_plan(spec, 1), [fault])
    engine.run(30000)
    # the arrival at exactly 10000 lands after fault_end (lower priority
    # wins at equal times), so the broken interval stops just before it
    broken = engine.error_rates(0, 9999)
    healthy = engine.error_rates(9999, 30000)
    assert broken["front"] == 1.0 and broken["back"] == 1.0
    assert healthy["front"] == 0.0 and healthy["back"] == 0.0


def test_clone_isolates_future_work():
    topo = chain_topology()
    spec = WorkloadSpec(pattern="constant", rate=20, duration_ms=60000, mix={"front": 1.0})
    engine = Engine(topo, generate_plan(spec, 4), [])
    engine.run(10000)
    snapshot_reqs = dict(engine.requests_total)
    snapshot_export = engine.telemetry.export_jsonl()
    twin = engine.clone()
    twin.run(30000)
    assert engine.requests_total == snapshot_reqs
    assert engine.telemetry.export_jsonl() == snapshot_export
    assert twin.requests_total["front"] > snapshot_reqs["front"]
    # and the twin behaves exactly like the original would have
    engine.run(30000)
    assert engine.telemetry.export_jsonl() == twin.telemetry.export_jsonl()


def test_affected_set_shapes():
    topo = chain_topology()
    ns = "test-chain"
    port = FaultInstance(id="a", kind="TargetPortMisconfig", namespace=ns, service="back", wrong_port=1)
    assert affected_set(topo, port) == {"front", "mid", "back"}
    crash = FaultInstance(id="b", kind="PodCrashLoop", namespace=ns, service="mid", crash_period_ms=1000)
    assert affected_set(topo, crash) == {"front", "mid"}
    part = FaultInstance(id="c", kind="NetworkPartition", namespace=ns, src="mid", dst="back")
    assert affected_set(topo, part) == {"front", "mid", "back"}
    leak = FaultInstance(id="d", kind="MemoryLeak", namespace=ns, service="back", leak_rate_mb_per_s=1)
    assert affected_set(topo, leak) == {"front", "mid", "back"}
