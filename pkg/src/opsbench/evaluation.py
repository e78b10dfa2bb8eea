"""Judging submitted solutions and scoring sessions.

The judge never trusts agent claims about cluster state: mitigation is
verified against the fault predicates plus a what-if replay of the next
post-window on a cloned engine, and detection claims are checked against
the mechanical affected-set of the injected faults.
"""

from __future__ import annotations

from typing import Any, Mapping

from .engine import affected_set
from .faults import NETWORK_PARTITION, FaultInstance


def _fault_named(fault: FaultInstance, services: set[str]) -> bool:
    """A partition is localized by either endpoint; everything else needs
    the faulted service itself."""
    if fault.kind == NETWORK_PARTITION:
        return fault.src in services or fault.dst in services
    return fault.service in services


def _started_faults(session) -> list[FaultInstance]:
    clock = session.engine.clock_ms
    return [f for f in session.problem.scenario.faults if f.start_ms <= clock]


def _affected_union(session, faults: list[FaultInstance]) -> set[str]:
    topo = session.problem.scenario.topology
    union: set[str] = set()
    for fault in faults:
        union |= affected_set(topo, fault)
    return union


def _service_list(solution: Mapping[str, Any]) -> list[str] | None:
    services = solution.get("services")
    if not isinstance(services, list) or not services:
        return None
    if not all(isinstance(s, str) for s in services):
        return None
    return services


def judge_solution(session, solution: Mapping[str, Any]) -> tuple[bool, dict]:
    task = session.problem.task
    if task == "detect":
        return _judge_detect(session, solution)
    if task == "localize":
        return _judge_localize(session, solution)
    return _judge_mitigate(session, solution)


def _judge_detect(session, solution) -> tuple[bool, dict]:
    faults = _started_faults(session)
    expected = bool(faults)
    claimed = solution.get("anomalous")
    detail: dict[str, Any] = {"expected_anomalous": expected, "claimed_anomalous": claimed}
    if not isinstance(claimed, bool) or claimed != expected:
        return False, detail
    if not expected:
        return True, detail
    services = _service_list(solution)
    if services is None:
        detail["services_within_affected"] = False
        detail["fault_named"] = False
        return False, detail
    named = set(services)
    affected = _affected_union(session, faults)
    within = named <= affected
    covered = all(_fault_named(f, named) for f in faults)
    detail["services_within_affected"] = within
    detail["fault_named"] = covered
    return within and covered, detail


def _judge_localize(session, solution) -> tuple[bool, dict]:
    faults = _started_faults(session)
    services = _service_list(solution)
    if services is None:
        return False, {"fault_named": False, "services_within_affected": False}
    named = set(services)
    affected = _affected_union(session, faults)
    within = named <= affected
    covered = bool(faults) and all(_fault_named(f, named) for f in faults)
    return within and covered, {"fault_named": covered, "services_within_affected": within}


def _judge_mitigate(session, solution) -> tuple[bool, dict]:
    claimed = solution.get("mitigated") is True
    cleared = session.engine.all_cleared()
    oracle = session.problem.scenario.oracle
    clock = session.engine.clock_ms
    # Replay the near future on a clone: mitigation has to hold up under
    # continued traffic, not just at the instant of submission.
    twin = session.engine.clone()
    twin.run(clock + oracle.post_window_ms)
    rates = twin.error_rates(clock, clock + oracle.post_window_ms)
    worst_service = max(rates, key=lambda name: rates[name])
    stable = all(rate < oracle.error_rate_threshold for rate in rates.values())
    detail = {
        "claimed_mitigated": claimed,
        "faults_cleared": cleared,
        "post_window_stable": stable,
        "post_window_worst": {
            "service": worst_service,
            "error_rate": round(rates[worst_service], 6),
        },
    }
    return claimed and cleared and stable, detail


def build_report(session, success: bool, detail: dict) -> dict:
    faults = session.problem.scenario.faults
    ground_truth = {
        "faults": [f.to_doc() for f in faults],
        "affected_services": sorted(_affected_union(session, list(faults))),
        "onset_ms": session.earliest_onset_ms(),
    }
    return {
        "problem_id": session.problem.problem_id,
        "task": session.problem.task,
        "success": success,
        "ttd_ms": session.ttd_ms(),
        "ttm_ms": session.ttm_ms(),
        "interactions": len(session.records),
        "cost_proxy_chars": session.cost_proxy_chars(),
        "sim_time_ms": session.engine.clock_ms,
        "detail": detail,
        "ground_truth": ground_truth,
    }


def export_transcript(session) -> str:
    """JSON Lines: one header object, then one object per action."""
    return session.transcript_jsonl()
