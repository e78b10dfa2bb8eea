"""Agent-Cloud-Interface sessions.

A session wraps one problem behind five apis: get_logs, get_metrics,
get_traces, exec_shell, submit. Every action first advances the simulated
clock by the problem's action latency (thinking and acting cost cluster
time, including the final submit), then executes against the live engine.
Task-level mistakes (unknown service, bad command) come back as error
observations and consume budget; only malformed protocol use raises.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .engine import Engine
from .rng import derive_seed
from .scenario import Problem
from .shell import Shell, logs_text
from .telemetry import render_metrics, render_traces
from .workload import generate_plan

DEFAULT_ACTION_BUDGET = 15

API_DOCS = {
    "get_logs": "get Kubectl logs for a service.",
    "get_metrics": "get Prometheus metrics for a service.",
    "get_traces": "get Jaeger traces for a service.",
    "exec_shell": "Execute any command in a predefined shell.",
    "submit": "Submit your solution.",
}

TASK_INSTRUCTIONS = {
    "detect": (
        "Decide whether the application is currently experiencing an anomaly. "
        'Submit {"anomalous": true, "services": [...]} naming the anomalous '
        'services (the faulty one included), or {"anomalous": false} if all is well.'
    ),
    "localize": (
        "Traffic through the application is failing. Identify the faulty service "
        'and submit {"services": ["<service>"]}.'
    ),
    "mitigate": (
        "The application is unhealthy. Use the shell to restore normal operation, "
        'then submit {"mitigated": true}.'
    ),
}


class ProtocolError(Exception):
    """Malformed use of the interface itself; maps to HTTP 4xx on the wire."""


@dataclass(frozen=True)
class ActionRecord:
    thought: str
    api: str
    args: dict
    observation: str
    error: bool
    sim_time_ms: float

    def to_doc(self) -> dict:
        return {
            "thought": self.thought,
            "action": {"api": self.api, "args": self.args},
            "observation": {"text": self.observation, "error": self.error},
            "sim_time_ms": self.sim_time_ms,
        }


def render_briefing(problem: Problem, budget: int = DEFAULT_ACTION_BUDGET) -> str:
    scenario = problem.scenario
    topo = scenario.topology
    focus = scenario.focus_service
    focus_spec = topo.services[focus]
    deps = ", ".join(focus_spec.dependencies) if focus_spec.dependencies else "none"
    api_lines = "\n".join(f"- {name}: {doc}" for name, doc in API_DOCS.items())
    return (
        "The service you are working with today is described below:\n"
        "\n"
        f"App: {topo.app_name}\n"
        f"Namespace: {topo.namespace}\n"
        f"Service: `{focus}` (port {focus_spec.listen_port}, calls: {deps})\n"
        f"Services in the application: {', '.join(topo.services)}\n"
        "\n"
        f"{TASK_INSTRUCTIONS[scenario.task]}\n"
        "\n"
        f"Task: {scenario.task}\n"
        "\n"
        "Available APIs:\n"
        f"{api_lines}\n"
        "\n"
        f"Action budget: {budget} actions. Each action takes about "
        f"{int(scenario.action_latency_ms)} ms of cluster time."
    )


class Session:
    """One agent attempt at one problem."""

    def __init__(self, session_id: str, problem: Problem, budget: int = DEFAULT_ACTION_BUDGET):
        self.session_id = session_id
        self.problem = problem
        self.budget = budget
        scenario = problem.scenario
        self.engine = Engine(
            scenario.topology,
            problem.plan,
            scenario.faults,
            latency_ceiling_ms=scenario.oracle.latency_ceiling_ms,
        )
        self.engine.run(0)  # activate t=0 faults before the first observation
        self.shell = Shell(self.engine)
        self.briefing = render_briefing(problem, budget)
        self.records: list[ActionRecord] = []
        self.closed = False
        self.report: dict | None = None
        self.first_correct_detection_ms: float | None = None
        self.mitigation_verified_ms: float | None = None

    # --- mark bookkeeping ---

    def _update_mitigation_mark(self) -> None:
        if self.mitigation_verified_ms is not None or not self.problem.scenario.faults:
            return
        if self.engine.all_cleared():
            self.mitigation_verified_ms = self.engine.clock_ms

    def earliest_onset_ms(self) -> float | None:
        onsets = [
            self.engine.onset_ms(f.id)
            for f in self.problem.scenario.faults
            if self.engine.onset_ms(f.id) is not None
        ]
        return min(onsets) if onsets else None

    # --- the five apis ---

    def act(self, api: str, args: Mapping[str, Any] | None, thought: str = "") -> ActionRecord:
        if self.closed:
            raise ProtocolError("session is closed")
        if api not in API_DOCS:
            raise ProtocolError(f"unknown api '{api}'")
        if args is None:
            args = {}
        if not isinstance(args, Mapping):
            raise ProtocolError("args must be an object")
        args = dict(args)
        if not isinstance(thought, str):
            raise ProtocolError("thought must be a string")

        if api == "submit":
            solution = args.get("solution")
            if not isinstance(solution, Mapping):
                raise ProtocolError('submit requires a "solution" object')
            args = {"solution": dict(solution)}
        elif len(self.records) >= self.budget - 1:
            # leave room for the submit an agent still owes
            observation, error = "action budget exhausted; submit a solution", True
            record = ActionRecord(thought, api, args, observation, error, self.engine.clock_ms)
            self.records.append(record)
            return record

        # acting costs cluster time, before the effect lands
        self.engine.run(self.engine.clock_ms + self.problem.scenario.action_latency_ms)

        if api == "submit":
            record = self._handle_submit(args, thought)
        else:
            observation, error = self._execute(api, args)
            record = ActionRecord(thought, api, args, observation, error, self.engine.clock_ms)
            self.records.append(record)
        self._update_mitigation_mark()
        return record

    def _execute(self, api: str, args: dict) -> tuple[str, bool]:
        if api == "exec_shell":
            command = args.get("command")
            if not isinstance(command, str):
                return 'Error: missing argument "command"', True
            return self.shell.execute(command)
        service = args.get("service")
        if not isinstance(service, str):
            return 'Error: missing argument "service"', True
        if service not in self.engine.topology.services:
            return f'Error: services "{service}" not found', True
        if api == "get_logs":
            return logs_text(self.engine, service), False
        if api == "get_metrics":
            return render_metrics(self.engine.telemetry.query_metrics(service)), False
        return render_traces(self.engine.telemetry.query_traces(service)), False

    def _handle_submit(self, args: dict, thought: str) -> ActionRecord:
        from .evaluation import build_report, judge_solution

        solution = args["solution"]
        success, detail = judge_solution(self, solution)
        if success and self.problem.task in ("detect", "localize"):
            self.first_correct_detection_ms = self.engine.clock_ms
        verdict = "success" if success else "failure"
        record = ActionRecord(
            thought,
            "submit",
            {"solution": solution},
            f"evaluation: {verdict}",
            not success,
            self.engine.clock_ms,
        )
        self.records.append(record)
        self._update_mitigation_mark()
        self.report = build_report(self, success, detail)
        self.closed = True
        return record

    # --- derived measurements ---

    def ttd_ms(self) -> float | None:
        onset = self.earliest_onset_ms()
        if onset is None or self.first_correct_detection_ms is None:
            return None
        return self.first_correct_detection_ms - onset

    def ttm_ms(self) -> float | None:
        onset = self.earliest_onset_ms()
        if onset is None or self.mitigation_verified_ms is None:
            return None
        return self.mitigation_verified_ms - onset

    def cost_proxy_chars(self) -> int:
        total = len(self.briefing)
        for record in self.records:
            total += len(record.observation) + len(record.thought)
        return total

    def transcript_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "problem_id": self.problem.problem_id,
                    "task": self.problem.task,
                    "briefing": self.briefing,
                },
                sort_keys=True,
            )
        ]
        for record in self.records:
            lines.append(json.dumps(record.to_doc(), sort_keys=True))
        return "\n".join(lines)


class Orchestrator:
    """Owns sessions over a problem cache; the single entry point both the
    in-process harness and the wire server drive."""

    def __init__(self, cache):
        self.cache = cache
        self.sessions: dict[str, Session] = {}
        self._counter = 0

    def start_session(
        self,
        problem_id: str,
        budget: int = DEFAULT_ACTION_BUDGET,
        seed: int | None = None,
    ) -> Session:
        try:
            problem = self.cache.get(problem_id)
        except KeyError:
            raise ProtocolError(f"unknown problem '{problem_id}'")
        if seed is not None and seed != problem.scenario.seed:
            # the seed parameterizes the episode (workload draw), not the
            # problem identity, so the id stays put
            plan = generate_plan(problem.scenario.workload, derive_seed(seed, "workload"))
            problem = Problem(problem.problem_id, problem.scenario, plan)
        self._counter += 1
        session_id = f"s-{self._counter:04d}"
        session = Session(session_id, problem, budget)
        self.sessions[session_id] = session
        return session

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise ProtocolError(f"unknown session '{session_id}'")
        return session
