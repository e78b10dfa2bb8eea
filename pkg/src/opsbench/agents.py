"""Scripted baseline agent and the harnesses that drive it.

The agent is a deterministic state machine over observation text: it reads
the caller-side logs, falls back to traces when the failure is further
downstream, inspects the service document, and repairs what it finds. It
only sees what any agent sees (briefing plus observations), so it doubles
as an end-to-end probe that the interface carries enough signal to solve
the tasks.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .orchestrator import DEFAULT_ACTION_BUDGET, Session

_HOST_RE = re.compile(r"<Host: (\S+) Port: (\d+)>: (?:Connection refused|Operation timed out)")
_PORT_RE = re.compile(r"^Port:\s+(\d+)\s", re.MULTILINE)
_TARGET_RE = re.compile(r"^TargetPort:\s+(\d+)/TCP", re.MULTILINE)
_TRACE_LINE_RE = re.compile(r"^(\s+)(\S+) call \S+ start=\S+ duration=\S+ error$", re.MULTILINE)


@dataclass(frozen=True)
class Briefing:
    app: str
    namespace: str
    focus: str
    task: str


def parse_briefing(text: str) -> Briefing:
    def line(prefix: str) -> str:
        match = re.search(rf"^{prefix}: (.+)$", text, re.MULTILINE)
        if match is None:
            raise ValueError(f"briefing is missing a '{prefix}:' line")
        return match.group(1).strip()

    focus = re.search(r"Service: `([^`]+)`", text)
    if focus is None:
        raise ValueError("briefing is missing the focus service")
    return Briefing(
        app=line("App"),
        namespace=line("Namespace"),
        focus=focus.group(1),
        task=line("Task"),
    )


def find_refused_host(logs: str) -> tuple[str, int] | None:
    match = _HOST_RE.search(logs)
    if match is None:
        return None
    return match.group(1), int(match.group(2))


def deepest_error_service(traces: str) -> str | None:
    """The most-indented error span is the hop where the request died."""
    best: tuple[int, str] | None = None
    for match in _TRACE_LINE_RE.finditer(traces):
        depth = len(match.group(1))
        if best is None or depth > best[0]:
            best = (depth, match.group(2))
    return None if best is None else best[1]


def parse_ports(describe: str) -> tuple[int, int] | None:
    port = _PORT_RE.search(describe)
    target = _TARGET_RE.search(describe)
    if port is None or target is None:
        return None
    return int(port.group(1)), int(target.group(1))


def metrics_show_errors(metrics: str) -> bool:
    values = re.findall(r"errors_total=(\d+)", metrics)
    return bool(values) and int(values[-1]) > 0


Action = tuple[str, dict, str]


class ScriptedAgent:
    """Deterministic policy: each decide() call maps the last observation
    to the next action, ending in exactly one submit."""

    def __init__(self, briefing_text: str, budget: int = DEFAULT_ACTION_BUDGET):
        self.briefing = parse_briefing(briefing_text)
        self.budget = budget
        self.steps = 0
        self.phase = "start"
        self.host: str | None = None
        self.repaired_namespace = False
        self._last_command: str | None = None

    # --- helpers ---

    def _describe(self, service: str) -> Action:
        ns = self.briefing.namespace
        return (
            "exec_shell",
            {"command": f"kubectl describe svc {service} -n {ns}"},
            f"inspect the service document for {service}",
        )

    def _patch(self, service: str, port: int) -> Action:
        ns = self.briefing.namespace
        ops = json.dumps(
            [{"op": "replace", "path": "/spec/ports/0/targetPort", "value": port}],
            separators=(",", ":"),
        )
        command = f"kubectl patch service {service} -n {ns} --type='json' -p='{ops}'"
        return ("exec_shell", {"command": command}, f"point targetPort back at {port}")

    def _fallback(self) -> Action:
        task = self.briefing.task
        if task == "detect":
            solution = {"anomalous": False}
        elif task == "localize":
            solution = {"services": [self.host or self.briefing.focus]}
        else:
            solution = {"mitigated": True}
        return ("submit", {"solution": solution}, "out of budget, submitting best guess")

    def decide(self, observation: str | None, error: bool) -> Action:
        self.steps += 1
        if self.steps >= self.budget:
            return self._fallback()
        if (
            error
            and observation is not None
            and observation.startswith("Error: namespaces")
            and not self.repaired_namespace
            and self._last_command is not None
        ):
            # one-shot repair: reissue with the namespace from the briefing
            self.repaired_namespace = True
            fixed = re.sub(r"-n\s+\S+", f"-n {self.briefing.namespace}", self._last_command)
            return ("exec_shell", {"command": fixed}, "fix the namespace and retry")
        action = self._decide(observation or "", error)
        self._last_command = action[1].get("command") if action[0] == "exec_shell" else None
        return action

    def _decide(self, observation: str, error: bool) -> Action:
        task = self.briefing.task
        focus = self.briefing.focus

        if self.phase == "start":
            self.phase = "after_logs"
            return ("get_logs", {"service": focus}, f"read recent logs for {focus}")

        if self.phase == "after_logs":
            found = find_refused_host(observation)
            if found is not None:
                self.host = found[0]
                return self._after_host_known()
            if task == "detect":
                self.phase = "after_metrics"
                return ("get_metrics", {"service": focus}, "logs look clean, check the numbers")
            self.phase = "after_traces"
            return ("get_traces", {"service": focus}, "no refusals logged here, follow a trace")

        if self.phase == "after_metrics":
            if metrics_show_errors(observation):
                self.phase = "after_traces"
                return ("get_traces", {"service": focus}, "errors counted, follow a trace")
            return (
                "submit",
                {"solution": {"anomalous": False}},
                "logs and metrics are clean",
            )

        if self.phase == "after_traces":
            self.host = deepest_error_service(observation)
            if self.host is None:
                return self._fallback()
            return self._after_host_known()

        if self.phase == "localize_confirm":
            return (
                "submit",
                {"solution": {"services": [self.host]}},
                f"the failing hop lands on {self.host}",
            )

        if self.phase == "mitigate_describe":
            ports = parse_ports(observation)
            if ports is not None and ports[0] != ports[1]:
                self.phase = "mitigate_patched"
                return self._patch(self.host, ports[0])
            self.phase = "mitigate_restarted"
            ns = self.briefing.namespace
            return (
                "exec_shell",
                {"command": f"kubectl rollout restart deployment/{self.host} -n {ns}"},
                "document looks right, bounce the processes instead",
            )

        if self.phase == "mitigate_patched":
            self.phase = "mitigate_verify"
            return self._describe(self.host)

        if self.phase == "mitigate_restarted":
            self.phase = "mitigate_verify_pods"
            ns = self.briefing.namespace
            return (
                "exec_shell",
                {"command": f"kubectl get pods -n {ns}"},
                "confirm the pods came back",
            )

        if self.phase in ("mitigate_verify", "mitigate_verify_pods"):
            return (
                "submit",
                {"solution": {"mitigated": True}},
                "fix applied and verified",
            )

        return self._fallback()

    def _after_host_known(self) -> Action:
        task = self.briefing.task
        if task == "detect":
            return (
                "submit",
                {"solution": {"anomalous": True, "services": [self.host]}},
                f"callers cannot reach {self.host}",
            )
        if task == "localize":
            self.phase = "localize_confirm"
            return self._describe(self.host)
        self.phase = "mitigate_describe"
        return self._describe(self.host)


def run_in_process(problem, budget: int = DEFAULT_ACTION_BUDGET) -> Session:
    """Drive the scripted agent against a session in this process."""
    session = Session("s-local", problem, budget)
    agent = ScriptedAgent(session.briefing, budget)
    observation: str | None = None
    error = False
    while not session.closed:
        api, args, thought = agent.decide(observation, error)
        record = session.act(api, args, thought)
        observation, error = record.observation, record.error
    return session


def run_external(base_url: str, problem_id: str, budget: int = DEFAULT_ACTION_BUDGET, seed: int | None = None):
    """Drive the same scripted agent over the wire protocol. Returns the
    evaluation report and the transcript text fetched from the server."""
    import httpx

    with httpx.Client(base_url=base_url, timeout=30.0) as client:
        body: dict = {"problem_id": problem_id}
        if seed is not None:
            body["seed"] = seed
        started = client.post("/sessions", json=body)
        started.raise_for_status()
        session_id = started.json()["session_id"]
        agent = ScriptedAgent(started.json()["briefing"], budget)
        observation: str | None = None
        error = False
        while True:
            api, args, thought = agent.decide(observation, error)
            if api == "submit":
                finished = client.post(
                    f"/sessions/{session_id}/submit",
                    json={"solution": args["solution"], "thought": thought},
                )
                finished.raise_for_status()
                report = finished.json()
                break
            acted = client.post(
                f"/sessions/{session_id}/actions",
                json={"api": api, "args": args, "thought": thought},
            )
            acted.raise_for_status()
            observation = acted.json()["observation"]
            error = acted.json()["error"]
        transcript = client.get(f"/sessions/{session_id}/transcript")
        transcript.raise_for_status()
        return report, transcript.text
