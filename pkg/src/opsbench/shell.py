"""Whitelisted operator shell.

exec_shell gives agents a command line, but only a fixed grammar actually
does anything: the kubectl and helm forms an operator needs for the
supported incident classes. Everything else is rejected with
'command not supported: <head>' so an agent can tell "wrong tool" apart
from "wrong arguments" (which produce kubectl-style Error: messages).
"""

from __future__ import annotations

import json
import shlex

from .cluster import (
    ClusterError,
    ConfigPatch,
    ReplicaState,
    describe_service,
    effective_ports,
    release_name,
)
from .engine import Engine
from .telemetry import render_logs

LOG_TAIL = 50

KUBECTL_VERBS = ("get", "describe", "logs", "patch", "delete", "rollout")


class ShellError(Exception):
    """str() is the agent-visible rejection text."""


def not_supported(head: str) -> ShellError:
    return ShellError(f"command not supported: {head}")


def _parse_flags(tokens: list[str]) -> tuple[list[str], dict[str, str]]:
    positionals: list[str] = []
    flags: dict[str, str] = {}
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if token.startswith("-"):
            if "=" in token:
                key, value = token.split("=", 1)
                flags[key] = value
            elif i + 1 < len(tokens) and not tokens[i + 1].startswith("-"):
                flags[token] = tokens[i + 1]
                i += 1
            else:
                flags[token] = ""
        else:
            positionals.append(token)
        i += 1
    return positionals, flags


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [
        max(len(header), *(len(row[i]) for row in rows)) if rows else len(header)
        for i, header in enumerate(headers)
    ]
    lines = []
    for row in [headers] + rows:
        lines.append("   ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def _age(clock_ms: float) -> str:
    seconds = int(clock_ms // 1000)
    if seconds < 60:
        return f"{seconds}s"
    if seconds < 3600:
        return f"{seconds // 60}m"
    return f"{seconds // 3600}h"


def logs_text(engine: Engine, service: str, tail: int = LOG_TAIL) -> str:
    records = engine.telemetry.query_logs(service)
    if len(records) > tail:
        shown = records[-tail:]
        header = f"(showing last {tail} of {len(records)} lines)\n"
        return header + render_logs(shown)
    return render_logs(records)


class Shell:
    def __init__(self, engine: Engine):
        self.engine = engine

    def execute(self, command: str) -> tuple[str, bool]:
        """Run one command line; returns (text, error_flag)."""
        try:
            return self._dispatch(command), False
        except (ShellError, ClusterError) as err:
            return str(err), True

    # --- dispatch ---

    def _dispatch(self, command: str) -> str:
        try:
            tokens = shlex.split(command)
        except ValueError:
            raise ShellError(f"command not supported: {command.split()[0] if command.split() else ''}")
        if not tokens:
            raise ShellError("command not supported: ")
        head = tokens[0]
        if head == "kubectl":
            return self._kubectl(tokens[1:])
        if head == "helm":
            return self._helm(tokens[1:])
        raise not_supported(head)

    def _namespace(self, flags: dict[str, str]) -> str:
        ns = flags.get("-n") or flags.get("--namespace") or self.engine.namespace
        if ns != self.engine.namespace:
            raise ClusterError(f'Error: namespaces "{ns}" not found')
        return ns

    def _kubectl(self, tokens: list[str]) -> str:
        if not tokens:
            raise not_supported("kubectl")
        verb = tokens[0]
        if verb not in KUBECTL_VERBS:
            raise ShellError(f"command not supported: kubectl {verb}")
        positionals, flags = _parse_flags(tokens)
        self._namespace(flags)
        if verb == "get":
            return self._get(positionals)
        if verb == "describe":
            return self._describe(positionals, flags)
        if verb == "logs":
            return self._logs(positionals)
        if verb == "patch":
            return self._patch(positionals, flags)
        if verb == "delete":
            return self._delete(positionals)
        return self._rollout(positionals)

    # --- read-only verbs ---

    def _get(self, positionals: list[str]) -> str:
        if len(positionals) < 2:
            raise ShellError("command not supported: kubectl get")
        resource = positionals[1]
        if resource in ("pods", "po", "pod"):
            return self._pods_table()
        if resource in ("svc", "service", "services"):
            return self._svc_table()
        raise ClusterError(f'Error: unknown resource "{resource}"')

    def _pods_table(self) -> str:
        engine = self.engine
        rows = []
        age = _age(engine.clock_ms)
        for name, spec in engine.topology.services.items():
            for idx in range(spec.replicas):
                status = engine.state.replica_status[(name, idx)]
                ready = "1/1" if status == ReplicaState.RUNNING else "0/1"
                rows.append(
                    [
                        f"{name}-{idx}",
                        ready,
                        status.value,
                        str(engine.state.restarts.get((name, idx), 0)),
                        age,
                    ]
                )
        return _format_table(["NAME", "READY", "STATUS", "RESTARTS", "AGE"], rows)

    def _svc_table(self) -> str:
        engine = self.engine
        rows = []
        age = _age(engine.clock_ms)
        for i, name in enumerate(engine.topology.services):
            listen, _ = effective_ports(engine.state, name)
            rows.append(
                [name, "ClusterIP", f"10.96.0.{i + 1}", "<none>", f"{listen}/TCP", age]
            )
        return _format_table(
            ["NAME", "TYPE", "CLUSTER-IP", "EXTERNAL-IP", "PORT(S)", "AGE"], rows
        )

    def _describe(self, positionals: list[str], flags: dict[str, str]) -> str:
        if len(positionals) < 2 or positionals[1] not in ("svc", "service", "services"):
            raise ShellError("command not supported: kubectl describe")
        name = positionals[2] if len(positionals) > 2 else ""
        return describe_service(self.engine.state, name, self._namespace(flags))

    def _logs(self, positionals: list[str]) -> str:
        if len(positionals) < 2:
            raise ShellError("command not supported: kubectl logs")
        target = positionals[1]
        service = self._resolve_service_or_pod(target)
        return logs_text(self.engine, service)

    def _resolve_service_or_pod(self, target: str) -> str:
        services = self.engine.topology.services
        if target in services:
            return target
        stem, _, suffix = target.rpartition("-")
        if stem in services and suffix.isdigit() and int(suffix) < services[stem].replicas:
            return stem
        raise ClusterError(f'Error: pods "{target}" not found')

    # --- mutating verbs ---

    def _patch(self, positionals: list[str], flags: dict[str, str]) -> str:
        if len(positionals) < 2 or positionals[1] not in ("service", "svc", "services"):
            resource = positionals[1] if len(positionals) > 1 else ""
            raise ClusterError(f'Error: unknown resource "{resource}"')
        if len(positionals) < 3:
            raise ClusterError('Error: services "" not found')
        name = positionals[2]
        patch_type = flags.get("--type", "")
        if patch_type != "json":
            raise ClusterError(f'Error: unsupported patch type "{patch_type}"')
        raw = flags.get("-p") or flags.get("--patch") or ""
        try:
            docs = json.loads(raw)
        except json.JSONDecodeError:
            raise ClusterError("Error: invalid patch payload")
        if not isinstance(docs, list) or not docs or not all(isinstance(d, dict) for d in docs):
            raise ClusterError("Error: invalid patch payload")
        namespace = self._namespace(flags)
        patches = []
        for doc in docs:
            if "op" not in doc or "path" not in doc:
                raise ClusterError("Error: invalid patch payload")
            patches.append(ConfigPatch.from_doc(doc))
        for patch in patches:
            self.engine.agent_patch(name, namespace, patch)
        return f"service/{name} patched"

    def _delete(self, positionals: list[str]) -> str:
        if len(positionals) < 2 or positionals[1] not in ("pod", "pods", "po"):
            resource = positionals[1] if len(positionals) > 1 else ""
            raise ClusterError(f'Error: unknown resource "{resource}"')
        if len(positionals) < 3:
            raise ClusterError('Error: pods "" not found')
        pod = positionals[2]
        stem, _, suffix = pod.rpartition("-")
        if stem not in self.engine.topology.services or not suffix.isdigit():
            raise ClusterError(f'Error: pods "{pod}" not found')
        self.engine.delete_pod(stem, int(suffix))
        return f'pod "{pod}" deleted'

    def _rollout(self, positionals: list[str]) -> str:
        if len(positionals) < 2 or positionals[1] != "restart":
            raise ShellError("command not supported: kubectl rollout")
        rest = positionals[2:]
        if len(rest) == 1 and rest[0].startswith("deployment/"):
            name = rest[0].split("/", 1)[1]
        elif len(rest) == 2 and rest[0] in ("deployment", "deploy"):
            name = rest[1]
        else:
            raise ShellError("command not supported: kubectl rollout")
        self.engine.rollout_restart(name)
        return f"deployment.apps/{name} restarted"

    # --- helm ---

    def _helm(self, tokens: list[str]) -> str:
        if not tokens or tokens[0] not in ("list", "ls"):
            sub = tokens[0] if tokens else ""
            raise ShellError(f"command not supported: helm {sub}".rstrip())
        positionals, flags = _parse_flags(tokens)
        self._namespace(flags)
        topo = self.engine.topology
        release = release_name(topo.app_name)
        rows = [
            [
                release,
                topo.namespace,
                "1",
                "2024-07-08 21:16:34.000000000 +0000 UTC",
                "deployed",
                f"{release}-0.1.0",
                "latest",
            ]
        ]
        return _format_table(
            ["NAME", "NAMESPACE", "REVISION", "UPDATED", "STATUS", "CHART", "APP VERSION"], rows
        )
