"""Telemetry the agent can observe: logs, metrics, traces.

Log lines come from a fixed catalog and never name a fault kind; agents
must infer what happened from the same signals a human operator would see.
Timestamps render through time.asctime over a fixed simulation epoch so a
run's telemetry is byte-identical across hosts and wall-clock time.
"""

from __future__ import annotations

import calendar
import json
import time
from dataclasses import asdict, dataclass, field

# Simulation t=0 renders as 'Mon Jul  8 21:16:34 2024'.
SIM_EPOCH = calendar.timegm((2024, 7, 8, 21, 16, 34, 0, 0, 0))

METRIC_NAMES = (
    "requests_total",
    "errors_total",
    "latency_ms_p50",
    "latency_ms_p95",
    "cpu_mcores",
    "memory_mb",
)


def sim_asctime(time_ms: float) -> str:
    """Render a simulation timestamp the way C runtimes print time."""
    return time.asctime(time.gmtime(SIM_EPOCH + int(time_ms // 1000)))


@dataclass(frozen=True)
class LogRecord:
    time_ms: float
    service: str
    namespace: str
    level: str  # INFO | WARN | ERROR
    message: str
    seq: int = 0


@dataclass(frozen=True)
class MetricPoint:
    time_ms: float
    service: str
    name: str
    value: float
    seq: int = 0


@dataclass(frozen=True)
class Span:
    trace_id: str
    span_id: str
    parent_id: str | None
    service: str
    operation: str
    start_ms: float
    duration_ms: float
    status: str  # ok | error


@dataclass
class TelemetryStore:
    """Append-only sink; queries are pure reads over what was appended."""

    logs: list[LogRecord] = field(default_factory=list)
    metrics: list[MetricPoint] = field(default_factory=list)
    spans: list[Span] = field(default_factory=list)
    _seq: int = 0

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def clone(self) -> "TelemetryStore":
        return TelemetryStore(
            logs=list(self.logs),
            metrics=list(self.metrics),
            spans=list(self.spans),
            _seq=self._seq,
        )

    # --- log catalog ---

    def _log(self, time_ms: float, service: str, namespace: str, level: str, message: str) -> None:
        self.logs.append(
            LogRecord(
                time_ms=time_ms,
                service=service,
                namespace=namespace,
                level=level,
                message=message,
                seq=self._next_seq(),
            )
        )

    def log_connection_refused(
        self, time_ms: float, caller: str, namespace: str, callee_host: str, callee_port: int
    ) -> None:
        """The caller's RPC client notices the refusal, so the line lands in
        the caller's logs and names the callee's advertised (listen) port."""
        self._log(
            time_ms,
            caller,
            namespace,
            "ERROR",
            f"Thrift: {sim_asctime(time_ms)} TSocket::open() connect() "
            f"<Host: {callee_host} Port: {callee_port}>: Connection refused",
        )

    def log_timeout(
        self, time_ms: float, caller: str, namespace: str, callee_host: str, callee_port: int
    ) -> None:
        self._log(
            time_ms,
            caller,
            namespace,
            "ERROR",
            f"Thrift: {sim_asctime(time_ms)} TSocket::open() connect() "
            f"<Host: {callee_host} Port: {callee_port}>: Operation timed out",
        )

    def log_crash(self, time_ms: float, service: str, namespace: str, replica: int) -> None:
        self._log(
            time_ms,
            service,
            namespace,
            "ERROR",
            f"{sim_asctime(time_ms)} ERROR pod {service}-{replica} process exited with code 137",
        )

    def log_restart(self, time_ms: float, service: str, namespace: str, replica: int, port: int) -> None:
        self._log(
            time_ms,
            service,
            namespace,
            "INFO",
            f"{sim_asctime(time_ms)} INFO pod {service}-{replica} starting, listening on port {port}",
        )

    def log_config_change(self, time_ms: float, service: str, namespace: str) -> None:
        self._log(
            time_ms,
            service,
            namespace,
            "INFO",
            f"{sim_asctime(time_ms)} INFO configuration changed, reloading service endpoints",
        )

    def log_heartbeat(self, time_ms: float, service: str, namespace: str, served: int) -> None:
        self._log(
            time_ms,
            service,
            namespace,
            "INFO",
            f"{sim_asctime(time_ms)} INFO healthy, served {served} requests so far",
        )

    def log_memory_warning(
        self, time_ms: float, service: str, namespace: str, usage_mb: float, limit_mb: int
    ) -> None:
        self._log(
            time_ms,
            service,
            namespace,
            "WARN",
            f"{sim_asctime(time_ms)} WARN memory usage {usage_mb:.0f}MiB "
            f"approaching limit {limit_mb}MiB",
        )

    # --- metric / span sinks ---

    def record_metric(self, time_ms: float, service: str, name: str, value: float) -> None:
        if name not in METRIC_NAMES:
            raise ValueError(f"unknown metric '{name}'")
        self.metrics.append(
            MetricPoint(time_ms=time_ms, service=service, name=name, value=value, seq=self._next_seq())
        )

    def record_span(self, span: Span) -> None:
        self.spans.append(span)

    # --- queries ---

    def query_logs(self, service: str, since_ms: float = 0.0, until_ms: float | None = None) -> list[LogRecord]:
        return sorted(
            (
                r
                for r in self.logs
                if r.service == service
                and r.time_ms >= since_ms
                and (until_ms is None or r.time_ms <= until_ms)
            ),
            key=lambda r: (r.time_ms, r.seq),
        )

    def query_metrics(self, service: str, since_ms: float = 0.0, until_ms: float | None = None) -> list[MetricPoint]:
        return sorted(
            (
                p
                for p in self.metrics
                if p.service == service
                and p.time_ms >= since_ms
                and (until_ms is None or p.time_ms <= until_ms)
            ),
            key=lambda p: (p.time_ms, p.seq),
        )

    def query_traces(self, service: str, limit: int = 5) -> list[list[Span]]:
        """Most recent traces that touched the service, oldest first, each
        returned whole so callers can render the full call tree."""
        by_trace: dict[str, list[Span]] = {}
        order: list[str] = []
        for span in self.spans:
            if span.trace_id not in by_trace:
                by_trace[span.trace_id] = []
                order.append(span.trace_id)
            by_trace[span.trace_id].append(span)
        touched = [tid for tid in order if any(s.service == service for s in by_trace[tid])]
        return [by_trace[tid] for tid in touched[-limit:]]

    def export_jsonl(self) -> str:
        lines = []
        for record in self.logs:
            lines.append(json.dumps({"kind": "log", **asdict(record)}, sort_keys=True))
        for point in self.metrics:
            lines.append(json.dumps({"kind": "metric", **asdict(point)}, sort_keys=True))
        for span in self.spans:
            lines.append(json.dumps({"kind": "span", **asdict(span)}, sort_keys=True))
        return "\n".join(lines)


# --- observation rendering ---


def render_logs(records: list[LogRecord]) -> str:
    if not records:
        return "(no log entries)"
    return "\n".join(r.message for r in records)


def render_metrics(points: list[MetricPoint]) -> str:
    if not points:
        return "(no metric samples)"
    by_time: dict[float, dict[str, float]] = {}
    for p in points:
        by_time.setdefault(p.time_ms, {})[p.name] = p.value
    lines = []
    for t in sorted(by_time):
        row = by_time[t]
        parts = [f"{name}={_fmt(row[name])}" for name in METRIC_NAMES if name in row]
        lines.append(f"t={int(t)}ms " + " ".join(parts))
    return "\n".join(lines)


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else f"{value:.1f}"


def render_traces(traces: list[list[Span]]) -> str:
    if not traces:
        return "(no traces recorded)"
    blocks = []
    for spans in traces:
        by_id = {s.span_id: s for s in spans}
        lines = [f"trace {spans[0].trace_id}"]
        for span in sorted(spans, key=lambda s: (s.start_ms, s.span_id)):
            depth = 0
            cursor = span
            while cursor.parent_id is not None and cursor.parent_id in by_id:
                cursor = by_id[cursor.parent_id]
                depth += 1
            indent = "  " * (depth + 1)
            lines.append(
                f"{indent}{span.service} {span.operation} "
                f"start={span.start_ms:.1f}ms duration={span.duration_ms:.1f}ms {span.status}"
            )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)
