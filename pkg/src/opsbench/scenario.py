"""Scenario documents and the content-addressed problem cache.

A scenario bundles everything one benchmark problem needs: the topology,
a workload spec, fault instances (explicit or sampled), the task kind,
and oracle thresholds. Problems are identified by a hash of their
canonical content, so the same scenario loaded from two paths is the same
problem and any edit makes a new one.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .cluster import Topology, load_topology
from .faults import FaultInstance, sample_fault
from .rng import derive_seed
from .workload import WorkloadPlan, WorkloadSpec, generate_plan

TASKS = ("detect", "localize", "mitigate")

DEFAULT_ACTION_LATENCY_MS = 1000.0


@dataclass(frozen=True)
class OracleSpec:
    post_window_ms: float = 30000.0
    error_rate_threshold: float = 0.01
    latency_ceiling_ms: float = 1000.0

    @classmethod
    def from_doc(cls, doc: Mapping | None) -> "OracleSpec":
        doc = doc or {}
        return cls(
            post_window_ms=float(doc.get("postWindowMs", 30000.0)),
            error_rate_threshold=float(doc.get("errorRateThreshold", 0.01)),
            latency_ceiling_ms=float(doc.get("latencyCeilingMs", 1000.0)),
        )

    def to_doc(self) -> dict:
        return {
            "postWindowMs": self.post_window_ms,
            "errorRateThreshold": self.error_rate_threshold,
            "latencyCeilingMs": self.latency_ceiling_ms,
        }


@dataclass(frozen=True)
class Scenario:
    task: str
    topology: Topology
    topology_doc: dict
    workload: WorkloadSpec
    faults: tuple[FaultInstance, ...]
    seed: int
    action_latency_ms: float = DEFAULT_ACTION_LATENCY_MS
    oracle: OracleSpec = field(default_factory=OracleSpec)
    focus: str | None = None

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task '{self.task}'")
        self.workload.validate()
        for entry in self.workload.mix:
            if entry not in self.topology.services:
                raise ValueError(f"workload mix names unknown service '{entry}'")
            if not self.topology.services[entry].entrypoint:
                raise ValueError(f"workload mix service '{entry}' is not an entrypoint")
        for fault in self.faults:
            fault.validate(self.topology)
        if self.task in ("localize", "mitigate") and not self.faults:
            raise ValueError(f"{self.task} task requires at least one fault")
        if self.focus is not None and self.focus not in self.topology.services:
            raise ValueError(f"unknown focus service '{self.focus}'")
        if self.action_latency_ms < 0:
            raise ValueError("actionLatencyMs must be >= 0")

    @property
    def focus_service(self) -> str:
        return self.focus if self.focus is not None else self.topology.entrypoints[0]

    def canonical_doc(self) -> dict:
        """Content identity: topology always inlined, faults resolved."""
        return {
            "task": self.task,
            "topology": self.topology_doc,
            "workload": self.workload.to_doc(),
            "faults": [f.to_doc() for f in self.faults],
            "seed": self.seed,
            "actionLatencyMs": self.action_latency_ms,
            "oracle": self.oracle.to_doc(),
            "focus": self.focus,
        }


def scenario_from_doc(doc: Mapping, base_dir: Path | None = None) -> Scenario:
    raw_topology = doc.get("topology")
    if isinstance(raw_topology, str):
        if base_dir is None:
            raise ValueError("topology path given but no base directory to resolve it")
        topology_doc = yaml.safe_load((base_dir / raw_topology).read_text())
    elif isinstance(raw_topology, Mapping):
        topology_doc = dict(raw_topology)
    else:
        raise ValueError("scenario requires a 'topology' mapping or path")
    topology = load_topology(topology_doc)

    seed = int(doc.get("seed", 0))
    raw_faults = doc.get("faults", [])
    if raw_faults == "sample":
        faults = (sample_fault(topology, seed),)
    else:
        faults = tuple(FaultInstance.from_doc(f) for f in raw_faults)

    scenario = Scenario(
        task=str(doc.get("task", "")),
        topology=topology,
        topology_doc=topology_doc,
        workload=WorkloadSpec.from_doc(doc.get("workload", {})),
        faults=faults,
        seed=seed,
        action_latency_ms=float(doc.get("actionLatencyMs", DEFAULT_ACTION_LATENCY_MS)),
        oracle=OracleSpec.from_doc(doc.get("oracle")),
        focus=doc.get("focus"),
    )
    scenario.validate()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    doc = yaml.safe_load(path.read_text())
    return scenario_from_doc(doc, base_dir=path.parent)


def problem_id(scenario: Scenario) -> str:
    canonical = json.dumps(scenario.canonical_doc(), sort_keys=True, separators=(",", ":"))
    return "p-" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class Problem:
    """A scenario resolved and frozen for execution: id pinned, workload
    fully materialized."""

    problem_id: str
    scenario: Scenario
    plan: WorkloadPlan

    @property
    def task(self) -> str:
        return self.scenario.task


def resolve_problem(scenario: Scenario) -> Problem:
    plan = generate_plan(scenario.workload, derive_seed(scenario.seed, "workload"))
    return Problem(problem_id=problem_id(scenario), scenario=scenario, plan=plan)


class ProblemCache:
    """Content-addressed registry of resolved problems."""

    def __init__(self):
        self._problems: dict[str, Problem] = {}

    def add(self, scenario: Scenario) -> Problem:
        pid = problem_id(scenario)
        if pid not in self._problems:
            self._problems[pid] = resolve_problem(scenario)
        return self._problems[pid]

    def add_path(self, path: str | Path) -> Problem:
        return self.add(load_scenario(path))

    def load_dir(self, directory: str | Path) -> list[Problem]:
        """Load every scenario file in a directory (sorted by name).
        Topology-only documents are skipped."""
        loaded = []
        for path in sorted(Path(directory).glob("*.yaml")):
            doc = yaml.safe_load(path.read_text())
            if not isinstance(doc, Mapping) or "task" not in doc:
                continue
            loaded.append(self.add(scenario_from_doc(doc, base_dir=path.parent)))
        return loaded

    def get(self, pid: str) -> Problem:
        if pid not in self._problems:
            raise KeyError(f"unknown problem '{pid}'")
        return self._problems[pid]

    def ids(self) -> list[str]:
        return sorted(self._problems)

    def problems(self) -> list[Problem]:
        return [self._problems[pid] for pid in self.ids()]
