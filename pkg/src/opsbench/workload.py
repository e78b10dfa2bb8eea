"""Request workload generation.

A WorkloadSpec describes request-arrival behaviour over a finite run; a
WorkloadPlan is the fully materialized, deterministic list of arrivals for
one (spec, seed) pair. Everything downstream (simulation, scoring) replays
the plan, so two runs with the same scenario and seed see byte-identical
traffic.

Times are milliseconds from simulation start; rates are requests/second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

from .rng import SplitMix64

PATTERNS = ("constant", "exponential", "bursty", "diurnal")


@dataclass(frozen=True)
class WorkloadSpec:
    pattern: str
    duration_ms: float
    mix: dict[str, float] = field(default_factory=dict)
    rate: float = 0.0       # constant / exponential
    on_rate: float = 0.0    # bursty, during the on half-period
    off_rate: float = 0.0   # bursty, during the off half-period
    base: float = 0.0       # diurnal midline
    amplitude: float = 0.0  # diurnal swing, must not exceed base
    period_ms: float = 60000.0
    scale: float = 1.0

    def validate(self) -> None:
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown workload pattern '{self.pattern}'")
        if self.duration_ms <= 0:
            raise ValueError("duration_ms must be positive")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if not self.mix:
            raise ValueError("mix must name at least one entry service")
        if any(w <= 0 for w in self.mix.values()):
            raise ValueError("mix weights must be positive")
        if self.pattern in ("constant", "exponential") and self.rate <= 0:
            raise ValueError(f"{self.pattern} pattern requires rate > 0")
        if self.pattern == "bursty":
            if self.on_rate <= 0 or self.off_rate < 0:
                raise ValueError("bursty pattern requires on_rate > 0 and off_rate >= 0")
            if self.period_ms <= 0:
                raise ValueError("bursty pattern requires period_ms > 0")
        if self.pattern == "diurnal":
            if self.base <= 0:
                raise ValueError("diurnal pattern requires base > 0")
            if not 0 <= self.amplitude <= self.base:
                # the thinning majorant assumes a non-negative instantaneous rate
                raise ValueError("diurnal amplitude must be in [0, base]")
            if self.period_ms <= 0:
                raise ValueError("diurnal pattern requires period_ms > 0")

    @classmethod
    def from_doc(cls, doc: Mapping) -> "WorkloadSpec":
        spec = cls(
            pattern=str(doc.get("pattern", "")),
            duration_ms=float(doc.get("durationMs", 0)),
            mix=dict(doc.get("mix", {})),
            rate=float(doc.get("rate", 0)),
            on_rate=float(doc.get("onRate", 0)),
            off_rate=float(doc.get("offRate", 0)),
            base=float(doc.get("base", 0)),
            amplitude=float(doc.get("amplitude", 0)),
            period_ms=float(doc.get("periodMs", 60000)),
            scale=float(doc.get("scale", 1.0)),
        )
        spec.validate()
        return spec

    def to_doc(self) -> dict:
        doc: dict = {
            "pattern": self.pattern,
            "durationMs": self.duration_ms,
            "mix": dict(self.mix),
            "scale": self.scale,
        }
        if self.pattern in ("constant", "exponential"):
            doc["rate"] = self.rate
        elif self.pattern == "bursty":
            doc.update(onRate=self.on_rate, offRate=self.off_rate, periodMs=self.period_ms)
        else:
            doc.update(base=self.base, amplitude=self.amplitude, periodMs=self.period_ms)
        return doc


@dataclass(frozen=True)
class Arrival:
    time_ms: float
    entry: str


@dataclass(frozen=True)
class WorkloadPlan:
    arrivals: tuple[Arrival, ...]
    seed: int
    duration_ms: float


def sample_entry(mix: Mapping[str, float], u: float) -> str:
    """Pick an entry service by inverse CDF over lexicographically ordered,
    normalized weights. Insertion order of the mix mapping never matters."""
    names = sorted(mix)
    total = sum(mix[n] for n in names)
    acc = 0.0
    for name in names:
        acc += mix[name] / total
        if u < acc:
            return name
    return names[-1]  # u rounded to the top of the CDF


def _arrival_times(spec: WorkloadSpec, rng: SplitMix64) -> list[float]:
    if spec.pattern == "constant":
        interval = 1000.0 / (spec.rate * spec.scale)
        times = []
        t = interval
        while t < spec.duration_ms:
            times.append(t)
            t += interval
        return times

    if spec.pattern == "exponential":
        rate_per_ms = spec.rate * spec.scale / 1000.0
        times = []
        t = rng.expovariate(rate_per_ms)
        while t < spec.duration_ms:
            times.append(t)
            t += rng.expovariate(rate_per_ms)
        return times

    if spec.pattern == "bursty":
        half = spec.period_ms / 2.0
        times = []
        seg_start = 0.0
        on = True  # each period opens with its on half
        while seg_start < spec.duration_ms:
            seg_end = min(seg_start + half, spec.duration_ms)
            rate = (spec.on_rate if on else spec.off_rate) * spec.scale
            if rate > 0:
                t = seg_start + rng.expovariate(rate / 1000.0)
                while t < seg_end:
                    times.append(t)
                    t += rng.expovariate(rate / 1000.0)
            seg_start += half
            on = not on
        return times

    # diurnal: thin a Poisson stream at the majorant rate base+amplitude
    majorant = (spec.base + spec.amplitude) * spec.scale
    times = []
    t = 0.0
    while True:
        t += rng.expovariate(majorant / 1000.0)
        if t >= spec.duration_ms:
            return times
        instant = spec.base + spec.amplitude * math.sin(2.0 * math.pi * t / spec.period_ms)
        if rng.random() * (spec.base + spec.amplitude) < instant:
            times.append(t)


def generate_plan(spec: WorkloadSpec, seed: int) -> WorkloadPlan:
    """Materialize every arrival for the run. Deterministic in (spec, seed)."""
    spec.validate()
    rng = SplitMix64(seed)
    times = _arrival_times(spec, rng)
    arrivals = tuple(Arrival(time_ms=t, entry=sample_entry(spec.mix, rng.random())) for t in times)
    return WorkloadPlan(arrivals=arrivals, seed=seed, duration_ms=spec.duration_ms)
