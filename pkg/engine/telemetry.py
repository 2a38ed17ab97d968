"""Update counts and phase timings for one training run.

Counts are a pure function of the config and go into the run log. Timings are
wall-clock and are kept apart so same-seed runs serialize identically.
"""
from __future__ import annotations

import time
from collections.abc import Generator
from contextlib import contextmanager
from dataclasses import dataclass

D_UPDATES = "d_updates"
G_UPDATES = "g_updates"
EVALUATIONS = "evaluations"
COUNTERS = (D_UPDATES, G_UPDATES, EVALUATIONS)

D_STEP = "d_step"
G_STEP = "g_step"
EVALUATE = "evaluate"
PHASES = (D_STEP, G_STEP, EVALUATE)


@dataclass
class PhaseTiming:
    count: int = 0
    total_ms: float = 0.0
    max_ms: float = 0.0

    def add(self, elapsed_ms: float) -> None:
        self.count += 1
        self.total_ms += elapsed_ms
        self.max_ms = max(self.max_ms, elapsed_ms)

    def as_dict(self) -> dict[str, float]:
        mean = self.total_ms / self.count if self.count else 0.0
        return {"count": self.count, "total_ms": self.total_ms, "mean_ms": mean, "max_ms": self.max_ms}


class RunTelemetry:
    """Counters and timers for a single trainer; one instance per run, never shared."""

    def __init__(self) -> None:
        self._counts = dict.fromkeys(COUNTERS, 0)
        self._phases = {name: PhaseTiming() for name in PHASES}

    def count(self, name: str, n: int = 1) -> None:
        if name not in self._counts:
            raise KeyError(f"unknown counter {name!r}; accepted: {COUNTERS}")
        self._counts[name] += n

    def get(self, name: str) -> int:
        return self._counts[name]

    @contextmanager
    def phase(self, name: str) -> Generator[None, None, None]:
        if name not in self._phases:
            raise KeyError(f"unknown phase {name!r}; accepted: {PHASES}")
        start = time.perf_counter()
        try:
            yield
        finally:
            self._phases[name].add((time.perf_counter() - start) * 1000)

    def counters(self) -> dict[str, int]:
        """Every counter, zero when never bumped."""
        return dict(self._counts)

    def timings(self) -> dict[str, dict[str, float]]:
        return {name: timing.as_dict() for name, timing in self._phases.items()}
