"""Scenario sets for per-hour bidding and the required sample count.

A scenario is one whole training day's flexibility trajectory: drawing days
without replacement and slicing the requested hour keeps the correlation
between consecutive minutes intact by construction. All scenarios are
equiprobable with weight 1/|set|.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInput, InsufficientTrainingDays
from .flexibility import FlexSeries

MINUTES_PER_HOUR = 60


@dataclass(frozen=True)
class SampleComplexityInput:
    """Arguments of the theoretical sample-count bound.

    ``epsilon`` is the acceptable joint violation rate, ``delta`` the
    admissible probability that the sampled program's solution violates the
    epsilon-level constraint, and ``dim`` the number of decision variables.
    """

    epsilon: float
    delta: float
    dim: int

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


def required_samples(inp: SampleComplexityInput) -> int:
    """Smallest integer N with N >= (2/eps)ln(1/delta) + 2n + (2n/eps)ln(2/eps).

    Natural logarithms; at (epsilon=0.1, delta=0.01, n=2) this gives 216.
    """
    eps, delta, n = inp.epsilon, inp.delta, inp.dim
    bound = (2.0 / eps) * math.log(1.0 / delta) + 2.0 * n + (2.0 * n / eps) * math.log(2.0 / eps)
    return math.ceil(bound)


@dataclass(frozen=True)
class ScenarioSet:
    """Per-hour scenario matrix: each row is one historical day's hour slice."""

    hour: int
    f_up: np.ndarray
    f_down: np.ndarray
    f_energy: np.ndarray
    source_days: tuple[date, ...]

    def __post_init__(self):
        if not 0 <= self.hour < 24:
            raise ValueError(f"hour {self.hour} outside [0, 24)")
        n = len(self.source_days)
        if n == 0:
            raise EmptyInput("scenario set needs at least one scenario")
        if len(set(self.source_days)) != n:
            raise ValueError("source days must be distinct (drawn without replacement)")
        for name in ("f_up", "f_down", "f_energy"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=float))
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
            if arr.shape != (n, MINUTES_PER_HOUR):
                raise ValueError(
                    f"{name} must have shape ({n}, {MINUTES_PER_HOUR}), got {arr.shape}"
                )

    @property
    def n_scenarios(self) -> int:
        return len(self.source_days)

    @property
    def weight(self) -> float:
        """Probability of each scenario (all equiprobable)."""
        return 1.0 / self.n_scenarios


def build_scenarios(
    training_days: Sequence[FlexSeries],
    hour: int,
    sample_count: int,
    rng_seed,
) -> ScenarioSet:
    """Draw ``sample_count`` distinct training days and slice the given hour.

    Deterministic given the seed (plain integers and ``SeedSequence`` objects
    are both accepted). Raises ``InsufficientTrainingDays`` when the pool is
    too small to sample without replacement.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    if sample_count > len(training_days):
        raise InsufficientTrainingDays(len(training_days), sample_count)
    rng = np.random.default_rng(rng_seed)
    picks = rng.choice(len(training_days), size=sample_count, replace=False)
    rows = [training_days[int(i)] for i in picks]
    sel = slice(60 * hour, 60 * hour + 60)
    return ScenarioSet(
        hour=hour,
        f_up=np.stack([r.f_up[sel] for r in rows]),
        f_down=np.stack([r.f_down[sel] for r in rows]),
        f_energy=np.stack([r.f_energy[sel] for r in rows]),
        source_days=tuple(r.day for r in rows),
    )


def conditional_cdf(values: Sequence[float], level: float) -> float:
    """Empirical fraction of values <= level (right-continuous step function)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise EmptyInput("conditional_cdf needs at least one value")
    return float(np.count_nonzero(arr <= level) / arr.size)


def write_scenario_csv(scn: ScenarioSet, path: str | Path) -> None:
    """Debug dump: one row per (scenario, minute)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hour", "scenario", "minute", "f_up_kw", "f_down_kw", "f_energy_kw"])
        for s in range(scn.n_scenarios):
            for m in range(MINUTES_PER_HOUR):
                writer.writerow(
                    [scn.hour, s, m, repr(float(scn.f_up[s, m])),
                     repr(float(scn.f_down[s, m])), repr(float(scn.f_energy[s, m]))]
                )
