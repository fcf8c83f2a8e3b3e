"""Exhaustive grid search for the sum-rate-optimal bias scale factor."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .engine import CampaignResult, Scenario, run_campaign
from .errors import ConfigurationError

SUCRE_XL_DELTA = -1.0


@dataclass(frozen=True)
class DeltaGrid:
    lo: float = -2.0
    hi: float = 2.0
    step: float = 0.1
    trials_per_point: Optional[int] = None

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ConfigurationError(f"grid needs lo <= hi, got [{self.lo}, {self.hi}]")
        if self.step <= 0:
            raise ConfigurationError("grid step must be positive")
        if self.trials_per_point is not None and self.trials_per_point < 1:
            raise ConfigurationError("trials_per_point must be >= 1")

    def points(self) -> np.ndarray:
        n = int(np.floor((self.hi - self.lo) / self.step + 1e-9))
        pts = np.round(self.lo + self.step * np.arange(n + 1), 10)
        return pts + 0.0  # normalise -0.0


@dataclass
class DeltaSweepResult:
    k_inactive: int
    subarrays: int
    deltas: np.ndarray
    means: np.ndarray
    ci_half_widths: np.ndarray
    campaign: Optional[CampaignResult] = None

    @property
    def best_index(self) -> int:
        return argmax_delta(self.deltas, self.means)

    @property
    def delta_star(self) -> float:
        return float(self.deltas[self.best_index])

    def rows(self):
        best = self.best_index
        for i, (d, m, c) in enumerate(zip(self.deltas, self.means, self.ci_half_widths)):
            yield self.k_inactive, self.subarrays, float(d), float(m), float(c), i == best


def argmax_delta(deltas: Sequence[float], values: Sequence[float]) -> int:
    """Index of the largest value; ties go to the smaller |delta|, then the smaller delta."""
    values = np.asarray(values, dtype=float)
    top = values.max()
    tied = [i for i in range(len(values)) if values[i] == top]
    return min(tied, key=lambda i: (abs(deltas[i]), deltas[i]))


Evaluator = Callable[[Scenario, np.ndarray], tuple[np.ndarray, np.ndarray]]


def campaign_evaluator(workers: int = 1, trials: Optional[int] = None):
    """Evaluator backed by the engine. All grid points of a trial share one
    channel and one set of random draws (common random numbers)."""
    last = {}

    def evaluate(scenario: Scenario, deltas: np.ndarray):
        runs = [replace(scenario.protocol, delta=float(d)) for d in deltas]
        res = run_campaign(scenario, workers=workers, runs=runs, trials=trials)
        last["campaign"] = res
        means = np.array([acc.mean("mean_sum_rate") for acc in res.accumulators])
        cis = np.array([acc.ci("mean_sum_rate") for acc in res.accumulators])
        return means, cis

    evaluate.last = last
    return evaluate


def sweep_delta(scenario: Scenario, grid: DeltaGrid,
                evaluate: Optional[Evaluator] = None, workers: int = 1) -> DeltaSweepResult:
    if scenario.protocol.scheme != "noma-xl":
        raise ConfigurationError("the SUCRe-XL baseline uses a fixed delta; sweep refused")
    if evaluate is None:
        evaluate = campaign_evaluator(workers, grid.trials_per_point)
    deltas = grid.points()
    means, cis = evaluate(scenario, deltas)
    last = getattr(evaluate, "last", {})
    return DeltaSweepResult(scenario.k_inactive, scenario.geometry.subarrays, deltas,
                            np.asarray(means, dtype=float), np.asarray(cis, dtype=float),
                            last.get("campaign"))


def fixed_delta_baseline(override: Optional[float] = None) -> float:
    """Scale factor used by SUCRe-XL for every (K, B)."""
    return SUCRE_XL_DELTA if override is None else float(override)


@dataclass
class StudyPoint:
    """NOMA-XL sweep plus the SUCRe-XL baseline on the same random inputs."""

    sweep: DeltaSweepResult
    campaign: CampaignResult

    @property
    def baseline_index(self) -> int:
        return len(self.campaign.runs) - 1

    def noma(self, field: str) -> tuple[float, float]:
        acc = self.campaign.accumulators[self.sweep.best_index]
        return acc.mean(field), acc.ci(field)

    def sucre(self, field: str) -> tuple[float, float]:
        acc = self.campaign.accumulators[self.baseline_index]
        return acc.mean(field), acc.ci(field)


def study_point(scenario: Scenario, grid: DeltaGrid, workers: int = 1,
                sucre_delta: Optional[float] = None) -> StudyPoint:
    """Sweep delta for NOMA-XL and run SUCRe-XL alongside in one campaign."""
    if scenario.protocol.scheme != "noma-xl":
        raise ConfigurationError("study_point expects a NOMA-XL scenario")
    deltas = grid.points()
    runs = [replace(scenario.protocol, delta=float(d)) for d in deltas]
    runs.append(replace(scenario.protocol, scheme="sucre-xl",
                        delta=fixed_delta_baseline(sucre_delta)))
    res = run_campaign(scenario, workers=workers, runs=runs, trials=grid.trials_per_point)
    noma = res.accumulators[:-1]
    sweep = DeltaSweepResult(
        scenario.k_inactive, scenario.geometry.subarrays, deltas,
        np.array([a.mean("mean_sum_rate") for a in noma]),
        np.array([a.ci("mean_sum_rate") for a in noma]), res)
    return StudyPoint(sweep, res)
