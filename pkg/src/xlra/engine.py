"""Monte Carlo orchestration of the multi-slot random-access process.

Random streams
--------------
Every trial owns independent named substreams built as
``SeedSequence(master_seed, spawn_key=(trial_index, stream_id))`` with the ids
listed in :data:`STREAMS`. Adding a new consumer therefore never perturbs the
draws of existing ones, and a trial is reproducible from
``(master_seed, trial_index)`` alone, whatever the worker count.

Access model
------------
A never-attempted UE attempts with probability ``p_a`` in each slot, so its
first attempt slot is geometric and is drawn up front. UEs whose first attempt
falls beyond the horizon never contend and are not simulated. Pilot choices
and backoff draws are tabulated per (slot, UE) before the slot loop, which lets
several protocol variants replay exactly the same random inputs.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .channel import ArrayGeometry, FadingModel, realize_channel
from .errors import ConfigurationError
from .metrics import MetricsAccumulator, RunMetrics, RUN_FIELDS
from .protocol import ProtocolParams, UeStatus, resolve_slot

STREAMS = ("placement", "shadowing", "visibility", "pilots", "access", "alpha_noise")

# fields every run in one batch must share
_SHARED = ("tau_ra", "rho", "sigma2", "p_a", "varpi1", "alpha_mode", "alpha_noise_var")


@dataclass(frozen=True)
class Scenario:
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry)
    fading: FadingModel = field(default_factory=FadingModel)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    k_inactive: int = 1000
    cell_side: float = 100.0
    cell_standoff: Optional[float] = None
    p_b: float = 0.5
    trials: int = 5000
    master_seed: int = 20240101
    horizon_slots: int = 40

    def __post_init__(self):
        if self.k_inactive < 0:
            raise ConfigurationError("k_inactive must be >= 0")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not 0 < self.p_b <= 1:
            raise ConfigurationError("p_b must be in (0, 1]")
        if self.cell_side <= 0:
            raise ConfigurationError("cell_side must be positive")
        if self.cell_standoff is not None and self.cell_standoff < 0:
            raise ConfigurationError("cell_standoff must be >= 0")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        need = math.ceil(self.protocol.max_attempts / self.protocol.p_na)
        if self.horizon_slots < need:
            raise ConfigurationError(
                f"horizon_slots={self.horizon_slots} < max_attempts/p_na = {need}")


def trial_rng(master_seed: int, trial_index: int, stream: str) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(trial_index, STREAMS.index(stream)))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass
class SlotRecord:
    slot: int
    run: np.ndarray
    ue: np.ndarray
    pilot: np.ndarray
    repeat: np.ndarray
    admitted: np.ndarray
    sum_rate: np.ndarray


@dataclass
class TrialResult:
    contended: int
    admitted: int
    failed: int
    pending: int
    total_attempts: int
    rounds: int
    sum_rate_total: float
    accepted_ratio_total: float
    far_field_ok: bool = True
    attempts: Optional[np.ndarray] = field(default=None, repr=False)
    status: Optional[np.ndarray] = field(default=None, repr=False)
    slots: Optional[list[SlotRecord]] = field(default=None, repr=False)

    @property
    def avg_attempts(self) -> float:
        return self.total_attempts / self.contended if self.contended else 0.0

    @property
    def failure_prob(self) -> float:
        return self.failed / self.contended if self.contended else 0.0

    @property
    def normalized_accepted(self) -> float:
        return self.accepted_ratio_total / self.rounds if self.rounds else 0.0

    @property
    def mean_sum_rate(self) -> float:
        return self.sum_rate_total / self.rounds if self.rounds else 0.0

    def metrics(self) -> RunMetrics:
        return RunMetrics(self.avg_attempts, self.failure_prob,
                          self.normalized_accepted, self.mean_sum_rate)

    def same_outcome(self, other: "TrialResult") -> bool:
        keys = ("contended", "admitted", "failed", "pending", "total_attempts", "rounds",
                "sum_rate_total", "accepted_ratio_total", "far_field_ok")
        return all(getattr(self, k) == getattr(other, k) for k in keys)


def _check_batch(runs: Sequence[ProtocolParams]) -> None:
    base = runs[0]
    for r in runs[1:]:
        for name in _SHARED:
            if getattr(r, name) != getattr(base, name):
                raise ConfigurationError(f"runs in one batch must share {name}")


def simulate_trial(scenario: Scenario, trial_index: int,
                   runs: Optional[Sequence[ProtocolParams]] = None,
                   record: bool = False) -> list[TrialResult]:
    """Simulate one channel realization under each protocol variant in ``runs``.

    All variants see the same channel, pilot choices and backoff draws. With
    ``record=True`` the per-slot contention data and final UE arrays are kept.
    """
    runs = list(runs) if runs is not None else [scenario.protocol]
    _check_batch(runs)
    base = runs[0]
    seed, horizon = scenario.master_seed, scenario.horizon_slots
    n_runs = len(runs)

    access = trial_rng(seed, trial_index, "access")
    first = access.geometric(base.p_a, scenario.k_inactive) - 1
    first = first[first < horizon]
    n = len(first)
    retry_u = access.random((horizon, n))
    pilots = trial_rng(seed, trial_index, "pilots").integers(0, base.tau_ra, (horizon, n))
    noise = None
    if base.alpha_mode == "noisy" and base.alpha_noise_var > 0:
        noise = trial_rng(seed, trial_index, "alpha_noise").normal(
            0.0, math.sqrt(base.alpha_noise_var), (horizon, n))
    channel = realize_channel(
        n, scenario.cell_side, scenario.p_b, scenario.geometry, scenario.fading,
        trial_rng(seed, trial_index, "placement"), trial_rng(seed, trial_index, "shadowing"),
        trial_rng(seed, trial_index, "visibility"), scenario.cell_standoff)

    deltas = np.array([r.delta for r in runs], dtype=float)
    limits = np.array([r.cluster_limit for r in runs])
    p_na = np.array([r.p_na for r in runs])[:, None]
    cap = np.array([r.max_attempts for r in runs])

    status = np.full((n_runs, n), int(UeStatus.INACTIVE), dtype=np.int8)
    attempts = np.zeros((n_runs, n), dtype=np.int32)
    rounds = np.zeros(n_runs, dtype=np.int64)
    rate_tot = np.zeros(n_runs)
    ratio_tot = np.zeros(n_runs)
    slots = [] if record else None

    for s in range(horizon):
        inactive = status == UeStatus.INACTIVE
        active = ((attempts == 0) & (first == s)) | (inactive & (attempts > 0) & (retry_u[s] < p_na))
        run_idx, ue_idx = np.nonzero(active)
        if len(run_idx):
            out = resolve_slot(run_idx, ue_idx, pilots[s, ue_idx], channel, base, deltas,
                               limits, None if noise is None else noise[s, ue_idx])
            attempts[run_idx, ue_idx] += 1
            adm = out.admitted
            status[run_idx[adm], ue_idx[adm]] = UeStatus.ADMITTED
            dead = ~adm & (attempts[run_idx, ue_idx] >= cap[run_idx])
            status[run_idx[dead], ue_idx[dead]] = UeStatus.FAILED

            trying = np.bincount(run_idx, minlength=n_runs)
            won = np.bincount(run_idx[adm], minlength=n_runs)
            busy = trying > 0
            rounds += busy
            rate_tot += out.sum_rate
            ratio_tot[busy] += won[busy] / trying[busy]
            if record:
                slots.append(SlotRecord(s, run_idx, ue_idx, pilots[s, ue_idx], out.repeat,
                                        adm, out.sum_rate))
        waiting = (status == UeStatus.INACTIVE) & ((attempts > 0) | (first > s))
        if not waiting.any():
            break

    results = []
    for d in range(n_runs):
        contended = int((attempts[d] > 0).sum())
        admitted = int((status[d] == UeStatus.ADMITTED).sum())
        failed = int((status[d] == UeStatus.FAILED).sum())
        results.append(TrialResult(
            contended=contended, admitted=admitted, failed=failed,
            pending=contended - admitted - failed,
            total_attempts=int(attempts[d].sum()), rounds=int(rounds[d]),
            sum_rate_total=float(rate_tot[d]), accepted_ratio_total=float(ratio_tot[d]),
            far_field_ok=channel.far_field_ok,
            attempts=attempts[d].copy() if record else None,
            status=status[d].copy() if record else None,
            slots=slots))
    return results


def run_trial(scenario: Scenario, trial_index: int) -> TrialResult:
    return simulate_trial(scenario, trial_index)[0]


@dataclass
class CampaignResult:
    runs: list[ProtocolParams]
    accumulators: list[MetricsAccumulator]
    trials: int
    far_field_ok: bool

    def metrics(self, i: int = 0) -> RunMetrics:
        acc = self.accumulators[i]
        return RunMetrics(*(acc.mean(f) for f in RUN_FIELDS))

    def ci(self, i: int = 0) -> dict[str, float]:
        acc = self.accumulators[i]
        return {f: acc.ci(f) for f in RUN_FIELDS}


class CampaignError(RuntimeError):
    def __init__(self, message: str, partial: Optional[CampaignResult]):
        super().__init__(message)
        self.partial = partial


def _trial_job(args):
    scenario, index, runs = args
    return simulate_trial(scenario, index, runs)


def _feed(accs: list[MetricsAccumulator], results: list[TrialResult]) -> None:
    for acc, res in zip(accs, results):
        if res.contended:
            acc.add(avg_attempts=res.avg_attempts, failure_prob=res.failure_prob)
        if res.rounds:
            acc.add(normalized_accepted=res.normalized_accepted)
        acc.add(mean_sum_rate=res.mean_sum_rate)


def run_campaign(scenario: Scenario, workers: int = 1,
                 runs: Optional[Sequence[ProtocolParams]] = None,
                 trials: Optional[int] = None) -> CampaignResult:
    """Run ``trials`` independent trials and merge them in trial order.

    Attempt and failure statistics average over trials where some UE
    contended; the sum rate averages over all trials. Merging in index order
    makes the result independent of ``workers``.
    """
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    runs = list(runs) if runs is not None else [scenario.protocol]
    _check_batch(runs)
    trials = scenario.trials if trials is None else trials
    accs = [MetricsAccumulator() for _ in runs]
    far_ok = True
    done = 0
    jobs = ((scenario, i, runs) for i in range(trials))
    try:
        if workers == 1:
            stream = map(_trial_job, jobs)
            for res in stream:
                _feed(accs, res)
                far_ok &= res[0].far_field_ok
                done += 1
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                chunk = max(1, trials // (4 * workers))
                for res in pool.map(_trial_job, jobs, chunksize=chunk):
                    _feed(accs, res)
                    far_ok &= res[0].far_field_ok
                    done += 1
    except Exception as exc:
        partial = CampaignResult(runs, accs, done, far_ok)
        raise CampaignError(f"campaign aborted after {done}/{trials} trials: {exc}",
                            partial) from exc
    return CampaignResult(runs, accs, trials, far_ok)


def with_overrides(scenario: Scenario, **changes) -> Scenario:
    """Copy of ``scenario`` with top-level, geometry or protocol fields replaced."""
    geo = {k: changes.pop(k) for k in list(changes) if k in ArrayGeometry.__dataclass_fields__}
    pro = {k: changes.pop(k) for k in list(changes) if k in ProtocolParams.__dataclass_fields__}
    fad = {k: changes.pop(k) for k in list(changes) if k in FadingModel.__dataclass_fields__}
    return replace(scenario, geometry=replace(scenario.geometry, **geo),
                   protocol=replace(scenario.protocol, **pro),
                   fading=replace(scenario.fading, **fad), **changes)
