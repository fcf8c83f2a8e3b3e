"""Sum rates and running statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

import numpy as np
from scipy import stats

if TYPE_CHECKING:
    from .channel import ChannelRealization
    from .protocol import ProtocolParams

LN2 = math.log(2.0)


def log2_1p(x):
    # log2(1 + x) without losing digits when x ~ 1e-10
    return np.log1p(x) / LN2


def sinr_table(admissions: dict[int, dict[int, list[int]]], channel: ChannelRealization,
               params: ProtocolParams) -> dict[tuple[int, int, int], float]:
    """SIC SINR of every admitted (SA, pilot, UE) triple."""
    from .protocol import sic_sinr

    table = {}
    for t, per_sa in admissions.items():
        for b, order in per_sa.items():
            powers = [params.rho * channel.beta[k, b] for k in order]
            for rank, k in enumerate(order):
                table[(b, t, k)] = sic_sinr(rank, powers, params.varpi1, params.sigma2)
    return table


def noma_xl_sum_rate(sinr: dict[tuple[int, int, int], float]) -> float:
    """Sum of log2(1 + SINR) over SAs, pilots and cluster members."""
    return math.fsum(math.log1p(g) / LN2 for g in sinr.values())


def sucre_xl_sum_rate(admitted: Iterable[int], channel: ChannelRealization,
                      params: ProtocolParams) -> float:
    """Interference-free rate of each admitted UE summed over its visible SAs."""
    terms = []
    for k in admitted:
        for beta in channel.visible_betas(k):
            terms.append(math.log1p(params.rho * beta / params.sigma2) / LN2)
    return math.fsum(terms)


def cluster_sum_rates(run: np.ndarray, group: np.ndarray, ue: np.ndarray,
                      channel: ChannelRealization, params: ProtocolParams,
                      n_runs: int) -> np.ndarray:
    """Vectorized SIC sum rate per run for admitted UEs.

    ``group`` identifies (run, pilot); a cluster is a (group, SA) pair. Each
    cluster is decoded in descending ``rho * beta`` order with ties going to
    the lower UE id. Singleton clusters reduce to the interference-free rate.
    """
    rates = np.zeros(n_runs)
    if len(ue) == 0:
        return rates
    nb = channel.n_subarrays
    entry, sa = np.nonzero(channel.visibility[ue])
    key = group[entry] * nb + sa
    power = params.rho * channel.beta[ue[entry], sa]
    uid = ue[entry]
    order = np.lexsort((uid, -power, key))
    key, power, row_run = key[order], power[order], run[entry][order]

    n = len(key)
    stronger = np.zeros(n)
    weaker = np.zeros(n)
    for off in range(1, n):
        same = key[off:] == key[:-off]
        if not same.any():
            break
        stronger[off:] += np.where(same, power[:-off], 0.0)
        weaker[:-off] += np.where(same, power[off:], 0.0)
    gamma = power / (params.varpi1 * stronger + weaker + params.sigma2)
    return np.bincount(row_run, weights=log2_1p(gamma), minlength=n_runs)


class Welford:
    """Running mean/variance with an associative merge (Chan et al.)."""

    __slots__ = ("n", "mean", "m2")

    def __init__(self, n: int = 0, mean: float = 0.0, m2: float = 0.0):
        self.n, self.mean, self.m2 = n, mean, m2

    def add(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def merge(self, other: "Welford") -> "Welford":
        if other.n == 0:
            return Welford(self.n, self.mean, self.m2)
        if self.n == 0:
            return Welford(other.n, other.mean, other.m2)
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return Welford(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    def ci_half_width(self, level: float = 0.95) -> float:
        if self.n < 2:
            return 0.0
        q = stats.t.ppf(0.5 + level / 2, self.n - 1)
        return float(q * math.sqrt(self.variance / self.n))

    def __repr__(self):
        return f"Welford(n={self.n}, mean={self.mean!r}, var={self.variance!r})"


@dataclass
class RoundMetrics:
    sum_rate: float
    admitted_count: int
    attempting_count: int

    @property
    def accepted_ratio(self) -> float:
        return self.admitted_count / self.attempting_count if self.attempting_count else 0.0


@dataclass
class RunMetrics:
    avg_attempts: float
    failure_prob: float
    normalized_accepted: float
    mean_sum_rate: float


RUN_FIELDS = ("avg_attempts", "failure_prob", "normalized_accepted", "mean_sum_rate")


@dataclass
class MetricsAccumulator:
    """Named Welford accumulators; ``merge`` is commutative and associative
    up to floating-point rounding."""

    stats: dict[str, Welford] = field(default_factory=dict)

    def add(self, **values: float) -> None:
        for name, x in values.items():
            self.stats.setdefault(name, Welford()).add(float(x))

    def add_round(self, rnd: RoundMetrics) -> None:
        self.add(sum_rate=rnd.sum_rate, accepted_ratio=rnd.accepted_ratio)

    def merge(self, other: "MetricsAccumulator") -> "MetricsAccumulator":
        names = sorted(set(self.stats) | set(other.stats))
        return MetricsAccumulator({n: self.stats.get(n, Welford()).merge(
            other.stats.get(n, Welford())) for n in names})

    def mean(self, name: str) -> float:
        w = self.stats.get(name)
        return w.mean if w is not None else 0.0

    def ci(self, name: str, level: float = 0.95) -> float:
        w = self.stats.get(name)
        return w.ci_half_width(level) if w is not None else 0.0

    def count(self, name: str) -> int:
        w = self.stats.get(name)
        return w.n if w is not None else 0
