"""NOMA-XL and SUCRe-XL contention resolution.

Two layers live here. The per-pilot functions (``genie_alpha``,
``decision_rule``, ``resolve_noma_xl`` ...) follow one contention round step by step
and are meant for inspection and testing. The engine
uses :func:`resolve_slot`, a vectorized version that resolves every pilot of
many parallel runs at once; the test-suite checks the two against each other.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .channel import ChannelRealization
from .errors import ConfigurationError, ContractError
from .metrics import cluster_sum_rates

SCHEMES = ("noma-xl", "sucre-xl")
ALPHA_MODES = ("genie", "noisy")


@dataclass(frozen=True)
class ProtocolParams:
    scheme: str = "noma-xl"
    tau_ra: int = 10
    rho: float = 1.0
    sigma2: float = 1.0
    p_a: float = 0.01
    p_na: float = 0.5
    max_attempts: int = 10
    delta: float = -1.0
    varpi1: float = 0.1
    max_cluster: int = 3
    alpha_mode: str = "genie"
    alpha_noise_var: float = 0.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ConfigurationError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.tau_ra < 1:
            raise ConfigurationError("tau_ra must be >= 1")
        if not 0 < self.p_a <= 1:
            raise ConfigurationError("p_a must be in (0, 1]")
        if not 0 < self.p_na <= 1:
            raise ConfigurationError("p_na must be in (0, 1]")
        if self.max_attempts < 1:
            raise ConfigurationError("max_attempts must be >= 1")
        if not 0 <= self.varpi1 <= 1:
            raise ConfigurationError("varpi1 must be in [0, 1]")
        if self.max_cluster not in (1, 2, 3):
            raise ConfigurationError("max_cluster must be 1, 2 or 3")
        if self.rho <= 0 or self.sigma2 <= 0:
            raise ConfigurationError("rho and sigma2 must be positive")
        if self.alpha_noise_var < 0:
            raise ConfigurationError("alpha_noise_var must be >= 0")

    @property
    def cluster_limit(self) -> int:
        """Repeaters a single SA may carry on one pilot."""
        return 1 if self.scheme == "sucre-xl" else self.max_cluster


class UeStatus(enum.IntEnum):
    INACTIVE = 0
    CONTENDING = 1
    REPEATED = 2
    ADMITTED = 3
    FAILED = 4


@dataclass
class UeState:
    ue_id: int
    attempt_count: int = 0
    status: UeStatus = UeStatus.INACTIVE


@dataclass
class ContentionRound:
    contenders: dict[int, set[int]]
    alpha_hat: dict[tuple[int, int], float] = field(default_factory=dict)
    repeaters: dict[int, set[int]] = field(default_factory=dict)
    # pilot -> {SA -> UE ids in decoding order}; pilots that failed are absent
    admissions: dict[int, dict[int, list[int]]] = field(default_factory=dict)

    @property
    def admitted(self) -> set[int]:
        return {k for per_sa in self.admissions.values() for ues in per_sa.values() for k in ues}

    @property
    def failed(self) -> set[int]:
        everyone = set().union(*self.contenders.values()) if self.contenders else set()
        return everyone - self.admitted


def step1_choose_pilots(active_ues, tau_ra: int, rng: np.random.Generator) -> dict[int, set[int]]:
    if tau_ra < 1:
        raise ContractError("tau_ra must be >= 1")
    ues = sorted(active_ues)
    choice = rng.integers(0, tau_ra, len(ues))
    out: dict[int, set[int]] = {t: set() for t in range(tau_ra)}
    for k, t in zip(ues, choice):
        out[int(t)].add(k)
    return out


def own_gain(k: int, channel: ChannelRealization, params: ProtocolParams) -> float:
    """LHS of the decision rule: rho * tau * sum of beta over visible SAs."""
    return params.rho * float(channel.visible_betas(k).sum()) * params.tau_ra


def genie_alpha(contenders, k: int, channel: ChannelRealization, params: ProtocolParams) -> float:
    """Exact contention gain seen by ``k``; each contender counts through the
    SAs both it and ``k`` see."""
    if k not in contenders:
        raise ContractError(f"UE {k} is not a contender")
    vis_k = channel.visibility[k]
    total = 0.0
    for i in sorted(contenders):
        shared = vis_k & channel.visibility[i]
        total += params.rho * params.tau_ra * float(channel.beta[i, shared].sum())
    return total


def noisy_alpha(genie_value: float, noise_var: float, rng: np.random.Generator,
                floor: float) -> float:
    """Genie value plus N(0, noise_var), clamped below at the UE's own gain."""
    if noise_var < 0:
        raise ContractError("noise variance must be >= 0")
    if noise_var == 0:
        return max(genie_value, floor)
    return max(genie_value + rng.normal(0.0, math.sqrt(noise_var)), floor)


def bias_term(delta: float, m_b: int, visible_betas) -> float:
    betas = np.asarray(visible_betas, dtype=float)
    if m_b < 1:
        raise ContractError("m_b must be >= 1")
    if betas.size == 0:
        raise ContractError("bias term needs at least one visible SA")
    return delta / (math.sqrt(m_b) * float(betas.sum()))


def decision_rule(k: int, alpha_hat: float, channel: ChannelRealization,
                  params: ProtocolParams) -> bool:
    """True when ``k`` judges itself strong enough to repeat its pilot."""
    eps = bias_term(params.delta, channel.antennas_per_sa, channel.visible_betas(k))
    return own_gain(k, channel, params) > alpha_hat / 2 + eps


def _decoding_order(members, b: int, channel: ChannelRealization, params: ProtocolParams):
    return sorted(members, key=lambda i: (-params.rho * channel.beta[i, b], i))


def resolve_noma_xl(repeaters, channel: ChannelRealization,
                    params: ProtocolParams) -> Optional[dict[int, list[int]]]:
    """Per-SA decoding orders if every SA carries at most ``max_cluster``
    repeaters, else ``None`` (the whole pilot fails)."""
    return _resolve(repeaters, channel, params, params.max_cluster)


def resolve_sucre_xl(repeaters, channel: ChannelRealization,
                     params: Optional[ProtocolParams] = None) -> Optional[dict[int, list[int]]]:
    """Admit only if the repeaters' visibility regions are pairwise disjoint."""
    return _resolve(repeaters, channel, params or ProtocolParams(scheme="sucre-xl"), 1)


def _resolve(repeaters, channel, params, limit):
    if not repeaters:
        return None
    per_sa = {}
    for b in range(channel.n_subarrays):
        members = [i for i in repeaters if channel.visibility[i, b]]
        if len(members) > limit:
            return None
        if members:
            per_sa[b] = _decoding_order(members, b, channel, params)
    return per_sa


def sic_sinr(rank: int, ordered_powers, varpi1: float, sigma2: float) -> float:
    """SINR of the user at 0-based ``rank`` in a descending SIC decoding order.

    Users decoded earlier leave ``varpi1`` of their power as residual
    interference; users decoded later interfere fully.
    """
    p = [float(x) for x in ordered_powers]
    if not 0 <= rank < len(p):
        raise ContractError(f"rank {rank} outside cluster of size {len(p)}")
    if any(p[i] < p[i + 1] for i in range(len(p) - 1)):
        raise ContractError("powers must be sorted in descending order")
    stronger = sum(p[:rank])
    weaker = sum(p[rank + 1:])
    return p[rank] / (varpi1 * stronger + weaker + sigma2)


def retry_update(failed_ues, states: dict[int, UeState], params: ProtocolParams,
                 rng: np.random.Generator) -> set[int]:
    """Apply the retry policy to UEs that lost contention or sit in backoff.

    UEs at the attempt cap become FAILED; the rest re-enter with ``p_na``.
    """
    back = set()
    for k in sorted(failed_ues):
        st = states[k]
        if st.status in (UeStatus.ADMITTED, UeStatus.FAILED):
            continue
        if st.attempt_count >= params.max_attempts:
            st.status = UeStatus.FAILED
            continue
        st.status = UeStatus.INACTIVE
        if rng.random() < params.p_na:
            back.add(k)
    return back


def run_contention(contenders: dict[int, set[int]], channel: ChannelRealization,
                   params: ProtocolParams, alpha_noise: Optional[dict[int, float]] = None
                   ) -> ContentionRound:
    """Steps III-IV for every pilot. ``alpha_noise`` maps UE -> additive error
    on its contention-gain estimate (only used in noisy mode)."""
    rnd = ContentionRound(contenders={t: set(c) for t, c in contenders.items()})
    for t, ues in contenders.items():
        rep = set()
        for k in sorted(ues):
            a = genie_alpha(ues, k, channel, params)
            if params.alpha_mode == "noisy" and alpha_noise is not None:
                a = max(a + alpha_noise.get(k, 0.0), own_gain(k, channel, params))
            rnd.alpha_hat[(t, k)] = a
            if decision_rule(k, a, channel, params):
                rep.add(k)
        rnd.repeaters[t] = rep
        per_sa = _resolve(rep, channel, params, params.cluster_limit)
        if per_sa is not None:
            rnd.admissions[t] = per_sa
    return rnd


@dataclass
class SlotOutcome:
    repeat: np.ndarray     # (n,) bool, entry kept transmitting
    admitted: np.ndarray   # (n,) bool
    sum_rate: np.ndarray   # (runs,) bpcu


def resolve_slot(run: np.ndarray, ue: np.ndarray, pilot: np.ndarray,
                 channel: ChannelRealization, params: ProtocolParams,
                 deltas: np.ndarray, limits: np.ndarray,
                 alpha_noise: Optional[np.ndarray] = None) -> SlotOutcome:
    """Resolve one RA slot for several parallel runs sharing a channel.

    Each entry ``i`` is UE ``ue[i]`` contending on ``pilot[i]`` in run
    ``run[i]``; runs differ only through their bias scale factor ``deltas``
    and per-SA cluster limit ``limits``.
    """
    n_runs = len(deltas)
    tau, nb = params.tau_ra, channel.n_subarrays
    group = run * tau + pilot
    n_groups = n_runs * tau
    vis = channel.visibility[ue]
    bm = np.where(vis, channel.beta[ue], 0.0)

    cell = (group[:, None] * nb + np.arange(nb)).ravel()
    load = np.bincount(cell, weights=bm.ravel(), minlength=n_groups * nb).reshape(n_groups, nb)
    visible_sum = bm.sum(axis=1)
    own = params.rho * visible_sum * tau
    alpha = params.rho * tau * (vis * load[group]).sum(axis=1)
    if params.alpha_mode == "noisy" and alpha_noise is not None:
        alpha = np.maximum(alpha + alpha_noise, own)
    eps = deltas[run] / (math.sqrt(channel.antennas_per_sa) * visible_sum)
    repeat = own > alpha / 2 + eps

    rep_load = np.bincount(cell, weights=(vis & repeat[:, None]).ravel(),
                           minlength=n_groups * nb).reshape(n_groups, nb)
    n_rep = np.bincount(group[repeat], minlength=n_groups)
    group_ok = (n_rep > 0) & (rep_load.max(axis=1) <= np.repeat(limits, tau))
    admitted = repeat & group_ok[group]

    rates = cluster_sum_rates(run[admitted], group[admitted], ue[admitted], channel,
                              params, n_runs)
    return SlotOutcome(repeat=repeat, admitted=admitted, sum_rate=rates)
