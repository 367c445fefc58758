"""Engagement and transmission decisions, sleep-probability tuning, baselines."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from ehfl.energy import EhProcess, EnergyProfile
from ehfl.errors import ConfigError


class Variant(str, enum.Enum):
    EDK_AC = "EDK-AC"
    EMK_AC = "EMK-AC"
    LUN = "LUN"
    EDK_NOAC = "EDK-noAC"
    EMK_NOAC = "EMK-noAC"
    UNIFORM_NOAC = "UNIFORM-noAC"

    @classmethod
    def parse(cls, name: "str | Variant") -> "Variant":
        if isinstance(name, Variant):
            return name
        key = name.strip().upper().replace("_", "-")
        aliases = {"EDK": "EDK-AC", "EMK": "EMK-AC", "UNIFORM": "UNIFORM-NOAC"}
        key = aliases.get(key, key)
        for v in cls:
            if v.value.upper() == key:
                return v
        raise ConfigError(f"strategy: unknown variant {name!r}; choose from {[v.value for v in cls]}")

    @property
    def sleeps(self) -> bool:
        return self in (Variant.EDK_AC, Variant.EMK_AC, Variant.EDK_NOAC, Variant.EMK_NOAC)

    @property
    def adaptive(self) -> bool:
        return self in (Variant.EDK_AC, Variant.EMK_AC, Variant.LUN)

    @property
    def uses_distribution(self) -> bool:
        return self in (Variant.EDK_AC, Variant.EDK_NOAC)


@dataclass(frozen=True)
class Strategy:
    variant: Variant
    alpha: float | None = None
    xi: float | None = None

    def __post_init__(self):
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0 (got {self.alpha})")


@dataclass(frozen=True)
class FeedbackState:
    """Base-station feedback ``lambda`` steering attempted transmissions toward ``M``."""

    lam: float = 0.0
    mu1: float = 0.1
    M: int = 10
    last_K_hat: int = 0


def tx_probability(norm, lam: float):
    """Norm-driven transmission probability ``clamp(e ln|g| - lambda, 0, 1)``."""
    norm = np.asarray(norm, dtype=float)
    with np.errstate(divide="ignore"):
        raw = np.e * np.log(norm) - lam
    p = np.clip(raw, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def update_feedback(fs: FeedbackState, K_hat: int) -> FeedbackState:
    if K_hat < 0:
        raise ValueError("K_hat must be >= 0")
    return replace(fs, lam=fs.lam + fs.mu1 * (K_hat - fs.M), last_K_hat=int(K_hat))


def sleep_probability(level, capacity: float, alpha: float):
    p = np.clip(1.0 - alpha * np.asarray(level, dtype=float) / capacity, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def truncated_mean_income(
    proc: EhProcess,
    cap: float,
    samples: int = 200_000,
    rng: np.random.Generator | None = None,
    method: str = "exact",
) -> float:
    """``E[min(zeta, cap)]`` for the per-slot income ``zeta`` of ``proc``, in joules.

    ``method="exact"`` sums the slot pmf (see :meth:`EhProcess.slot_pmf`);
    ``method="monte_carlo"`` simulates ``samples`` slots on a fresh copy of the
    process driven by ``rng``.
    """
    if samples <= 0:
        raise ConfigError(f"samples must be > 0 (got {samples})")
    if cap < 0:
        raise ConfigError(f"cap must be >= 0 (got {cap})")
    if cap == 0:
        return 0.0
    if method == "exact":
        z, pmf = proc.slot_pmf()
        joules = z * proc.unit
        below = joules < cap
        if np.isinf(cap):
            return float(joules @ pmf)
        return float(joules[below] @ pmf[below] + cap * (1.0 - pmf[below].sum()))
    if method == "monte_carlo":
        if rng is None:
            raise ConfigError("monte_carlo truncation needs an rng")
        fresh = EhProcess(proc.r, proc.m, proc.unit)
        draws = np.fromiter((fresh.sample(rng) for _ in range(samples)), float, samples)
        return float(np.minimum(draws, cap).mean())
    raise ConfigError(f"truncation method must be 'exact' or 'monte_carlo' (got {method!r})")


def _alpha(income: float, xi: float, B_max: float, M: int, K: int, ep: EnergyProfile) -> float:
    if not 0 < xi < B_max:
        raise ConfigError(f"xi must lie in (0, B_max={B_max}) (got {xi})")
    alpha = (income - (M / K) * ep.E_tx) * B_max / (xi * ep.engage_cost)
    return max(alpha, 0.0)


def alpha_edk(
    proc: EhProcess,
    xi: float,
    B_max: float,
    M: int,
    K: int,
    ep: EnergyProfile,
    **truncation,
) -> float:
    """Sleep slope from the income distribution, truncated at the free capacity ``B_max - xi``.

    Extra keyword arguments go to :func:`truncated_mean_income`.
    """
    if not 0 < xi < B_max:
        raise ConfigError(f"xi must lie in (0, B_max={B_max}) (got {xi})")
    income = truncated_mean_income(proc, B_max - xi, **truncation)
    return _alpha(income, xi, B_max, M, K, ep)


def alpha_emk(mean_income: float, xi: float, B_max: float, M: int, K: int, ep: EnergyProfile) -> float:
    """Sleep slope from the mean income alone."""
    return _alpha(mean_income, xi, B_max, M, K, ep)


def decide_engagement(strategy: Strategy, level, capacity: float, ep: EnergyProfile, rng: np.random.Generator, u=None):
    """Which devices wake up this iteration.

    Sleeping strategies wake with probability ``1 - p_s``; the baselines wake
    whenever they can. Nobody wakes without enough energy to compute and
    receive. ``u`` optionally supplies the uniform draws (one per device) so
    the caller controls stream consumption.
    """
    level = np.asarray(level, dtype=float)
    if u is None:
        u = rng.random(level.shape)
    feasible = level >= ep.engage_cost
    if strategy.variant.sleeps:
        wake = u < 1.0 - sleep_probability(level, capacity, strategy.alpha)
        out = feasible & wake
    else:
        out = feasible
    return bool(out) if out.ndim == 0 else out


def decide_transmission(
    strategy: Strategy,
    norm,
    fs: FeedbackState,
    level,
    ep: EnergyProfile,
    K: int,
    rng: np.random.Generator,
    u=None,
):
    """Which engaged devices send their update.

    ``level`` is the battery after paying for computation and reception.
    """
    level = np.asarray(level, dtype=float)
    if u is None:
        u = rng.random(level.shape)
    if strategy.variant.adaptive:
        p = tx_probability(norm, fs.lam)
    else:
        p = fs.M / K
    out = (level >= ep.E_tx) & (u < p)
    return bool(out) if np.ndim(out) == 0 else out
