"""Per-iteration energy costs, compound-Poisson harvesting and the battery ledger."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ehfl.errors import ConfigError, SimulationInvariantError

log = logging.getLogger(__name__)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


@dataclass(frozen=True)
class HardwareProfile:
    """Device hardware constants.

    Attributes:
        W: FLOPs per data sample.
        dataset_size: Samples per local update.
        C: FLOPs per clock cycle.
        f_clk: Clock frequency in cycles/s.
        psi: Effective switched capacitance.
        P_tx: Radiated transmit power in watts.
        eta: Power-amplifier drain efficiency.
        P_circ: Transceiver circuit power other than the PA, in watts.
        P_rx: Receive power in watts.
        R_tx_bits_per_s: Uplink bit rate.
        R_rx_bits_per_s: Downlink bit rate.
        N_up_bits: Local update size.
        N_down_bits: Global model size.
    """

    W: float = 40.0
    dataset_size: int = 1
    C: float = 20.0
    f_clk: float = 0.25e9
    psi: float = 1e-20
    P_tx: float = dbm_to_watts(3.3)
    eta: float = 0.33
    P_circ: float = 1.33e-3
    P_rx: float = 1.9e-3
    R_tx_bits_per_s: float = 1e6
    R_rx_bits_per_s: float = 1e6
    N_up_bits: float = 320.0
    N_down_bits: float = 320.0

    def __post_init__(self):
        for name in ("W", "C", "f_clk", "psi", "P_tx", "eta", "P_circ", "P_rx", "R_tx_bits_per_s", "R_rx_bits_per_s"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0 (got {getattr(self, name)})")
        for name in ("dataset_size", "N_up_bits", "N_down_bits"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0 (got {getattr(self, name)})")
        if self.eta > 1:
            raise ConfigError(f"eta must be <= 1 (got {self.eta})")

    @classmethod
    def for_dimension(cls, L: int, **overrides) -> "HardwareProfile":
        """Defaults for an ``L``-dimensional model: ``W = 4L`` and 32-bit payload coordinates."""
        base = dict(W=4.0 * L, N_up_bits=32.0 * L, N_down_bits=32.0 * L)
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    @property
    def flops(self) -> float:
        return self.W * self.dataset_size


@dataclass(frozen=True)
class EnergyProfile:
    """Per-iteration costs in joules; ``unit`` is one full iteration."""

    E_cmp: float
    E_tx: float
    E_rx: float
    unit: float = field(init=False)

    def __post_init__(self):
        if min(self.E_cmp, self.E_tx, self.E_rx) < 0:
            raise ConfigError("energy costs must be nonnegative")
        object.__setattr__(self, "unit", self.E_cmp + self.E_tx + self.E_rx)

    @property
    def engage_cost(self) -> float:
        return self.E_cmp + self.E_rx


def compute_time(profile: HardwareProfile) -> float:
    """Seconds needed for one local update."""
    if profile.dataset_size == 0:
        log.warning("dataset_size is 0; local computation takes no time")
    return profile.flops / (profile.C * profile.f_clk)


def compute_energy(profile: HardwareProfile) -> float:
    """Joules spent by the CPU on one local update (dynamic CMOS power ``psi f^3``)."""
    return profile.psi * (profile.flops / profile.C) * profile.f_clk**2


def tx_energy(profile: HardwareProfile) -> float:
    p_total = profile.P_tx / profile.eta + profile.P_circ
    return p_total * profile.N_up_bits / profile.R_tx_bits_per_s


def rx_energy(profile: HardwareProfile) -> float:
    return profile.P_rx * profile.N_down_bits / profile.R_rx_bits_per_s


def energy_profile(profile: HardwareProfile) -> EnergyProfile:
    return EnergyProfile(E_cmp=compute_energy(profile), E_tx=tx_energy(profile), E_rx=rx_energy(profile))


@dataclass
class Battery:
    """Stored energy in joules.

    ``level`` may be a float or an array of per-device levels sharing one
    capacity; :func:`apply_iteration` handles both.
    """

    level: float | np.ndarray
    capacity: float

    def __post_init__(self):
        lvl = np.asarray(self.level)
        if not self.capacity > 0:
            raise ConfigError(f"battery capacity must be > 0 (got {self.capacity})")
        if np.any(lvl < 0) or np.any(lvl > self.capacity):
            raise SimulationInvariantError(f"battery level outside [0, {self.capacity}]")

    @property
    def normalized(self):
        return np.asarray(self.level) / self.capacity


def credit(level, income, capacity):
    """Add harvested energy, discarding what does not fit.

    Returns ``(new_level, accepted)``.
    """
    accepted = np.minimum(income, capacity - level)
    # level + (capacity - level) can round one ulp above capacity
    return np.minimum(level + accepted, capacity), accepted


def apply_iteration(b: Battery, income, engaged, transmitted, ep: EnergyProfile) -> Battery:
    """One step of the battery recursion.

    Harvest first (clamped to the free capacity), then pay ``E_cmp + E_rx`` if
    engaged and ``E_tx`` if transmitted. Callers gate activity on the available
    energy, so a negative result means a bookkeeping bug and raises.
    """
    if np.any(np.asarray(income) < 0):
        raise ValueError("income must be nonnegative")
    level, _ = credit(b.level, income, b.capacity)
    level = level - np.where(engaged, ep.engage_cost, 0.0)
    level = level - np.where(transmitted, ep.E_tx, 0.0)
    if np.any(level < 0):
        raise SimulationInvariantError("battery level went negative; feasibility gate was bypassed")
    if np.ndim(level) == 0:
        level = float(level)
    return replace(b, level=level)


class EhProcess:
    """Compound-Poisson energy income binned into unit-length iteration slots.

    Arrivals form a Poisson process of rate ``r`` per iteration (exponential
    interarrival times with mean ``1/r``). Each arrival brings a
    ``Poisson(m / r)`` number of energy units of ``unit`` joules, so the mean
    income is ``m`` units per iteration.

    The stream state (current slot, next arrival epoch) lives here; the random
    generator is supplied per call so one process can be replayed against a
    given stream.
    """

    def __init__(self, r: float, m: float, unit: float):
        if not (r > 0 and m > 0 and unit > 0):
            raise ConfigError(f"EH process needs r > 0, m > 0, unit > 0 (got r={r}, m={m}, unit={unit})")
        self.r = r
        self.m = m
        self.unit = unit
        self.slot = 0
        self._next_arrival: float | None = None

    @property
    def mean_units_per_arrival(self) -> float:
        return self.m / self.r

    @property
    def mean_income(self) -> float:
        return self.m * self.unit

    def sample(self, rng: np.random.Generator) -> float:
        if self._next_arrival is None:
            self._next_arrival = rng.exponential(1.0 / self.r)
        end = self.slot + 1
        units = 0
        while self._next_arrival < end:
            units += rng.poisson(self.m / self.r)
            self._next_arrival += rng.exponential(1.0 / self.r)
        self.slot = end
        return units * self.unit

    def slot_pmf(self, tail: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Exact distribution of the units harvested in one slot.

        The arrival count in a slot is ``Poisson(r)``; given ``n`` arrivals the
        units are ``Poisson(n m / r)``. The mixture is summed over ``n`` until
        the remaining arrival-count mass drops below ``tail``.

        Returns:
            ``(units, probabilities)`` covering all but ~``tail`` of the mass.
        """
        from scipy import stats

        n_max = int(stats.poisson.isf(tail, self.r)) + 1
        lam_max = n_max * self.m / self.r
        z_max = int(stats.poisson.isf(tail, lam_max)) + 1 if lam_max > 0 else 0
        z = np.arange(z_max + 1)
        pmf = np.zeros(z.size)
        for n in range(n_max + 1):
            pn = stats.poisson.pmf(n, self.r)
            if n == 0:
                pmf[0] += pn
            else:
                pmf += pn * stats.poisson.pmf(z, n * self.m / self.r)
        return z, pmf


def sample_income(proc: EhProcess, rng: np.random.Generator) -> float:
    """Joules harvested by ``proc`` during its next iteration slot."""
    return proc.sample(rng)


def poisson_slot_occupancy(r: float) -> float:
    """Probability that a unit slot contains at least one arrival."""
    return -math.expm1(-r)
