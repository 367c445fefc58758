import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from ehfl.energy import (
    Battery,
    EhProcess,
    EnergyProfile,
    HardwareProfile,
    apply_iteration,
    compute_energy,
    compute_time,
    dbm_to_watts,
    energy_profile,
    poisson_slot_occupancy,
    rx_energy,
    sample_income,
    tx_energy,
)
from ehfl.errors import ConfigError, SimulationInvariantError

DEFAULT = HardwareProfile.for_dimension(10)


def test_dbm_conversion():
    assert dbm_to_watts(0.0) == pytest.approx(1e-3)
    assert dbm_to_watts(3.3) == pytest.approx(2.138e-3, rel=1e-3)


def test_compute_time_default():
    assert compute_time(DEFAULT) == pytest.approx(8e-9, rel=1e-12)


def test_compute_time_scaling():
    assert compute_time(replace(DEFAULT, f_clk=0.5e9)) == pytest.approx(compute_time(DEFAULT) / 2)


def test_compute_time_empty_dataset_warns(caplog):
    assert compute_time(replace(DEFAULT, dataset_size=0)) == 0.0
    assert "dataset_size is 0" in caplog.text


def test_compute_energy_default():
    assert compute_energy(DEFAULT) == pytest.approx(1.25e-3, rel=1e-12)


def test_compute_energy_is_time_times_power():
    p = DEFAULT
    assert compute_energy(p) == pytest.approx(compute_time(p) * p.psi * p.f_clk**3, rel=1e-14)


def test_compute_energy_quadratic_in_clock():
    assert compute_energy(replace(DEFAULT, f_clk=0.5e9)) == pytest.approx(4 * compute_energy(DEFAULT))


def test_tx_energy_default():
    power = dbm_to_watts(3.3) / 0.33 + 1.33e-3
    assert power == pytest.approx(7.809e-3, rel=1e-3)
    assert tx_energy(DEFAULT) == pytest.approx(power * 3.2e-4, rel=1e-12)
    assert tx_energy(DEFAULT) == pytest.approx(2.50e-6, rel=2e-3)


def test_tx_energy_ideal_pa_and_empty_payload():
    ideal = replace(DEFAULT, eta=1.0, P_circ=1e-30)
    assert tx_energy(ideal) == pytest.approx(ideal.P_tx * 320 / 1e6, rel=1e-12)
    assert tx_energy(replace(DEFAULT, N_up_bits=0)) == 0.0


def test_rx_energy():
    assert rx_energy(DEFAULT) == pytest.approx(6.08e-7, rel=1e-12)
    assert rx_energy(replace(DEFAULT, N_down_bits=0)) == 0.0
    assert rx_energy(replace(DEFAULT, R_rx_bits_per_s=2e6)) == pytest.approx(rx_energy(DEFAULT) / 2)


def test_energy_profile_unit():
    ep = energy_profile(DEFAULT)
    assert ep.unit == ep.E_cmp + ep.E_tx + ep.E_rx
    assert ep.unit == pytest.approx(1.2531e-3, rel=1e-4)


@pytest.mark.parametrize("field,value", [("eta", 1.5), ("eta", 0.0), ("f_clk", -1.0), ("psi", 0.0)])
def test_hardware_validation(field, value):
    with pytest.raises(ConfigError):
        replace(DEFAULT, **{field: value})


def test_battery_full_stays_full():
    ep = energy_profile(DEFAULT)
    b = apply_iteration(Battery(0.1, 0.1), 0.5, False, False, ep)
    assert b.level == 0.1


def test_battery_overflow_discarded():
    ep = energy_profile(DEFAULT)
    assert apply_iteration(Battery(0.05, 0.1), 0.2, False, False, ep).level == 0.1


def test_battery_engage_and_transmit():
    ep = EnergyProfile(E_cmp=1.25e-3, E_tx=2.50e-6, E_rx=6.08e-7)
    b = apply_iteration(Battery(0.05, 0.1), 0.0, True, True, ep)
    assert b.level == pytest.approx(0.05 - 1.253108e-3, rel=1e-12)
    assert b.level == pytest.approx(0.048747, abs=1e-6)


def test_battery_negative_is_invariant_violation():
    ep = energy_profile(DEFAULT)
    with pytest.raises(SimulationInvariantError):
        apply_iteration(Battery(1e-4, 0.1), 0.0, True, False, ep)


def test_battery_rejects_negative_income():
    with pytest.raises(ValueError):
        apply_iteration(Battery(0.0, 0.1), -1.0, False, False, energy_profile(DEFAULT))


def test_battery_array_levels():
    ep = energy_profile(DEFAULT)
    b = apply_iteration(Battery(np.array([0.0, 0.05, 0.1]), 0.1), np.array([0.0, 0.01, 0.0]), np.array([False, True, True]), np.array([False, True, False]), ep)
    assert np.allclose(b.level, [0.0, 0.06 - ep.unit, 0.1 - ep.engage_cost])


def test_battery_bounds_over_a_million_events():
    # random incomes and gated activity; the ledger must stay inside [0, B_max]
    rng = np.random.default_rng(99)
    ep = energy_profile(DEFAULT)
    cap = 0.1
    n_dev, n_steps = 1000, 1000
    b = Battery(rng.uniform(0, cap, n_dev), cap)
    start = b.level.copy()
    harvested = np.zeros(n_dev)
    spent = np.zeros(n_dev)
    lo, hi = 0.0, cap
    for _ in range(n_steps):
        income = rng.poisson(0.2, n_dev) * ep.unit * rng.integers(0, 30, n_dev)
        accepted = np.minimum(income, cap - b.level)
        credited = np.minimum(b.level + accepted, cap)
        engaged = (rng.random(n_dev) < 0.7) & (credited >= ep.engage_cost)
        after = credited - np.where(engaged, ep.engage_cost, 0.0)
        tx = engaged & (rng.random(n_dev) < 0.5) & (after >= ep.E_tx)
        b = apply_iteration(b, income, engaged, tx, ep)
        harvested += accepted
        spent += np.where(engaged, ep.engage_cost, 0.0) + np.where(tx, ep.E_tx, 0.0)
        lo, hi = min(lo, b.level.min()), max(hi, b.level.max())
    assert lo >= 0.0 and hi <= cap
    assert np.allclose(b.level, start + harvested - spent, rtol=0, atol=1e-12)


def test_eh_process_validation():
    with pytest.raises(ConfigError):
        EhProcess(0.0, 0.2, 1.0)


def test_income_vanishing_rate():
    proc = EhProcess(1e-9, 0.2, 1.0)
    rng = np.random.default_rng(0)
    assert sum(sample_income(proc, rng) > 0 for _ in range(10_000)) == 0


def test_income_is_whole_units():
    proc = EhProcess(0.5, 1.0, 0.25)
    rng = np.random.default_rng(1)
    draws = np.array([sample_income(proc, rng) for _ in range(5000)])
    assert np.allclose(draws / 0.25, np.round(draws / 0.25))


@pytest.fixture(scope="module")
def million_slots():
    proc = EhProcess(0.02, 0.2, 1.0)
    rng = np.random.default_rng(12345)
    return np.fromiter((proc.sample(rng) for _ in range(1_000_000)), float, 1_000_000)


def test_income_mean_matches_m(million_slots):
    assert million_slots.mean() == pytest.approx(0.2, rel=0.02)


def test_income_slot_occupancy(million_slots):
    expected = poisson_slot_occupancy(0.02)
    assert expected == pytest.approx(1 - math.exp(-0.02))
    assert np.mean(million_slots > 0) == pytest.approx(expected, rel=0.05)


def test_slot_pmf_normalised_and_mean():
    proc = EhProcess(0.02, 0.2, 1.0)
    z, pmf = proc.slot_pmf()
    assert pmf.sum() == pytest.approx(1.0, abs=1e-10)
    assert z @ pmf == pytest.approx(0.2, rel=1e-9)


def test_slot_pmf_matches_brute_force_mixture():
    # independent route: direct double sum over arrival counts and units
    proc = EhProcess(0.7, 1.4, 1.0)
    z, pmf = proc.slot_pmf()
    for k in range(6):
        brute = stats.poisson.pmf(0, 0.7) * (k == 0) + sum(
            stats.poisson.pmf(n, 0.7) * stats.poisson.pmf(k, n * 2.0) for n in range(1, 60)
        )
        assert pmf[k] == pytest.approx(brute, rel=1e-10, abs=1e-15)
