from dataclasses import replace

import numpy as np
import pytest

from ehfl.core import LocalUpdate, aggregate
from ehfl.energy import Battery
from ehfl.errors import ConfigError
from ehfl.policy import FeedbackState, Variant
from ehfl.sim import (
    SimConfig,
    init_run,
    run_experiment,
    run_iteration,
    run_replication,
    substream,
)

SMALL = SimConfig(K=30, M=5, T=200, replications=2, master_seed=3)


def test_config_defaults():
    cfg = SimConfig()
    assert (cfg.K, cfg.M, cfg.L, cfg.mu, cfg.mu1, cfg.r, cfg.m, cfg.B_max) == (100, 10, 10, 0.01, 0.1, 0.02, 0.2, 0.1)
    assert cfg.xi == pytest.approx(0.04)


@pytest.mark.parametrize(
    "changes",
    [dict(K=5, M=10), dict(T=0), dict(replications=0), dict(xi=0.1), dict(xi=0.0), dict(mu=-1.0), dict(strategy="nope")],
)
def test_config_validation(changes):
    with pytest.raises(ConfigError):
        SimConfig(**changes)


def test_default_energy_profile():
    ep = SimConfig().energy()
    assert ep.E_cmp == pytest.approx(1.25e-3)
    assert ep.E_tx == pytest.approx(2.50e-6, rel=2e-3)
    assert ep.E_rx == pytest.approx(6.08e-7)


def test_replications_get_different_batteries():
    a = init_run(SMALL, 0)
    b = init_run(SMALL, 1)
    assert not np.array_equal(a.battery.level, b.battery.level)
    assert np.array_equal(init_run(SMALL, 0).battery.level, a.battery.level)


def test_lun_has_no_alpha():
    state = init_run(replace(SMALL, strategy="LUN"), 0)
    assert state.alpha is None
    assert not state.strategy.variant.sleeps


def test_edk_alpha_resolved():
    assert init_run(SimConfig(), 0).alpha == pytest.approx(0.50, rel=0.03)


def test_alpha_override():
    assert init_run(replace(SMALL, alpha=0.9), 0).alpha == 0.9


def test_initial_batteries_uniform():
    cfg = SimConfig()
    levels = np.concatenate([init_run(cfg, rep).battery.level for rep in range(40)])
    assert levels.min() >= 0 and levels.max() <= cfg.B_max
    # 4000 draws of U(0, 0.1): std of the mean ~4.6e-4
    assert levels.mean() == pytest.approx(0.05, abs=2e-3)


def test_strategy_change_keeps_paired_draws():
    a = init_run(replace(SMALL, strategy="EDK-AC"), 0)
    b = init_run(replace(SMALL, strategy="LUN"), 0)
    assert np.array_equal(a.true_w, b.true_w)
    assert np.array_equal(a.X, b.X)
    assert np.array_equal(a.battery.level, b.battery.level)
    inc_a = [[p.sample(g) for p, g in zip(a.procs, a.income_rngs)] for _ in range(100)]
    inc_b = [[p.sample(g) for p, g in zip(b.procs, b.income_rngs)] for _ in range(100)]
    assert inc_a == inc_b


def test_substreams_are_distinct():
    x = substream(0, 0, "engagement").random(5)
    y = substream(0, 0, "transmission").random(5)
    z = substream(0, 1, "engagement").random(5)
    assert not np.allclose(x, y) and not np.allclose(x, z)


def test_forced_idle_iteration():
    state = init_run(SMALL, 0)
    state.battery = Battery(np.zeros(SMALL.K), SMALL.B_max)
    state.procs, state.income_rngs = [], []
    w0 = state.w.copy()
    rec = run_iteration(state)
    assert (rec.engaged, rec.attempted, rec.successes) == (0, 0, 0)
    assert np.array_equal(state.w, w0)
    assert rec.lam == pytest.approx(-SMALL.mu1 * SMALL.M)


def test_single_engaged_device_step_is_plain_aggregation():
    cfg = replace(SMALL, strategy="LUN")
    state = init_run(cfg, 0)
    level = np.zeros(cfg.K)
    level[4] = cfg.B_max
    state.battery = Battery(level, cfg.B_max)
    state.procs, state.income_rngs = [], []
    state.fs = replace(state.fs, lam=-1e6)  # forces p_tx = 1 for any nonzero norm
    w0 = state.w.copy()
    rec = run_iteration(state)
    assert (rec.engaged, rec.attempted, rec.successes) == (1, 1, 1)
    samples = state.device(4).samples
    g = (samples[0].x @ w0 - samples[0].y) * samples[0].x
    expected = aggregate(w0, [LocalUpdate.from_gradient(g, 4)], cfg.mu, np.full(cfg.K, 1 / cfg.K))
    assert np.allclose(state.w, expected, rtol=1e-14, atol=1e-15)
    assert np.array_equal(state.last_models[4], w0)


def test_sleeping_devices_keep_stale_models():
    state = init_run(SimConfig(K=50, M=5, master_seed=1), 0)
    for _ in range(300):
        run_iteration(state)
    ages = {m.tobytes() for m in state.last_models}
    assert len(ages) > 1
    assert state.w.tobytes() not in ages or state.records[-1].successes == 0


def test_record_counts_ordered_and_battery_bounded():
    state = init_run(SimConfig(K=60, M=6, strategy="LUN", master_seed=5), 0)
    for _ in range(500):
        rec = run_iteration(state)
        assert rec.engaged >= rec.attempted >= rec.successes >= 0
        lvl = state.battery.level
        assert lvl.min() >= 0 and lvl.max() <= state.cfg.B_max


@pytest.mark.parametrize("strategy", list(Variant))
def test_ledger_reconstructs_final_battery(strategy):
    state = init_run(replace(SMALL, strategy=strategy, m=0.5), 0)
    for _ in range(400):
        run_iteration(state)
    assert np.allclose(state.battery.level, state.initial_levels + state.harvested - state.spent, rtol=0, atol=1e-14)


def test_golden_trace_determinism():
    a = run_replication(SimConfig(T=300, master_seed=11), 2)
    b = run_replication(SimConfig(T=300, master_seed=11), 2)
    assert a == b
    c = run_replication(SimConfig(T=300, master_seed=12), 2)
    assert a != c


def test_parallel_matches_serial():
    cfg = replace(SMALL, replications=3, T=100)
    serial = run_experiment(cfg, workers=1)
    parallel = run_experiment(cfg, workers=2)
    for name in serial.traces:
        assert np.array_equal(serial.traces[name], parallel.traces[name])


def test_single_replication_mean_is_trace():
    cfg = replace(SMALL, replications=1, T=50)
    res = run_experiment(cfg)
    trace = run_replication(cfg, 0)
    assert np.array_equal(res.mean["error"], [r.error for r in trace])
    assert np.all(res.std["error"] == 0)
    assert res.at(50, "error") == trace[-1].error


def test_unconstrained_uniform_attempts_match_M():
    cfg = SimConfig(strategy="UNIFORM-noAC", energy_constrained=False, T=1000, master_seed=2)
    trace = run_replication(cfg, 0)
    attempted = np.mean([r.attempted for r in trace])
    assert attempted == pytest.approx(cfg.M, rel=0.05)
    assert all(r.mean_battery_norm == pytest.approx(1.0) for r in trace)


@pytest.mark.parametrize("strategy", ["LUN", "EMK-AC"])
def test_unconstrained_ac_attempts_converge_to_M(strategy):
    cfg = SimConfig(strategy=strategy, energy_constrained=False, T=1000, master_seed=4)
    trace = run_replication(cfg, 0)
    attempted = np.mean([r.attempted for r in trace[500:]])
    assert attempted == pytest.approx(cfg.M, rel=0.2)


def test_redraw_dataset_changes_features():
    cfg = replace(SMALL, redraw_dataset=True)
    state = init_run(cfg, 0)
    X0 = state.X.copy()
    run_iteration(state)
    assert not np.array_equal(X0, state.X)
    assert np.allclose(state.X @ state.true_w, state.y)


def test_device_snapshot():
    state = init_run(SMALL, 0)
    d = state.device(3)
    assert d.index == 3
    assert d.battery.level == state.battery.level[3]
    assert d.last_model.shape == (SMALL.L,)
    assert d.profile.W == 4 * SMALL.L
    assert all(s.owner == 3 for s in d.samples)
