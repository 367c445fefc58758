"""Iteration loop: harvest, engage, contend, aggregate; replications on top."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from ehfl.core import (
    LocalUpdate,
    Sample,
    aggregate,
    batch_gradients,
    draw_features,
    error_metric,
    population_arrays,
)
from ehfl.energy import (
    Battery,
    EhProcess,
    EnergyProfile,
    HardwareProfile,
    apply_iteration,
    credit,
    dbm_to_watts,
    energy_profile,
)
from ehfl.errors import ConfigError
from ehfl.mac import contend
from ehfl.policy import (
    FeedbackState,
    Strategy,
    Variant,
    alpha_edk,
    alpha_emk,
    decide_engagement,
    decide_transmission,
    update_feedback,
)

log = logging.getLogger(__name__)

# spawn-key slots of the per-replication random substreams
STREAMS = {"dataset": 0, "battery": 1, "income": 2, "engagement": 3, "transmission": 4, "channel": 5, "alpha": 6}


@dataclass(frozen=True)
class SimConfig:
    """Every knob of one experiment.

    Hardware fields left as ``None`` fall back to the defaults of
    :meth:`HardwareProfile.for_dimension`. ``xi`` defaults to ``0.4 * B_max``.
    """

    K: int = 100
    M: int = 10
    L: int = 10
    T: int = 1000
    mu: float = 0.01
    mu1: float = 0.1
    beta: float = 1.0
    alpha: float | None = None
    xi: float | None = None
    B_max: float = 0.1
    r: float = 0.02
    m: float = 0.2
    strategy: Variant = Variant.EDK_AC
    replications: int = 50
    master_seed: int = 0
    dataset_size: int = 1
    redraw_dataset: bool = False
    renormalize: bool = False
    energy_constrained: bool = True
    truncation: str = "exact"
    truncation_samples: int = 200_000
    W: float | None = None
    C: float | None = None
    f_clk: float | None = None
    psi: float | None = None
    P_tx_dbm: float | None = None
    eta: float | None = None
    P_circ: float | None = None
    P_rx: float | None = None
    R_tx: float | None = None
    R_rx: float | None = None
    N_up_bits: float | None = None
    N_down_bits: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", Variant.parse(self.strategy))
        if self.xi is None:
            object.__setattr__(self, "xi", 0.4 * self.B_max)
        for name in ("K", "M", "L", "T", "replications", "dataset_size"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1 (got {v!r})")
        if self.K < self.M:
            raise ConfigError(f"K must be >= M (got K={self.K}, M={self.M})")
        for name in ("mu", "mu1", "B_max", "r", "m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0 (got {getattr(self, name)!r})")
        if not self.beta >= 0:
            raise ConfigError(f"beta must be >= 0 (got {self.beta!r})")
        if not 0 < self.xi < self.B_max:
            raise ConfigError(f"xi must lie in (0, B_max={self.B_max}) (got {self.xi!r})")
        if self.alpha is not None and not self.alpha >= 0:
            raise ConfigError(f"alpha must be >= 0 (got {self.alpha!r})")
        if self.truncation not in ("exact", "monte_carlo"):
            raise ConfigError(f"truncation must be 'exact' or 'monte_carlo' (got {self.truncation!r})")
        self.hardware()  # validates hardware overrides

    def hardware(self) -> HardwareProfile:
        return HardwareProfile.for_dimension(
            self.L,
            W=self.W,
            dataset_size=self.dataset_size,
            C=self.C,
            f_clk=self.f_clk,
            psi=self.psi,
            P_tx=None if self.P_tx_dbm is None else dbm_to_watts(self.P_tx_dbm),
            eta=self.eta,
            P_circ=self.P_circ,
            P_rx=self.P_rx,
            R_tx_bits_per_s=self.R_tx,
            R_rx_bits_per_s=self.R_rx,
            N_up_bits=self.N_up_bits,
            N_down_bits=self.N_down_bits,
        )

    def energy(self) -> EnergyProfile:
        if not self.energy_constrained:
            return EnergyProfile(0.0, 0.0, 0.0)
        return energy_profile(self.hardware())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        return d


def resolve_alpha(cfg: SimConfig) -> float | None:
    """Sleep slope broadcast before training; ``None`` for strategies that never sleep.

    It is a property of the configuration, shared by all replications.
    """
    if not cfg.strategy.sleeps:
        return None
    if cfg.alpha is not None:
        return cfg.alpha
    if not cfg.energy_constrained:
        return 1.0
    ep = cfg.energy()
    if cfg.strategy.uses_distribution:
        proc = EhProcess(cfg.r, cfg.m, ep.unit)
        kw = dict(method=cfg.truncation, samples=cfg.truncation_samples)
        if cfg.truncation == "monte_carlo":
            kw["rng"] = substream(cfg.master_seed, 0, "alpha")
        return alpha_edk(proc, cfg.xi, cfg.B_max, cfg.M, cfg.K, ep, **kw)
    return alpha_emk(cfg.m * ep.unit, cfg.xi, cfg.B_max, cfg.M, cfg.K, ep)


def substream(master_seed: int, replication: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent generator for one ``(replication, purpose[, device])`` triple."""
    key = (replication, STREAMS[purpose], *index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=key)))


@dataclass
class Device:
    """Snapshot of one device, assembled from the run's arrays."""

    index: int
    battery: Battery
    samples: list[Sample]
    last_model: np.ndarray
    eh: EhProcess | None
    profile: HardwareProfile


@dataclass(frozen=True)
class IterationRecord:
    t: int
    mean_battery_norm: float
    error: float
    engaged: int
    attempted: int
    successes: int
    lam: float


RECORD_FIELDS = tuple(f.name for f in fields(IterationRecord) if f.name != "t")


@dataclass
class RunState:
    """Mutable state of one replication. Per-device quantities are arrays indexed by user."""

    cfg: SimConfig
    replication: int
    strategy: Strategy
    ep: EnergyProfile
    profile: HardwareProfile
    w: np.ndarray
    true_w: np.ndarray
    centers: np.ndarray
    X: np.ndarray
    y: np.ndarray
    battery: Battery
    last_models: np.ndarray
    procs: list[EhProcess]
    rngs: dict[str, np.random.Generator]
    income_rngs: list[np.random.Generator]
    fs: FeedbackState
    weights: np.ndarray
    t: int = 0
    initial_levels: np.ndarray = field(default=None)
    harvested: np.ndarray = field(default=None)
    spent: np.ndarray = field(default=None)
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def alpha(self) -> float | None:
        return self.strategy.alpha

    def device(self, k: int) -> Device:
        return Device(
            index=k,
            battery=Battery(float(self.battery.level[k]), self.battery.capacity),
            samples=[Sample(self.X[k, i], float(self.y[k, i]), k) for i in range(self.X.shape[1])],
            last_model=self.last_models[k].copy(),
            eh=self.procs[k] if self.procs else None,
            profile=self.profile,
        )


def init_run(cfg: SimConfig, replication: int = 0) -> RunState:
    """Build devices, dataset, batteries and the broadcast sleep slope for one replication."""
    seed = cfg.master_seed
    rngs = {name: substream(seed, replication, name) for name in ("engagement", "transmission", "channel")}
    data_rng = substream(seed, replication, "dataset")
    true_w, centers, X, y = population_arrays(cfg.K, cfg.L, cfg.beta, data_rng, cfg.dataset_size)
    rngs["dataset"] = data_rng
    ep = cfg.energy()
    if cfg.energy_constrained:
        levels = substream(seed, replication, "battery").uniform(0.0, cfg.B_max, cfg.K)
        procs = [EhProcess(cfg.r, cfg.m, ep.unit) for _ in range(cfg.K)]
        income_rngs = [substream(seed, replication, "income", k) for k in range(cfg.K)]
    else:
        levels = np.full(cfg.K, cfg.B_max)
        procs, income_rngs = [], []
    alpha = resolve_alpha(cfg)
    w0 = np.zeros(cfg.L)
    return RunState(
        cfg=cfg,
        replication=replication,
        strategy=Strategy(cfg.strategy, alpha=alpha, xi=cfg.xi if cfg.strategy.sleeps else None),
        ep=ep,
        profile=cfg.hardware(),
        w=w0,
        true_w=true_w,
        centers=centers,
        X=X,
        y=y,
        battery=Battery(levels, cfg.B_max),
        last_models=np.tile(w0, (cfg.K, 1)),
        procs=procs,
        rngs=rngs,
        income_rngs=income_rngs,
        fs=FeedbackState(lam=0.0, mu1=cfg.mu1, M=cfg.M),
        weights=np.full(cfg.K, 1.0 / cfg.K),
        initial_levels=levels.copy(),
        harvested=np.zeros(cfg.K),
        spent=np.zeros(cfg.K),
    )


def run_iteration(state: RunState) -> IterationRecord:
    """Advance one iteration and append its record to ``state.records``."""
    cfg, ep = state.cfg, state.ep
    K = cfg.K
    before = state.battery.level

    # 1) harvest
    if state.procs:
        income = np.array([p.sample(g) for p, g in zip(state.procs, state.income_rngs)])
    else:
        income = np.zeros(K)
    level, accepted = credit(before, income, cfg.B_max)

    # 2) engage: wake, receive w(t), compute
    if cfg.redraw_dataset:
        state.X = draw_features(state.centers, cfg.dataset_size, state.rngs["dataset"])
        state.y = state.X @ state.true_w
    engaged = decide_engagement(state.strategy, level, cfg.B_max, ep, None, u=state.rngs["engagement"].random(K))
    level = level - np.where(engaged, ep.engage_cost, 0.0)
    state.last_models[engaged] = state.w
    G = batch_gradients(state.w, state.X, state.y)
    norms = np.linalg.norm(G, axis=1)

    # 3) transmit over the shared channels
    u_tx = state.rngs["transmission"].random(K)
    tx = engaged & decide_transmission(state.strategy, norms, state.fs, level, ep, K, None, u=u_tx)
    outcome = contend(np.flatnonzero(tx), cfg.M, state.rngs["channel"])

    state.battery = apply_iteration(state.battery, income, engaged, tx, ep)
    state.harvested += accepted
    state.spent += np.where(engaged, ep.engage_cost, 0.0) + np.where(tx, ep.E_tx, 0.0)

    # 4) aggregate and update the feedback signal
    updates = [LocalUpdate(G[k], float(norms[k]), k) for k in outcome.winners]
    state.w = aggregate(state.w, updates, cfg.mu, state.weights, renormalize=cfg.renormalize)
    state.fs = update_feedback(state.fs, outcome.attempted)
    state.t += 1

    rec = IterationRecord(
        t=state.t,
        mean_battery_norm=float(np.mean(state.battery.level) / cfg.B_max),
        error=error_metric(state.last_models, state.true_w),
        engaged=int(np.count_nonzero(engaged)),
        attempted=outcome.attempted,
        successes=len(outcome.successes),
        lam=state.fs.lam,
    )
    state.records.append(rec)
    return rec


def run_replication(cfg: SimConfig, replication: int) -> list[IterationRecord]:
    state = init_run(cfg, replication)
    for _ in range(cfg.T):
        run_iteration(state)
    return state.records


def _replication_task(args):
    cfg, rep = args
    return run_replication(cfg, rep)


@dataclass
class ExperimentResult:
    """Per-replication traces and their per-iteration statistics.

    ``traces[name]`` has shape ``(replications, T)`` for every record field.
    """

    cfg: SimConfig
    alpha: float | None
    t: np.ndarray
    traces: dict[str, np.ndarray]

    @property
    def mean(self) -> dict[str, np.ndarray]:
        return {k: v.mean(axis=0) for k, v in self.traces.items()}

    @property
    def std(self) -> dict[str, np.ndarray]:
        return {k: v.std(axis=0) for k, v in self.traces.items()}

    def at(self, t: int, name: str) -> float:
        """Replication mean of ``name`` after iteration ``t`` (1-based)."""
        return float(self.traces[name][:, t - 1].mean())

    def window(self, t0: int, t1: int, name: str) -> float:
        """Mean of ``name`` over iterations ``t0..t1`` inclusive and all replications."""
        return float(self.traces[name][:, t0 - 1 : t1].mean())


def run_experiment(cfg: SimConfig, workers: int = 1) -> ExperimentResult:
    """Run ``cfg.replications`` independent replications.

    Output does not depend on ``workers``: every replication owns its
    substreams and results are collected in replication order.
    """
    jobs = [(cfg, rep) for rep in range(cfg.replications)]
    if workers > 1 and cfg.replications > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_replication_task, jobs))
    else:
        runs = [_replication_task(j) for j in jobs]
    traces = {name: np.array([[getattr(r, name) for r in run] for run in runs], dtype=float) for name in RECORD_FIELDS}
    log.debug("finished %d replications of %s", cfg.replications, cfg.strategy.value)
    return ExperimentResult(cfg=cfg, alpha=resolve_alpha(cfg), t=np.arange(1, cfg.T + 1), traces=traces)


def with_overrides(cfg: SimConfig, **changes) -> SimConfig:
    return replace(cfg, **changes)
