"""Energy-aware federated learning over multichannel slotted ALOHA.

A discrete-time simulator of energy-harvesting devices that train a linear
regression model with FedAvg, choosing when to sleep so that their batteries
settle around a target level.
"""

from ehfl.errors import ConfigError, SimulationInvariantError
from ehfl.core import (
    GlobalModel,
    LocalUpdate,
    Sample,
    aggregate,
    error_metric,
    generate_population,
    local_gradient,
)
from ehfl.energy import (
    Battery,
    EhProcess,
    EnergyProfile,
    HardwareProfile,
    apply_iteration,
    compute_energy,
    compute_time,
    energy_profile,
    rx_energy,
    sample_income,
    tx_energy,
)
from ehfl.mac import ContentionOutcome, contend
from ehfl.policy import (
    FeedbackState,
    Strategy,
    Variant,
    alpha_edk,
    alpha_emk,
    decide_engagement,
    decide_transmission,
    sleep_probability,
    truncated_mean_income,
    tx_probability,
    update_feedback,
)
from ehfl.sim import (
    Device,
    ExperimentResult,
    IterationRecord,
    RunState,
    SimConfig,
    init_run,
    run_experiment,
    run_iteration,
)

__version__ = "0.1.0"
