# Optimizer module
from .federation import (
    AgentState,
    BoxConstraint,
    FederatedTrainer,
    FederationState,
    LocalProblem,
    LocalRoundResult,
    Mechanism,
    NoiseRecord,
    RoundObserver,
    RoundRecord,
    TrainingResult,
    TrainingSettings,
    dual_update,
    local_round,
    local_subproblem_step,
    run_training,
    server_global_update,
)
from .schedules import EtaRegime, RhoSchedule, Schedules, eta_schedule, rho_schedule

__all__ = [
    "AgentState",
    "BoxConstraint",
    "EtaRegime",
    "FederatedTrainer",
    "FederationState",
    "LocalProblem",
    "LocalRoundResult",
    "Mechanism",
    "NoiseRecord",
    "RhoSchedule",
    "RoundObserver",
    "RoundRecord",
    "Schedules",
    "TrainingResult",
    "TrainingSettings",
    "dual_update",
    "eta_schedule",
    "local_round",
    "local_subproblem_step",
    "rho_schedule",
    "run_training",
    "server_global_update",
]
