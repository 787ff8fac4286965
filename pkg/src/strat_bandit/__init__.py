"""Strategic multi-armed bandits: arms that lift or absorb rewards, and the
policies and auction mechanism that face them."""

from .algorithms import UCB, AllArmsBlocked, EpsGreedy, PolicySpec, eps_schedule, ucb_index
from .core import (
    ArmSpec,
    ConfigRejected,
    ConstraintViolation,
    DiscreteFinite,
    EpisodeOutcome,
    Instance,
    OwnHistory,
    RewardTape,
    ScaledBernoulli,
    StratBanditError,
    build_instance,
)
from .engine import (
    coupled_replay,
    deviation_ratio,
    estimate_sharp_adaptivity,
    monte_carlo,
    regret_ordinary,
    revenue_floor_check,
    run_episode,
    verify_fata,
)
from .mechanism import SpPiConfig, run_sp_pi
from .strategies import build_profile, from_descriptor

__version__ = "0.1.0"

__all__ = [
    "UCB",
    "AllArmsBlocked",
    "ArmSpec",
    "ConfigRejected",
    "ConstraintViolation",
    "DiscreteFinite",
    "EpisodeOutcome",
    "EpsGreedy",
    "Instance",
    "OwnHistory",
    "PolicySpec",
    "RewardTape",
    "ScaledBernoulli",
    "SpPiConfig",
    "StratBanditError",
    "build_instance",
    "build_profile",
    "coupled_replay",
    "deviation_ratio",
    "eps_schedule",
    "estimate_sharp_adaptivity",
    "from_descriptor",
    "monte_carlo",
    "regret_ordinary",
    "revenue_floor_check",
    "run_episode",
    "run_sp_pi",
    "ucb_index",
    "verify_fata",
]
