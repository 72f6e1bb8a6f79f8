"""Python access to the robust policy optimization core."""

from ._core import (
    ConfigError,
    NumericalError,
    ehi,
    ei,
    elbow_index,
    gp_posterior,
    hypervolume_2d,
    log_marginal_likelihood,
    matern52,
    normalize_config,
    pareto_front,
    performance,
    reward,
    rollout_csv,
    scale_return,
)

__all__ = [
    "ConfigError",
    "NumericalError",
    "ehi",
    "ei",
    "elbow_index",
    "gp_posterior",
    "hypervolume_2d",
    "log_marginal_likelihood",
    "matern52",
    "normalize_config",
    "pareto_front",
    "performance",
    "reward",
    "rollout_csv",
    "scale_return",
]
