"""Monte Carlo simulator for grant-based random access in crowded XL-MIMO cells.

Compares SUCRe-XL against NOMA-XL, which admits up to three colliding users per
pilot and subarray through successive interference cancellation.
"""
from .channel import ArrayGeometry, ChannelRealization, FadingModel, rayleigh_distance
from .engine import Scenario, run_campaign, run_trial, simulate_trial
from .errors import ConfigurationError, ContractError
from .optimizer import DeltaGrid, sweep_delta
from .protocol import ProtocolParams

__all__ = [
    "ArrayGeometry", "ChannelRealization", "FadingModel", "rayleigh_distance",
    "Scenario", "run_campaign", "run_trial", "simulate_trial",
    "ConfigurationError", "ContractError", "DeltaGrid", "sweep_delta", "ProtocolParams",
]
