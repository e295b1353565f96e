"""RSMA + RIS SWIPT beamforming."""
from .ao import ALL_STRATEGIES, AORun, Strategy, initial_phases, run_ao, run_strategies
from .beamforming import InfeasibleError, optimize_beamforming
from .metrics import StreamLayout, TransmitDesign, check_feasibility, summarize
from .phases import optimize_phases
from .scenario import (ChannelSet, PhaseShifts, ScenarioConfig, effective_channel, effective_channels,
                       generate_channels, load_config)

__version__ = "0.1.0"

__all__ = [
    "ALL_STRATEGIES", "AORun", "Strategy", "initial_phases", "run_ao", "run_strategies",
    "InfeasibleError", "optimize_beamforming", "StreamLayout", "TransmitDesign", "check_feasibility",
    "summarize", "optimize_phases", "ChannelSet", "PhaseShifts", "ScenarioConfig", "effective_channel",
    "effective_channels", "generate_channels", "load_config",
]
