"""
askgrid - learn when an agent should ask a planner for help.

An agent acts in small partially observed grid worlds through options such as
"go to the yellow key". A planner (a deterministic oracle, a remote
chat-completion model or a learned option selector) turns text descriptions
of what the agent sees into plans of options. A mediator decides at every
timestep whether asking the planner is worth it, and is trained with PPO to
ask only when the answer is likely to change the plan.
"""

__version__ = "0.1.0"
__author__ = "askgrid developers"
__license__ = "MIT"

from .errors import (
    AskgridError,
    CheckpointError,
    ComparisonError,
    ConfigurationError,
    PlanningError,
    PlanParseError,
    ServerError,
    TrainingError,
    TransportError,
    UsageError,
)
from .gridworld import EnvKind, WorldState, generate, reset, step, render_ascii
from .options import OptionKind, OptionSpec, Plan, GROUNDED_OPTIONS
from .translator import FactList, extract_facts, render_text
from .planner import OraclePlanner, RemotePlanner, LearnedPlanner, EndpointConfig, parse_plan
from .neural import AskNet, NetConfig, save_checkpoint, load_checkpoint
from .mediator import Mediator, PolicyKind, Decision
from .training import ControlLoop, PpoConfig, train, train_option_selector, evaluate
from .config import ExperimentConfig, load_config
from .harness import EvalReport, cli_train, cli_eval, cli_compare, cli_render, main

__all__ = [
    "AskgridError",
    "CheckpointError",
    "ComparisonError",
    "ConfigurationError",
    "PlanningError",
    "PlanParseError",
    "ServerError",
    "TrainingError",
    "TransportError",
    "UsageError",
    "EnvKind",
    "WorldState",
    "generate",
    "reset",
    "step",
    "render_ascii",
    "OptionKind",
    "OptionSpec",
    "Plan",
    "GROUNDED_OPTIONS",
    "FactList",
    "extract_facts",
    "render_text",
    "OraclePlanner",
    "RemotePlanner",
    "LearnedPlanner",
    "EndpointConfig",
    "parse_plan",
    "AskNet",
    "NetConfig",
    "save_checkpoint",
    "load_checkpoint",
    "Mediator",
    "PolicyKind",
    "Decision",
    "ControlLoop",
    "PpoConfig",
    "train",
    "train_option_selector",
    "evaluate",
    "ExperimentConfig",
    "load_config",
    "EvalReport",
    "cli_train",
    "cli_eval",
    "cli_compare",
    "cli_render",
    "main",
]
