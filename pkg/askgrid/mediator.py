"""
Asking policies.

A mediator decides at every timestep whether the agent asks the planner for a
new plan. The learned policy reads the difference between the previous and the
current observation and picks the ask/not-ask logit pair of the running option.
The baselines ask always, never, at random, or only when the running option
has terminated.
"""

import logging
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Optional

import numpy as np

from . import gridworld as gw
from .errors import ConfigurationError, UsageError
from .neural import Categorical, no_grad
from .options import OptionKind, TARGET_OBJECTS

log = logging.getLogger(__name__)

_ABSTRACT_KINDS = (OptionKind.GO_TO, OptionKind.PICKUP, OptionKind.TOGGLE)
#: Size of the color-abstracted option set: explore plus 3 kinds x 3 objects.
NUM_OPTIONS = 1 + len(_ABSTRACT_KINDS) * len(TARGET_OBJECTS)


class Decision(IntEnum):
    NOT_ASK = 0
    ASK = 1


class PolicyKind(str, Enum):
    LEARNED = "learned"
    HARD_CODED = "hard_coded"
    ALWAYS = "always"
    RANDOM = "random"
    NEVER = "never"

    @classmethod
    def parse(cls, value):
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(kind.value for kind in cls)
            raise ConfigurationError(
                "Unknown mediator policy {!r}, expected one of: {}".format(value, names)
            ) from None


@dataclass(frozen=True)
class AskDecision:
    choice: Decision
    log_prob: Optional[float] = None
    value_estimate: Optional[float] = None

    @property
    def ask(self):
        return self.choice is Decision.ASK


@dataclass
class MediatorState:
    prev_observation: np.ndarray
    current_option_index: int = 0
    policy_kind: PolicyKind = PolicyKind.HARD_CODED

    def __post_init__(self):
        if not 0 <= self.current_option_index < NUM_OPTIONS:
            raise UsageError(
                "Option index {} outside [0, {})".format(self.current_option_index, NUM_OPTIONS)
            )


def option_index(option):
    """
    Color-abstracted index of an option in ``[0, NUM_OPTIONS)``.

    Explore is 0. Every other option maps to ``1 + kind * 3 + object`` so that, for
    example, all "go to the <color> key" options share one index.

    :raises UsageError: For options outside the vocabulary.
    """
    if option.kind is OptionKind.EXPLORE:
        return 0
    try:
        kind = _ABSTRACT_KINDS.index(option.kind)
        obj = TARGET_OBJECTS.index(option.target.object_id)
    except (ValueError, AttributeError):
        raise UsageError("Option {!r} is not in the vocabulary".format(option)) from None
    return 1 + kind * len(TARGET_OBJECTS) + obj


def frame_difference(prev_observation, observation, size=gw.MAX_SIZE):
    """``observation - prev_observation`` on the padded canvas, as floats."""
    now = gw.pad_observation(observation, size, size).astype(np.float64)
    return now - gw.pad_observation(prev_observation, size, size).astype(np.float64)


def decide(
    state,
    observation_now,
    option_progress=None,
    network=None,
    rng=None,
    sample=False,
    ask_probability=0.5,
):
    """
    Make one ask/not-ask decision.

    :param state: Previous observation, running option and policy kind.
    :type state: MediatorState
    :param observation_now: Current observation.
    :param option_progress: Progress of the running option, ``None`` before the first plan.
    :param network: Ask network, required by the learned policy.
    :type network: AskNet
    :param rng: Random generator for sampling and the random policy.
    :param sample: Sample from the learned policy instead of taking its argmax.
    :raises ConfigurationError: If the learned policy has no network.
    :rtype: AskDecision
    """
    kind = state.policy_kind
    if kind is PolicyKind.ALWAYS:
        return AskDecision(Decision.ASK)
    if kind is PolicyKind.NEVER:
        return AskDecision(Decision.NOT_ASK)
    if kind is PolicyKind.HARD_CODED:
        finished = option_progress is None or option_progress.terminated
        return AskDecision(Decision.ASK if finished else Decision.NOT_ASK)
    if kind is PolicyKind.RANDOM:
        return AskDecision(Decision.ASK if rng.random() < ask_probability else Decision.NOT_ASK)

    if network is None:
        raise ConfigurationError("The learned mediator needs an ask network")
    inputs = frame_difference(state.prev_observation, observation_now, network.config.width)
    with no_grad():
        logits, value = network.forward(inputs)
    k = state.current_option_index
    dist = Categorical(logits.values[:, 2 * k : 2 * k + 2])
    choice = int(dist.sample(rng)[0] if sample else dist.mode()[0])
    return AskDecision(
        Decision(choice),
        log_prob=float(dist.log_probs.values[0, choice]),
        value_estimate=float(value.values[0]),
    )


class Mediator:
    """
    A configured asking policy.

    Example::

        mediator = Mediator("random", rng=np.random.default_rng(0))
        decision = mediator.decide(state, observation)

    :param policy_kind: One of ``learned``, ``hard_coded``, ``always``, ``random``, ``never``.
    :param network: Ask network for the learned policy.
    :param rng: Random generator, seeded with 0 when omitted.
    :param sample: Sample learned decisions, used while training.
    """

    def __init__(self, policy_kind, network=None, rng=None, sample=False, ask_probability=0.5):
        self.policy_kind = PolicyKind.parse(policy_kind)
        if self.policy_kind is PolicyKind.LEARNED and network is None:
            raise ConfigurationError("The learned mediator needs an ask network")
        self.network = network
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.sample = sample
        self.ask_probability = ask_probability

    @property
    def learned(self):
        return self.policy_kind is PolicyKind.LEARNED

    @property
    def forces_queries(self):
        """Whether the control loop queries on its own when no plan is running."""
        return self.policy_kind is not PolicyKind.RANDOM

    def decide(self, state, observation_now, option_progress=None):
        return decide(
            state,
            observation_now,
            option_progress,
            network=self.network,
            rng=self.rng,
            sample=self.sample,
            ask_probability=self.ask_probability,
        )
