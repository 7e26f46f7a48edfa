"""
Planners turn observation facts into plans of options.

Three planners share one interface:

* :class:`OraclePlanner` applies a fixed decision list and needs no model.
* :class:`RemotePlanner` prompts a chat-completion endpoint and parses the
  answer back into options.
* :class:`LearnedPlanner` samples options from a trained selector network.

Example::

    planner = RemotePlanner(EndpointConfig.from_env(), env_kind="KeyInBox")
    response = planner.propose(context)
    print(response.plan.text)
"""

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import List, Optional

import numpy as np
import requests

from . import gridworld as gw
from .errors import ConfigurationError, PlanningError, PlanParseError, TransportError, UsageError
from .neural import Categorical, no_grad
from .options import (
    EXPLORE,
    GROUNDED_OPTIONS,
    Plan,
    go_to,
    initiable_mask,
    pickup,
    toggle,
)
from .translator import FactList

log = logging.getLogger(__name__)

DEFAULT_BASE_URL = "http://127.0.0.1:8000/v1"
DEFAULT_MODEL = "vicuna-7b"
MAX_PLAN_LENGTH = 3
TEMPLATE_DIR = Path(__file__).parent / "templates"
FORMAT_DIRECTIVE = (
    "Answer with a plan of one to three steps separated by commas. Use only these steps: "
    "explore, go to the <color> <object>, pick up the <color> <object>, "
    "toggle the <color> <object>. Colors: {}. Objects: key, box, door."
).format(", ".join(gw.COLOR_NAMES))


class PlannerSource(str, Enum):
    ORACLE = "oracle"
    REMOTE = "remote"
    LEARNED = "learned"


class PromptStyle(str, Enum):
    PLAIN = "plain"
    CHAIN_OF_THOUGHT = "chain_of_thought"


@dataclass(frozen=True)
class PlannerRequest:
    env_kind: gw.EnvKind
    facts_text: str
    prefix: str

    def __post_init__(self):
        if not self.facts_text:
            raise UsageError("facts_text must not be empty, use 'observed nothing'")

    @property
    def query(self):
        return observation_block(self.facts_text)

    @property
    def prompt(self):
        return self.prefix + "\n" + self.query


@dataclass(frozen=True)
class PlannerResponse:
    plan: Plan
    raw_text: str
    source: PlannerSource


@dataclass
class PlanningContext:
    """Everything a planner may look at when asked for a plan."""

    env_kind: gw.EnvKind
    observation: np.ndarray
    prev_observation: np.ndarray
    carried: Optional[int]
    facts: FactList
    facts_text: str


def oracle_plan(facts, env_kind=None):
    """
    Deterministic plan for a set of facts.

    Rules, first match wins:

    1. carrying the key of a known locked door: go to the door and toggle it
    2. carrying a key while no door is known: explore
    3. a key fitting the door (any key while the door is unknown) is known: fetch it
    4. a box is known: open it
    5. otherwise: explore

    A carried key that does not fit the known door counts as not carrying, since the
    pick up option drops it first.

    :param facts: Facts extracted from the observation.
    :type facts: FactList
    :param env_kind: Accepted for interface symmetry with the other planners.
    :rtype: Plan
    """
    if env_kind is not None:
        gw.EnvKind.parse(env_kind)
    keys = sorted(f.color_id for f in facts.observed if f.object_id == gw.KEY)
    boxes = sorted(f.color_id for f in facts.observed if f.object_id == gw.BOX)
    doors = sorted(
        f.color_id for f in facts.observed if f.object_id == gw.DOOR and f.state_id != gw.OPEN
    )
    door = doors[0] if doors else None
    carrying = facts.carrying

    if carrying is not None and carrying == door:
        return Plan((go_to(gw.DOOR, door), toggle(gw.DOOR, door)))
    if carrying is not None and door is None:
        return Plan((EXPLORE,))
    suitable = keys if door is None else [c for c in keys if c == door]
    if suitable:
        return Plan((go_to(gw.KEY, suitable[0]), pickup(gw.KEY, suitable[0])))
    if boxes:
        return Plan((go_to(gw.BOX, boxes[0]), toggle(gw.BOX, boxes[0])))
    return Plan((EXPLORE,))


@lru_cache(maxsize=None)
def load_template(env_kind, template_dir=TEMPLATE_DIR):
    """
    Read the prompt template of an environment kind.

    :raises ConfigurationError: If the template is missing or malformed.
    """
    kind = gw.EnvKind.parse(env_kind)
    path = Path(template_dir) / "{}.json".format(kind.value)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(
            "No prompt template for {} at {}".format(kind.value, path)
        ) from None
    except ValueError as e:
        raise ConfigurationError("{}: {}".format(path, e)) from e
    if not doc.get("instruction") or not 2 <= len(doc.get("exemplars", [])) <= 4:
        raise ConfigurationError("{}: needs an instruction and 2 to 4 exemplars".format(path))
    return doc


def default_style(env_kind):
    if gw.EnvKind.parse(env_kind) is gw.EnvKind.COLORED_DOOR_KEY:
        return PromptStyle.CHAIN_OF_THOUGHT
    return PromptStyle.PLAIN


def prompt_prefix(env_kind, style=None, template_dir=TEMPLATE_DIR):
    """Task instruction followed by the few-shot exemplars."""
    style = default_style(env_kind) if style is None else PromptStyle(style)
    template = load_template(gw.EnvKind.parse(env_kind), Path(template_dir))
    lines = [template["instruction"]]
    for example in template["exemplars"]:
        lines.append("")
        lines.append("Observation: " + example["observation"])
        if style is PromptStyle.CHAIN_OF_THOUGHT:
            lines.append("Reasoning: " + example["reasoning"])
        lines.append("Plan: " + example["plan"])
    return "\n".join(lines)


def observation_block(facts_text):
    return "Observation: {}\n{}".format(facts_text, FORMAT_DIRECTIVE)


def build_prompt(env_kind, facts_text, style=None, template_dir=TEMPLATE_DIR):
    """
    Full planner prompt for one query.

    :param style: :class:`PromptStyle`. Defaults to chain of thought for
        ColoredDoorKey and plain elsewhere.
    :rtype: str
    """
    return prompt_prefix(env_kind, style, template_dir) + "\n" + observation_block(facts_text)


_PHRASES = {option.text: option for option in GROUNDED_OPTIONS}
_PHRASE_PATTERN = re.compile(
    r"\b(" + "|".join(re.escape(p) for p in sorted(_PHRASES, key=len, reverse=True)) + r")\b",
    re.IGNORECASE,
)


def parse_plan(raw_text, max_options=MAX_PLAN_LENGTH):
    """
    Extract a plan from free planner text.

    Canonical option phrases are collected in order of appearance, case-insensitively
    and without repeats, up to ``max_options``.

    :raises PlanParseError: If the text holds no option phrase.
    :rtype: Plan
    """
    options: List = []
    for match in _PHRASE_PATTERN.finditer(raw_text or ""):
        option = _PHRASES[match.group(1).lower()]
        if option not in options:
            options.append(option)
        if len(options) == max_options:
            break
    if not options:
        raise PlanParseError(
            "No option phrase in planner output {!r}".format((raw_text or "")[:80]), raw_text
        )
    return Plan(tuple(options))


@dataclass(frozen=True)
class EndpointConfig:
    """
    Where and how to reach a chat-completion endpoint.

    ``from_env`` reads ``PLANNER_BASE_URL``, ``PLANNER_MODEL`` and ``PLANNER_API_KEY``.
    """

    base_url: str = DEFAULT_BASE_URL
    model: str = DEFAULT_MODEL
    api_key: Optional[str] = field(default=None, repr=False)
    temperature: float = 0.0
    max_tokens: int = 128
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5

    @classmethod
    def from_env(cls, **overrides):
        values = dict(
            base_url=os.environ.get("PLANNER_BASE_URL", DEFAULT_BASE_URL),
            model=os.environ.get("PLANNER_MODEL", DEFAULT_MODEL),
            api_key=os.environ.get("PLANNER_API_KEY") or None,
        )
        values.update(overrides)
        return cls(**values)

    @property
    def url(self):
        return self.base_url.rstrip("/") + "/chat/completions"


class ResponseCache:
    """Completions keyed by the SHA-256 of the prompt. Safe to share between threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries = {}

    @staticmethod
    def key(prompt):
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def get(self, prompt):
        with self._lock:
            return self._entries.get(self.key(prompt))

    def put(self, prompt, completion):
        with self._lock:
            self._entries.setdefault(self.key(prompt), completion)

    def __len__(self):
        with self._lock:
            return len(self._entries)


def _complete(request, endpoint, session, sleep):
    body = {
        "model": endpoint.model,
        "messages": [
            {"role": "system", "content": request.prefix},
            {"role": "user", "content": request.query},
        ],
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = "Bearer " + endpoint.api_key
    http = session if session is not None else requests
    last_error = None
    for attempt in range(endpoint.retries + 1):
        try:
            response = http.post(endpoint.url, json=body, headers=headers, timeout=endpoint.timeout)
            if response.status_code >= 500:
                last_error = "HTTP {}".format(response.status_code)
            elif response.status_code >= 400:
                raise TransportError(
                    "{} rejected the request: HTTP {}".format(endpoint.url, response.status_code)
                )
            else:
                return response.json()["choices"][0]["message"]["content"]
        except requests.exceptions.RequestException as e:
            last_error = e
        except (KeyError, IndexError, TypeError, ValueError) as e:
            raise TransportError("Malformed completion from {}: {}".format(endpoint.url, e)) from e
        if attempt < endpoint.retries:
            delay = endpoint.backoff * 2**attempt
            log.warning("Planner request failed (%s), retrying in %.1fs", last_error, delay)
            sleep(delay)
    raise TransportError(
        "Planner at {} unreachable after {} attempts: {}".format(
            endpoint.url, endpoint.retries + 1, last_error
        )
    )


def remote_plan(request, endpoint, session=None, cache=None, sleep=time.sleep):
    """
    Ask a chat-completion endpoint for a plan.

    :param request: Prompt parts.
    :type request: PlannerRequest
    :param endpoint: Endpoint settings.
    :type endpoint: EndpointConfig
    :param session: Object with a ``requests``-style ``post`` method. Defaults to the
        ``requests`` module.
    :param cache: Optional :class:`ResponseCache`.
    :raises TransportError: When the endpoint stays unreachable after all retries.
    :raises PlanParseError: When the completion holds no option phrase.
    :rtype: PlannerResponse
    """
    raw_text = cache.get(request.prompt) if cache is not None else None
    if raw_text is None:
        raw_text = _complete(request, endpoint, session, sleep)
        if cache is not None:
            cache.put(request.prompt, raw_text)
    log.debug("Planner answered %r", raw_text)
    return PlannerResponse(
        plan=parse_plan(raw_text), raw_text=raw_text, source=PlannerSource.REMOTE
    )


def selector_input(prev_observation, observation, size=gw.MAX_SIZE):
    """Previous and current observations padded and stacked into 8 channels."""
    return np.concatenate(
        [
            gw.pad_observation(prev_observation, size, size),
            gw.pad_observation(observation, size, size),
        ],
        axis=-1,
    ).astype(np.float64)


@dataclass
class SelectorChoice:
    option: object
    index: int
    log_prob: float
    value: float
    inputs: np.ndarray
    mask: np.ndarray
    reward: float = 0.0
    done: bool = False


def learned_planner_select(observation_pair, network, carried=None, sample=False, rng=None):
    """
    Pick one grounded option with a selector network.

    Options that cannot be initiated are masked out. Explore is part of the mask, so when
    every option is masked there is nothing left to do.

    :param observation_pair: ``(previous, current)`` observations.
    :param network: Selector network with one logit per grounded option.
    :type network: AskNet
    :param sample: Sample instead of taking the most likely option.
    :raises PlanningError: If no option is initiable.
    :return: The option, its index, log-probability, value estimate, input and mask.
    """
    prev, now = observation_pair
    mask = initiable_mask(now, carried)
    if not mask.any():
        raise PlanningError("No option is initiable from this observation")
    inputs = selector_input(prev, now, network.config.width)
    with no_grad():
        logits, value = network.forward(inputs)
    dist = Categorical(logits, mask[None, :])
    index = int(dist.sample(rng)[0] if sample else dist.mode()[0])
    log_prob = float(dist.log_probs.values[0, index])
    return SelectorChoice(
        GROUNDED_OPTIONS[index], index, log_prob, float(value.values[0]), inputs, mask
    )


class Planner:
    """Base class of all planners. ``calls`` counts every ``propose``."""

    source: PlannerSource
    #: Whether a query counts as an interaction with an external planner.
    counts_as_interaction = True

    def __init__(self, env_kind):
        self.env_kind = gw.EnvKind.parse(env_kind)
        self.calls = 0

    def propose(self, context):
        self.calls += 1
        return self._propose(context)

    def _propose(self, context):
        raise NotImplementedError

    def observe(self, task_reward, done):
        """Feedback after every environment step. Only learned planners use it."""


class OraclePlanner(Planner):
    source = PlannerSource.ORACLE

    def _propose(self, context):
        plan = oracle_plan(context.facts, self.env_kind)
        return PlannerResponse(plan=plan, raw_text=plan.text, source=self.source)


class RemotePlanner(Planner):
    source = PlannerSource.REMOTE

    def __init__(self, endpoint, env_kind, style=None, session=None, cache=None, sleep=time.sleep):
        super().__init__(env_kind)
        self.endpoint = endpoint
        self.prefix = prompt_prefix(self.env_kind, style)
        self.session = session
        self.cache = cache
        self.sleep = sleep

    def _propose(self, context):
        request = PlannerRequest(self.env_kind, context.facts_text, self.prefix)
        return remote_plan(request, self.endpoint, self.session, self.cache, self.sleep)


class LearnedPlanner(Planner):
    """
    Option selector used when no language planner is available.

    Each selection is kept in ``records`` together with the task reward collected until
    the next selection, for PPO training.
    """

    source = PlannerSource.LEARNED
    counts_as_interaction = False

    def __init__(self, network, env_kind, sample=False, rng=None):
        super().__init__(env_kind)
        if network.config.head != "selector":
            raise ConfigurationError("LearnedPlanner needs a selector network")
        self.network = network
        self.sample = sample
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.records: List[SelectorChoice] = []

    def _propose(self, context):
        choice = learned_planner_select(
            (context.prev_observation, context.observation),
            self.network,
            context.carried,
            sample=self.sample,
            rng=self.rng,
        )
        self.records.append(choice)
        return PlannerResponse(
            plan=Plan((choice.option,)), raw_text=choice.option.text, source=self.source
        )

    def observe(self, task_reward, done):
        if self.records:
            self.records[-1].reward += task_reward
            self.records[-1].done = done
