"""
Experiment configuration files.

A configuration is a JSON object::

    {
      "env_kind": "SimpleDoorKey",
      "mediator": {"policy": "learned"},
      "planner": {"kind": "oracle"},
      "ppo": {"iterations": 50, "penalty": 0.05},
      "training_seed_list": [0, 1, 2, 3, 4],
      "output_dir": "runs/simple"
    }

Only ``env_kind`` is required. Unknown keys are rejected so that typos do not
silently fall back to defaults.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import List, Optional

from . import gridworld as gw
from .errors import ConfigurationError
from .mediator import PolicyKind
from .planner import DEFAULT_BASE_URL, DEFAULT_MODEL, EndpointConfig, PromptStyle
from .training import PpoConfig

log = logging.getLogger(__name__)

SEEDS_FILE = Path(__file__).parent / "data" / "test_seeds.json"
PLANNER_KINDS = ("oracle", "remote", "learned")
DEFAULT_TRAINING_SEEDS = (0, 1, 2, 3, 4)
HELD_OUT_SIZE = 100


@lru_cache(maxsize=None)
def _seed_table():
    return json.loads(SEEDS_FILE.read_text(encoding="utf-8"))


def held_out_seeds(env_kind):
    """The 100 predefined test seeds of an environment kind."""
    return list(_seed_table()[gw.EnvKind.parse(env_kind).value])


@dataclass
class MediatorConfig:
    policy: str = PolicyKind.LEARNED.value
    ask_probability: float = 0.5


@dataclass
class PlannerConfig:
    kind: str = "oracle"
    base_url: str = field(
        default_factory=lambda: os.environ.get("PLANNER_BASE_URL", DEFAULT_BASE_URL)
    )
    model: str = field(default_factory=lambda: os.environ.get("PLANNER_MODEL", DEFAULT_MODEL))
    api_key: Optional[str] = field(
        default_factory=lambda: os.environ.get("PLANNER_API_KEY") or None, repr=False
    )
    temperature: float = 0.0
    max_tokens: int = 128
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5
    prompt_style: Optional[str] = None
    cache: bool = False

    def endpoint(self):
        return EndpointConfig(
            base_url=self.base_url,
            model=self.model,
            api_key=self.api_key,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            timeout=self.timeout,
            retries=self.retries,
            backoff=self.backoff,
        )


@dataclass
class ExperimentConfig:
    env_kind: gw.EnvKind
    mediator: MediatorConfig = field(default_factory=MediatorConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    training_seed_list: List[int] = field(default_factory=lambda: list(DEFAULT_TRAINING_SEEDS))
    test_seed_list: List[int] = field(default_factory=list)
    output_dir: str = "runs"
    random_repetitions: int = 5
    workers: int = 1
    source: str = field(default="<config>", compare=False)

    def __post_init__(self):
        if not self.test_seed_list:
            self.test_seed_list = held_out_seeds(self.env_kind)
        self.validate()

    @property
    def policy(self):
        return PolicyKind.parse(self.mediator.policy)

    @property
    def needs_checkpoint(self):
        return self.policy is PolicyKind.LEARNED or self.planner.kind == "learned"

    def validate(self):
        """:raises ConfigurationError: Naming the offending field."""
        PolicyKind.parse(self.mediator.policy)
        if self.planner.kind not in PLANNER_KINDS:
            self._fail("planner.kind", "must be one of {}".format(", ".join(PLANNER_KINDS)))
        if self.planner.prompt_style is not None:
            try:
                PromptStyle(self.planner.prompt_style)
            except ValueError:
                self._fail("planner.prompt_style", "must be 'plain' or 'chain_of_thought'")
        if not 0 <= self.mediator.ask_probability <= 1:
            self._fail("mediator.ask_probability", "must be in [0, 1]")
        if self.planner.kind == "learned" and self.policy is PolicyKind.LEARNED:
            self._fail(
                "planner.kind", "'learned' cannot be combined with mediator.policy 'learned'"
            )
        if self.planner.retries < 0:
            self._fail("planner.retries", "must be >= 0")
        if not self.training_seed_list:
            self._fail("training_seed_list", "must not be empty")
        if len(set(self.test_seed_list)) != len(self.test_seed_list):
            self._fail("test_seed_list", "contains duplicates")
        overlap = sorted(set(self.training_seed_list) & set(self.test_seed_list))
        if overlap:
            self._fail("training_seed_list", "overlaps the test seeds: {}".format(overlap))
        if self.random_repetitions < 1:
            self._fail("random_repetitions", "must be >= 1")
        if self.workers < 1:
            self._fail("workers", "must be >= 1")
        if len(self.test_seed_list) != HELD_OUT_SIZE:
            log.warning(
                "%s: using %d test seeds instead of %d",
                self.source,
                len(self.test_seed_list),
                HELD_OUT_SIZE,
            )

    def _fail(self, name, message):
        raise ConfigurationError("{}: field '{}' {}".format(self.source, name, message))

    def to_dict(self):
        doc = asdict(self)
        doc.pop("source")
        doc["env_kind"] = self.env_kind.value
        doc["planner"].pop("api_key")
        return doc

    def digest(self):
        """SHA-256 of the canonical JSON form, without secrets."""
        text = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _section(cls, doc, name, source):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigurationError("{}: field '{}' must be an object".format(source, name))
    known = {f.name: f for f in fields(cls)}
    defaults = cls()
    values = {}
    for key, value in doc.items():
        if key not in known:
            raise ConfigurationError("{}: unknown field '{}.{}'".format(source, name, key))
        values[key] = _coerce(value, getattr(defaults, key), "{}.{}".format(name, key), source)
    try:
        return cls(**values)
    except ConfigurationError as e:
        raise ConfigurationError("{}: {}".format(source, e)) from None


def _coerce(value, default, name, source):
    def fail(kind):
        raise ConfigurationError(
            "{}: field '{}' must be {}, got {!r}".format(source, name, kind, value)
        )

    if value is None or default is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            fail("a boolean")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            fail("an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            fail("a number")
        return float(value)
    if isinstance(default, str) and not isinstance(value, str):
        fail("a string")
    return value


def _seed_list(value, name, source):
    valid = isinstance(value, list) and all(
        isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in value
    )
    if not valid:
        raise ConfigurationError(
            "{}: field '{}' must be a list of non-negative integers".format(source, name)
        )
    return list(value)


_TOP_LEVEL = {
    "env_kind",
    "mediator",
    "planner",
    "ppo",
    "training_seed_list",
    "test_seed_list",
    "output_dir",
    "random_repetitions",
    "workers",
}


def parse_config(doc, source="<config>"):
    """
    Build an :class:`ExperimentConfig` from a decoded JSON object.

    :raises ConfigurationError: On missing, unknown or ill-typed fields.
    """
    if not isinstance(doc, dict):
        raise ConfigurationError("{}: expected a JSON object".format(source))
    unknown = sorted(set(doc) - _TOP_LEVEL)
    if unknown:
        raise ConfigurationError("{}: unknown field '{}'".format(source, unknown[0]))
    if "env_kind" not in doc:
        raise ConfigurationError("{}: missing required field 'env_kind'".format(source))
    try:
        env_kind = gw.EnvKind.parse(doc["env_kind"])
    except ConfigurationError as e:
        raise ConfigurationError("{}: field 'env_kind': {}".format(source, e)) from None
    kwargs = dict(
        env_kind=env_kind,
        mediator=_section(MediatorConfig, doc.get("mediator"), "mediator", source),
        planner=_section(PlannerConfig, doc.get("planner"), "planner", source),
        ppo=_section(PpoConfig, doc.get("ppo"), "ppo", source),
        source=source,
    )
    for name in ("training_seed_list", "test_seed_list"):
        if name in doc:
            kwargs[name] = _seed_list(doc[name], name, source)
    if "output_dir" in doc:
        kwargs["output_dir"] = _coerce(doc["output_dir"], "", "output_dir", source)
    for name in ("random_repetitions", "workers"):
        if name in doc:
            kwargs[name] = _coerce(doc[name], 0, name, source)
    return ExperimentConfig(**kwargs)


def load_config(path):
    """
    Read and validate a configuration file.

    :raises ConfigurationError: With line and column for malformed JSON, or the field
        name for invalid values.
    :rtype: ExperimentConfig
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError("{}: cannot read config: {}".format(path, e.strerror or e)) from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError("{}:{}:{}: {}".format(path, e.lineno, e.colno, e.msg)) from None
    return parse_config(doc, source=str(path))
