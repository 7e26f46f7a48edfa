"""
Episode control loop and PPO training.

:class:`ControlLoop` runs one episode. At every timestep the mediator decides
whether to ask, the planner answers with a plan when asked, the running
option emits one primitive action and the environment steps. Asking for a
plan that leaves the running option unchanged costs a small penalty, which is
what teaches the learned mediator when asking is worth it.

Example::

    loop = ControlLoop("SimpleDoorKey", 7, Mediator("hard_coded"), OraclePlanner("SimpleDoorKey"))
    result = loop.run()
    print(result.success, result.interactions, result.timesteps)
"""

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from tqdm import tqdm

from . import gridworld as gw
from .errors import ConfigurationError, PlanningError, PlanParseError, TrainingError, UsageError
from .mediator import (
    NUM_OPTIONS,
    Decision,
    Mediator,
    MediatorState,
    PolicyKind,
    frame_difference,
    option_index,
)
from .neural import Adam, AskNet, Categorical, NetConfig, clip_grad_norm, gather, minimum
from .options import GROUNDED_OPTIONS, OptionProgress, option_action, option_terminated
from .planner import LearnedPlanner, OraclePlanner, PlanningContext
from .translator import extract_facts, render_text

log = logging.getLogger(__name__)


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs: int = 4
    minibatch_size: int = 64
    lr: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    #: Cost of an ask that leaves the running option unchanged.
    penalty: float = 0.05
    iterations: int = 500
    steps_per_iteration: int = 256
    eval_interval: int = 1
    max_grad_norm: float = 0.5
    #: Compare the whole remaining plan instead of the running option for the penalty.
    compare_full_plan: bool = False

    def __post_init__(self):
        checks = (
            ("gamma", 0 < self.gamma <= 1, "must be in (0, 1]"),
            ("gae_lambda", 0 < self.gae_lambda <= 1, "must be in (0, 1]"),
            ("clip_epsilon", self.clip_epsilon > 0, "must be > 0"),
            ("penalty", self.penalty >= 0, "must be >= 0"),
            ("lr", self.lr >= 0, "must be >= 0"),
            ("epochs", self.epochs >= 1, "must be >= 1"),
            ("minibatch_size", self.minibatch_size >= 1, "must be >= 1"),
            ("iterations", self.iterations >= 1, "must be >= 1"),
            ("steps_per_iteration", self.steps_per_iteration >= 1, "must be >= 1"),
            ("eval_interval", self.eval_interval >= 1, "must be >= 1"),
            ("max_grad_norm", self.max_grad_norm > 0, "must be > 0"),
        )
        for name, ok, message in checks:
            if not ok:
                raise ConfigurationError(
                    "ppo.{} {}, got {!r}".format(name, message, getattr(self, name))
                )


@dataclass
class StepRecord:
    t: int
    decision: Decision
    queried: bool
    forced: bool
    option_index: int
    action: int
    task_reward: float
    shaped_reward: float
    penalized: bool
    done: bool
    parse_error: bool = False
    planner_text: Optional[str] = None
    log_prob: Optional[float] = None
    value: Optional[float] = None
    frame_diff: Optional[np.ndarray] = None


@dataclass
class AskTrajectory:
    """
    One finished episode.

    ``timesteps`` is the step count of a successful episode and the step limit of a
    failed one.
    """

    env_kind: gw.EnvKind
    seed: int
    steps: List[StepRecord]
    success: bool
    interactions: int
    timesteps: int
    aborted: bool = False

    @property
    def task_return(self):
        return float(sum(s.task_reward for s in self.steps))

    @property
    def asks(self):
        return sum(1 for s in self.steps if s.decision is Decision.ASK)

    @property
    def penalized_steps(self):
        return sum(1 for s in self.steps if s.penalized)


def same_plan(new_plan, old_plan, compare_full_plan=False):
    if new_plan is None or old_plan is None:
        return False
    if compare_full_plan:
        return new_plan.remaining() == old_plan.remaining()
    return new_plan.current == old_plan.current


def shaped_reward(task_reward, decision, new_plan, old_plan, penalty, compare_full_plan=False):
    """
    Task reward minus ``penalty`` when an ask left the running option unchanged.

    Discounting happens later, in :func:`compute_gae`. ``new_plan`` is ``None`` when the
    ask produced no usable plan, which is never penalized.
    """
    if decision is Decision.ASK and same_plan(new_plan, old_plan, compare_full_plan):
        return task_reward - penalty
    return task_reward


class ControlLoop:
    """
    Runs one episode of mediator, planner, options and environment in lockstep.

    The first step always queries the planner. Whenever the plan runs out without an
    ask on that step the planner is queried anyway; such forced queries count as
    interactions and are penalized like asks. The random policy gets no forced queries:
    without a plan its agent waits until the policy asks.

    :param env_kind: Environment kind, taken from ``state`` when one is given.
    :param seed: Environment seed.
    :param mediator: Asking policy.
    :type mediator: Mediator
    :param planner: Planner answering queries.
    :param penalty: Same-plan penalty.
    :param record_inputs: Keep network inputs on every step, for training.
    :param debug: Keep a per-step text trace, see :meth:`info` and :meth:`print_log`.
    :param log_size: Maximum number of trace lines kept, ``None`` for all.
    :param state: Start from a copy of this world instead of generating one.
    :type state: gridworld.WorldState
    """

    def __init__(
        self,
        env_kind,
        seed,
        mediator,
        planner,
        penalty=0.05,
        compare_full_plan=False,
        record_inputs=False,
        debug=False,
        log_size=2000,
        state=None,
    ):
        self.seed = seed
        if state is None:
            self.env_kind = gw.EnvKind.parse(env_kind)
            self.state, self.observation = gw.reset(self.env_kind, seed)
        else:
            self.state = state.copy()
            self.env_kind = self.state.env_kind
            self.observation = gw.observe(self.state)
        self.mediator = mediator
        self.planner = planner
        self.penalty = penalty
        self.compare_full_plan = compare_full_plan
        self.record_inputs = record_inputs and mediator.learned
        self.debug = debug
        self.trace = deque(maxlen=log_size)
        self.mediator_state = MediatorState(
            prev_observation=self.observation, policy_kind=mediator.policy_kind
        )
        self.plan = None
        self.progress = OptionProgress()
        self.interactions = 0
        self.steps: List[StepRecord] = []
        self.aborted = False

    @property
    def done(self):
        return self.state.done or self.aborted

    def info(self, *messages):
        """Add a line to the trace if debug is enabled."""
        if self.debug:
            self.trace.append(" ".join(str(m) for m in messages))

    def print_log(self):
        """Print the trace and clear it."""
        for line in self.trace:
            print(line)
        self.trace.clear()

    def _active(self):
        return None if self.plan is None else self.plan.current

    def _check_current(self):
        option = self._active()
        if option is not None:
            self.progress = option_terminated(
                option, self.observation, self.progress, self.state.carried
            )

    def _settle(self, lines):
        """Move the cursor past terminated options."""
        while self.plan is not None and not self.plan.exhausted and self.progress.terminated:
            reason = self.progress.termination_reason.value
            lines.append("ended: {} ({})".format(self.plan.current.text, reason))
            self.plan.advance()
            self.progress = OptionProgress()
            self._check_current()

    def _adopt(self, plan):
        previous = self._active()
        keep = previous is not None and plan.current == previous and not self.progress.terminated
        self.plan = plan.copy()
        self.plan.cursor = 0
        if not keep:
            self.progress = OptionProgress()
        self._check_current()

    def _query(self, text, forced, lines):
        if self.planner.counts_as_interaction:
            self.interactions += 1
        context = PlanningContext(
            env_kind=self.env_kind,
            observation=self.observation,
            prev_observation=self.mediator_state.prev_observation,
            carried=self.state.carried,
            facts=extract_facts(self.observation, self.state.carried),
            facts_text=text,
        )
        label = "planner (forced):" if forced else "planner:"
        try:
            response = self.planner.propose(context)
        except PlanParseError as e:
            log.warning("Keeping the current plan, planner answer not understood: %r", e.raw_text)
            lines.append("{} unparseable {!r}".format(label, e.raw_text))
            return None, e.raw_text
        lines.append("{} {}".format(label, " ".join(response.raw_text.split())))
        self._adopt(response.plan)
        return response, response.raw_text

    def control_step(self):
        """
        Advance the episode by one timestep.

        :raises UsageError: If the episode is over.
        :raises PlanningError: If a learned planner finds no initiable option.
        :rtype: StepRecord
        """
        if self.done:
            raise UsageError("The episode is over")
        t = self.state.step_count
        observation, carried = self.observation, self.state.carried
        self._check_current()
        running = self._active()
        old_plan = None if self.plan is None else self.plan.copy()
        self.mediator_state.current_option_index = (
            option_index(running) if running is not None else 0
        )
        decision = self.mediator.decide(
            self.mediator_state, observation, self.progress if self.plan is not None else None
        )
        text = render_text(extract_facts(observation, carried))
        lines = [
            "t={}".format(t),
            gw.render_ascii(self.state),
            "observation: " + text,
            "decision: " + decision.choice.name.lower(),
        ]

        queried = forced = parse_error = False
        planner_text = None
        forcing = self.mediator.forces_queries
        if decision.ask or (self.plan is None and forcing):
            forced = not decision.ask
            response, planner_text = self._query(text, forced, lines)
            queried, parse_error = True, response is None
        self._settle(lines)
        if self._active() is None and not queried and forcing:
            response, planner_text = self._query(text, True, lines)
            queried = forced = True
            parse_error = response is None
            self._settle(lines)

        option = self._active()
        if option is None:
            action = gw.TURN_LEFT
        else:
            action = option_action(
                option,
                observation,
                self.state.agent_pos,
                self.state.agent_dir,
                carried,
                progress=self.progress,
            )
            self.progress = self.progress.tick()
        lines.append("option: " + (option.text if option is not None else "none, waiting"))
        lines.append("action: " + gw.ACTION_NAMES[action])

        result = gw.step(self.state, action)
        self.planner.observe(result.reward, result.done)
        new_plan = self.plan if queried and not parse_error else None
        asked = Decision.ASK if queried else Decision.NOT_ASK
        penalized = asked is Decision.ASK and same_plan(new_plan, old_plan, self.compare_full_plan)
        record = StepRecord(
            t=t,
            decision=decision.choice,
            queried=queried,
            forced=forced,
            option_index=self.mediator_state.current_option_index,
            action=action,
            task_reward=result.reward,
            shaped_reward=shaped_reward(
                result.reward, asked, new_plan, old_plan, self.penalty, self.compare_full_plan
            ),
            penalized=penalized,
            done=result.done,
            parse_error=parse_error,
            planner_text=planner_text,
            log_prob=decision.log_prob,
            value=decision.value_estimate,
            frame_diff=(
                frame_difference(
                    self.mediator_state.prev_observation,
                    observation,
                    self.mediator.network.config.width,
                )
                if self.record_inputs
                else None
            ),
        )
        self.steps.append(record)
        self.mediator_state.prev_observation = observation
        self.observation = result.observation
        if result.done:
            lines.append("result: " + ("success" if result.success else "timeout"))
        for line in lines:
            self.info(line)
        return record

    def run(self):
        """
        Step until the episode ends.

        :rtype: AskTrajectory
        """
        try:
            while not self.done:
                self.control_step()
        except PlanningError as e:
            self.aborted = True
            log.info("Episode %s/%d aborted: %s", self.env_kind.value, self.seed, e)
            self.info("result: aborted,", e)
        return self.result()

    def result(self):
        success = self.state.success
        return AskTrajectory(
            env_kind=self.env_kind,
            seed=self.seed,
            steps=list(self.steps),
            success=success,
            interactions=self.interactions,
            timesteps=self.state.step_count if success else self.state.max_steps,
            aborted=self.aborted,
        )


def compute_gae(rewards, values, dones, gamma, gae_lambda, last_value=0.0):
    """
    Generalized advantage estimation over concatenated episodes.

    A done step bootstraps with value 0. ``last_value`` bootstraps a trailing step that
    is not done.

    :return: ``(advantages, returns)``, unnormalized.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    advantages = np.zeros_like(rewards)
    running = 0.0
    for t in reversed(range(len(rewards))):
        next_value = last_value if t == len(rewards) - 1 else values[t + 1]
        live = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * live - values[t]
        running = delta + gamma * gae_lambda * live * running
        advantages[t] = running
    return advantages, advantages + values


def normalize_advantages(advantages, eps=1e-8):
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.size < 2:
        return advantages - advantages.mean() if advantages.size else advantages
    return (advantages - advantages.mean()) / (advantages.std() + eps)


@dataclass
class PpoBatch:
    """
    On-policy samples of one iteration.

    ``columns`` selects, per sample, which network outputs form the distribution the
    action was drawn from. ``masks`` optionally marks the allowed ones among them.
    """

    inputs: np.ndarray
    columns: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    version: int
    masks: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.actions)


def ask_batch(trajectories, config, version):
    """Build a PPO batch from trajectories of a sampling learned mediator."""
    steps, dones = [], []
    for trajectory in trajectories:
        for i, step in enumerate(trajectory.steps):
            if step.frame_diff is None or step.log_prob is None:
                raise TrainingError(
                    "Trajectory of seed {} carries no policy inputs".format(trajectory.seed)
                )
            steps.append(step)
            dones.append(step.done or i == len(trajectory.steps) - 1)
    if not steps:
        raise TrainingError("No decision steps collected")
    advantages, returns = compute_gae(
        [s.shaped_reward for s in steps],
        [s.value for s in steps],
        dones,
        config.gamma,
        config.gae_lambda,
    )
    k = np.array([s.option_index for s in steps])
    return PpoBatch(
        inputs=np.stack([s.frame_diff for s in steps]),
        columns=np.stack([2 * k, 2 * k + 1], axis=1),
        actions=np.array([int(s.decision) for s in steps]),
        log_probs=np.array([s.log_prob for s in steps]),
        advantages=normalize_advantages(advantages),
        returns=returns,
        version=version,
    )


def selector_batch(episodes, config, version):
    """Build a PPO batch from the selection records of learned planners, one list per episode."""
    records, dones = [], []
    for episode in episodes:
        for i, record in enumerate(episode):
            records.append(record)
            dones.append(record.done or i == len(episode) - 1)
    if not records:
        raise TrainingError("No option selections collected")
    advantages, returns = compute_gae(
        [r.reward for r in records],
        [r.value for r in records],
        dones,
        config.gamma,
        config.gae_lambda,
    )
    n = len(GROUNDED_OPTIONS)
    return PpoBatch(
        inputs=np.stack([r.inputs for r in records]),
        columns=np.tile(np.arange(n), (len(records), 1)),
        actions=np.array([r.index for r in records]),
        log_probs=np.array([r.log_prob for r in records]),
        advantages=normalize_advantages(advantages),
        returns=returns,
        version=version,
        masks=np.stack([r.mask for r in records]),
    )


def ppo_update(batch, net, config, optimizer=None, rng=None):
    """
    Clipped-surrogate PPO update of ``net`` on one batch.

    :param batch: Samples collected with the current parameters.
    :type batch: PpoBatch
    :param net: Network with ``forward``, ``parameters`` and ``version``.
    :param config: Hyperparameters.
    :type config: PpoConfig
    :param optimizer: Optimiser kept across iterations, a fresh :class:`Adam` if omitted.
    :param rng: Generator shuffling the minibatches.
    :raises TrainingError: If the batch is stale or the loss stops being finite. The
        parameters are restored before raising.
    :return: Mean policy loss, value loss, entropy, clip fraction and approximate KL.
    :rtype: dict
    """
    if batch.version != net.version:
        raise TrainingError(
            "Batch was collected by parameters v{}, network is at v{}".format(
                batch.version, net.version
            )
        )
    optimizer = optimizer or Adam(net.parameters(), lr=config.lr)
    rng = rng if rng is not None else np.random.default_rng(0)
    backup = net.state_values()
    eps = config.clip_epsilon
    stats = {
        name: [] for name in ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl")
    }
    n = len(batch)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            logits, values = net.forward(batch.inputs[idx])
            masks = None if batch.masks is None else batch.masks[idx]
            dist = Categorical(gather(logits, batch.columns[idx]), masks)
            new_log_probs = dist.log_prob(batch.actions[idx])
            ratio = (new_log_probs - batch.log_probs[idx]).exp()
            advantages = batch.advantages[idx]
            surrogate = minimum(ratio * advantages, ratio.clip(1 - eps, 1 + eps) * advantages)
            policy_loss = -surrogate.mean()
            error = values - batch.returns[idx]
            value_loss = (error * error).mean()
            entropy = dist.entropy().mean()
            loss = policy_loss + config.value_coef * value_loss - config.entropy_coef * entropy
            if not np.isfinite(loss.values):
                net.load_values(backup)
                raise TrainingError("PPO loss became non-finite, update rolled back")
            net.zero_grad()
            loss.backward()
            clip_grad_norm(net.parameters(), config.max_grad_norm)
            optimizer.step()

            stats["policy_loss"].append(float(policy_loss.values))
            stats["value_loss"].append(float(value_loss.values))
            stats["entropy"].append(float(entropy.values))
            stats["clip_fraction"].append(float(np.mean(np.abs(ratio.values - 1) > eps)))
            stats["approx_kl"].append(float(np.mean(batch.log_probs[idx] - new_log_probs.values)))
    net.version += 1
    return {name: float(np.mean(values)) for name, values in stats.items()}


class TrainingSeeds:
    """Environment seeds for training episodes, drawn outside the held-out set."""

    def __init__(self, train_seed, held_out):
        self.rng = np.random.default_rng([int(train_seed), 104729])
        self.held_out = frozenset(held_out)

    def draw(self):
        while True:
            seed = int(self.rng.integers(0, 2**31 - 1))
            if seed not in self.held_out:
                return seed

    def check(self, seed):
        if seed in self.held_out:
            log.warning("Held-out seed %d requested for training", seed)
            raise TrainingError("Training episode would use held-out seed {}".format(seed))


def run_episodes(make_loop, jobs, workers=1, progress=False, desc=None):
    """
    Build and run one :class:`ControlLoop` per job. Results keep the job order.

    :param progress: Show a progress bar over finished episodes.
    """

    def run(job):
        loop = make_loop(job)
        loop.run()
        return loop

    bar = dict(total=len(jobs), desc=desc, unit="episode", disable=not progress)
    if workers <= 1:
        return [run(job) for job in tqdm(jobs, **bar)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(run, jobs), **bar))


def collect_rollouts(make_loop, seeds, train_seed, iteration, steps_target, workers=1):
    """
    Run whole episodes in waves of ``workers`` until ``steps_target`` steps are collected.

    Each job is ``(env_seed, rng_seed)`` with ``rng_seed = [train_seed, iteration, n]``.
    """
    loops = []
    collected = 0
    n = 0
    while collected < steps_target:
        jobs = []
        for _ in range(max(workers, 1)):
            env_seed = seeds.draw()
            seeds.check(env_seed)
            jobs.append((env_seed, [int(train_seed), int(iteration), n]))
            n += 1
        for loop in run_episodes(make_loop, jobs, workers):
            loops.append(loop)
            collected += len(loop.steps)
    return loops


def evaluate(
    env_kind, seeds, mediator_factory, planner_factory, penalty=0.05, workers=1, progress=False
):
    """
    Run one episode per seed.

    :param mediator_factory: ``seed -> Mediator``.
    :param planner_factory: ``() -> Planner``.
    :param progress: Show a tqdm bar over the evaluated seeds.
    :rtype: list(AskTrajectory)
    """
    kind = gw.EnvKind.parse(env_kind)

    def make(seed):
        return ControlLoop(kind, seed, mediator_factory(seed), planner_factory(), penalty=penalty)

    loops = run_episodes(
        make, list(seeds), workers, progress=progress, desc="evaluate {}".format(kind.value)
    )
    return [loop.result() for loop in loops]


def summarize(trajectories):
    """``(mean_interactions, mean_timesteps, success_rate)`` of finished episodes."""
    if not trajectories:
        raise UsageError("Nothing to summarize")
    return (
        float(np.mean([t.interactions for t in trajectories])),
        float(np.mean([t.timesteps for t in trajectories])),
        float(np.mean([t.success for t in trajectories])),
    )


@dataclass
class CurvePoint:
    env: str
    policy: str
    train_seed: int
    iteration: int
    mean_interactions: float
    mean_timesteps: float
    success_rate: float

    def better_than(self, other):
        mine = (self.success_rate, -self.mean_interactions)
        return mine > (other.success_rate, -other.mean_interactions)


@dataclass
class TrainResult:
    #: Parameters of the best evaluation, by success rate then interactions.
    network: AskNet
    final_network: AskNet
    curve: List[CurvePoint]
    best: Optional[CurvePoint]


def _train(kind, config, train_seed, test_seeds, net, policy, hooks, workers, progress):
    make_loop, make_batch, make_eval = hooks
    seeds = TrainingSeeds(train_seed, test_seeds)
    optimizer = Adam(net.parameters(), lr=config.lr)
    update_rng = np.random.default_rng([int(train_seed), 7])
    curve: List[CurvePoint] = []
    best, best_values = None, net.state_values()
    iterations = tqdm(
        range(1, config.iterations + 1),
        desc="{} seed {}".format(kind.value, train_seed),
        disable=not progress,
    )
    for iteration in iterations:
        snapshot = net.clone()
        loops = collect_rollouts(
            lambda job: make_loop(job, snapshot),
            seeds,
            train_seed,
            iteration,
            config.steps_per_iteration,
            workers,
        )
        batch = make_batch(loops, snapshot.version)
        stats = ppo_update(batch, net, config, optimizer, update_rng)
        log.debug("Iteration %d: %d samples, %s", iteration, len(batch), stats)
        if iteration % config.eval_interval and iteration != config.iterations:
            continue
        frozen = net.clone()
        mean_interactions, mean_timesteps, success_rate = summarize(make_eval(frozen))
        point = CurvePoint(
            kind.value,
            policy,
            int(train_seed),
            iteration,
            mean_interactions,
            mean_timesteps,
            success_rate,
        )
        curve.append(point)
        log.info(
            "%s seed %s iteration %d: interactions %.2f, timesteps %.2f, success %.2f",
            kind.value,
            train_seed,
            iteration,
            mean_interactions,
            mean_timesteps,
            success_rate,
        )
        if best is None or point.better_than(best):
            best, best_values = point, frozen.state_values()
    best_net = net.clone()
    best_net.load_values(best_values)
    return TrainResult(network=best_net, final_network=net, curve=curve, best=best)


def train(
    env_kind,
    config,
    train_seed,
    test_seeds,
    planner_factory=None,
    network=None,
    workers=1,
    progress=False,
):
    """
    Train a learned mediator with PPO.

    Every iteration collects at least ``steps_per_iteration`` decision steps with a
    sampling snapshot of the network, applies one PPO update and, every
    ``eval_interval`` iterations, evaluates the argmax policy on ``test_seeds``.

    :param env_kind: Environment kind.
    :param config: Hyperparameters.
    :type config: PpoConfig
    :param train_seed: Seed of initialisation, sampling and training environments.
    :param test_seeds: Held-out seeds, used for evaluation only.
    :param planner_factory: ``() -> Planner``, the oracle planner by default.
    :param network: Network to continue training, a fresh one if omitted.
    :param workers: Parallel episodes.
    :param progress: Show a progress bar.
    :rtype: TrainResult
    """
    kind = gw.EnvKind.parse(env_kind)
    planner_factory = planner_factory or (lambda: OraclePlanner(kind))
    net = network or AskNet(NetConfig(outputs=2 * NUM_OPTIONS), seed=int(train_seed))

    def make_loop(job, snapshot):
        env_seed, rng_seed = job
        rng = np.random.default_rng(rng_seed)
        mediator = Mediator(PolicyKind.LEARNED, network=snapshot, rng=rng, sample=True)
        return ControlLoop(
            kind,
            env_seed,
            mediator,
            planner_factory(),
            penalty=config.penalty,
            compare_full_plan=config.compare_full_plan,
            record_inputs=True,
        )

    def make_batch(loops, version):
        return ask_batch([loop.result() for loop in loops], config, version)

    def make_eval(frozen):
        return evaluate(
            kind,
            test_seeds,
            lambda seed: Mediator(PolicyKind.LEARNED, network=frozen),
            planner_factory,
            config.penalty,
            workers,
        )

    hooks = (make_loop, make_batch, make_eval)
    return _train(kind, config, train_seed, test_seeds, net, "learned", hooks, workers, progress)


def train_option_selector(
    env_kind, config, train_seed, test_seeds, network=None, workers=1, progress=False
):
    """
    Train the option selector that plans for the never-asking baseline.

    The mediator never asks. Whenever the plan runs out a :class:`LearnedPlanner`
    chooses the next option and is rewarded with the task reward collected until its
    next choice.

    :rtype: TrainResult
    """
    kind = gw.EnvKind.parse(env_kind)
    selector = NetConfig(in_channels=8, outputs=len(GROUNDED_OPTIONS), head="selector")
    net = network or AskNet(selector, seed=int(train_seed))

    def make_loop(job, snapshot):
        env_seed, rng_seed = job
        planner = LearnedPlanner(snapshot, kind, sample=True, rng=np.random.default_rng(rng_seed))
        return ControlLoop(kind, env_seed, Mediator(PolicyKind.NEVER), planner)

    def make_batch(loops, version):
        return selector_batch([loop.planner.records for loop in loops], config, version)

    def make_eval(frozen):
        return evaluate(
            kind,
            test_seeds,
            lambda seed: Mediator(PolicyKind.NEVER),
            lambda: LearnedPlanner(frozen, kind),
            0.0,
            workers,
        )

    hooks = (make_loop, make_batch, make_eval)
    return _train(kind, config, train_seed, test_seeds, net, "never", hooks, workers, progress)
