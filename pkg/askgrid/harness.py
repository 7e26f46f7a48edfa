"""
Command line harness: train, evaluate, compare, render and serve.

Example::

    askgrid train configs/simple_learned.json
    askgrid eval configs/simple_learned.json --checkpoint runs/simple_learned/checkpoints
    askgrid compare runs/simple_always runs/simple_learned
    askgrid render configs/simple_hard_coded.json --seed 3 --policy hard_coded
    askgrid mock-llm configs/mock_planner.json --port 8000

Exit codes: 0 ok, 1 usage or training failure, 2 configuration, 3 checkpoint,
4 comparison mismatch, 5 server or transport failure.
"""

import argparse
import csv
import hashlib
import json
import logging
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .config import load_config
from .errors import (
    AskgridError,
    CheckpointError,
    ComparisonError,
    ConfigurationError,
    ServerError,
    TrainingError,
    TransportError,
    UsageError,
)
from .mediator import NUM_OPTIONS, Mediator, PolicyKind
from .mockserver import mock_llm_server
from .neural import NetConfig, load_checkpoint, read_checkpoint_header, save_checkpoint
from .options import GROUNDED_OPTIONS
from .planner import LearnedPlanner, OraclePlanner, RemotePlanner, ResponseCache
from .training import ControlLoop, evaluate, train, train_option_selector

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_COMPARE = 4
EXIT_SERVER = 5

#: Most specific first.
EXIT_CODES = (
    (ConfigurationError, EXIT_CONFIG),
    (CheckpointError, EXIT_CHECKPOINT),
    (ComparisonError, EXIT_COMPARE),
    (ServerError, EXIT_SERVER),
    (TransportError, EXIT_SERVER),
    (TrainingError, EXIT_USAGE),
    (UsageError, EXIT_USAGE),
    (AskgridError, EXIT_USAGE),
)

CURVE_COLUMNS = (
    "env",
    "policy",
    "train_seed",
    "iteration",
    "mean_interactions",
    "mean_timesteps",
    "success_rate",
)
EPISODE_COLUMNS = (
    "env",
    "policy",
    "planner",
    "train_seed",
    "repetition",
    "test_seed",
    "interactions",
    "timesteps",
    "success",
    "task_return",
)
ASK_NET = NetConfig(outputs=2 * NUM_OPTIONS)
SELECTOR_NET = NetConfig(in_channels=8, outputs=len(GROUNDED_OPTIONS), head="selector")
CHECKPOINT_SUFFIX = ".w2a"


def planner_factory(config, network=None, session=None):
    """
    ``() -> Planner`` for the configured planner kind.

    :param network: Selector network, required for ``learned``.
    :param session: ``requests``-style session for ``remote``, e.g. a test client.
    """
    kind = config.planner.kind
    env_kind = config.env_kind
    if kind == "oracle":
        return lambda: OraclePlanner(env_kind)
    if kind == "remote":
        endpoint = config.planner.endpoint()
        cache = ResponseCache() if config.planner.cache else None
        style = config.planner.prompt_style
        return lambda: RemotePlanner(endpoint, env_kind, style=style, session=session, cache=cache)
    if network is None:
        raise ConfigurationError(
            "{}: planner.kind 'learned' needs a checkpoint".format(config.source)
        )
    return lambda: LearnedPlanner(network, env_kind)


def make_mediator(config, network=None, repetition=0, seed=0):
    """Mediator of one evaluation episode. The random policy draws from ``[repetition, seed]``."""
    return Mediator(
        config.policy,
        network=network,
        rng=np.random.default_rng([int(repetition), int(seed)]),
        ask_probability=config.mediator.ask_probability,
    )


def checkpoint_path(config, policy, train_seed):
    name = "{}_{}_seed{}{}".format(config.env_kind.value, policy, train_seed, CHECKPOINT_SUFFIX)
    return Path(config.output_dir) / "checkpoints" / name


def write_curves(path, points):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for p in points:
            writer.writerow(
                [
                    p.env,
                    p.policy,
                    p.train_seed,
                    p.iteration,
                    "{:.6f}".format(p.mean_interactions),
                    "{:.6f}".format(p.mean_timesteps),
                    "{:.6f}".format(p.success_rate),
                ]
            )


def cli_train(config_path, progress=False):
    """
    Train one network per training seed.

    The learned mediator is trained when ``mediator.policy`` is ``learned``. The option
    selector is trained when ``mediator.policy`` is ``never`` and ``planner.kind`` is
    ``learned``. Each seed's best network goes to
    ``<output_dir>/checkpoints/<env>_<policy>_seed<k>.w2a`` and every evaluation point to
    ``<output_dir>/curves.csv``.

    :raises ConfigurationError: If the configuration has nothing to train.
    :return: Written checkpoint paths.
    """
    config = load_config(config_path)
    if config.policy is PolicyKind.LEARNED:
        policy = "learned"

        def run(seed):
            return train(
                config.env_kind,
                config.ppo,
                seed,
                config.test_seed_list,
                planner_factory=planner_factory(config),
                workers=config.workers,
                progress=progress,
            )

    elif config.policy is PolicyKind.NEVER and config.planner.kind == "learned":
        policy = "never"

        def run(seed):
            return train_option_selector(
                config.env_kind,
                config.ppo,
                seed,
                config.test_seed_list,
                workers=config.workers,
                progress=progress,
            )

    else:
        raise ConfigurationError(
            "{}: nothing to train for mediator.policy '{}' with planner.kind '{}'".format(
                config.source, config.policy.value, config.planner.kind
            )
        )

    out = Path(config.output_dir)
    points = []
    written = []
    for seed in config.training_seed_list:
        result = run(seed)
        points.extend(result.curve)
        path = checkpoint_path(config, policy, seed)
        save_checkpoint(
            result.network,
            path,
            metadata={
                "env_kind": config.env_kind.value,
                "policy": policy,
                "train_seed": int(seed),
                "iteration": result.best.iteration if result.best else None,
                "config_sha256": config.digest(),
            },
        )
        written.append(path)
    write_curves(out / "curves.csv", points)
    log.info("Wrote %d checkpoints and %d curve rows to %s", len(written), len(points), out)
    return written


def _checkpoint_files(paths):
    files = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            files.extend(sorted(path.glob("*" + CHECKPOINT_SUFFIX)))
        else:
            files.append(path)
    return files


def load_networks(config, paths):
    """
    Load the checkpoints a configuration needs.

    :return: ``(train_seed, network, path)`` triples, or an empty list when no network is needed.
    :raises ConfigurationError: If a needed checkpoint is missing.
    :raises CheckpointError: If a checkpoint does not fit the configuration.
    """
    if not config.needs_checkpoint:
        return []
    files = _checkpoint_files(paths or ())
    if not files:
        raise ConfigurationError(
            "{}: mediator.policy '{}' with planner.kind '{}' requires a checkpoint".format(
                config.source, config.policy.value, config.planner.kind
            )
        )
    expected = ASK_NET if config.policy is PolicyKind.LEARNED else SELECTOR_NET
    loaded = []
    for n, path in enumerate(files):
        if not path.is_file():
            raise ConfigurationError("{}: checkpoint {} does not exist".format(config.source, path))
        net = load_checkpoint(path, expected)
        metadata = read_checkpoint_header(path).get("metadata", {})
        loaded.append((int(metadata.get("train_seed", n)), net, path))
    return loaded


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def git_commit():
    """Commit of the working tree, or ``"unknown"`` outside a git checkout."""
    try:
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            cwd=str(Path(__file__).parent),
            capture_output=True,
            text=True,
            check=False,
        )
    except OSError:
        return "unknown"
    return out.stdout.strip() or "unknown"


@dataclass
class EpisodeRow:
    env: str
    policy: str
    planner: str
    train_seed: Optional[int]
    repetition: int
    test_seed: int
    interactions: int
    timesteps: int
    success: bool
    task_return: float


@dataclass
class PolicySummary:
    mean_interactions: float
    mean_timesteps: float
    success_rate: float
    episodes: int

    @classmethod
    def of(cls, rows):
        if not rows:
            raise UsageError("Nothing to summarize")
        return cls(
            mean_interactions=float(np.mean([r.interactions for r in rows])),
            mean_timesteps=float(np.mean([r.timesteps for r in rows])),
            success_rate=float(np.mean([r.success for r in rows])),
            episodes=len(rows),
        )


@dataclass
class EvalReport:
    """
    Evaluation result of one configuration.

    Aggregates are always recomputed from ``rows``, so they equal the mean of the
    per-episode rows by construction.
    """

    env_kind: str
    rows: List[EpisodeRow]
    provenance: Dict[str, object] = field(default_factory=dict)

    @property
    def policies(self):
        seen = []
        for row in self.rows:
            if row.policy not in seen:
                seen.append(row.policy)
        return seen

    def aggregates(self):
        return {p: PolicySummary.of([r for r in self.rows if r.policy == p]) for p in self.policies}

    def to_dict(self):
        return {
            "env_kind": self.env_kind,
            "aggregates": {p: asdict(s) for p, s in self.aggregates().items()},
            "episodes": [asdict(r) for r in self.rows],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc, source="<report>"):
        try:
            rows = [EpisodeRow(**row) for row in doc["episodes"]]
            report = cls(doc["env_kind"], rows, doc.get("provenance", {}))
        except (KeyError, TypeError) as e:
            raise ComparisonError("{}: not an evaluation report: {}".format(source, e)) from None
        if not rows:
            raise ComparisonError("{}: report has no episodes".format(source))
        return report

    def save(self, out_dir):
        """Write ``report.json`` and ``episodes.csv`` to ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        (out / "report.json").write_text(text, encoding="utf-8")
        with open(out / "episodes.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(EPISODE_COLUMNS)
            for row in self.rows:
                writer.writerow(
                    [
                        row.env,
                        row.policy,
                        row.planner,
                        "" if row.train_seed is None else row.train_seed,
                        row.repetition,
                        row.test_seed,
                        row.interactions,
                        row.timesteps,
                        int(row.success),
                        "{:.6f}".format(row.task_return),
                    ]
                )
        return out / "report.json"

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / "report.json"
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigurationError(
                "{}: cannot read report: {}".format(path, e.strerror or e)
            ) from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(
                "{}:{}:{}: {}".format(path, e.lineno, e.colno, e.msg)
            ) from None
        return cls.from_dict(doc, str(path))


def run_evaluation(config, networks=(), session=None, progress=False):
    """
    Evaluate a configuration on its test seeds.

    Learned configurations run once per loaded network, the random policy runs
    ``random_repetitions`` times and every other policy runs once.

    :param networks: ``(train_seed, network, path)`` triples from :func:`load_networks`.
    :param progress: Show a progress bar per evaluation sweep.
    :rtype: list(EpisodeRow)
    """
    policy = config.policy
    if config.needs_checkpoint:
        runs = [(train_seed, 0, net) for train_seed, net, _ in networks]
    elif policy is PolicyKind.RANDOM:
        runs = [(None, rep, None) for rep in range(config.random_repetitions)]
    else:
        runs = [(None, 0, None)]

    rows = []
    for train_seed, rep, net in runs:
        ask_net = net if policy is PolicyKind.LEARNED else None
        selector_net = net if config.planner.kind == "learned" else None
        results = evaluate(
            config.env_kind,
            config.test_seed_list,
            lambda seed: make_mediator(config, ask_net, rep, seed),
            planner_factory(config, selector_net, session),
            config.ppo.penalty,
            config.workers,
            progress=progress,
        )
        rows.extend(
            EpisodeRow(
                env=config.env_kind.value,
                policy=policy.value,
                planner=config.planner.kind,
                train_seed=train_seed,
                repetition=rep,
                test_seed=int(t.seed),
                interactions=int(t.interactions),
                timesteps=int(t.timesteps),
                success=bool(t.success),
                task_return=t.task_return,
            )
            for t in results
        )
    return rows


def cli_eval(config_path, checkpoints=(), session=None, progress=False):
    """
    Evaluate a configuration and write ``report.json`` and ``episodes.csv`` to its output
    directory.

    :param checkpoints: Checkpoint files or directories, needed by learned configurations.
    :param session: ``requests``-style session for a remote planner.
    :rtype: EvalReport
    """
    config = load_config(config_path)
    networks = load_networks(config, checkpoints)
    rows = run_evaluation(config, networks, session, progress=progress)
    report = EvalReport(
        config.env_kind.value,
        rows,
        provenance={
            "config_sha256": config.digest(),
            "checkpoints": [
                {"path": str(path), "sha256": file_sha256(path)} for _, _, path in networks
            ],
            "commit": git_commit(),
            "askgrid_version": __version__,
        },
    )
    path = report.save(config.output_dir)
    summary = report.aggregates()[config.policy.value]
    log.info(
        "%s %s: interactions %.2f, timesteps %.2f, success %.2f -> %s",
        config.env_kind.value,
        config.policy.value,
        summary.mean_interactions,
        summary.mean_timesteps,
        summary.success_rate,
        path,
    )
    return report


def _label_columns(reports):
    columns = []
    used = {}
    for report in reports:
        for policy, summary in report.aggregates().items():
            used[policy] = used.get(policy, 0) + 1
            label = policy if used[policy] == 1 else "{} ({})".format(policy, used[policy])
            columns.append((label, summary))
    return columns


_METRICS = (
    ("interactions", "mean_interactions", min, "{:.2f}"),
    ("timesteps", "mean_timesteps", min, "{:.2f}"),
    ("success rate", "success_rate", max, "{:.0%}"),
)


def _table(header, rows):
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return lines


def compare_table(columns):
    """
    Markdown comparison of ``(label, PolicySummary)`` columns.

    The first table holds one row per metric with the best value in bold. The second
    holds differences against the first column and, when an ``always`` column exists,
    the share of its interactions each policy needs.
    """
    labels = [label for label, _ in columns]
    metric_rows = []
    for name, attr, best_of, fmt in _METRICS:
        values = [getattr(summary, attr) for _, summary in columns]
        best = best_of(values)
        cells = ["**{}**".format(fmt.format(v)) if v == best else fmt.format(v) for v in values]
        metric_rows.append([name] + cells)

    base_label, base = columns[0]
    delta_rows = []
    for name, attr, _, _ in _METRICS:
        deltas = [getattr(summary, attr) - getattr(base, attr) for _, summary in columns]
        label = "{} vs {}".format(name, base_label)
        delta_rows.append([label] + ["{:+.2f}".format(d) for d in deltas])
    always = next((summary for label, summary in columns if label == PolicyKind.ALWAYS.value), None)
    if always is not None and always.mean_interactions > 0:
        shares = [summary.mean_interactions / always.mean_interactions for _, summary in columns]
        delta_rows.append(["interactions / always"] + ["{:.2f}".format(s) for s in shares])
    lines = _table(["metric"] + labels, metric_rows)
    lines.append("")
    lines.extend(_table(["difference"] + labels, delta_rows))
    return "\n".join(lines) + "\n"


def cli_compare(report_paths, output=None):
    """
    Side-by-side markdown table of evaluation reports.

    :raises ComparisonError: With fewer than two reports or mixed environment kinds.
    :rtype: str
    """
    if len(report_paths) < 2:
        raise ComparisonError(
            "compare needs at least two reports, got {}".format(len(report_paths))
        )
    reports = [EvalReport.load(path) for path in report_paths]
    kinds = sorted({report.env_kind for report in reports})
    if len(kinds) > 1:
        raise ComparisonError("Reports mix environment kinds: {}".format(", ".join(kinds)))
    text = "## {}\n\n".format(kinds[0]) + compare_table(_label_columns(reports))
    if output is not None:
        Path(output).write_text(text, encoding="utf-8")
    return text


def cli_render(config_path, seed, policy=None, checkpoint=None, session=None):
    """
    Run one episode with tracing and return the trace.

    Every timestep shows the ASCII frame, the observation text, the decision, planner
    answers, the running option and the action.

    :param policy: Overrides ``mediator.policy`` of the configuration.
    :rtype: str
    """
    config = load_config(config_path)
    if policy is not None:
        config.mediator.policy = policy
        config.validate()
    networks = load_networks(config, [checkpoint] if checkpoint else [])
    net = networks[0][1] if networks else None
    ask_net = net if config.policy is PolicyKind.LEARNED else None
    selector_net = net if config.planner.kind == "learned" else None
    loop = ControlLoop(
        config.env_kind,
        int(seed),
        make_mediator(config, ask_net, 0, seed),
        planner_factory(config, selector_net, session)(),
        penalty=config.ppo.penalty,
        compare_full_plan=config.ppo.compare_full_plan,
        debug=True,
        log_size=None,
    )
    result = loop.run()
    log.info("Seed %s: success %s after %d steps", seed, result.success, len(result.steps))
    return "\n".join(loop.trace) + "\n"


def configure_logging(verbose=False, debug=False):
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="askgrid", description="Learn when to ask a planner for help."
    )
    parser.add_argument("--version", action="version", version="%(prog)s " + __version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    parser.add_argument("--debug", action="store_true", help="log everything")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="train networks for every training seed")
    p.add_argument("config")
    p.add_argument("--progress", action="store_true", help="show progress bars")
    p.set_defaults(handler=lambda args: cli_train(args.config, progress=args.progress))

    p = commands.add_parser("eval", help="evaluate on the held-out seeds")
    p.add_argument("config")
    p.add_argument("--checkpoint", action="append", default=[], help="checkpoint file or directory")
    p.add_argument("--progress", action="store_true", help="show progress bars")
    p.set_defaults(
        handler=lambda args: cli_eval(args.config, args.checkpoint, progress=args.progress)
    )

    p = commands.add_parser("compare", help="compare evaluation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("-o", "--output", help="also write the table to this file")
    p.set_defaults(handler=lambda args: print(cli_compare(args.reports, args.output), end=""))

    p = commands.add_parser("render", help="print the trace of one episode")
    p.add_argument("config")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--policy", help="override mediator.policy")
    p.add_argument("--checkpoint")
    p.set_defaults(
        handler=lambda args: print(
            cli_render(args.config, args.seed, args.policy, args.checkpoint), end=""
        )
    )

    p = commands.add_parser("mock-llm", help="serve scripted planner completions")
    p.add_argument("script")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--log", dest="log_path", help="append requests to this JSON-lines file")
    p.set_defaults(
        handler=lambda args: mock_llm_server(args.script, args.port, args.host, args.log_path)
    )
    return parser


def exit_code(error):
    for cls, code in EXIT_CODES:
        if isinstance(error, cls):
            return code
    return EXIT_USAGE


def main(argv=None):
    """
    Entry point of the ``askgrid`` command.

    :return: Process exit code.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.debug)
    try:
        args.handler(args)
    except AskgridError as e:
        code = exit_code(e)
        log.debug("Failed with exit code %d", code, exc_info=True)
        print("askgrid {}: {}".format(args.command, e), file=sys.stderr)
        return code
    return EXIT_OK
