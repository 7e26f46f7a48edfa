"""
Hard-coded option policies.

An option is a short skill such as "go to the green key". Each option maps the
current observation to one primitive action and decides for itself when it
has finished. Planning happens over the agent's belief map: unexplored cells
are never walked on, and moving obstacles only block the actor, not the
initiation test.
"""

import logging
from collections import deque
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from . import gridworld as gw
from .errors import UsageError

log = logging.getLogger(__name__)

DEFAULT_STEP_BUDGET = 100
#: Objects an option may target.
TARGET_OBJECTS = (gw.KEY, gw.BOX, gw.DOOR)

_MOVES = (gw.FORWARD, gw.TURN_LEFT, gw.TURN_RIGHT)
_DIR_X = np.array([v[0] for v in gw.DIR_VEC])
_DIR_Y = np.array([v[1] for v in gw.DIR_VEC])


class OptionKind(str, Enum):
    EXPLORE = "explore"
    GO_TO = "go to"
    PICKUP = "pick up"
    TOGGLE = "toggle"


class TerminationReason(str, Enum):
    GOAL_REACHED = "goal_reached"
    BUDGET_EXHAUSTED = "budget_exhausted"
    INAPPLICABLE = "inapplicable"


class ObjectRef(NamedTuple):
    object_id: int
    color_id: int

    @property
    def text(self):
        return "{} {}".format(gw.COLOR_NAMES[self.color_id], gw.OBJECT_NAMES[self.object_id])


@dataclass(frozen=True)
class OptionSpec:
    """
    One option of the planning vocabulary.

    Example::

        OptionSpec(OptionKind.GO_TO, ObjectRef(gw.KEY, gw.GREEN)).text
        # 'go to the green key'
    """

    kind: OptionKind
    target: Optional[ObjectRef] = None
    step_budget: int = DEFAULT_STEP_BUDGET

    def __post_init__(self):
        if (self.kind is OptionKind.EXPLORE) != (self.target is None):
            raise UsageError("Only explore goes without a target: {!r}".format(self))
        if self.target is not None and self.target.object_id not in TARGET_OBJECTS:
            raise UsageError("Options target keys, boxes or doors, got {!r}".format(self.target))
        if self.step_budget <= 0:
            raise UsageError("step_budget must be positive")

    @property
    def text(self):
        if self.kind is OptionKind.EXPLORE:
            return "explore"
        return "{} the {}".format(self.kind.value, self.target.text)

    def __str__(self):
        return self.text


EXPLORE = OptionSpec(OptionKind.EXPLORE)


def go_to(object_id, color_id):
    return OptionSpec(OptionKind.GO_TO, ObjectRef(object_id, color_id))


def pickup(object_id, color_id):
    return OptionSpec(OptionKind.PICKUP, ObjectRef(object_id, color_id))


def toggle(object_id, color_id):
    return OptionSpec(OptionKind.TOGGLE, ObjectRef(object_id, color_id))


#: The full grounded vocabulary, ``1 + (kind * 3 + object) * 6 + color`` after explore.
GROUNDED_OPTIONS = (EXPLORE,) + tuple(
    OptionSpec(kind, ObjectRef(object_id, color_id))
    for kind in (OptionKind.GO_TO, OptionKind.PICKUP, OptionKind.TOGGLE)
    for object_id in TARGET_OBJECTS
    for color_id in range(len(gw.COLOR_NAMES))
)


@dataclass
class Plan:
    """An ordered list of one or more options with a cursor on the active one."""

    options: Tuple[OptionSpec, ...]
    cursor: int = 0

    def __post_init__(self):
        self.options = tuple(self.options)
        if not self.options:
            raise UsageError("A plan needs at least one option")
        if not 0 <= self.cursor <= len(self.options):
            raise UsageError("Plan cursor {} out of range".format(self.cursor))

    @property
    def current(self):
        return None if self.exhausted else self.options[self.cursor]

    @property
    def exhausted(self):
        return self.cursor >= len(self.options)

    def remaining(self):
        return self.options[self.cursor :]

    def advance(self):
        if not self.exhausted:
            self.cursor += 1

    def copy(self):
        return Plan(self.options, self.cursor)

    @property
    def text(self):
        return ", ".join(option.text for option in self.options)


@dataclass(frozen=True)
class OptionProgress:
    """
    Bookkeeping of the running option.

    Explore also keeps its sweep here: ``sweep_origin`` is the top-left cell once the
    agent has stood on it and ``waypoint`` indexes the next cell of the row sweep.
    """

    steps_taken: int = 0
    termination_reason: Optional[TerminationReason] = None
    sweep_origin: Optional[Tuple[int, int]] = None
    waypoint: int = 0

    @property
    def terminated(self):
        return self.termination_reason is not None

    def tick(self):
        return replace(self, steps_taken=self.steps_taken + 1)


class BeliefMap:
    """The agent's knowledge of the room, decoded from an observation."""

    def __init__(self, observation, view_size=gw.VIEW_SIZE):
        obs = np.asarray(observation)
        self.width, self.height = obs.shape[:2]
        self.objects = obs[:, :, 0]
        self.colors = obs[:, :, 1]
        self.states = obs[:, :, 2]
        self.explored = self.objects != gw.UNEXPLORED
        self.view_size = view_size
        agent = np.argwhere((obs[:, :, 3] >= 0) & (obs[:, :, 3] < gw.NO_AGENT))
        if len(agent) != 1:
            raise UsageError("Observation must show exactly one agent, found {}".format(len(agent)))
        x, y = (int(v) for v in agent[0])
        self.agent_pos = (x, y)
        self.agent_dir = int(obs[x, y, 3])

    @property
    def start(self):
        return self.agent_pos + (self.agent_dir,)

    @property
    def front(self):
        dx, dy = gw.DIR_VEC[self.agent_dir]
        return self.agent_pos[0] + dx, self.agent_pos[1] + dy

    def passable(self, through_obstacles=False):
        """Boolean map of cells the agent may stand on."""
        open_door = (self.objects == gw.DOOR) & (self.states == gw.OPEN)
        cells = (self.objects == gw.EMPTY) | open_door
        if through_obstacles:
            cells |= self.objects == gw.OBSTACLE
        cells[self.agent_pos] = True
        return cells

    def targets(self, ref):
        found = np.argwhere(
            self.explored & (self.objects == ref.object_id) & (self.colors == ref.color_id)
        )
        return [(int(x), int(y)) for x, y in found]

    def in_bounds(self, x, y):
        return 0 <= x < self.width and 0 <= y < self.height

    def door_cells(self):
        return [(int(x), int(y)) for x, y in np.argwhere(self.objects == gw.DOOR)]


def _successor(pose, action):
    x, y, d = pose
    if action == gw.FORWARD:
        dx, dy = gw.DIR_VEC[d]
        return x + dx, y + dy, d
    if action == gw.TURN_LEFT:
        return x, y, (d + 3) % 4
    return x, y, (d + 1) % 4


def _expand(passable, pose):
    width, height = passable.shape
    for action in _MOVES:
        nxt = _successor(pose, action)
        if action == gw.FORWARD:
            x, y = nxt[0], nxt[1]
            if not (0 <= x < width and 0 <= y < height) or not passable[x, y]:
                continue
        yield action, nxt


def _unwind(parents, pose):
    actions = []
    while parents[pose] is not None:
        pose, action = parents[pose]
        actions.append(action)
    actions.reverse()
    return actions


def reachable_poses(passable, start):
    """
    Breadth-first search over ``(x, y, direction)`` poses with unit action costs.

    :return: Poses in visiting order, their distances and back-pointers.
    """
    parents: Dict[tuple, Optional[tuple]] = {start: None}
    dist = {start: 0}
    order = [start]
    queue = deque([start])
    while queue:
        pose = queue.popleft()
        for action, nxt in _expand(passable, pose):
            if nxt not in parents:
                parents[nxt] = (pose, action)
                dist[nxt] = dist[pose] + 1
                order.append(nxt)
                queue.append(nxt)
    return order, dist, parents


def shortest_path(passable, start, goals):
    """
    Shortest action sequence from ``start`` to any pose in ``goals``.

    Among equally short goals the one with the smallest ``(direction, x, y)`` wins.
    Returns ``None`` when no goal is reachable.
    """
    if start in goals:
        return []
    parents: Dict[tuple, Optional[tuple]] = {start: None}
    frontier = [start]
    while frontier:
        found = []
        next_frontier = []
        for pose in frontier:
            for action, nxt in _expand(passable, pose):
                if nxt in parents:
                    continue
                parents[nxt] = (pose, action)
                next_frontier.append(nxt)
                if nxt in goals:
                    found.append(nxt)
        if found:
            best = min(found, key=lambda p: (p[2], p[0], p[1]))
            return _unwind(parents, best)
        frontier = next_frontier
    return None


def facing_poses(passable, cells):
    """Poses on passable cells whose front cell is one of ``cells``."""
    width, height = passable.shape
    goals = set()
    for cx, cy in cells:
        for d, (dx, dy) in enumerate(gw.DIR_VEC):
            x, y = cx - dx, cy - dy
            if 0 <= x < width and 0 <= y < height and passable[x, y]:
                goals.add((x, y, d))
    return goals


def sweep_order(width, height):
    """Cells row by row from the top-left corner, alternating direction on each row."""
    for y in range(height):
        xs = range(width) if y % 2 == 0 else range(width - 1, -1, -1)
        for x in xs:
            yield x, y


def explore_target(belief, passable):
    """
    Pick the pose the explore option heads for next, or ``None`` once nothing is left.

    The first unexplored cell in sweep order that some reachable pose would bring into
    view decides the target. The nearest such pose wins, then the one revealing the most
    unexplored cells.

    :return: ``(pose, parents)`` with the search back-pointers, or ``None``.
    """
    unexplored = ~belief.explored
    if not unexplored.any():
        return None
    order, dist, parents = reachable_poses(passable, belief.start)
    poses = np.array(order)
    dists = np.array([dist[p] for p in order])
    fx, fy = _DIR_X[poses[:, 2]], _DIR_Y[poses[:, 2]]
    rx, ry = _DIR_X[(poses[:, 2] + 1) % 4], _DIR_Y[(poses[:, 2] + 1) % 4]
    size, half = belief.view_size, belief.view_size // 2
    hidden = np.argwhere(unexplored)

    def covers(ux, uy):
        dx, dy = ux - poses[:, 0], uy - poses[:, 1]
        i = dx * fx + dy * fy
        j = dx * rx + dy * ry
        return (i >= 0) & (i < size) & (np.abs(j) <= half)

    for ux, uy in sweep_order(belief.width, belief.height):
        if not unexplored[ux, uy]:
            continue
        hits = covers(ux, uy) & (dists > 0)
        if not hits.any():
            continue
        nearest = np.flatnonzero(hits & (dists == dists[hits].min()))
        gains = np.zeros(len(nearest), dtype=int)
        for hx, hy in hidden:
            gains += covers(hx, hy)[nearest]
        best = int(nearest[int(np.argmax(gains))])
        return tuple(int(v) for v in poses[best]), parents
    return None


def sweep_tour(origin, width, height):
    """
    Interior cells of a row sweep starting at ``origin``.

    The origin row runs east to the last interior column, each following row reverses
    direction and covers the full interior width.
    """
    ox, oy = origin
    tour = [(x, oy) for x in range(ox, width - 1)]
    for n, y in enumerate(range(oy + 1, height - 1)):
        xs = range(width - 2, 0, -1) if n % 2 == 0 else range(1, width - 1)
        tour.extend((x, y) for x in xs)
    return tour


def _reached_cells(belief):
    _, dist, _ = reachable_poses(belief.passable(through_obstacles=True), belief.start)
    return {(x, y) for x, y, _ in dist}


def _row_known(belief, y):
    """Whether walking along row ``y`` can no longer reveal anything."""
    half = belief.view_size // 2
    return bool(belief.explored[:, max(y - half, 0) : y + half + 1].all())


def sweep_state(belief, progress):
    """
    Where the explore option stands in its sweep.

    Until the agent has stood on the top-left reachable explored cell, that cell is the
    target. From there the row sweep takes over, skipping cells the agent stands on or
    cannot reach. Rows whose view band is already explored are skipped, the corner's row
    included. An exhausted sweep has no target.

    :return: ``(sweep_origin, waypoint, target_cell)``, the target possibly ``None``.
    """
    reached = _reached_cells(belief)
    origin, index = progress.sweep_origin, progress.waypoint
    if origin is None:
        corner = min(reached, key=lambda cell: (cell[1], cell[0]))
        if corner != belief.agent_pos and not _row_known(belief, corner[1]):
            return None, 0, corner
        origin, index = corner, 0
    tour = sweep_tour(origin, belief.width, belief.height)

    def skipped(cell):
        return cell == belief.agent_pos or cell not in reached or _row_known(belief, cell[1])

    while index < len(tour) and skipped(tour[index]):
        index += 1
    return origin, index, tour[index] if index < len(tour) else None


def _droppable(belief, cell, doors):
    x, y = cell
    if not belief.in_bounds(x, y) or not belief.explored[x, y]:
        return False
    if belief.objects[x, y] != gw.EMPTY or cell == belief.agent_pos:
        return False
    return all(abs(x - dx) + abs(y - dy) != 1 for dx, dy in doors)


def _path_action(passable, start, goals):
    path = shortest_path(passable, start, goals)
    return path[0] if path else gw.TURN_LEFT


def option_action(option, observation, agent_pos=None, agent_dir=None, carried=None, progress=None):
    """
    Next primitive action of an option.

    When the target cannot be reached right now the option waits by turning left.
    Explore first walks to the top-left reachable cell, then sweeps the room row by row
    and finally heads for whatever the sweep left unseen.

    :param option: The active option.
    :type option: OptionSpec
    :param observation: Current observation.
    :param agent_pos: Agent position, read from the observation when omitted.
    :param agent_dir: Agent direction, read from the observation when omitted.
    :param carried: Color of the carried key or ``None``.
    :param progress: Progress of the option, which carries the explore sweep.
    :type progress: OptionProgress
    :rtype: int
    """
    belief = BeliefMap(observation)
    if agent_pos is not None:
        belief.agent_pos = tuple(agent_pos)
    if agent_dir is not None:
        belief.agent_dir = agent_dir
    passable = belief.passable()
    start = belief.start

    if option.kind is OptionKind.EXPLORE:
        _, _, cell = sweep_state(belief, progress or OptionProgress())
        if cell is not None:
            return _path_action(passable, start, {cell + (d,) for d in range(4)})
        found = explore_target(belief, passable)
        if found is None:
            return gw.TURN_LEFT
        goal, parents = found
        return _unwind(parents, goal)[0]

    ref = option.target
    front = belief.front
    facing_target = belief.in_bounds(*front) and front in belief.targets(ref)

    if option.kind is OptionKind.PICKUP:
        if carried == ref.color_id:
            return gw.TURN_LEFT
        if carried is not None:
            doors = belief.door_cells()
            if _droppable(belief, front, doors):
                return gw.DROP
            spots = [
                (int(x), int(y))
                for x, y in np.argwhere(belief.explored & (belief.objects == gw.EMPTY))
                if _droppable(belief, (int(x), int(y)), doors)
            ]
            return _path_action(passable, start, facing_poses(passable, spots))
        if facing_target:
            return gw.PICKUP
    elif option.kind is OptionKind.TOGGLE and facing_target:
        return gw.TOGGLE

    if option.kind is OptionKind.GO_TO and facing_target:
        return gw.TURN_LEFT
    return _path_action(passable, start, facing_poses(passable, belief.targets(ref)))


def _initiable(option, belief, reached):
    if option.kind is OptionKind.EXPLORE:
        return explore_target(belief, belief.passable(through_obstacles=True)) is not None
    ref = option.target
    if option.kind is OptionKind.PICKUP and ref.object_id != gw.KEY:
        return False
    if option.kind is OptionKind.TOGGLE and ref.object_id == gw.KEY:
        return False
    passable = belief.passable(through_obstacles=True)
    return any(goal in reached for goal in facing_poses(passable, belief.targets(ref)))


def initiable(option, observation, carried=None):
    """
    Whether an option may start from this observation.

    Targets must be explored and reachable, counting obstacles as passable. Pick up only
    applies to keys and toggle only to boxes and doors. Explore applies while some
    unexplored cell can still be brought into view.

    :rtype: bool
    """
    belief = BeliefMap(observation)
    _, dist, _ = reachable_poses(belief.passable(through_obstacles=True), belief.start)
    return _initiable(option, belief, dist)


def initiable_mask(observation, carried=None, options=GROUNDED_OPTIONS):
    """:func:`initiable` for many options at once, sharing one search."""
    belief = BeliefMap(observation)
    _, dist, _ = reachable_poses(belief.passable(through_obstacles=True), belief.start)
    explorable = None
    mask = np.zeros(len(options), dtype=bool)
    for i, option in enumerate(options):
        if option.kind is OptionKind.EXPLORE:
            if explorable is None:
                explorable = _initiable(option, belief, dist)
            mask[i] = explorable
        else:
            mask[i] = _initiable(option, belief, dist)
    return mask


def _goal_reached(option, belief, progress, carried):
    if option.kind is OptionKind.EXPLORE:
        return explore_target(belief, belief.passable(through_obstacles=True)) is None
    ref = option.target
    if option.kind is OptionKind.GO_TO:
        return belief.in_bounds(*belief.front) and belief.front in belief.targets(ref)
    if option.kind is OptionKind.PICKUP:
        return ref.object_id == gw.KEY and carried == ref.color_id
    if ref.object_id == gw.BOX:
        return progress.steps_taken > 0 and not belief.targets(ref)
    if ref.object_id == gw.DOOR:
        return any(belief.states[cell] == gw.OPEN for cell in belief.targets(ref))
    return False


def option_terminated(option, observation, progress, carried=None):
    """
    Check an option for termination.

    Reasons are checked in order: goal reached, step budget exhausted, no longer
    initiable. A progress that already terminated is returned unchanged.

    :rtype: OptionProgress
    """
    if progress.terminated:
        return progress
    belief = BeliefMap(observation)
    if option.kind is OptionKind.EXPLORE:
        origin, index, _ = sweep_state(belief, progress)
        progress = replace(progress, sweep_origin=origin, waypoint=index)
    if _goal_reached(option, belief, progress, carried):
        reason = TerminationReason.GOAL_REACHED
    elif progress.steps_taken >= option.step_budget:
        reason = TerminationReason.BUDGET_EXHAUSTED
    elif not initiable(option, observation, carried):
        reason = TerminationReason.INAPPLICABLE
    else:
        return progress
    log.debug(
        "Option %r terminated after %d steps: %s", option.text, progress.steps_taken, reason.value
    )
    return replace(progress, termination_reason=reason)
