"""
Partially observable door-key gridworlds.

Five single-room tasks share one set of mechanics: the agent must find the key
for a locked door in the outer wall and open it. The hidden world state is a
:class:`WorldState`; the agent only ever sees the fog-of-war observation
returned by :func:`observe`, a ``width x height x 4`` integer array holding
``[object, color, state, direction]`` per cell and ``[-1, -1, -1, -1]`` for
cells it has not explored yet.

Example::

    state, obs = reset("SimpleDoorKey", seed=3)
    result = step(state, FORWARD)
    print(render_ascii(state))
"""

import copy
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Set, Tuple

import numpy as np

from .errors import ConfigurationError, UsageError

log = logging.getLogger(__name__)

# Object IDs
EMPTY = 0
WALL = 1
DOOR = 2
KEY = 3
BOX = 4
OBSTACLE = 5

# Color IDs
RED = 0
GREEN = 1
BLUE = 2
PURPLE = 3
YELLOW = 4
GREY = 5
#: Color sentinel of empty and wall cells.
NO_COLOR = 6

# Door states. Boxes and every other object use state 0.
OPEN = 0
CLOSED = 1
LOCKED = 2

# Agent directions
EAST = 0
SOUTH = 1
WEST = 2
NORTH = 3
#: Direction channel of explored cells the agent is not standing on.
NO_AGENT = 4
#: Every channel of an unexplored cell.
UNEXPLORED = -1

# Primitive actions
TURN_LEFT = 0
TURN_RIGHT = 1
FORWARD = 2
PICKUP = 3
DROP = 4
TOGGLE = 5

DIR_VEC = ((1, 0), (0, 1), (-1, 0), (0, -1))
OBJECT_NAMES = {
    EMPTY: "empty",
    WALL: "wall",
    DOOR: "door",
    KEY: "key",
    BOX: "box",
    OBSTACLE: "obstacle",
}
COLOR_NAMES = ("red", "green", "blue", "purple", "yellow", "grey")
ACTION_NAMES = ("turn_left", "turn_right", "forward", "pickup", "drop", "toggle")

VIEW_SIZE = 7
MIN_ROOM = 5
MAX_ROOM = 10
#: Side of the padded canvas used for network inputs (largest room plus its walls).
MAX_SIZE = MAX_ROOM + 2
N_COLORED_KEYS = 2
N_OBSTACLES = 2
SNAPSHOT_VERSION = 1

_GLYPHS = {EMPTY: ".", WALL: "#", DOOR: "D", KEY: "K", BOX: "B", OBSTACLE: "O"}
_HIDDEN_GLYPHS = {"#": "+", ".": ","}
_AGENT_GLYPHS = ">v<^"


class EnvKind(str, Enum):
    SIMPLE_DOOR_KEY = "SimpleDoorKey"
    KEY_IN_BOX = "KeyInBox"
    RANDOM_BOX_KEY = "RandomBoxKey"
    COLORED_DOOR_KEY = "ColoredDoorKey"
    MOVING_OBSTACLE = "MovingObstacle"

    @classmethod
    def parse(cls, value):
        """
        Look up an environment kind by its name.

        :param value: An :class:`EnvKind` or its string value, e.g. ``"KeyInBox"``.
        :raises ConfigurationError: If the name is unknown.
        """
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            names = ", ".join(kind.value for kind in cls)
            raise ConfigurationError(
                "Unknown env_kind {!r}, expected one of: {}".format(value, names)
            ) from None


class Cell(NamedTuple):
    object_id: int
    color_id: int
    state_id: int


EMPTY_CELL = Cell(EMPTY, NO_COLOR, 0)
WALL_CELL = Cell(WALL, NO_COLOR, 0)


@dataclass
class WorldState:
    """
    The hidden full state of one episode.

    ``grid`` is indexed ``grid[x, y]`` and holds ``(object, color, state)`` triples.
    Box contents are hidden from the observation and kept in ``box_contents``.
    All randomness after generation (moving obstacles) flows through ``rng``.
    """

    env_kind: EnvKind
    width: int
    height: int
    grid: np.ndarray
    agent_pos: Tuple[int, int]
    agent_dir: int
    door_pos: Tuple[int, int]
    rng: np.random.Generator
    carried: Optional[int] = None
    explored: Optional[np.ndarray] = None
    step_count: int = 0
    max_steps: int = 0
    box_contents: Dict[Tuple[int, int], int] = field(default_factory=dict)
    done: bool = False
    success: bool = False
    view_size: int = VIEW_SIZE

    def __post_init__(self):
        if self.explored is None:
            self.explored = np.zeros((self.width, self.height), dtype=bool)
        if not self.max_steps:
            self.max_steps = 4 * self.width * self.height

    def cell(self, x, y):
        return Cell(*(int(v) for v in self.grid[x, y]))

    def front_pos(self):
        dx, dy = DIR_VEC[self.agent_dir]
        return self.agent_pos[0] + dx, self.agent_pos[1] + dy

    @property
    def rng_state(self):
        return self.rng.bit_generator.state

    def copy(self):
        return copy.deepcopy(self)


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    success: bool


#: Type of the fog-of-war observation, a ``(width, height, 4)`` int64 array.
ObservationTensor = np.ndarray


def _kind_salt(kind):
    return list(EnvKind).index(kind)


def _pick(rng, cells):
    return cells[int(rng.integers(len(cells)))]


def _free_cell(rng, width, height, reserved, objects):
    """Pick an interior cell at Chebyshev distance >= 2 from every placed object."""
    candidates = [
        (x, y)
        for x in range(1, width - 1)
        for y in range(1, height - 1)
        if (x, y) not in reserved
        and all(max(abs(x - ox), abs(y - oy)) >= 2 for ox, oy in objects)
    ]
    if not candidates:
        raise ConfigurationError("Room {}x{} has no room left for objects".format(width, height))
    return _pick(rng, candidates)


def generate(env_kind, seed):
    """
    Generate a solvable instance of an environment.

    Identical ``(env_kind, seed)`` pairs always give identical states. Objects keep at
    least one free cell between each other and never sit in front of the door, so every
    floor cell stays reachable.

    :param env_kind: Environment kind or its name.
    :type env_kind: EnvKind or str
    :param seed: Non-negative generation seed.
    :type seed: int
    :return: The new world state, with nothing explored yet.
    :rtype: WorldState
    """
    kind = EnvKind.parse(env_kind)
    if seed < 0:
        raise ConfigurationError("seed must be >= 0, got {}".format(seed))
    rng = np.random.default_rng([int(seed), _kind_salt(kind)])

    inner_w, inner_h = (int(v) for v in rng.integers(MIN_ROOM, MAX_ROOM + 1, size=2))
    width, height = inner_w + 2, inner_h + 2
    grid = np.zeros((width, height, 3), dtype=np.int64)
    grid[:, :] = EMPTY_CELL
    grid[0, :] = WALL_CELL
    grid[-1, :] = WALL_CELL
    grid[:, 0] = WALL_CELL
    grid[:, -1] = WALL_CELL

    side = int(rng.integers(4))
    if side == EAST:
        door = (width - 1, int(rng.integers(1, height - 1)))
    elif side == SOUTH:
        door = (int(rng.integers(1, width - 1)), height - 1)
    elif side == WEST:
        door = (0, int(rng.integers(1, height - 1)))
    else:
        door = (int(rng.integers(1, width - 1)), 0)
    door_color = int(rng.integers(len(COLOR_NAMES)))
    grid[door] = (DOOR, door_color, LOCKED)
    inward = DIR_VEC[(side + 2) % 4]
    door_front = (door[0] + inward[0], door[1] + inward[1])

    interior = [
        (x, y)
        for x in range(1, width - 1)
        for y in range(1, height - 1)
        if (x, y) != door_front
    ]
    agent_pos = _pick(rng, interior)
    agent_dir = int(rng.integers(4))
    reserved = {door_front, agent_pos}
    objects: List[Tuple[int, int]] = []
    box_contents = {}

    if kind is EnvKind.COLORED_DOOR_KEY:
        others = [c for c in range(len(COLOR_NAMES)) if c != door_color]
        extra = rng.choice(others, N_COLORED_KEYS - 1, replace=False)
        colors = [door_color] + [int(c) for c in extra]
        for color in colors:
            pos = _free_cell(rng, width, height, reserved, objects)
            objects.append(pos)
            grid[pos] = (KEY, color, 0)
    else:
        if kind is EnvKind.KEY_IN_BOX:
            boxed = True
        elif kind is EnvKind.RANDOM_BOX_KEY:
            boxed = bool(rng.random() < 0.5)
        else:
            boxed = False
        pos = _free_cell(rng, width, height, reserved, objects)
        objects.append(pos)
        if boxed:
            grid[pos] = (BOX, int(rng.integers(len(COLOR_NAMES))), 0)
            box_contents[pos] = door_color
        else:
            grid[pos] = (KEY, door_color, 0)

    if kind is EnvKind.MOVING_OBSTACLE:
        for _ in range(N_OBSTACLES):
            pos = _free_cell(rng, width, height, reserved, objects)
            objects.append(pos)
            grid[pos] = (OBSTACLE, BLUE, 0)

    log.debug("Generated %s seed=%d size=%dx%d door=%s", kind.value, seed, width, height, door)
    return WorldState(
        env_kind=kind,
        width=width,
        height=height,
        grid=grid,
        agent_pos=agent_pos,
        agent_dir=agent_dir,
        door_pos=door,
        rng=rng,
        box_contents=box_contents,
    )


def make_room(
    width,
    height,
    agent_pos,
    agent_dir,
    door_pos,
    door_color,
    objects=(),
    env_kind=EnvKind.SIMPLE_DOOR_KEY,
    carried=None,
    seed=0,
):
    """
    Build a hand-made single room, for scripted scenarios and fixtures.

    :param objects: ``(x, y, object_id, color_id)`` entries. A box entry may carry a fifth
        element, the color of the key hidden inside.
    :return: A state whose explored mask already covers the initial field of view.
    :rtype: WorldState
    """
    kind = EnvKind.parse(env_kind)
    grid = np.zeros((width, height, 3), dtype=np.int64)
    grid[:, :] = EMPTY_CELL
    grid[0, :] = WALL_CELL
    grid[-1, :] = WALL_CELL
    grid[:, 0] = WALL_CELL
    grid[:, -1] = WALL_CELL
    grid[tuple(door_pos)] = (DOOR, door_color, LOCKED)
    box_contents = {}
    for entry in objects:
        x, y, object_id, color_id = entry[:4]
        grid[x, y] = (object_id, color_id, 0)
        if object_id == BOX and len(entry) > 4:
            box_contents[(x, y)] = entry[4]
    state = WorldState(
        env_kind=kind,
        width=width,
        height=height,
        grid=grid,
        agent_pos=tuple(agent_pos),
        agent_dir=agent_dir,
        door_pos=tuple(door_pos),
        rng=np.random.default_rng([int(seed), _kind_salt(kind)]),
        carried=carried,
        box_contents=box_contents,
    )
    _mark_explored(state)
    return state


def view_square(pos, direction, view_size, width, height):
    """
    Cells of the ``view_size`` square in front of an agent, clipped to the grid.

    The agent sits on the center of the square's rear edge.
    """
    fx, fy = DIR_VEC[direction]
    rx, ry = DIR_VEC[(direction + 1) % 4]
    half = view_size // 2
    cells = []
    for i in range(view_size):
        for j in range(-half, half + 1):
            x = pos[0] + i * fx + j * rx
            y = pos[1] + i * fy + j * ry
            if 0 <= x < width and 0 <= y < height:
                cells.append((x, y))
    return cells


def is_transparent(object_id, state_id):
    if object_id == WALL:
        return False
    if object_id == DOOR:
        return state_id == OPEN
    return True


def field_of_view(state):
    """
    Cells the agent can currently see.

    Visibility floods from the agent's cell to orthogonal neighbours through transparent
    cells of the view square, so nothing is seen around a corner. Walls and closed or
    locked doors stop the flood; they are seen when they touch a visible transparent
    cell, diagonally included, which keeps room corners visible.

    :rtype: set of (x, y)
    """
    grid = state.grid

    def transparent(cell):
        return is_transparent(grid[cell][0], grid[cell][2])

    square = set(
        view_square(state.agent_pos, state.agent_dir, state.view_size, state.width, state.height)
    )
    visible: Set[Tuple[int, int]] = {state.agent_pos}
    stack = [state.agent_pos]
    while stack:
        x, y = stack.pop()
        for dx, dy in DIR_VEC:
            cell = (x + dx, y + dy)
            if cell in square and cell not in visible and transparent(cell):
                visible.add(cell)
                stack.append(cell)
    walls = set()
    for x, y in visible:
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cell = (x + dx, y + dy)
                if cell in square and not transparent(cell):
                    walls.add(cell)
    return visible | walls


def _mark_explored(state):
    for x, y in field_of_view(state):
        state.explored[x, y] = True


def observe(state):
    """
    Encode the fog-of-war observation of a state.

    :return: ``(width, height, 4)`` int64 array.
    :rtype: ObservationTensor
    """
    obs = np.full((state.width, state.height, 4), UNEXPLORED, dtype=np.int64)
    mask = state.explored
    obs[mask, :3] = state.grid[mask]
    obs[mask, 3] = NO_AGENT
    obs[state.agent_pos[0], state.agent_pos[1], 3] = state.agent_dir
    return obs


def pad_observation(observation, width=MAX_SIZE, height=MAX_SIZE):
    """
    Place an observation in the top-left corner of a larger canvas filled with -1.

    :raises UsageError: If the observation is larger than the canvas.
    """
    obs = np.asarray(observation)
    w, h = obs.shape[:2]
    if w > width or h > height:
        raise UsageError(
            "Observation {}x{} does not fit a {}x{} canvas".format(w, h, width, height)
        )
    out = np.full((width, height) + obs.shape[2:], UNEXPLORED, dtype=obs.dtype)
    out[:w, :h] = obs
    return out


def reset(env_kind, seed):
    """
    Start a new episode.

    :return: The world state and its first observation.
    :rtype: tuple(WorldState, ObservationTensor)
    """
    state = generate(env_kind, seed)
    _mark_explored(state)
    return state, observe(state)


def _move_obstacles(state):
    grid = state.grid
    positions = sorted((int(x), int(y)) for x, y in np.argwhere(grid[:, :, 0] == OBSTACLE))
    for ox, oy in positions:
        choices = [(ox, oy)]
        for dx, dy in DIR_VEC:
            cell = (ox + dx, oy + dy)
            if grid[cell][0] == EMPTY and cell != state.agent_pos:
                choices.append(cell)
        target = _pick(state.rng, choices)
        if target != (ox, oy):
            grid[target] = grid[ox, oy]
            grid[ox, oy] = EMPTY_CELL


def step(state, action):
    """
    Apply one primitive action. The state is updated in place.

    :param state: The episode state.
    :type state: WorldState
    :param action: One of ``TURN_LEFT``, ``TURN_RIGHT``, ``FORWARD``, ``PICKUP``, ``DROP``,
        ``TOGGLE``.
    :type action: int
    :raises UsageError: If the episode is already done or the action is unknown.
    :rtype: StepResult
    """
    if state.done:
        raise UsageError("step() called after the episode finished, call reset() first")
    if action not in range(len(ACTION_NAMES)):
        raise UsageError("Unknown action {!r}".format(action))

    grid = state.grid
    front = state.front_pos()
    obj, color, door_state = (int(v) for v in grid[front])
    opened = False

    if action == TURN_LEFT:
        state.agent_dir = (state.agent_dir + 3) % 4
    elif action == TURN_RIGHT:
        state.agent_dir = (state.agent_dir + 1) % 4
    elif action == FORWARD:
        if obj == EMPTY or (obj == DOOR and door_state == OPEN):
            state.agent_pos = front
    elif action == PICKUP:
        if state.carried is None and obj == KEY:
            state.carried = color
            grid[front] = EMPTY_CELL
    elif action == DROP:
        if state.carried is not None and obj == EMPTY:
            grid[front] = (KEY, state.carried, 0)
            state.carried = None
    elif action == TOGGLE:
        if obj == BOX:
            contents = state.box_contents.pop(front, None)
            grid[front] = (KEY, contents, 0) if contents is not None else EMPTY_CELL
        elif obj == DOOR:
            if door_state == LOCKED and state.carried == color:
                grid[front + (2,)] = OPEN
                opened = True
            elif door_state == CLOSED:
                grid[front + (2,)] = OPEN
                opened = True

    state.step_count += 1
    if state.env_kind is EnvKind.MOVING_OBSTACLE:
        _move_obstacles(state)
    _mark_explored(state)

    success = opened and front == state.door_pos
    reward = 1.0 - 0.9 * (state.step_count / state.max_steps) if success else 0.0
    state.success = success
    state.done = success or state.step_count >= state.max_steps
    return StepResult(observation=observe(state), reward=reward, done=state.done, success=success)


def render_ascii(state):
    """
    Render a state as text, one glyph per cell.

    ``#`` wall, ``.`` floor, ``K`` key, ``B`` box, ``D`` door, ``O`` obstacle and
    ``>v<^`` for the agent. Unexplored cells are lowercase, ``+`` for a wall and ``,`` for
    floor.
    """
    rows = []
    for y in range(state.height):
        chars = []
        for x in range(state.width):
            if (x, y) == state.agent_pos:
                chars.append(_AGENT_GLYPHS[state.agent_dir])
                continue
            glyph = _GLYPHS[int(state.grid[x, y, 0])]
            if not state.explored[x, y]:
                glyph = _HIDDEN_GLYPHS.get(glyph, glyph.lower())
            chars.append(glyph)
        rows.append("".join(chars))
    return "\n".join(rows)


def to_json(state):
    """Serialize a state to a versioned JSON document."""
    doc = {
        "version": SNAPSHOT_VERSION,
        "env_kind": state.env_kind.value,
        "width": state.width,
        "height": state.height,
        "grid": state.grid.tolist(),
        "agent_pos": list(state.agent_pos),
        "agent_dir": state.agent_dir,
        "door_pos": list(state.door_pos),
        "carried": state.carried,
        "explored": state.explored.astype(int).tolist(),
        "step_count": state.step_count,
        "max_steps": state.max_steps,
        "box_contents": [[x, y, c] for (x, y), c in sorted(state.box_contents.items())],
        "done": state.done,
        "success": state.success,
        "view_size": state.view_size,
        "rng_state": state.rng_state,
    }
    return json.dumps(doc, sort_keys=True)


def from_json(text):
    """
    Restore a state written by :func:`to_json`.

    :raises ConfigurationError: If the document version is not supported.
    """
    doc = json.loads(text)
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ConfigurationError(
            "Unsupported snapshot version {!r}, expected {}".format(
                doc.get("version"), SNAPSHOT_VERSION
            )
        )
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = doc["rng_state"]
    return WorldState(
        env_kind=EnvKind.parse(doc["env_kind"]),
        width=doc["width"],
        height=doc["height"],
        grid=np.array(doc["grid"], dtype=np.int64),
        agent_pos=tuple(doc["agent_pos"]),
        agent_dir=doc["agent_dir"],
        door_pos=tuple(doc["door_pos"]),
        rng=rng,
        carried=doc["carried"],
        explored=np.array(doc["explored"], dtype=bool),
        step_count=doc["step_count"],
        max_steps=doc["max_steps"],
        box_contents={(x, y): c for x, y, c in doc["box_contents"]},
        done=doc["done"],
        success=doc["success"],
        view_size=doc["view_size"],
    )
