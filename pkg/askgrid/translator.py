"""Turn observations into the short text descriptions shown to planners."""

from dataclasses import dataclass
from typing import FrozenSet, NamedTuple, Optional

import numpy as np

from . import gridworld as gw

_OBJECT_RANK = {gw.KEY: 0, gw.BOX: 1, gw.DOOR: 2}


class Fact(NamedTuple):
    object_id: int
    color_id: int
    state_id: int


@dataclass(frozen=True)
class FactList:
    observed: FrozenSet[Fact] = frozenset()
    carrying: Optional[int] = None


def extract_facts(observation, carried=None):
    """
    Collect the keys, boxes and doors present in the explored part of an observation.

    There is one fact per distinct ``(object, color)`` pair. Only doors keep their state.

    :param observation: ``(width, height, 4)`` observation.
    :param carried: Color of the carried key, if any.
    :rtype: FactList
    """
    obs = np.asarray(observation)
    objects = obs[:, :, 0]
    facts = {}
    for x, y in np.argwhere(np.isin(objects, list(_OBJECT_RANK))):
        object_id, color_id, state_id = (int(v) for v in obs[x, y, :3])
        if object_id != gw.DOOR:
            state_id = 0
        facts[(object_id, color_id)] = Fact(object_id, color_id, state_id)
    return FactList(observed=frozenset(facts.values()), carrying=carried)


def render_text(facts, mark_locked=True):
    """
    Render facts as comma-separated clauses.

    Example::

        render_text(FactList(frozenset({Fact(gw.KEY, gw.GREEN, 0)})))
        # 'observed green key'

    Clauses follow the order key, box, door, then color. A locked door reads
    ``observed blue locked door`` unless ``mark_locked`` is false.
    """
    clauses = []
    for fact in sorted(facts.observed, key=lambda f: (_OBJECT_RANK[f.object_id], f.color_id)):
        name = gw.OBJECT_NAMES[fact.object_id]
        if fact.object_id == gw.DOOR and fact.state_id == gw.LOCKED and mark_locked:
            name = "locked " + name
        clauses.append("observed {} {}".format(gw.COLOR_NAMES[fact.color_id], name))
    if not clauses:
        clauses.append("observed nothing")
    if facts.carrying is not None:
        clauses.append("carrying {} key".format(gw.COLOR_NAMES[facts.carrying]))
    return ", ".join(clauses)


def describe(observation, carried=None, mark_locked=True):
    """Shortcut for ``render_text(extract_facts(observation, carried))``."""
    return render_text(extract_facts(observation, carried), mark_locked=mark_locked)
