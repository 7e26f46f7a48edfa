"""Tests for the observation translator."""

import pytest


class TestExtractFacts:
    """Test fact extraction from observations."""

    def test_nothing_seen(self):
        """Test that an empty room yields no facts."""
        from askgrid import gridworld as gw
        from askgrid.translator import extract_facts

        state = gw.make_room(9, 9, agent_pos=(4, 4), agent_dir=gw.EAST, door_pos=(0, 4), door_color=gw.RED)
        facts = extract_facts(gw.observe(state))
        assert facts.observed == frozenset()
        assert facts.carrying is None

    def test_only_explored_objects(self):
        """Test that unexplored objects are not reported."""
        from askgrid import gridworld as gw
        from askgrid.translator import Fact, extract_facts

        state = gw.make_room(
            9,
            9,
            agent_pos=(4, 4),
            agent_dir=gw.EAST,
            door_pos=(0, 4),
            door_color=gw.RED,
            objects=[(6, 4, gw.KEY, gw.GREEN), (2, 4, gw.KEY, gw.RED)],
        )
        facts = extract_facts(gw.observe(state), carried=gw.BLUE)
        assert facts.observed == frozenset({Fact(gw.KEY, gw.GREEN, 0)})
        assert facts.carrying == gw.BLUE

    def test_door_keeps_state(self):
        """Test that door facts carry the door state."""
        from askgrid import gridworld as gw
        from askgrid.translator import Fact, extract_facts

        state = gw.make_room(8, 9, agent_pos=(1, 4), agent_dir=gw.EAST, door_pos=(7, 4), door_color=gw.PURPLE)
        facts = extract_facts(gw.observe(state))
        assert facts.observed == frozenset({Fact(gw.DOOR, gw.PURPLE, gw.LOCKED)})


class TestRenderText:
    """Test the text rendering of facts."""

    def test_observed_nothing(self):
        """Test the empty description."""
        from askgrid.translator import FactList, render_text

        assert render_text(FactList()) == "observed nothing"

    def test_carrying_only(self):
        """Test that a carried key follows the observed clause."""
        from askgrid import gridworld as gw
        from askgrid.translator import FactList, render_text

        assert render_text(FactList(carrying=gw.PURPLE)) == "observed nothing, carrying purple key"

    def test_clause_order(self):
        """Test that keys come before boxes and doors, then colors in order."""
        from askgrid import gridworld as gw
        from askgrid.translator import Fact, FactList, render_text

        facts = FactList(
            observed=frozenset(
                {
                    Fact(gw.DOOR, gw.YELLOW, gw.LOCKED),
                    Fact(gw.KEY, gw.YELLOW, 0),
                    Fact(gw.BOX, gw.RED, 0),
                    Fact(gw.KEY, gw.GREEN, 0),
                }
            ),
            carrying=gw.PURPLE,
        )
        assert render_text(facts) == (
            "observed green key, observed yellow key, observed red box, "
            "observed yellow locked door, carrying purple key"
        )

    def test_plain_door_wording(self):
        """Test that locked doors can be rendered without their state."""
        from askgrid import gridworld as gw
        from askgrid.translator import Fact, FactList, render_text

        facts = FactList(observed=frozenset({Fact(gw.KEY, gw.YELLOW, 0), Fact(gw.DOOR, gw.YELLOW, gw.LOCKED)}))
        assert render_text(facts, mark_locked=False) == "observed yellow key, observed yellow door"

    def test_identical_text_for_different_frames(self):
        """Test that two different frames can translate to the same text."""
        from askgrid import gridworld as gw
        from askgrid.translator import describe

        kwargs = dict(
            width=8,
            height=9,
            agent_dir=gw.EAST,
            door_pos=(7, 4),
            door_color=gw.YELLOW,
            objects=[(5, 2, gw.KEY, gw.YELLOW)],
            carried=gw.PURPLE,
        )
        a = gw.make_room(agent_pos=(1, 4), **kwargs)
        b = gw.make_room(agent_pos=(2, 4), **kwargs)
        text = "observed yellow key, observed yellow door, carrying purple key"
        assert describe(gw.observe(a), a.carried, mark_locked=False) == text
        assert describe(gw.observe(b), b.carried, mark_locked=False) == text

    @pytest.mark.parametrize("seed", range(5))
    def test_describe_matches_pipeline(self, seed):
        """Test that describe is extract_facts followed by render_text."""
        from askgrid import gridworld as gw
        from askgrid.translator import describe, extract_facts, render_text

        state, obs = gw.reset("ColoredDoorKey", seed)
        assert describe(obs) == render_text(extract_facts(obs))
