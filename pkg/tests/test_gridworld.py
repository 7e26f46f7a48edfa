"""Tests for the gridworld environments."""

import numpy as np
import pytest


ALL_KINDS = ("SimpleDoorKey", "KeyInBox", "RandomBoxKey", "ColoredDoorKey", "MovingObstacle")


def _objects(state, object_id):
    return [tuple(int(v) for v in p) for p in np.argwhere(state.grid[:, :, 0] == object_id)]


class TestGenerate:
    """Test procedural generation."""

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_same_seed_same_world(self, kind):
        """Test that generation is a pure function of kind and seed."""
        from askgrid.gridworld import generate

        a = generate(kind, 11)
        b = generate(kind, 11)
        assert np.array_equal(a.grid, b.grid)
        assert a.agent_pos == b.agent_pos
        assert a.agent_dir == b.agent_dir
        assert a.box_contents == b.box_contents

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_room_size_and_walls(self, kind):
        """Test that rooms are 5 to 10 cells wide inside a wall with one locked door."""
        from askgrid import gridworld as gw

        for seed in range(20):
            state = gw.generate(kind, seed)
            assert 7 <= state.width <= 12
            assert 7 <= state.height <= 12
            doors = _objects(state, gw.DOOR)
            assert doors == [state.door_pos]
            assert state.cell(*state.door_pos).state_id == gw.LOCKED
            x, y = state.door_pos
            assert x in (0, state.width - 1) or y in (0, state.height - 1)
            assert state.max_steps == 4 * state.width * state.height

    def test_simple_door_key_has_matching_key(self):
        """Test that SimpleDoorKey holds exactly one key of the door color."""
        from askgrid import gridworld as gw

        for seed in range(20):
            state = gw.generate("SimpleDoorKey", seed)
            keys = _objects(state, gw.KEY)
            assert len(keys) == 1
            door_color = state.cell(*state.door_pos).color_id
            assert state.cell(*keys[0]).color_id == door_color
            assert not _objects(state, gw.BOX)

    def test_key_in_box_hides_key(self):
        """Test that KeyInBox hides the door key inside a box."""
        from askgrid import gridworld as gw

        for seed in range(20):
            state = gw.generate("KeyInBox", seed)
            assert not _objects(state, gw.KEY)
            boxes = _objects(state, gw.BOX)
            assert len(boxes) == 1
            assert state.box_contents == {boxes[0]: state.cell(*state.door_pos).color_id}

    def test_random_box_key_boxes_about_half(self):
        """Test that RandomBoxKey hides the key in a box for about half of the seeds."""
        from askgrid import gridworld as gw

        boxed = [bool(gw.generate("RandomBoxKey", seed).box_contents) for seed in range(1000)]
        assert 0.42 <= np.mean(boxed) <= 0.58

    def test_colored_door_key_has_decoy(self):
        """Test that ColoredDoorKey holds two keys of different colors, one fitting the door."""
        from askgrid import gridworld as gw

        for seed in range(20):
            state = gw.generate("ColoredDoorKey", seed)
            colors = sorted(state.cell(*p).color_id for p in _objects(state, gw.KEY))
            assert len(colors) == 2
            assert colors[0] != colors[1]
            assert state.cell(*state.door_pos).color_id in colors

    def test_moving_obstacle_has_obstacles(self):
        """Test that MovingObstacle places two obstacles."""
        from askgrid import gridworld as gw

        state = gw.generate("MovingObstacle", 3)
        assert len(_objects(state, gw.OBSTACLE)) == gw.N_OBSTACLES

    def test_unknown_kind(self):
        """Test that an unknown environment kind is rejected."""
        from askgrid.errors import ConfigurationError
        from askgrid.gridworld import generate

        with pytest.raises(ConfigurationError, match="Unknown env_kind"):
            generate("LavaCrossing", 0)

    def test_negative_seed(self):
        """Test that negative seeds are rejected."""
        from askgrid.errors import ConfigurationError
        from askgrid.gridworld import generate

        with pytest.raises(ConfigurationError):
            generate("SimpleDoorKey", -1)


class TestObservation:
    """Test the fog-of-war observation."""

    def test_reset_observation_shape(self):
        """Test that reset returns a width x height x 4 observation."""
        from askgrid import gridworld as gw

        state, obs = gw.reset("SimpleDoorKey", 5)
        assert obs.shape == (state.width, state.height, 4)
        assert obs.dtype == np.int64

    def test_unexplored_cells_are_sentinel(self):
        """Test that unexplored cells read -1 in every channel."""
        from askgrid import gridworld as gw

        state, obs = gw.reset("SimpleDoorKey", 5)
        hidden = ~state.explored
        assert hidden.any()
        assert (obs[hidden] == gw.UNEXPLORED).all()

    def test_agent_channel(self):
        """Test that only the agent cell carries a direction."""
        from askgrid import gridworld as gw

        state, obs = gw.reset("KeyInBox", 2)
        x, y = state.agent_pos
        assert obs[x, y, 3] == state.agent_dir
        explored = state.explored.copy()
        explored[x, y] = False
        assert (obs[explored, 3] == gw.NO_AGENT).all()

    def test_view_excludes_cells_behind(self):
        """Test that the agent does not see behind itself."""
        from askgrid import gridworld as gw

        state = gw.make_room(9, 9, agent_pos=(4, 4), agent_dir=gw.EAST, door_pos=(8, 4), door_color=gw.RED)
        visible = gw.field_of_view(state)
        assert (5, 4) in visible
        assert (8, 4) in visible
        assert (3, 4) not in visible

    def test_walls_block_view(self):
        """Test that a wall is seen but cells behind it are not."""
        from askgrid import gridworld as gw

        state = gw.make_room(
            9,
            9,
            agent_pos=(1, 4),
            agent_dir=gw.EAST,
            door_pos=(8, 4),
            door_color=gw.RED,
            objects=[(3, y, gw.WALL, gw.NO_COLOR) for y in range(1, 8)],
        )
        visible = gw.field_of_view(state)
        assert (3, 4) in visible
        assert (4, 4) not in visible

    def test_view_does_not_bend_around_corners(self):
        """Test that cells diagonal to a gap in a wall stay hidden."""
        from askgrid import gridworld as gw

        walls = [(2, y, gw.WALL, gw.NO_COLOR) for y in range(1, 8) if y != 4]
        state = gw.make_room(
            9,
            9,
            agent_pos=(1, 4),
            agent_dir=gw.EAST,
            door_pos=(8, 4),
            door_color=gw.RED,
            objects=walls + [(3, 4, gw.WALL, gw.NO_COLOR)],
        )
        visible = gw.field_of_view(state)
        assert (2, 4) in visible
        assert (3, 4) in visible
        assert (2, 3) in visible
        assert (3, 3) not in visible
        assert (3, 5) not in visible

    def test_explored_is_cumulative(self):
        """Test that cells stay explored after the agent turns away."""
        from askgrid import gridworld as gw

        state = gw.make_room(9, 9, agent_pos=(4, 4), agent_dir=gw.EAST, door_pos=(8, 4), door_color=gw.RED)
        before = state.explored.copy()
        gw.step(state, gw.TURN_LEFT)
        gw.step(state, gw.TURN_LEFT)
        assert (state.explored | before == state.explored).all()
        assert state.explored[3, 4]

    def test_pad_observation(self):
        """Test that observations are padded with the sentinel."""
        from askgrid import gridworld as gw

        _, obs = gw.reset("SimpleDoorKey", 1)
        padded = gw.pad_observation(obs)
        assert padded.shape == (gw.MAX_SIZE, gw.MAX_SIZE, 4)
        w, h = obs.shape[:2]
        assert np.array_equal(padded[:w, :h], obs)
        assert (padded[w:, :] == gw.UNEXPLORED).all()

    def test_pad_observation_too_large(self):
        """Test that padding to a smaller canvas fails."""
        from askgrid import gridworld as gw
        from askgrid.errors import UsageError

        with pytest.raises(UsageError):
            gw.pad_observation(np.zeros((13, 5, 4), dtype=np.int64))


class TestStep:
    """Test the transition function."""

    def test_turns(self):
        """Test that turning changes only the direction."""
        from askgrid import gridworld as gw

        state = gw.make_room(7, 7, agent_pos=(3, 3), agent_dir=gw.EAST, door_pos=(6, 3), door_color=gw.RED)
        gw.step(state, gw.TURN_LEFT)
        assert state.agent_dir == gw.NORTH
        gw.step(state, gw.TURN_RIGHT)
        gw.step(state, gw.TURN_RIGHT)
        assert state.agent_dir == gw.SOUTH
        assert state.agent_pos == (3, 3)

    def test_forward_blocked_by_wall(self):
        """Test that walking into a wall leaves the agent in place."""
        from askgrid import gridworld as gw

        state = gw.make_room(7, 7, agent_pos=(1, 1), agent_dir=gw.NORTH, door_pos=(6, 3), door_color=gw.RED)
        gw.step(state, gw.FORWARD)
        assert state.agent_pos == (1, 1)
        state.agent_dir = gw.EAST
        gw.step(state, gw.FORWARD)
        assert state.agent_pos == (2, 1)

    def test_pickup_and_drop(self):
        """Test picking up a key in front and dropping it again."""
        from askgrid import gridworld as gw

        state = gw.make_room(
            7,
            7,
            agent_pos=(1, 1),
            agent_dir=gw.EAST,
            door_pos=(6, 3),
            door_color=gw.YELLOW,
            objects=[(2, 1, gw.KEY, gw.YELLOW)],
        )
        gw.step(state, gw.PICKUP)
        assert state.carried == gw.YELLOW
        assert state.cell(2, 1).object_id == gw.EMPTY
        gw.step(state, gw.DROP)
        assert state.carried is None
        assert state.cell(2, 1) == (gw.KEY, gw.YELLOW, 0)

    def test_toggle_box_reveals_key(self):
        """Test that opening a box leaves its key behind."""
        from askgrid import gridworld as gw

        state = gw.make_room(
            7,
            7,
            agent_pos=(1, 1),
            agent_dir=gw.EAST,
            door_pos=(6, 3),
            door_color=gw.BLUE,
            objects=[(2, 1, gw.BOX, gw.GREEN, gw.BLUE)],
        )
        result = gw.step(state, gw.TOGGLE)
        assert state.cell(2, 1) == (gw.KEY, gw.BLUE, 0)
        assert result.observation[2, 1, 0] == gw.KEY
        assert not result.done

    def test_locked_door_needs_matching_key(self):
        """Test that a locked door stays shut without the matching key."""
        from askgrid import gridworld as gw

        state = gw.make_room(
            5, 5, agent_pos=(2, 1), agent_dir=gw.NORTH, door_pos=(2, 0), door_color=gw.YELLOW, carried=gw.RED
        )
        result = gw.step(state, gw.TOGGLE)
        assert state.cell(2, 0).state_id == gw.LOCKED
        assert result.reward == 0.0
        assert not result.done

    def test_opening_door_succeeds(self):
        """Test that opening the door ends the episode with the time-discounted reward."""
        from askgrid import gridworld as gw

        state = gw.make_room(
            5, 5, agent_pos=(2, 1), agent_dir=gw.NORTH, door_pos=(2, 0), door_color=gw.YELLOW, carried=gw.YELLOW
        )
        result = gw.step(state, gw.TOGGLE)
        assert result.done and result.success
        assert state.cell(2, 0).state_id == gw.OPEN
        assert result.reward == pytest.approx(1.0 - 0.9 * 1 / 100)

    def test_timeout(self):
        """Test that the episode ends unsuccessfully at the step limit."""
        from askgrid import gridworld as gw

        state, _ = gw.reset("SimpleDoorKey", 0)
        result = None
        for _ in range(state.max_steps):
            result = gw.step(state, gw.TURN_LEFT)
        assert result.done
        assert not result.success
        assert result.reward == 0.0

    def test_step_after_done(self):
        """Test that stepping a finished episode raises UsageError."""
        from askgrid import gridworld as gw
        from askgrid.errors import UsageError

        state = gw.make_room(
            5, 5, agent_pos=(2, 1), agent_dir=gw.NORTH, door_pos=(2, 0), door_color=gw.RED, carried=gw.RED
        )
        gw.step(state, gw.TOGGLE)
        with pytest.raises(UsageError):
            gw.step(state, gw.TURN_LEFT)

    def test_unknown_action(self):
        """Test that an unknown action raises UsageError."""
        from askgrid import gridworld as gw
        from askgrid.errors import UsageError

        state, _ = gw.reset("SimpleDoorKey", 0)
        with pytest.raises(UsageError):
            gw.step(state, 9)

    def test_obstacles_move_but_persist(self):
        """Test that moving obstacles never vanish or overlap other objects."""
        from askgrid import gridworld as gw

        state, _ = gw.reset("MovingObstacle", 4)
        for _ in range(30):
            gw.step(state, gw.TURN_LEFT)
            assert len(_objects(state, gw.OBSTACLE)) == gw.N_OBSTACLES
            assert len(_objects(state, gw.KEY)) == 1
            assert state.cell(*state.agent_pos).object_id == gw.EMPTY

    def test_moving_obstacles_are_deterministic(self):
        """Test that obstacle motion replays exactly for a fixed seed."""
        from askgrid import gridworld as gw

        a, _ = gw.reset("MovingObstacle", 8)
        b, _ = gw.reset("MovingObstacle", 8)
        for _ in range(10):
            gw.step(a, gw.TURN_RIGHT)
            gw.step(b, gw.TURN_RIGHT)
        assert np.array_equal(a.grid, b.grid)

    @pytest.mark.parametrize("kind", ALL_KINDS)
    def test_keys_are_conserved(self, kind):
        """Test that every key stays on the grid, in the agent's hands or in a box."""
        from askgrid import gridworld as gw

        def keys(state):
            on_grid = len(_objects(state, gw.KEY))
            in_hand = int(state.carried is not None)
            return on_grid + in_hand + len(state.box_contents)

        weights = np.array([1, 1, 4, 2, 2, 2]) / 12
        for seed in range(10):
            state, _ = gw.reset(kind, seed)
            rng = np.random.default_rng(seed)
            total = keys(state)
            assert total >= 1
            while not state.done:
                gw.step(state, int(rng.choice(6, p=weights)))
                assert keys(state) == total


class TestRenderAndSnapshot:
    """Test text rendering and JSON snapshots."""

    def test_render_ascii_layout(self):
        """Test that the rendering has one line per row and marks the agent."""
        from askgrid import gridworld as gw

        state = gw.make_room(7, 5, agent_pos=(1, 2), agent_dir=gw.EAST, door_pos=(6, 2), door_color=gw.RED)
        lines = gw.render_ascii(state).split("\n")
        assert len(lines) == 5
        assert all(len(line) == 7 for line in lines)
        assert lines[2][1] == ">"
        assert lines[2][6] == "D"

    def test_render_ascii_unexplored(self):
        """Test that unexplored cells are drawn with lowercase glyphs."""
        from askgrid import gridworld as gw

        state = gw.make_room(9, 9, agent_pos=(4, 4), agent_dir=gw.EAST, door_pos=(0, 4), door_color=gw.RED)
        lines = gw.render_ascii(state).split("\n")
        assert lines[4][0] == "d"
        assert lines[4][3] == ","

    def test_snapshot_restores_state(self):
        """Test that a restored snapshot continues exactly like the original."""
        from askgrid import gridworld as gw

        state, _ = gw.reset("MovingObstacle", 6)
        gw.step(state, gw.FORWARD)
        restored = gw.from_json(gw.to_json(state))
        for action in (gw.TURN_LEFT, gw.FORWARD, gw.TURN_RIGHT):
            a = gw.step(state, action)
            b = gw.step(restored, action)
            assert np.array_equal(a.observation, b.observation)
        assert gw.to_json(state) == gw.to_json(restored)

    def test_snapshot_version_checked(self):
        """Test that snapshots of another version are rejected."""
        import json

        from askgrid import gridworld as gw
        from askgrid.errors import ConfigurationError

        doc = json.loads(gw.to_json(gw.generate("SimpleDoorKey", 0)))
        doc["version"] = 99
        with pytest.raises(ConfigurationError, match="version"):
            gw.from_json(json.dumps(doc))
