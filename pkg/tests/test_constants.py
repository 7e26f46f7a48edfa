"""Tests for askgrid constants."""


class TestEncodingConstants:
    """Test the integer codes of the observation encoding."""

    def test_object_constants(self):
        """Test that object constants are defined correctly."""
        from askgrid.gridworld import BOX, DOOR, EMPTY, KEY, OBSTACLE, WALL

        assert (EMPTY, WALL, DOOR, KEY, BOX, OBSTACLE) == (0, 1, 2, 3, 4, 5)

    def test_color_constants(self):
        """Test that color constants are defined correctly."""
        from askgrid.gridworld import BLUE, COLOR_NAMES, GREEN, GREY, NO_COLOR, PURPLE, RED, YELLOW

        assert (RED, GREEN, BLUE, PURPLE, YELLOW, GREY) == (0, 1, 2, 3, 4, 5)
        assert COLOR_NAMES[YELLOW] == "yellow"
        assert NO_COLOR == len(COLOR_NAMES)

    def test_state_and_direction_constants(self):
        """Test door states, directions and sentinels."""
        from askgrid.gridworld import CLOSED, EAST, LOCKED, NO_AGENT, NORTH, OPEN, SOUTH, UNEXPLORED, WEST

        assert (OPEN, CLOSED, LOCKED) == (0, 1, 2)
        assert (EAST, SOUTH, WEST, NORTH) == (0, 1, 2, 3)
        assert NO_AGENT == 4
        assert UNEXPLORED == -1

    def test_action_constants(self):
        """Test that action constants index the action names."""
        from askgrid.gridworld import ACTION_NAMES, DROP, FORWARD, PICKUP, TOGGLE, TURN_LEFT, TURN_RIGHT

        actions = [TURN_LEFT, TURN_RIGHT, FORWARD, PICKUP, DROP, TOGGLE]
        assert actions == list(range(6))
        assert [ACTION_NAMES[a] for a in actions] == [
            "turn_left",
            "turn_right",
            "forward",
            "pickup",
            "drop",
            "toggle",
        ]


class TestSizeConstants:
    """Test room and network size constants."""

    def test_canvas_fits_largest_room(self):
        """Test that the padded canvas holds the largest room with its walls."""
        from askgrid.gridworld import MAX_ROOM, MAX_SIZE, MIN_ROOM, VIEW_SIZE

        assert (MIN_ROOM, MAX_ROOM, MAX_SIZE) == (5, 10, 12)
        assert VIEW_SIZE == 7

    def test_network_shapes(self):
        """Test that the default network shapes match the option vocabularies."""
        from askgrid.harness import ASK_NET, SELECTOR_NET
        from askgrid.mediator import NUM_OPTIONS

        assert ASK_NET.outputs == 2 * NUM_OPTIONS == 20
        assert (ASK_NET.width, ASK_NET.height, ASK_NET.in_channels) == (12, 12, 4)
        assert SELECTOR_NET.outputs == 55
        assert SELECTOR_NET.in_channels == 8

    def test_exit_codes_unique(self):
        """Test that the exit codes are distinct."""
        from askgrid.harness import EXIT_CHECKPOINT, EXIT_COMPARE, EXIT_CONFIG, EXIT_OK, EXIT_SERVER, EXIT_USAGE

        codes = [EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_CHECKPOINT, EXIT_COMPARE, EXIT_SERVER]
        assert codes == list(range(6))
