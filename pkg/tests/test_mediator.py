"""Tests for the asking policies."""

import numpy as np
import pytest


def _state(policy="hard_coded", option_index=0):
    from askgrid import gridworld as gw
    from askgrid.mediator import MediatorState, PolicyKind

    _, obs = gw.reset("SimpleDoorKey", 0)
    return MediatorState(prev_observation=obs, current_option_index=option_index, policy_kind=PolicyKind(policy)), obs


class TestOptionIndex:
    """Test the color-abstracted option vocabulary."""

    def test_explore_is_zero(self):
        """Test that explore has index 0."""
        from askgrid.mediator import option_index
        from askgrid.options import EXPLORE

        assert option_index(EXPLORE) == 0

    def test_colors_share_an_index(self):
        """Test that options differing only in color map to the same index."""
        from askgrid import gridworld as gw
        from askgrid.mediator import option_index
        from askgrid.options import go_to

        assert option_index(go_to(gw.KEY, gw.RED)) == option_index(go_to(gw.KEY, gw.GREY))

    def test_indices_cover_vocabulary(self):
        """Test that the grounded options use every index in [0, 10)."""
        from askgrid.mediator import NUM_OPTIONS, option_index
        from askgrid.options import GROUNDED_OPTIONS

        assert NUM_OPTIONS == 10
        assert {option_index(o) for o in GROUNDED_OPTIONS} == set(range(NUM_OPTIONS))

    def test_state_checks_index(self):
        """Test that the mediator state rejects indices outside the vocabulary."""
        from askgrid.errors import UsageError

        with pytest.raises(UsageError):
            _state(option_index=10)


class TestBaselines:
    """Test the non-learned policies."""

    def test_always_and_never(self):
        """Test the constant policies."""
        from askgrid.mediator import Decision, decide

        state, obs = _state("always")
        assert decide(state, obs).choice is Decision.ASK
        state, obs = _state("never")
        assert decide(state, obs).choice is Decision.NOT_ASK

    def test_hard_coded_follows_termination(self):
        """Test that the hard-coded policy asks only when the option has ended."""
        from askgrid.mediator import decide
        from askgrid.options import OptionProgress, TerminationReason

        state, obs = _state("hard_coded")
        assert decide(state, obs, None).ask
        assert not decide(state, obs, OptionProgress(steps_taken=3)).ask
        ended = OptionProgress(steps_taken=3, termination_reason=TerminationReason.GOAL_REACHED)
        assert decide(state, obs, ended).ask

    def test_random_rate(self):
        """Test that the random policy asks about half the time."""
        from askgrid.mediator import Mediator

        mediator = Mediator("random", rng=np.random.default_rng(0))
        state, obs = _state("random")
        asks = sum(mediator.decide(state, obs).ask for _ in range(2000))
        assert 0.45 <= asks / 2000 <= 0.55

    def test_random_is_reproducible(self):
        """Test that the random policy replays for a fixed generator seed."""
        from askgrid.mediator import Mediator

        state, obs = _state("random")
        runs = []
        for _ in range(2):
            mediator = Mediator("random", rng=np.random.default_rng([3, 7]))
            runs.append([mediator.decide(state, obs).ask for _ in range(50)])
        assert runs[0] == runs[1]

    def test_unknown_policy(self):
        """Test that unknown policy names raise ConfigurationError."""
        from askgrid.errors import ConfigurationError
        from askgrid.mediator import Mediator

        with pytest.raises(ConfigurationError, match="sometimes"):
            Mediator("sometimes")


class TestLearned:
    """Test the learned policy."""

    def test_needs_network(self):
        """Test that the learned policy refuses to run without a network."""
        from askgrid.errors import ConfigurationError
        from askgrid.mediator import Mediator

        with pytest.raises(ConfigurationError):
            Mediator("learned")

    def test_frame_difference(self):
        """Test that identical frames give a zero difference on the padded canvas."""
        from askgrid import gridworld as gw
        from askgrid.mediator import frame_difference

        _, obs = gw.reset("KeyInBox", 1)
        diff = frame_difference(obs, obs)
        assert diff.shape == (gw.MAX_SIZE, gw.MAX_SIZE, 4)
        assert not diff.any()

    def test_uses_pair_of_running_option(self):
        """Test that the decision reads the logit pair of the running option."""
        from askgrid.mediator import Decision, Mediator
        from askgrid.neural import AskNet

        net = AskNet(seed=0)
        k = 3
        head = net.policy_head
        head.weight.values[:] = 0.0
        head.bias.values[:] = 0.0
        head.bias.values[2 * k + 1] = 5.0
        mediator = Mediator("learned", network=net)
        state, obs = _state("learned", option_index=k)
        decision = mediator.decide(state, obs)
        assert decision.choice is Decision.ASK
        assert decision.log_prob == pytest.approx(-np.log1p(np.exp(-5.0)))
        assert decision.value_estimate is not None

        state.current_option_index = 4
        assert mediator.decide(state, obs).choice is Decision.NOT_ASK

    def test_sampling_uses_generator(self):
        """Test that sampled decisions depend only on the generator seed."""
        from askgrid.mediator import Mediator
        from askgrid.neural import AskNet

        net = AskNet(seed=1)
        state, obs = _state("learned")
        runs = []
        for _ in range(2):
            mediator = Mediator("learned", network=net, rng=np.random.default_rng(5), sample=True)
            runs.append([mediator.decide(state, obs).choice for _ in range(30)])
        assert runs[0] == runs[1]
        assert len(set(runs[0])) == 2
