"""Tests for experiment configuration files."""

import json

import pytest


def _write(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc), encoding="utf-8")
    return path


class TestLoadConfig:
    """Test reading configuration files."""

    def test_minimal(self, tmp_path):
        """Test that env_kind alone gives the documented defaults."""
        from askgrid.config import DEFAULT_TRAINING_SEEDS, held_out_seeds, load_config
        from askgrid.mediator import PolicyKind

        config = load_config(_write(tmp_path, {"env_kind": "KeyInBox"}))
        assert config.env_kind.value == "KeyInBox"
        assert config.policy is PolicyKind.LEARNED
        assert config.planner.kind == "oracle"
        assert config.ppo.penalty == 0.05
        assert config.training_seed_list == list(DEFAULT_TRAINING_SEEDS)
        assert config.test_seed_list == held_out_seeds("KeyInBox")

    def test_sections(self, tmp_path):
        """Test that nested sections are applied."""
        from askgrid.config import load_config

        doc = {
            "env_kind": "SimpleDoorKey",
            "mediator": {"policy": "random", "ask_probability": 0.25},
            "ppo": {"iterations": 3, "penalty": 0, "compare_full_plan": True},
            "test_seed_list": [10, 11],
            "workers": 2,
        }
        config = load_config(_write(tmp_path, doc))
        assert config.mediator.ask_probability == 0.25
        assert config.ppo.iterations == 3
        assert config.ppo.penalty == 0.0
        assert config.ppo.compare_full_plan
        assert config.test_seed_list == [10, 11]
        assert config.workers == 2

    def test_missing_env_kind(self, tmp_path):
        """Test that a missing env_kind is named in the error."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError

        with pytest.raises(ConfigurationError, match="env_kind"):
            load_config(_write(tmp_path, {"mediator": {"policy": "always"}}))

    def test_unknown_env_kind(self, tmp_path):
        """Test that an unknown env_kind is rejected."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError

        with pytest.raises(ConfigurationError, match="Unknown env_kind"):
            load_config(_write(tmp_path, {"env_kind": "FourRooms"}))

    @pytest.mark.parametrize(
        "doc, field",
        [
            ({"env_kind": "KeyInBox", "seeds": [1]}, "seeds"),
            ({"env_kind": "KeyInBox", "ppo": {"learning_rate": 1}}, "ppo.learning_rate"),
            ({"env_kind": "KeyInBox", "ppo": {"iterations": "many"}}, "ppo.iterations"),
            ({"env_kind": "KeyInBox", "ppo": {"gamma": 2.0}}, "gamma"),
            ({"env_kind": "KeyInBox", "mediator": {"policy": "sometimes"}}, "sometimes"),
            ({"env_kind": "KeyInBox", "planner": {"kind": "human"}}, "planner.kind"),
            ({"env_kind": "KeyInBox", "training_seed_list": [-1]}, "training_seed_list"),
            ({"env_kind": "KeyInBox", "workers": 0}, "workers"),
        ],
    )
    def test_invalid_fields(self, tmp_path, doc, field):
        """Test that invalid values are reported with their field name."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError

        with pytest.raises(ConfigurationError, match=field):
            load_config(_write(tmp_path, doc))

    def test_bad_json_position(self, tmp_path):
        """Test that malformed JSON reports line and column."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError

        path = _write(tmp_path, '{\n  "env_kind": "KeyInBox",\n}\n')
        with pytest.raises(ConfigurationError, match=r"config\.json:3:1:"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        """Test that an unreadable file raises ConfigurationError."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError

        with pytest.raises(ConfigurationError, match="cannot read config"):
            load_config(tmp_path / "absent.json")

    def test_seed_overlap(self, tmp_path):
        """Test that training seeds may not overlap the test seeds."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError

        doc = {"env_kind": "KeyInBox", "training_seed_list": [1, 2], "test_seed_list": [2, 3]}
        with pytest.raises(ConfigurationError, match=r"overlaps the test seeds: \[2\]"):
            load_config(_write(tmp_path, doc))

    def test_learned_planner_with_learned_mediator(self, tmp_path):
        """Test that two learned components cannot be combined."""
        from askgrid.config import load_config
        from askgrid.errors import ConfigurationError

        doc = {"env_kind": "KeyInBox", "mediator": {"policy": "learned"}, "planner": {"kind": "learned"}}
        with pytest.raises(ConfigurationError, match="planner.kind"):
            load_config(_write(tmp_path, doc))


class TestPlannerSettings:
    """Test planner endpoint settings."""

    def test_environment_defaults(self, tmp_path, monkeypatch):
        """Test that endpoint settings fall back to environment variables."""
        from askgrid.config import load_config

        monkeypatch.setenv("PLANNER_BASE_URL", "http://planner.local/v1")
        monkeypatch.setenv("PLANNER_MODEL", "tiny")
        monkeypatch.setenv("PLANNER_API_KEY", "secret")
        endpoint = load_config(_write(tmp_path, {"env_kind": "KeyInBox"})).planner.endpoint()
        assert endpoint.base_url == "http://planner.local/v1"
        assert endpoint.model == "tiny"
        assert endpoint.api_key == "secret"

    def test_file_overrides_environment(self, tmp_path, monkeypatch):
        """Test that explicit settings win over the environment."""
        from askgrid.config import load_config

        monkeypatch.setenv("PLANNER_MODEL", "tiny")
        doc = {"env_kind": "KeyInBox", "planner": {"kind": "remote", "model": "large", "retries": 0}}
        config = load_config(_write(tmp_path, doc))
        assert config.planner.endpoint().model == "large"
        assert config.planner.endpoint().retries == 0

    def test_digest_hides_secrets(self, tmp_path, monkeypatch):
        """Test that the configuration digest ignores the API key."""
        from askgrid.config import load_config

        path = _write(tmp_path, {"env_kind": "KeyInBox"})
        monkeypatch.setenv("PLANNER_API_KEY", "one")
        first = load_config(path)
        monkeypatch.setenv("PLANNER_API_KEY", "two")
        second = load_config(path)
        assert "api_key" not in first.to_dict()["planner"]
        assert first.digest() == second.digest()


class TestHeldOutSeeds:
    """Test the predefined test seeds."""

    @pytest.mark.parametrize("kind", ["SimpleDoorKey", "KeyInBox", "RandomBoxKey", "ColoredDoorKey", "MovingObstacle"])
    def test_hundred_distinct_seeds(self, kind):
        """Test that every kind has 100 distinct seeds outside the default training seeds."""
        from askgrid.config import DEFAULT_TRAINING_SEEDS, held_out_seeds

        seeds = held_out_seeds(kind)
        assert len(seeds) == len(set(seeds)) == 100
        assert not set(seeds) & set(DEFAULT_TRAINING_SEEDS)
