"""
Unit tests for experiment configuration loading.
"""
import sys
import os

# Add the src directory to the path so we can import the rested_bai package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../src')))

import json
from pathlib import Path
from unittest.mock import patch

import pytest
from click.testing import CliRunner

from rested_bai.cli import EXIT_CONFIG, cli
from rested_bai.config import (
    ENV_BASE_SEED,
    ENV_N_JOBS,
    ENV_OUTPUT_DIR,
    ConfigLoader,
    load_experiment_config,
)
from rested_bai.env import Deterministic, instance_to_dict, make_instance
from rested_bai.exceptions import ConfigError

INSTANCE = make_instance(
    [(0.5, 0.2), (0.0, 0.4)], rho=0.5, horizon=500, upper=1.0, noise=Deterministic()
)


@pytest.fixture(autouse=True)
def clean_env():
    """Run every test without the package's environment variables."""
    with patch.dict(os.environ):
        for name in (ENV_BASE_SEED, ENV_OUTPUT_DIR, ENV_N_JOBS):
            os.environ.pop(name, None)
        yield


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment file and return its path."""

    def write(data, name="experiment.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write


@pytest.fixture
def minimal():
    """Smallest valid experiment with an inline instance."""
    return {
        "instance": instance_to_dict(INSTANCE),
        "policies": ["etc", "rest_sure"],
        "num_runs": 4,
    }


class TestLoadExperimentConfig:
    """Test cases for load_experiment_config."""

    def test_inline_instance(self, write_config, minimal):
        """Test a minimal file and the defaults it leaves in place."""
        config = load_experiment_config(write_config(minimal))
        assert config.instance == INSTANCE
        assert config.policies == ("etc", "rest_sure")
        assert config.num_runs == 4
        assert config.base_seed == 0
        assert config.delta is None
        assert config.output_dir == Path("results")
        assert config.n_jobs == 1

    def test_one_over_t_delta(self, write_config, minimal):
        """Test that "1/T" and a number are both accepted for delta."""
        minimal["delta"] = "1/T"
        assert load_experiment_config(write_config(minimal)).resolved_delta == 1.0 / 500
        minimal["delta"] = 0.05
        assert load_experiment_config(write_config(minimal)).delta == 0.05

    def test_all_keys(self, write_config, minimal):
        """Test that every optional key reaches the configuration."""
        minimal.update(
            policies=["etc_fixed", "uniform"],
            base_seed=9,
            output_dir="out/run1",
            n_jobs=2,
            width_scale=0.01,
            tight_constants=True,
            fixed_sweeps=30,
            regret_bound=0.05,
        )
        config = load_experiment_config(write_config(minimal))
        assert config.base_seed == 9
        assert config.output_dir == Path("out/run1")
        assert config.n_jobs == 2
        assert config.width_scale == 0.01
        assert config.tight_constants is True
        assert config.fixed_sweeps == 30
        assert config.regret_bound == 0.05

    def test_environment_defaults(self, write_config, minimal):
        """Test that environment variables fill keys absent from the file."""
        variables = {ENV_BASE_SEED: "42", ENV_OUTPUT_DIR: "/tmp/bai", ENV_N_JOBS: "-1"}
        with patch.dict(os.environ, variables):
            config = load_experiment_config(write_config(minimal))
        assert config.base_seed == 42
        assert config.output_dir == Path("/tmp/bai")
        assert config.n_jobs == -1

    def test_file_beats_environment(self, write_config, minimal):
        """Test that a key in the file wins over its environment variable."""
        minimal["base_seed"] = 5
        with patch.dict(os.environ, {ENV_BASE_SEED: "42"}):
            assert load_experiment_config(write_config(minimal)).base_seed == 5

    def test_overrides_win(self, write_config, minimal):
        """Test that non-None overrides replace file and environment values."""
        minimal["base_seed"] = 5
        with patch.dict(os.environ, {ENV_N_JOBS: "3"}):
            config = load_experiment_config(
                write_config(minimal),
                {
                    "base_seed": 77,
                    "policies": ["greedy"],
                    "n_jobs": None,
                    "output_dir": "x",
                },
            )
        assert config.base_seed == 77
        assert config.policies == ("greedy",)
        assert config.n_jobs == 3
        assert config.output_dir == Path("x")

    def test_instance_file_relative_to_config(self, tmp_path, write_config, minimal):
        """Test that an instance path is relative to the experiment file."""
        (tmp_path / "instances").mkdir()
        instance_file = tmp_path / "instances" / "pair.json"
        instance_file.write_text(json.dumps(instance_to_dict(INSTANCE)))
        minimal["instance"] = "instances/pair.json"
        assert load_experiment_config(write_config(minimal)).instance == INSTANCE

    def test_bad_json(self, tmp_path):
        """Test that malformed JSON raises ConfigError."""
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError, match="Cannot read config file"):
            load_experiment_config(path)

    def test_missing_file(self, tmp_path):
        """Test that a missing file raises ConfigError."""
        with pytest.raises(ConfigError):
            load_experiment_config(tmp_path / "absent.json")

    def test_not_an_object(self, write_config):
        """Test that a JSON list is rejected."""
        with pytest.raises(ConfigError, match="JSON object"):
            load_experiment_config(write_config([1, 2, 3]))

    def test_unknown_key(self, write_config, minimal):
        """Test that typos in key names are reported."""
        minimal["num_run"] = 3
        with pytest.raises(ConfigError, match="Unknown experiment keys"):
            load_experiment_config(write_config(minimal))

    def test_missing_instance(self, write_config, minimal):
        """Test that an experiment without an instance is rejected."""
        del minimal["instance"]
        with pytest.raises(ConfigError, match="no 'instance'"):
            load_experiment_config(write_config(minimal))

    def test_missing_policies(self, write_config, minimal):
        """Test that policies and num_runs are required."""
        del minimal["num_runs"]
        with pytest.raises(ConfigError, match="num_runs"):
            load_experiment_config(write_config(minimal))

    def test_invalid_instance(self, write_config, minimal):
        """Test that an invalid inline instance raises ConfigError."""
        minimal["instance"]["rho"] = 1.5
        with pytest.raises(ConfigError, match="Invalid instance"):
            load_experiment_config(write_config(minimal))

    def test_bad_environment_value(self, write_config, minimal):
        """Test that a non-integer seed in the environment raises ConfigError."""
        with patch.dict(os.environ, {ENV_BASE_SEED: "seven"}):
            with pytest.raises(ConfigError, match=ENV_BASE_SEED):
                load_experiment_config(write_config(minimal))

    @pytest.mark.parametrize("name", ["experiment.json", "gap_pair.json"])
    def test_shipped_configs(self, name):
        """Test that the sample experiment files load."""
        path = Path(__file__).parent.parent / "configs" / name
        config = load_experiment_config(path)
        assert config.instance.num_arms == 2
        assert config.instance.horizon == 100000

    def test_invalid_values(self, write_config, minimal):
        """Test that ExperimentConfig validation surfaces as ConfigError."""
        minimal["num_runs"] = 0
        with pytest.raises(ConfigError, match="num_runs"):
            load_experiment_config(write_config(minimal))


class TestConfigLoader:
    """Test cases for the ConfigLoader helpers."""

    @pytest.mark.parametrize("value", [None, "1/T"])
    def test_default_delta(self, value):
        """Test the spellings of the default delta."""
        assert ConfigLoader.resolve_delta(value) is None

    @pytest.mark.parametrize("value", ["0.1", True, [0.1]])
    def test_bad_delta(self, value):
        """Test that non-numeric delta values are rejected."""
        with pytest.raises(ConfigError, match="delta"):
            ConfigLoader.resolve_delta(value)

    def test_instance_must_be_object_or_path(self, tmp_path):
        """Test that other instance values are rejected."""
        with pytest.raises(ConfigError, match="object or a file path"):
            ConfigLoader.resolve_instance(3, tmp_path)

    def test_env_default_unset(self):
        """Test that unset and empty variables give None."""
        assert ConfigLoader.env_default(ENV_N_JOBS, int) is None
        with patch.dict(os.environ, {ENV_N_JOBS: ""}):
            assert ConfigLoader.env_default(ENV_N_JOBS, int) is None


class TestValueTypes:
    """Test cases for values of the wrong type in experiment and instance files."""

    @pytest.mark.parametrize(
        "key, value",
        [
            ("num_runs", 2.5),
            ("num_runs", "3"),
            ("base_seed", 1.5),
            ("n_jobs", "x"),
            ("width_scale", "wide"),
            ("regret_bound", [0.1]),
            ("fixed_sweeps", 1.5),
            ("tight_constants", 1),
        ],
    )
    def test_wrong_type_raises_config_error(self, write_config, minimal, key, value):
        """Test that a value of the wrong type is reported as a ConfigError."""
        minimal[key] = value
        with pytest.raises(ConfigError, match=key):
            load_experiment_config(write_config(minimal))

    @pytest.mark.parametrize(
        "key, value", [("num_runs", 2.5), ("base_seed", 1.5), ("n_jobs", "x")]
    )
    def test_cli_exits_with_config_code(
        self, write_config, minimal, tmp_path, key, value
    ):
        """Test that run exits with the config status on a mistyped value."""
        minimal[key] = value
        minimal["output_dir"] = str(tmp_path / "results")
        path = write_config(minimal)
        result = CliRunner().invoke(cli, ["run", "--config", str(path)])
        assert result.exit_code == EXIT_CONFIG, result.output
        assert key in result.output
        assert not isinstance(result.exception, TypeError)

    @pytest.mark.parametrize("horizon", [500.5, True, "many", None])
    def test_non_integer_horizon(self, write_config, minimal, horizon):
        """Test that the instance horizon is not silently truncated."""
        minimal["instance"]["T"] = horizon
        with pytest.raises(ConfigError, match="Invalid instance"):
            load_experiment_config(write_config(minimal))

    def test_integral_float_horizon(self, write_config, minimal):
        """Test that an exponent-notation horizon such as 5e2 is accepted."""
        minimal["instance"]["T"] = 5e2
        config = load_experiment_config(write_config(minimal))
        assert config.instance.horizon == 500
        assert isinstance(config.instance.horizon, int)
