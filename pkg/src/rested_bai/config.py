"""
Experiment configuration loading, with environment-variable defaults.
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Union

from rested_bai.env import BanditInstance, instance_from_dict, load_instance
from rested_bai.exceptions import ConfigError
from rested_bai.harness import ExperimentConfig

logger = logging.getLogger(__name__)

ENV_BASE_SEED = "RESTED_BAI_BASE_SEED"
ENV_OUTPUT_DIR = "RESTED_BAI_OUTPUT_DIR"
ENV_N_JOBS = "RESTED_BAI_N_JOBS"

EXPERIMENT_KEYS = {
    "instance",
    "policies",
    "num_runs",
    "base_seed",
    "delta",
    "output_dir",
    "n_jobs",
    "width_scale",
    "tight_constants",
    "fixed_sweeps",
    "regret_bound",
}


class ConfigLoader:
    """
    Reads experiment files. Keys absent from the file fall back to environment
    variables, then to the ExperimentConfig defaults.
    """

    @staticmethod
    def read_json(path: Union[str, Path]) -> Dict[str, Any]:
        """
        Parse a JSON object from a file.

        Raises:
            ConfigError: If the file is unreadable or does not hold a JSON object
        """
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            logger.error("Error reading config file %s: %s", path, e)
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path} must contain a JSON object")
        return data

    @staticmethod
    def resolve_instance(value: Any, base_dir: Path) -> BanditInstance:
        """
        Inline instance object, or a path relative to the experiment file.

        Raises:
            ConfigError: If the value is neither
        """
        if isinstance(value, dict):
            return instance_from_dict(value)
        if isinstance(value, str):
            path = Path(value)
            return load_instance(path if path.is_absolute() else base_dir / path)
        raise ConfigError("'instance' must be an object or a file path")

    @staticmethod
    def resolve_delta(value: Any) -> Optional[float]:
        """
        None and "1/T" both mean the default 1/T.

        Raises:
            ConfigError: If the value is not a number in (0, 1)
        """
        if value is None or value == "1/T":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"delta must be a number, null or '1/T', got {value!r}")
        return float(value)

    @staticmethod
    def env_default(name: str, convert: Callable[[str], Any]) -> Any:
        """
        Converted value of an environment variable, or None when unset.

        Raises:
            ConfigError: If the variable cannot be converted
        """
        raw = os.environ.get(name)
        if raw is None or raw == "":
            return None
        try:
            return convert(raw)
        except ValueError as e:
            raise ConfigError(f"Invalid {name}={raw!r}: {e}") from e


def load_experiment_config(
    path: Union[str, Path], overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """
    Load an experiment file.

    Args:
        path: JSON experiment file
        overrides: Values that replace file and environment settings (CLI options);
            None entries are ignored

    Returns:
        ExperimentConfig: Validated configuration

    Raises:
        ConfigError: If the file or any value is invalid
    """
    path = Path(path)
    data = ConfigLoader.read_json(path)
    unknown = set(data) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"Unknown experiment keys {sorted(unknown)}")
    env_defaults: Tuple[Tuple[str, str, Callable[[str], Any]], ...] = (
        ("base_seed", ENV_BASE_SEED, int),
        ("output_dir", ENV_OUTPUT_DIR, str),
        ("n_jobs", ENV_N_JOBS, int),
    )
    for key, env_name, converter in env_defaults:
        if key not in data:
            value = ConfigLoader.env_default(env_name, converter)
            if value is not None:
                data[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    if "instance" not in data:
        raise ConfigError(f"{path} has no 'instance'")
    if "policies" not in data or "num_runs" not in data:
        raise ConfigError(f"{path} needs both 'policies' and 'num_runs'")

    fields: Dict[str, Any] = {
        "instance": ConfigLoader.resolve_instance(data["instance"], path.parent),
        "policies": tuple(data["policies"]),
        "num_runs": data["num_runs"],
        "delta": ConfigLoader.resolve_delta(data.get("delta")),
    }
    for key in (
        "base_seed",
        "output_dir",
        "n_jobs",
        "width_scale",
        "tight_constants",
        "fixed_sweeps",
        "regret_bound",
    ):
        if key in data:
            fields[key] = data[key]
    if "output_dir" in fields:
        fields["output_dir"] = Path(fields["output_dir"])
    try:
        config = ExperimentConfig(**fields)
    except TypeError as e:
        raise ConfigError(f"Invalid experiment file {path}: {e}") from e
    logger.info(
        "Loaded experiment %s: %d runs of %s",
        path,
        config.num_runs,
        ", ".join(config.policies),
    )
    return config
