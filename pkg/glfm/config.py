import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import dotenv_values, load_dotenv

from glfm.exceptions import ConfigError
from glfm.schemas import Hyperparams

load_dotenv()

ENV_PREFIX = "GLFM_"

# Get logging settings from environment variables
LOG_LEVEL = os.getenv("GLFM_LOG_LEVEL", "WARNING").upper()
LOG_FORMAT = os.getenv("GLFM_LOG_FORMAT", "%(asctime)s %(levelname)s %(name)s: %(message)s")


def env_key(field_name: str) -> str:
    return ENV_PREFIX + field_name.upper()


def load_overrides(config_path: Optional[Path] = None) -> Dict[str, Any]:
    """Hyperparameter values from the environment, then from a dotenv config file.

    Keys are GLFM_<FIELD>, e.g. GLFM_ALPHA=5 or GLFM_SIGMA_B2=1. Values stay as
    text; pydantic coerces them when Hyperparams is built.
    """
    values: Dict[str, Optional[str]] = {k: v for k, v in os.environ.items() if k.startswith(ENV_PREFIX)}
    if config_path is not None:
        if not Path(config_path).is_file():
            raise ConfigError(f"Config file not found: {config_path}")
        values.update(dotenv_values(config_path))

    overrides = {}
    for name in Hyperparams.model_fields:
        raw = values.get(env_key(name))
        if raw not in (None, ""):
            overrides[name] = raw
    return overrides


def missing_sentinel_default() -> str:
    return os.getenv("GLFM_MISSING", "")


def configure_logging(verbosity: int = 0) -> None:
    level = LOG_LEVEL
    if verbosity == 1:
        level = "INFO"
    elif verbosity >= 2:
        level = "DEBUG"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format=LOG_FORMAT)
