"""
Configuration module for the carbon-aware FaaS scheduler.

Process-wide settings come from the environment (and `.env`); each
experiment is described by a YAML file parsed into ExperimentConfig.
"""
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from models.schemas import ExperimentConfig

load_dotenv()

PATH_KEYS = ("trace_path", "profiles_path", "environment_path", "out", "summary", "step_log")


class Settings(BaseSettings):
    """Application settings."""
    model_config = SettingsConfigDict(env_file=".env", case_sensitive=False, extra="ignore")

    log_level: str = "INFO"
    output_dir: str = "outputs/metrics"
    default_config_path: str = "data/experiment.yaml"

    # Decision budget per epoch (seconds) and candidate evaluation threads
    decision_budget_s: float = 180.0
    eval_workers: int = 1
    oracle_bound: int = 1_000_000

    # API Configuration
    api_host: str = os.getenv("API_HOST", "0.0.0.0")
    api_port: int = int(os.getenv("API_PORT", "8000"))
    api_reload: bool = os.getenv("API_RELOAD", "false").lower() == "true"


settings = Settings()


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"]) or "config"
        if item["type"] == "extra_forbidden":
            parts.append(f"unknown key '{key}'")
        elif item["type"] == "missing":
            parts.append(f"missing key '{key}'")
        else:
            parts.append(f"'{key}': {item['msg']}")
    return "; ".join(parts)


def parse_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Load and validate an experiment config file.

    Args:
        path: YAML file with ExperimentConfig keys
        overrides: Values that replace file keys (None entries are ignored)

    Raises:
        ConfigError: On unreadable files, unknown/missing keys, type or range errors
    """
    path = Path(path)
    try:
        with open(path) as f:
            raw = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: malformed YAML: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    data = dict(raw)
    data.setdefault("decision_budget_s", settings.decision_budget_s)
    data.setdefault("eval_workers", settings.eval_workers)
    data.setdefault("oracle_bound", settings.oracle_bound)

    # file paths are relative to the config file, override paths to the caller
    base = path.parent
    for key in PATH_KEYS:
        value = data.get(key)
        if isinstance(value, str) and value and not Path(value).is_absolute():
            data[key] = str(base / value)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    data.update(overrides)
    hops = data.get("hops_per_node")
    if "nodes" in overrides and "hops_per_node" not in overrides and isinstance(hops, list) and hops:
        # uniform hop lists follow a node-count override
        if len(hops) != overrides["nodes"] and len(set(hops)) == 1:
            data["hops_per_node"] = [hops[0]] * int(overrides["nodes"])

    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_describe(e)}") from None
