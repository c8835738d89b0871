"""
Path: engine/app/services/config_loader.py
Purpose: Strict loading of experiment configs and mechanism files
Logic:
  - JSON in, pydantic models out; every failure becomes a ConfigError naming the file and key
  - Relative mechanism paths resolve against the config file's directory
  - config_digest hashes the canonical JSON form, so re-serialized configs keep their digest
"""

import hashlib
import json
import os
from typing import Any, Dict, Optional

from pydantic import BaseModel, ValidationError

from ..errors import ConfigError
from ..models.experiment import ExperimentConfig
from ..models.mechanism import MechanismFile


def _read_json(path: str) -> Any:
    if not os.path.isfile(path):
        raise ConfigError(f"File not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Malformed JSON in {path}: {exc}") from exc


def _describe(exc: ValidationError, path: str) -> str:
    problems = []
    for error in exc.errors():
        location = ".".join(str(part) for part in error["loc"]) or "<root>"
        if error["type"] == "extra_forbidden":
            problems.append(f"unknown key '{location}'")
        else:
            problems.append(f"{location}: {error['msg']}")
    return f"Invalid {path}: " + "; ".join(problems)


def config_from_dict(raw: Dict[str, Any], source: str = "<config>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc, source)) from exc


def parse_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Parse an experiment config file.

    Args:
        path: JSON file
        overrides: Values that replace file entries (command-line flags)

    Returns:
        Validated ExperimentConfig with the mechanism path made absolute
    """
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise ConfigError(f"Invalid {path}: top level must be an object")
    raw.update(overrides or {})
    mechanism = raw.get("mechanism")
    if isinstance(mechanism, str) and not os.path.isabs(mechanism):
        raw["mechanism"] = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), mechanism))
    return config_from_dict(raw, path)


def dump_config(config: ExperimentConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json", by_alias=True)


def digest(model: BaseModel) -> str:
    payload = json.dumps(model.model_dump(mode="json", by_alias=True), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def config_digest(config: ExperimentConfig) -> str:
    """Digest over every semantic field of the config (the output location is not one)."""
    payload = json.dumps(config.model_dump(mode="json", by_alias=True, exclude={"output_dir"}), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def load_mechanism(path: str) -> MechanismFile:
    """Parse a mechanism file (unknown keys rejected)."""
    raw = _read_json(path)
    try:
        return MechanismFile.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc, path)) from exc
