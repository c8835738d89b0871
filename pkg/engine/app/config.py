"""
Path: engine/app/config.py
Purpose: Runtime settings loaded from the environment (.env supported)
Logic:
  - load_dotenv() once, then read MSB_THREADS / MSB_LOG_LEVEL / MSB_OUTPUT_DIR
  - Settings is a pydantic model so bad values fail loudly with the variable name
  - resolve_threads applies the --threads > MSB_THREADS > auto precedence
"""

import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from .errors import ConfigError

load_dotenv()


class Settings(BaseModel):
    """Process-wide settings"""
    threads: int = Field(default=0, ge=0, description="Worker processes for replica loops (0 = auto)")
    log_level: str = Field(default="INFO", description="Root log level for the CLI")
    output_dir: str = Field(default="./out", description="Default directory for result files")


def get_settings() -> Settings:
    """Build Settings from the current environment."""
    raw = {
        "threads": os.getenv("MSB_THREADS"),
        "log_level": os.getenv("MSB_LOG_LEVEL"),
        "output_dir": os.getenv("MSB_OUTPUT_DIR"),
    }
    try:
        return Settings(**{key: value for key, value in raw.items() if value not in (None, "")})
    except ValidationError as exc:
        raise ConfigError(f"Invalid environment settings: {exc.errors()[0]['msg']}") from exc


def resolve_threads(cli_threads: Optional[int], settings: Optional[Settings] = None) -> int:
    """
    Resolve the worker count.

    Args:
        cli_threads: Value of --threads, or None when the flag was not given
        settings: Environment settings (read fresh when omitted)

    Returns:
        Number of worker processes, always >= 1
    """
    settings = settings or get_settings()
    threads = cli_threads if cli_threads is not None else settings.threads
    if threads < 0:
        raise ConfigError(f"Invalid thread count: {threads}. Must be >= 0.")
    if threads == 0:
        threads = os.cpu_count() or 1
    return threads
