"""Environment-driven settings, loaded from a local .env file when present."""
import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

from common.errors import ConfigError

load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_CONFIG = PROJECT_ROOT / "configs" / "incomescm.yaml"
DEFAULT_ADULT_DIR = PROJECT_ROOT / "data" / "adult"
DEFAULT_OUT_DIR = PROJECT_ROOT / "results"


@dataclass(frozen=True)
class Settings:
    config_path: Path
    adult_path: Path
    out_dir: Path
    workers: int
    log_level: str


def load_settings():
    """Read settings from the environment, falling back to project defaults."""
    workers_raw = os.getenv("INCOMESCM_WORKERS", "1")
    try:
        workers = int(workers_raw)
    except ValueError as err:
        raise ConfigError(f"INCOMESCM_WORKERS must be an integer, got {workers_raw!r}") from err
    if workers < 1:
        raise ConfigError("INCOMESCM_WORKERS must be at least 1")

    return Settings(
        config_path=Path(os.getenv("INCOMESCM_CONFIG", str(DEFAULT_CONFIG))),
        adult_path=Path(os.getenv("INCOMESCM_ADULT_PATH", str(DEFAULT_ADULT_DIR))),
        out_dir=Path(os.getenv("INCOMESCM_OUT_DIR", str(DEFAULT_OUT_DIR))),
        workers=workers,
        log_level=os.getenv("INCOMESCM_LOG_LEVEL", "INFO").upper(),
    )
