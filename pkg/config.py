"""
Process-level settings for the DOG planner (CLI and plan service)
"""
import os
from pathlib import Path
from dotenv import load_dotenv, dotenv_values

# Load .env from the project root (same directory as this file), not the working directory.
ENV_PATH = Path(__file__).resolve().parent / ".env"
if ENV_PATH.exists():
    load_dotenv(dotenv_path=ENV_PATH, encoding="utf-8-sig")
else:
    load_dotenv()

_ENV_FILE_VALUES = dotenv_values(ENV_PATH, encoding="utf-8-sig") if ENV_PATH.exists() else {}


def _normalize_env_value(value: str) -> str:
    """
    Normalize values loaded from env files.

    Strips surrounding quotes and whitespace, e.g. DOG_API_KEY="abc " -> abc
    """
    v = value.strip()
    if len(v) >= 2 and ((v[0] == v[-1] == '"') or (v[0] == v[-1] == "'")):
        v = v[1:-1].strip()
    return v


def _setting(name: str, default: str) -> str:
    # Prefer the process environment; fall back to reading .env directly.
    raw = os.getenv(name) or _ENV_FILE_VALUES.get(name)
    return _normalize_env_value(raw) if raw else default


# Plan service
API_KEY = _setting("DOG_API_KEY", "change-me-dog-planner-key")
API_KEY_HEADER = "x-api-key"

# Artifacts
PLANNER_CHECKPOINT = _setting("DOG_PLANNER_CHECKPOINT", "planner.dogc")
EXECUTOR_CHECKPOINT = _setting("DOG_EXECUTOR_CHECKPOINT", "executor.dogc")
DEFAULT_CONFIG_PATH = _setting("DOG_CONFIG", "")

# Logging
LOG_LEVEL = _setting("DOG_LOG_LEVEL", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# File formats
CHECKPOINT_MAGIC = b"DOGC"
CHECKPOINT_VERSION = 1
DATASET_SCHEMA = "dog.dataset/1"
RECORD_SCHEMA = "dog.rollout/1"
PLAN_SCHEMA = "dog.plan/1"

# Maze state layout: x, y, vx, vy
STATE_DIM = 4
ACTION_DIM = 2

# Goal evaluation
SMOOTHING_EPS = 1e-8
MAX_GOAL_DEPTH = 8
SUCCESS_RADIUS = 0.5
