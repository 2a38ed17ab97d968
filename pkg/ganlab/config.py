from __future__ import annotations

import os
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent
DEFAULT_CONFIG_PATH = BASE_DIR / "config.yaml"

DEFAULTS: Dict[str, Any] = {
    "logging": {"level": "INFO", "json_format": False},
    "paths": {"log_file": "logs/ganlab.log", "out_dir": "runs"},
    "sweep": {"parallel": 1},
    "report": {"svg": True},
    "gradcheck": {"cases": 100},
}


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _env_overrides() -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    out_dir = os.getenv("GANLAB_OUT_DIR")
    if out_dir:
        overrides.setdefault("paths", {})["out_dir"] = out_dir

    level = os.getenv("GANLAB_LOG_LEVEL")
    if level:
        overrides.setdefault("logging", {})["level"] = level

    parallel = os.getenv("GANLAB_PARALLEL", "").strip()
    if parallel:
        try:
            workers = int(parallel)
        except ValueError:
            workers = 0
        if workers > 0:
            overrides.setdefault("sweep", {})["parallel"] = workers

    return overrides


def resolve_path(path_value: str, *, base_dir: Optional[Path] = None) -> Path:
    candidate = Path(path_value)
    if not candidate.is_absolute():
        candidate = (base_dir or BASE_DIR) / candidate
    return candidate.resolve()


@lru_cache(maxsize=1)
def load_config() -> Dict[str, Any]:
    # Load .env once through a single interface.
    load_dotenv(dotenv_path=BASE_DIR / ".env")

    config_path = os.getenv("GANLAB_CONFIG")
    path = resolve_path(config_path, base_dir=Path.cwd()) if config_path else DEFAULT_CONFIG_PATH

    data: Dict[str, Any] = {}
    if path.exists():
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        if isinstance(loaded, dict):
            data = loaded

    return _deep_merge(_deep_merge(DEFAULTS, data), _env_overrides())


def reload_config() -> Dict[str, Any]:
    load_config.cache_clear()
    return load_config()


def get_log_path(config: Optional[Dict[str, Any]] = None) -> Path:
    cfg = config or load_config()
    log_path = str(cfg.get("paths", {}).get("log_file", "logs/ganlab.log"))
    return resolve_path(log_path)


def get_out_dir(config: Optional[Dict[str, Any]] = None) -> Path:
    cfg = config or load_config()
    out_dir = str(cfg.get("paths", {}).get("out_dir", "runs"))
    return resolve_path(out_dir, base_dir=Path.cwd())


def get_parallelism(config: Optional[Dict[str, Any]] = None) -> int:
    cfg = config or load_config()
    try:
        return max(1, int(cfg.get("sweep", {}).get("parallel", 1)))
    except (TypeError, ValueError):
        return 1


def svg_enabled(config: Optional[Dict[str, Any]] = None) -> bool:
    cfg = config or load_config()
    return bool(cfg.get("report", {}).get("svg", True))


def gradcheck_cases(config: Optional[Dict[str, Any]] = None) -> int:
    cfg = config or load_config()
    return max(1, int(cfg.get("gradcheck", {}).get("cases", 100)))
