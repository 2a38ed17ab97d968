from __future__ import annotations

import json
import logging
from collections.abc import Generator
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler
from typing import Any

from ganlab.config import get_log_path, load_config


@dataclass(frozen=True)
class RunContext:
    """Identity of the training or diffusion run a log line belongs to."""

    run_id: str
    algorithm: str
    seed: int


_current_run: ContextVar[RunContext | None] = ContextVar("current_run", default=None)


def current_run() -> RunContext | None:
    return _current_run.get()


@contextmanager
def run_context(run_id: str, algorithm: str, seed: int) -> Generator[RunContext, None, None]:
    """Tag every log line inside the block with the run's id, algorithm and seed."""
    ctx = RunContext(run_id, algorithm, seed)
    token = _current_run.set(ctx)
    try:
        yield ctx
    finally:
        _current_run.reset(token)


class RunContextFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        ctx = _current_run.get()
        record.run_id = ctx.run_id if ctx else "-"
        record.algorithm = ctx.algorithm if ctx else "-"
        record.seed = ctx.seed if ctx else None
        if not hasattr(record, "step"):
            record.step = None
        return True


class StructuredFormatter(logging.Formatter):
    """One JSON object per line; run identity and step are top-level keys."""

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "run_id": getattr(record, "run_id", "-"),
            "algorithm": getattr(record, "algorithm", "-"),
            "message": record.getMessage(),
        }
        seed = getattr(record, "seed", None)
        if seed is not None:
            entry["seed"] = seed
        step = getattr(record, "step", None)
        if step is not None:
            entry["step"] = step
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        fields = getattr(record, "fields", None)
        if fields:
            entry["data"] = fields
        return json.dumps(entry, default=str)


def configure_logging(config: dict[str, Any] | None = None) -> None:
    cfg = config or load_config()
    level_name = str(cfg.get("logging", {}).get("level", "INFO")).upper()
    level = getattr(logging, level_name, logging.INFO)
    use_json = cfg.get("logging", {}).get("json_format", False)

    log_path = get_log_path(cfg)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    root = logging.getLogger()
    root.setLevel(level)

    if root.handlers:
        # Repeated CLI invocations inside one test process.
        return

    run_filter = RunContextFilter()

    if use_json:
        fmt: logging.Formatter = StructuredFormatter()
    else:
        fmt = logging.Formatter("%(asctime)s | %(levelname)s | %(run_id)s | %(name)s | %(message)s")

    stream = logging.StreamHandler()
    stream.setFormatter(fmt)
    stream.addFilter(run_filter)
    root.addHandler(stream)

    file_handler = RotatingFileHandler(log_path, maxBytes=5 * 1024 * 1024, backupCount=3, encoding="utf-8")
    file_handler.setFormatter(fmt)
    file_handler.addFilter(run_filter)
    root.addHandler(file_handler)


def log_event(logger: logging.Logger, level: int, message: str, *, step: int | None = None, **fields: Any) -> None:
    """Log a training event at ``step`` with metric ``fields`` attached."""
    if not logger.isEnabledFor(level):
        return
    logger.log(level, message, extra={"step": step, "fields": fields})
