"""
Run Logger - Run-aware logging utilities
Every record emitted while a run is active lands in <run_dir>/logs/<run_id>.log
stamped with the run id.
"""

import logging
import os
from pathlib import Path
from typing import Optional

RUN_FORMAT = "%(asctime)s - %(levelname)s - (Run: %(run_id)s) - %(name)s - %(message)s"
CONSOLE_FORMAT = "%(asctime)s - %(levelname)s - [%(name)s] - %(message)s"


class RunLogHandler(logging.FileHandler):
    """File handler writing <logs_dir>/<run_id>.log"""

    def __init__(self, run_id: str, logs_dir: str, log_level: str = "INFO"):
        self.run_id = run_id
        self.logs_dir = logs_dir
        Path(logs_dir).mkdir(parents=True, exist_ok=True)
        super().__init__(os.path.join(logs_dir, f"{run_id}.log"), encoding="utf-8")
        self.setLevel(getattr(logging, log_level.upper(), logging.INFO))
        self.setFormatter(logging.Formatter(RUN_FORMAT))

    def emit(self, record):
        if not hasattr(record, "run_id"):
            record.run_id = self.run_id
        super().emit(record)


def setup_run_logger(run_id: str, logs_dir: str, log_level: Optional[str] = None,
                     console: bool = True) -> logging.Logger:
    """
    Attach a RunLogHandler (and optionally a console handler) to the root logger
    so module loggers are captured, and return the run's own logger.

    Args:
        run_id (str): Run identifier used for the file name
        logs_dir (str): Directory for the log file
        log_level (str): Defaults to $MOTS_LOG_LEVEL or INFO
        console (bool): Also log to stderr
    """
    level_name = (log_level or os.getenv("MOTS_LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()
    root.setLevel(min(root.level or logging.WARNING, getattr(logging, level_name, logging.INFO)))

    if not any(isinstance(h, RunLogHandler) and h.run_id == run_id for h in root.handlers):
        root.addHandler(RunLogHandler(run_id, logs_dir, level_name))
    if console and not any(getattr(h, "_mots_console", False) for h in root.handlers):
        console_handler = logging.StreamHandler()
        console_handler.setLevel(getattr(logging, level_name, logging.INFO))
        console_handler.setFormatter(logging.Formatter(CONSOLE_FORMAT))
        console_handler._mots_console = True
        root.addHandler(console_handler)

    return logging.getLogger(f"RunContext.{run_id}")


def teardown_run_logger(run_id: str):
    """Detach and close the run's file handler"""
    root = logging.getLogger()
    for handler in root.handlers[:]:
        if isinstance(handler, RunLogHandler) and handler.run_id == run_id:
            root.removeHandler(handler)
            handler.close()
