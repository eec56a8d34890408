from abc import ABC, abstractmethod
from datetime import datetime
from typing import Any, Dict, List
import logging
import os

from core.exceptions import ContractViolation, MOTSError
from modules.model_manager import ModelManager


class BaseAgent(ABC):
    def __init__(self, context, outputs, task, name, model_manager: ModelManager = None):
        self.logger = logging.getLogger(f"agents.{self.__class__.__name__}")
        self.logger.setLevel(logging.DEBUG)

        # Stage activity goes to the run's agents_activity.log; records still
        # propagate so the run log sees them too
        log_file_path = os.path.join(context.logs_dir, "agents_activity.log")
        for handler in self.logger.handlers[:]:
            if isinstance(handler, logging.FileHandler) and handler.baseFilename != os.path.abspath(log_file_path):
                self.logger.removeHandler(handler)
                handler.close()
        if not self.logger.handlers:
            file_handler = logging.FileHandler(log_file_path, encoding="utf-8")
            file_handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
            file_handler.setLevel(logging.INFO)
            self.logger.addHandler(file_handler)

        self.logger.debug(f"🚀 {self.__class__.__name__} initialized - Log file: {log_file_path}")

        self.task = task
        self.name = name
        self.context = context
        self.outputs = outputs
        self.model_manager = model_manager or ModelManager()

    @property
    def config(self):
        return self.context.config

    def _require(self, keys: List[str]) -> Dict[str, Any]:
        """Outputs this stage reads; a missing one means an earlier stage was skipped"""
        missing = [key for key in keys if self.outputs.get(key) is None]
        if missing:
            raise ContractViolation(f"{self.name} needs {', '.join(missing)} from an earlier stage")
        return {key: self.outputs[key] for key in keys}

    def _create_failure_result(self, error_type: str, message: str) -> Dict[str, Any]:
        self.context.add_error(self.context.current_phase or self.name, message, error_type)
        return {
            "phase": self.context.current_phase,
            "type": "error",
            "error_type": error_type,
            "message": message,
            "timestamp": datetime.now().isoformat(),
            "next_phase": None,  # stop execution on failure
            "workflow_outputs": self.outputs,
        }

    def _create_success_result(self, message: str, next_phase: str) -> Dict[str, Any]:
        return {
            "phase": self.context.current_phase,
            "type": "success",
            "message": message,
            "timestamp": datetime.now().isoformat(),
            "next_phase": next_phase,
            "workflow_outputs": self.outputs,
        }

    def _failure_from_exception(self, stage: str, error: Exception) -> Dict[str, Any]:
        """MOTS errors keep their class name so the CLI can map exit codes"""
        if isinstance(error, MOTSError):
            self.logger.error(f"❌ {stage} failed: {error}")
            return self._create_failure_result(type(error).__name__, str(error))
        self.logger.exception(f"❌ {stage} failed unexpectedly")
        return self._create_failure_result("UnexpectedError", f"{type(error).__name__}: {error}")

    @abstractmethod
    def execute_agent(self, node):
        pass
