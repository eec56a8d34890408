"""
Run Context - State shared by the stages of one run
Holds the resolved configuration, inter-stage outputs, phase timings,
errors and artifacts, and writes them into the run manifest.
"""

import os
from datetime import datetime
from typing import Any, Dict, List, Optional

from core.run_manager import RunManager
from models.config_models import PipelineConfig
from utils.hashing import config_hash, content_hash
from utils.run_logger import setup_run_logger, teardown_run_logger


class RunContext:
    """
    Manages one run: configuration, stage outputs and the manifest.
    """

    def __init__(self, config: PipelineConfig, command: str, argv: Optional[List[str]] = None,
                 manager: Optional[RunManager] = None, log_level: Optional[str] = None,
                 console: bool = True):
        """
        Args:
            config (PipelineConfig): Resolved configuration for the run
            command (str): CLI sub-command that owns the run
            argv (List[str]): Argument vector recorded in the manifest
            manager (RunManager): Run registry (a fresh one under $MOTS_RUNS_DIR otherwise)
            log_level (str): Log level for the run log
            console (bool): Mirror the run log to the console
        """
        self.config = config
        self.manager = manager or RunManager()
        self.manifest = self.manager.create_run(command, argv, profile=config.profile, seed=config.seed)
        self.manifest.config = config.model_dump(mode="json")
        self.manifest.config_hash = config_hash(config)
        self.logger = setup_run_logger(self.run_id, self.logs_dir, log_level, console)
        self.outputs: Dict[str, Any] = {}
        self.current_phase: Optional[str] = None
        self.logger.info(f"🆔 Run {self.run_id} (profile={config.profile}, seed={config.seed}, "
                         f"config={self.manifest.config_hash[:12]})")

    @property
    def run_id(self) -> str:
        return self.manifest.run_id

    @property
    def run_dir(self) -> str:
        return self.manifest.run_dir

    @property
    def logs_dir(self) -> str:
        return self.manifest.logs_dir

    @property
    def checkpoints_dir(self) -> str:
        return self.manifest.checkpoints_dir

    @property
    def results_dir(self) -> str:
        return self.manifest.results_dir

    @property
    def errors(self) -> List[Dict[str, Any]]:
        return self.manifest.errors

    @property
    def phase_timings(self) -> Dict[str, Dict[str, Any]]:
        return self.manifest.phase_timings

    def start_phase(self, phase_name: str):
        """Mark the start of a pipeline phase"""
        self.current_phase = phase_name
        self.phase_timings[phase_name] = {"start": datetime.now().isoformat()}
        self.logger.info(f"🔄 Starting phase: {phase_name}")

    def end_phase(self, phase_name: str, success: bool = True):
        """Mark the end of a pipeline phase and record its duration"""
        timing = self.phase_timings.get(phase_name)
        if timing is None:
            return
        end = datetime.now()
        duration = (end - datetime.fromisoformat(timing["start"])).total_seconds()
        timing.update({"end": end.isoformat(), "success": success, "duration_seconds": duration})
        status = "✅ Completed" if success else "❌ Failed"
        self.logger.info(f"{status} phase: {phase_name} ({duration:.2f}s)")

    def add_error(self, phase: str, error_message: str, error_type: str = "MOTSError"):
        self.errors.append({
            "phase": phase,
            "type": error_type,
            "message": error_message,
            "timestamp": datetime.now().isoformat(),
        })
        self.logger.error(f"❌ Error in {phase}: {error_message}")

    def add_artifact(self, name: str, path: str):
        self.manifest.artifacts[name] = path
        self.logger.info(f"📦 Artifact {name}: {path}")

    def record_input(self, name: str, path: str) -> Optional[str]:
        """Store the git-style content hash of an input file or directory"""
        if not path or not os.path.exists(path):
            return None
        digest = content_hash(path)
        self.manifest.input_hashes[name] = digest
        self.logger.debug(f"🔐 Input {name} = {digest}")
        return digest

    def result_path(self, *parts: str) -> str:
        return os.path.join(self.results_dir, *parts)

    def save_manifest(self) -> str:
        path = self.manager.save_manifest(self.run_id)
        self.logger.info(f"💾 Manifest saved to: {path}")
        return path

    def finish(self, success: bool) -> str:
        """Close the run: status, manifest, log handler"""
        self.manager.update_run_status(self.run_id, "completed" if success else "failed")
        path = self.save_manifest()
        teardown_run_logger(self.run_id)
        return path
