"""
Run Manager - Creates run directories and keeps their manifests
Every CLI invocation owns one directory <runs>/<command>_<timestamp>_<hex>
holding logs/, checkpoints/, results/ and manifest.json.
"""

import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from core.exceptions import DataFormatError
from models.run_models import RunManifest, generate_run_uuid

MANIFEST_NAME = "manifest.json"


class RunManager:
    """
    Hashmap of active runs keyed by run id.
    """

    def __init__(self, runs_dir: Optional[str] = None):
        self.runs_dir = runs_dir or os.getenv("MOTS_RUNS_DIR", "runs")
        self.runs: Dict[str, RunManifest] = {}
        self.logger = logging.getLogger(f"{__name__}.RunManager")
        Path(self.runs_dir).mkdir(parents=True, exist_ok=True)

    def create_run(self, command: str, argv: Optional[List[str]] = None, profile: str = "small",
                   seed: int = 0, run_id: Optional[str] = None) -> RunManifest:
        """
        Create the directory tree and an active manifest for a new run.

        Args:
            command (str): CLI sub-command (gen, train-seg, ...)
            argv (List[str]): Full argument vector, recorded for reproduction
            profile (str): Profile name the config was loaded from
            seed (int): Master seed
            run_id (str): Specific id to use (optional)

        Returns:
            RunManifest: the registered manifest
        """
        run_id = run_id or generate_run_uuid(command)
        run_dir = os.path.join(self.runs_dir, run_id)
        logs_dir = os.path.join(run_dir, "logs")
        checkpoints_dir = os.path.join(run_dir, "checkpoints")
        results_dir = os.path.join(run_dir, "results")
        for path in (logs_dir, checkpoints_dir, results_dir):
            Path(path).mkdir(parents=True, exist_ok=True)

        manifest = RunManifest(
            run_id=run_id,
            command=command,
            argv=list(argv or []),
            profile=profile,
            seed=seed,
            run_dir=run_dir,
            logs_dir=logs_dir,
            checkpoints_dir=checkpoints_dir,
            results_dir=results_dir,
        )
        self.runs[run_id] = manifest
        self.logger.info(f"📁 Created run: {run_id}")
        return manifest

    def get_run(self, run_id: str) -> RunManifest:
        if run_id in self.runs:
            return self.runs[run_id]
        manifest = self.load_manifest(os.path.join(self.runs_dir, run_id))
        self.runs[run_id] = manifest
        return manifest

    def save_manifest(self, run_id: str) -> str:
        """Write manifest.json into the run directory and return its path"""
        manifest = self.runs[run_id]
        path = os.path.join(manifest.run_dir, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8") as f:
            f.write(manifest.model_dump_json(indent=2))
        self.logger.debug(f"💾 Manifest saved: {path}")
        return path

    @staticmethod
    def load_manifest(run_dir: str) -> RunManifest:
        path = os.path.join(run_dir, MANIFEST_NAME)
        if not os.path.exists(path):
            raise DataFormatError(f"no manifest in {run_dir}")
        try:
            return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))
        except ValidationError as e:
            raise DataFormatError(f"invalid manifest {path}: {e}") from e

    def update_run_status(self, run_id: str, status: str):
        manifest = self.runs[run_id]
        manifest.status = status
        if status in ("completed", "failed"):
            manifest.end_time = datetime.now()
        self.logger.info(f"Updated run {run_id} status to: {status}")

    def list_runs(self) -> List[Dict[str, Any]]:
        """Summaries of every run directory that has a manifest, newest first"""
        summaries = []
        for path in sorted(Path(self.runs_dir).glob(f"*/{MANIFEST_NAME}"), reverse=True):
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                self.logger.warning(f"⚠️ Unreadable manifest skipped: {path}")
                continue
            summaries.append({key: data.get(key) for key in
                              ("run_id", "command", "status", "profile", "seed", "start_time", "config_hash")})
        return summaries
