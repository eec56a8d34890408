"""
Run Models - Pipeline graph nodes/edges and the per-run manifest
"""

import uuid
from datetime import datetime
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class PipelineNode(BaseModel):
    """
    A stage of the pipeline graph.
    Each node is executed by the agent named in `type`.
    """
    id: str = Field(description="Unique identifier for the node (e.g., 'generate_1', 'train_seg_2').")
    type: str = Field(description="Agent class that executes the node.")
    phase: str = Field(description="Pipeline phase (Data, Segmentation, Embedding, Tracking, Evaluation, End).")
    command: Optional[str] = Field(None, description="CLI sub-command that runs this stage alone.")
    description: Optional[str] = Field(None, description="What the stage produces.")
    reads: List[str] = Field(default_factory=list, description="Outputs this node consumes.")
    writes: List[str] = Field(default_factory=list, description="Outputs this node produces.")


class PipelineEdge(BaseModel):
    source: str = Field(description="ID of the source node.")
    target: str = Field(description="ID of the target node.")
    label: Optional[str] = Field(None, description="SUCCESS or FAILURE; None follows either.")


class RunManifest(BaseModel):
    """
    Everything needed to reproduce a run: config hash, seed, input content
    hashes, artifacts, timings and the training decisions taken.
    """
    run_id: str
    command: str
    argv: List[str] = Field(default_factory=list)
    profile: str = "small"
    seed: int = 0
    config_hash: str = ""
    config: Dict[str, Any] = Field(default_factory=dict)
    input_hashes: Dict[str, str] = Field(default_factory=dict, description="path -> git-style sha1")
    artifacts: Dict[str, str] = Field(default_factory=dict)
    status: str = Field(default="active", description="active, running, completed, failed")
    start_time: datetime = Field(default_factory=datetime.now)
    end_time: Optional[datetime] = None
    phase_timings: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    errors: List[Dict[str, Any]] = Field(default_factory=list)
    executed_nodes: List[str] = Field(default_factory=list)
    failed_nodes: List[str] = Field(default_factory=list)
    s_schedule: Optional[List[int]] = Field(None, description="S of each embedding stage as trained")
    embed_stages: List[str] = Field(default_factory=list)
    tracker_gate: Optional[float] = None
    metrics: Dict[str, Any] = Field(default_factory=dict)
    run_dir: str = ""
    logs_dir: str = ""
    checkpoints_dir: str = ""
    results_dir: str = ""


def generate_run_uuid(command: str) -> str:
    """
    Format: {command}_{YYYYmmdd_HHMMSS}_{hex}
    """
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return f"{command.replace('-', '_')}_{timestamp}_{uuid.uuid4().hex[:8]}"
