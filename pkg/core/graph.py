"""
Pipeline Graph - Static stage graph of the MOTS pipeline
Stages come from config/pipeline_steps.json; edges follow the file order
and finish at the end node.
"""

import json
import os
from enum import Enum
from typing import Any, Dict, List, Optional

from models.run_models import PipelineEdge, PipelineNode

STEPS_JSON = os.path.join(os.path.dirname(__file__), "..", "config", "pipeline_steps.json")


class NodeType(Enum):
    """Agent executing each stage"""
    GENERATE = "GenerateAgent"
    SEG_TRAINING = "SegTrainingAgent"
    EMBED_TRAINING = "EmbedTrainingAgent"
    TRACKING = "TrackingAgent"
    EVALUATION = "EvaluationAgent"
    END = "EndAgent"


class PipelineGraph:
    """Stage graph built from the steps file"""

    def __init__(self, steps_path: str = STEPS_JSON):
        self.nodes: List[PipelineNode] = []
        self.edges: List[PipelineEdge] = []
        self.steps_config = self._load_steps_config(steps_path)
        self._build_graph()

    @staticmethod
    def _load_steps_config(steps_path: str) -> Dict[str, Any]:
        with open(steps_path, "r", encoding="utf-8") as f:
            return json.load(f)

    def _build_graph(self):
        known = {t.value for t in NodeType}
        previous = None
        for position, (key, step) in enumerate(self.steps_config.items(), start=1):
            if step["agent"] not in known:
                raise ValueError(f"step '{key}' names unknown agent {step['agent']}")
            node = PipelineNode(
                id=f"{key}_{position}",
                type=step["agent"],
                phase=step["phase"],
                command=step.get("command"),
                description=step.get("description"),
                reads=step.get("reads", []),
                writes=step.get("writes", []),
            )
            self.nodes.append(node)
            if previous is not None:
                self.edges.append(PipelineEdge(source=previous.id, target=node.id, label="SUCCESS"))
            previous = node

        end_node = PipelineNode(id="end_workflow", type=NodeType.END.value, phase="End")
        self.nodes.append(end_node)
        if previous is not None:
            self.edges.append(PipelineEdge(source=previous.id, target=end_node.id, label="SUCCESS"))

    def get_start_node(self) -> Optional[PipelineNode]:
        """Node with no incoming edge"""
        target_ids = {edge.target for edge in self.edges}
        for node in self.nodes:
            if node.id not in target_ids:
                return node
        return None

    def get_next_nodes(self, current_node_id: str, output: str = "SUCCESS") -> List[PipelineNode]:
        next_ids = [edge.target for edge in self.edges
                    if edge.source == current_node_id and (edge.label is None or edge.label == output)]
        return [node for node in self.nodes if node.id in next_ids]

    def get_node_by_id(self, node_id: str) -> Optional[PipelineNode]:
        for node in self.nodes:
            if node.id == node_id:
                return node
        return None

    def get_node_by_command(self, command: str) -> Optional[PipelineNode]:
        """Stage run by a CLI sub-command"""
        for node in self.nodes:
            if node.command == command:
                return node
        return None

    def save_to_file(self, filepath: str):
        data = {
            "nodes": [node.model_dump() for node in self.nodes],
            "edges": [edge.model_dump() for edge in self.edges],
        }
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False)

    @classmethod
    def load_from_file(cls, filepath: str) -> "PipelineGraph":
        """Rebuild a graph saved with save_to_file"""
        with open(filepath, "r", encoding="utf-8") as f:
            data = json.load(f)
        graph = cls.__new__(cls)
        graph.steps_config = {}
        graph.nodes = [PipelineNode(**node) for node in data["nodes"]]
        graph.edges = [PipelineEdge(**edge) for edge in data["edges"]]
        return graph

    def get_workflow_summary(self) -> Dict[str, Any]:
        phases: Dict[str, List[Dict[str, str]]] = {}
        for node in self.nodes:
            phases.setdefault(node.phase, []).append({"id": node.id, "type": node.type})
        start = self.get_start_node()
        return {
            "total_nodes": len(self.nodes),
            "total_edges": len(self.edges),
            "phases": phases,
            "start_node": start.id if start else None,
        }
