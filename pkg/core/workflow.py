"""
Pipeline Workflow Engine - Walks the stage graph and dispatches each node to its agent
Runs synchronously: every stage is CPU-bound and depends on the previous one.
"""

import os
from datetime import datetime
from typing import Any, Dict, List, Optional

from agents.EmbedTrainingAgent import EmbedTrainingAgent
from agents.EndAgent import EndAgent
from agents.EvaluationAgent import EvaluationAgent
from agents.GenerateAgent import GenerateAgent
from agents.SegTrainingAgent import SegTrainingAgent
from agents.TrackingAgent import TrackingAgent
from core.graph import PipelineGraph
from models.run_models import PipelineNode
from modules.model_manager import ModelManager


class PipelineWorkflow:
    """
    Executes the pipeline graph for one RunContext.
    """

    def __init__(self, context, graph: Optional[PipelineGraph] = None,
                 model_manager: Optional[ModelManager] = None):
        self.context = context
        self.logger = context.logger
        self.graph = graph or PipelineGraph()
        self.outputs = context.outputs
        self.executed_nodes = context.manifest.executed_nodes
        self.failed_nodes = context.manifest.failed_nodes
        self.last_error: Optional[Dict[str, Any]] = None

        manager = model_manager or ModelManager()
        self.agents = {
            "GenerateAgent": GenerateAgent(context, self.outputs, "Synthetic data generation", "GenerateAgent", manager),
            "SegTrainingAgent": SegTrainingAgent(context, self.outputs, "Segmentation training", "SegTrainingAgent", manager),
            "EmbedTrainingAgent": EmbedTrainingAgent(context, self.outputs, "Embedding training", "EmbedTrainingAgent", manager),
            "TrackingAgent": TrackingAgent(context, self.outputs, "Tracking", "TrackingAgent", manager),
            "EvaluationAgent": EvaluationAgent(context, self.outputs, "Evaluation", "EvaluationAgent", manager),
            "EndAgent": EndAgent(context, self.outputs, "End workflow", "EndAgent", manager),
        }

        graph_file = os.path.join(context.results_dir, "pipeline_graph.json")
        self.graph.save_to_file(graph_file)
        self.logger.debug(f"📊 Workflow graph saved to: {graph_file}")

    def execute_workflow(self, start_node_id: Optional[str] = None,
                         stop_after: Optional[str] = None, finish: bool = True) -> Dict[str, Any]:
        """
        Execute the graph from a node until the end node (or `stop_after`).

        Args:
            start_node_id (str): Node to start from (default: the graph's start node)
            stop_after (str): Node after which execution stops successfully
            finish (bool): Close the run context (status, manifest, log handler) afterwards

        Returns:
            Dict[str, Any]: workflow result; `error_type` names the exception of a failed node
        """
        self.logger.info("🚀 Starting pipeline execution")
        workflow_start_time = datetime.now()
        success = False
        try:
            self.context.manager.update_run_status(self.context.run_id, "running")
            if not start_node_id:
                start_node = self.graph.get_start_node()
                if not start_node:
                    raise ValueError("No start node found in graph")
                start_node_id = start_node.id

            self.logger.info(f"🎯 Starting from node: {start_node_id}" +
                             (f", stopping after {stop_after}" if stop_after else ""))
            success = self._execute_graph([start_node_id], stop_after)
            message = "Pipeline completed successfully" if success else "Pipeline execution incomplete"
            return self._create_workflow_result(success, message, workflow_start_time)

        except Exception as e:
            error_msg = f"Workflow execution failed: {e}"
            self.logger.error(error_msg)
            return self._create_workflow_result(False, error_msg, workflow_start_time)
        finally:
            if finish:
                self.context.finish(success)

    def _execute_graph(self, ready_nodes: List[str], stop_after: Optional[str]) -> bool:
        """Breadth-first walk; True when the end node (or stop_after) is reached"""
        while ready_nodes:
            current_node_id = ready_nodes.pop(0)
            current_node = self.graph.get_node_by_id(current_node_id)
            if not current_node:
                self.logger.error(f"Node '{current_node_id}' not found. Skipping.")
                continue

            self.logger.info(f"🔄 Executing Node: {current_node_id} ({current_node.type})")
            response = self._execute_node(current_node)
            self.logger.info(f"📊 Response from Node: {current_node_id} - {response.get('type', 'unknown')}: "
                             f"{response.get('message')}")

            if current_node_id not in self.executed_nodes:
                self.executed_nodes.append(current_node_id)

            if response.get("type") == "error":
                self.logger.error(f"❌ Node {current_node_id} failed: {response.get('message')}")
                self.last_error = {"node": current_node_id, "error_type": response.get("error_type"),
                                   "message": response.get("message")}
                if current_node_id not in self.failed_nodes:
                    self.failed_nodes.append(current_node_id)
                return False

            if current_node.type == "EndAgent":
                self.logger.info("🏁 Reached end node - pipeline completed")
                return True
            if current_node_id == stop_after:
                self.logger.info(f"⏹️ Stopping after {current_node_id}")
                return True

            next_nodes = self.graph.get_next_nodes(current_node_id, "SUCCESS")
            self.logger.debug(f"🔗 Next nodes from {current_node_id}: {[n.id for n in next_nodes]}")
            ready_nodes.extend(node.id for node in next_nodes)
            self.context.save_manifest()

        return False

    def _execute_node(self, node: PipelineNode) -> Dict[str, Any]:
        if node.type not in self.agents:
            return {"type": "error", "error_type": "ConfigurationError",
                    "message": f"Agent {node.type} not found in agents dictionary", "node": node.id}
        self.context.start_phase(node.phase)
        result = self.agents[node.type].execute_agent(node)
        self.context.end_phase(node.phase, result.get("type") == "success")
        return result

    def _create_workflow_result(self, success: bool, message: str, start_time: datetime) -> Dict[str, Any]:
        end_time = datetime.now()
        return {
            "success": success,
            "message": message,
            "run_id": self.context.run_id,
            "run_dir": self.context.run_dir,
            "start_time": start_time.isoformat(),
            "end_time": end_time.isoformat(),
            "duration_seconds": (end_time - start_time).total_seconds(),
            "executed_nodes": list(self.executed_nodes),
            "failed_nodes": list(self.failed_nodes),
            "error": self.last_error,
            "error_type": self.last_error["error_type"] if self.last_error else None,
            "outputs": {k: v for k, v in self.outputs.items() if k != "metrics_report"},
            "graph_summary": self.graph.get_workflow_summary(),
        }
