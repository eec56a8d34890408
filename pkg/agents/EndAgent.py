from datetime import datetime

from agents.agent import BaseAgent
from models.run_models import PipelineNode


class EndAgent(BaseAgent):
    def execute_agent(self, node: PipelineNode):
        """
        Handles the 'EndAgent' node - Workflow completion
        """
        self.logger.info("---------------------------------------------------------------")
        self.logger.info("🏁 Pipeline completed successfully")

        summary = {
            "executed_nodes": list(self.context.manifest.executed_nodes),
            "artifacts": dict(self.context.manifest.artifacts),
            "metrics": self.outputs.get("metrics"),
            "completion_time": datetime.now().isoformat(),
        }

        return {
            "phase": "End",
            "type": "success",
            "message": "🎉 MOTS pipeline completed",
            "summary": summary,
        }
