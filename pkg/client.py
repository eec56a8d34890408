"""
MOTS Client - Runs the full closed loop gen -> train-seg -> train-embed -> track -> eval
on one profile and reports the outcome.
"""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add project root to path
project_root = Path(__file__).parent
sys.path.append(str(project_root))

from dotenv import load_dotenv

from core.context import RunContext
from core.exceptions import MOTSError
from core.run_manager import RunManager
from core.workflow import PipelineWorkflow
from modules.model_manager import ModelManager

# Load environment variables
load_dotenv()


class MOTSClient:
    """
    Client executing the whole pipeline graph in one run directory.
    """

    def __init__(self, profile: Optional[str] = None, config_path: Optional[str] = None,
                 seed: Optional[int] = None, runs_dir: Optional[str] = None, log_level: Optional[str] = None):
        """
        Args:
            profile (str): Profile name from config/profiles.yaml
            config_path (str): YAML overrides deep-merged onto the profile
            seed (int): Master seed override
            runs_dir (str): Parent directory of run directories
            log_level (str): Console / run log level
        """
        self.profile = profile
        self.config_path = config_path
        self.seed = seed
        self.runs_dir = runs_dir
        self.log_level = log_level
        self.model_manager = ModelManager()
        self.logger = logging.getLogger(f"{__name__}.MOTSClient")

    def run_pipeline(self, argv: Optional[List[str]] = None) -> Dict[str, Any]:
        """Run every stage; returns the workflow result (never raises for stage failures)"""
        self.model_manager.configure_threads()
        config = self.model_manager.load_config(self.profile, self.config_path, self.seed)
        context = RunContext(config, "pipeline", argv=argv, manager=RunManager(self.runs_dir),
                             log_level=self.log_level)
        self.logger.info("🚀 MOTS pipeline starting")
        self.logger.info(f"📋 Profile: {config.profile}  🌱 Seed: {config.seed}")
        self.logger.info(f"📁 Run Directory: {context.run_dir}")

        workflow = PipelineWorkflow(context, model_manager=self.model_manager)
        graph_summary = workflow.graph.get_workflow_summary()
        self.logger.info(f"📊 Graph: {graph_summary['total_nodes']} nodes, {graph_summary['total_edges']} edges")

        result = workflow.execute_workflow()
        self._display_results(result)
        return result

    def _display_results(self, result: Dict[str, Any]):
        self.logger.info("=" * 60)
        self.logger.info("📊 MOTS PIPELINE RESULTS")
        self.logger.info("=" * 60)

        if result.get("success"):
            self.logger.info("✅ STATUS: COMPLETED")
        else:
            self.logger.error("❌ STATUS: FAILED")
        self.logger.info(f"📝 Message: {result.get('message')}")
        self.logger.info(f"🆔 Run: {result.get('run_id')}")

        executed = result.get("executed_nodes", [])
        failed = result.get("failed_nodes", [])
        if executed:
            self.logger.info(f"📋 Executed: {', '.join(executed)}")
        if failed:
            self.logger.error(f"❌ Failed: {', '.join(failed)}")

        metrics = result.get("outputs", {}).get("metrics") or {}
        for key in ("all.sMOTSA", "all.MOTSA", "all.IDS", "all.M"):
            if key in metrics:
                self.logger.info(f"📏 {key} = {metrics[key]}")
        self.logger.info(f"⏱️ Total Duration: {result.get('duration_seconds', 0):.1f} seconds")
        self.logger.info("=" * 60)


def main():
    """Full closed loop on the profile named by $MOTS_PROFILE (default: small)"""
    print("🎞️ SegTrack MOTS - closed-loop synthetic benchmark")
    print("=" * 60)
    client = MOTSClient()
    try:
        result = client.run_pipeline(sys.argv[1:])
        sys.exit(0 if result.get("success") else 1)
    except KeyboardInterrupt:
        print("\n⚠️ Pipeline interrupted by user")
        sys.exit(130)
    except MOTSError as e:
        print(f"\n❌ {e}")
        sys.exit(2)


if __name__ == "__main__":
    main()
