import os

from agents.agent import BaseAgent
from core.metrics import evaluate_sequence, merge_reports, report_key_values, write_report
from core.mots_io import load_mots_results, load_mots_sequence
from models.run_models import PipelineNode


class EvaluationAgent(BaseAgent):
    def execute_agent(self, node: PipelineNode):
        """Handles the 'EvaluationAgent' node - sMOTSA / MOTSA / IDS of the held-out sequences"""
        self.logger.info("---------------------------------------------------------------")
        self.logger.info("📏 Starting EVALUATION phase")

        try:
            inputs = self._require(["data_dir", "test_ids", "tracks_dir"])
            self.context.record_input("tracks_dir", inputs["tracks_dir"])
            gt_dir = os.path.join(inputs["data_dir"], "instances_txt")

            reports = []
            for sequence_id in inputs["test_ids"]:
                gt = load_mots_sequence(os.path.join(gt_dir, f"{sequence_id}.txt"))
                result_path = os.path.join(inputs["tracks_dir"], f"{sequence_id}.txt")
                if os.path.exists(result_path):
                    hypotheses = load_mots_results(result_path)
                else:
                    self.logger.warning(f"⚠️ no result file for sequence {sequence_id}; evaluating as empty")
                    hypotheses = {}
                reports.append(evaluate_sequence(gt, hypotheses))
            report = merge_reports(reports)

            text_path = self.context.result_path("metrics.txt")
            kv_path = self.context.result_path("metrics_kv.txt")
            write_report(report, text_path, kv_path)
            values = dict(line.split("=", 1) for line in report_key_values(report))

            self.outputs.update(metrics=values, metrics_report=report)
            self.context.manifest.metrics.update(values)
            self.context.add_artifact("metrics", text_path)
            for problem in report.violations():
                self.logger.warning(f"⚠️ metric invariant violated: {problem}")

            overall = report.overall
            return self._create_success_result(
                f"sMOTSA={overall.smotsa:.4f} MOTSA={overall.motsa:.4f} IDS={overall.ids}", "End")

        except Exception as e:
            return self._failure_from_exception("Evaluation", e)
