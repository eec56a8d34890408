import os

from agents.agent import BaseAgent
from core.pipeline import calibrate_gate, held_out_triplet_accuracy, load_split
from models.run_models import PipelineNode
from modules.embed_net import run_multistage_training
from modules.model_manager import EMBED_KIND


class EmbedTrainingAgent(BaseAgent):
    def execute_agent(self, node: PipelineNode):
        """
        Handles the 'EmbedTrainingAgent' node - staged embedding training,
        association gate calibration and held-out triplet accuracy
        """
        self.logger.info("---------------------------------------------------------------")
        self.logger.info("🧠 Starting EMBEDDING TRAINING phase")

        try:
            inputs = self._require(["data_dir", "train_ids"])
            self.context.record_input("data_dir", inputs["data_dir"])
            train = load_split(inputs["data_dir"], inputs["train_ids"])

            model, report = run_multistage_training(
                train, self.config.embed,
                on_stage=lambda r: self.logger.info(f"📈 stage {r.name}: S={r.s} loss={r.final_loss:.5f}"))
            self.context.manifest.s_schedule = report.s_schedule
            self.context.manifest.embed_stages = [stage.name for stage in report.stages]

            gate = calibrate_gate(train, model, self.config)
            self.context.manifest.tracker_gate = gate

            accuracy = None
            if self.outputs.get("test_ids"):
                accuracy = held_out_triplet_accuracy(load_split(inputs["data_dir"], self.outputs["test_ids"]),
                                                     model, self.config)
                self.context.manifest.metrics["triplet_accuracy"] = accuracy
                self.logger.info(f"🎯 held-out triplet accuracy: {accuracy:.4f}")

            path = os.path.join(self.context.checkpoints_dir, "embednet.pt")
            self.model_manager.save_checkpoint(model, EMBED_KIND, self.config.embed, path, extra={
                "tracker_gate": gate,
                "s_schedule": report.s_schedule,
                "report": report.model_dump(mode="json"),
            })

            self.outputs.update(embed_checkpoint=path, tracker_gate=gate, triplet_accuracy=accuracy)
            self.context.add_artifact("embed_checkpoint", path)
            mode = "multi-stage" if report.multistage else "joint"
            return self._create_success_result(
                f"Embedding network trained ({mode}, S={report.s_schedule}), gate {gate:.4f}", "Tracking")

        except Exception as e:
            return self._failure_from_exception("Embedding training", e)
