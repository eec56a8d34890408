import json
import os

from agents.agent import BaseAgent
from core.augment import build_instance_db
from core.pipeline import load_split, training_samples
from models.run_models import PipelineNode
from modules.model_manager import SEG_KIND
from modules.seg_net import train_segnet


class SegTrainingAgent(BaseAgent):
    def execute_agent(self, node: PipelineNode):
        """Handles the 'SegTrainingAgent' node - trains the dense-map network"""
        self.logger.info("---------------------------------------------------------------")
        self.logger.info("🧠 Starting SEGMENTATION TRAINING phase")

        try:
            inputs = self._require(["data_dir", "train_ids"])
            self.context.record_input("data_dir", inputs["data_dir"])
            sequences = load_split(inputs["data_dir"], inputs["train_ids"])
            samples = training_samples(sequences)

            instance_db = None
            if self.config.seg_train.copy_paste:
                instance_db = build_instance_db(sequences)
                if len(instance_db) == 0:
                    self.logger.warning("⚠️ no pedestrian instances for copy-and-paste; training without it")
                    instance_db = None

            model, history = train_segnet(samples, self.config.segnet, self.config.seg_train,
                                          self.config.paste, instance_db)

            path = os.path.join(self.context.checkpoints_dir, "segnet.pt")
            self.model_manager.save_checkpoint(model, SEG_KIND, self.config.segnet, path,
                                               extra={"loss_history": history})
            history_path = self.context.result_path("seg_loss.json")
            with open(history_path, "w", encoding="utf-8") as f:
                json.dump(history, f, indent=2)

            self.outputs["seg_checkpoint"] = path
            self.context.add_artifact("seg_checkpoint", path)
            self.context.add_artifact("seg_loss", history_path)
            return self._create_success_result(
                f"Segmentation network trained on {len(samples)} frames, final loss {history[-1]:.5f}",
                "Embedding")

        except Exception as e:
            return self._failure_from_exception("Segmentation training", e)
