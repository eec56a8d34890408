import os

from agents.agent import BaseAgent
from core.mots_io import write_mots_lines
from core.pipeline import load_split, track_frames
from models.run_models import PipelineNode


class TrackingAgent(BaseAgent):
    def execute_agent(self, node: PipelineNode):
        """Handles the 'TrackingAgent' node - writes one result file per held-out sequence"""
        self.logger.info("---------------------------------------------------------------")
        self.logger.info("🧭 Starting TRACKING phase")

        try:
            inputs = self._require(["data_dir", "test_ids", "seg_checkpoint", "embed_checkpoint"])
            for key in ("data_dir", "seg_checkpoint", "embed_checkpoint"):
                self.context.record_input(key, inputs[key])

            seg_model, seg_config = self.model_manager.load_seg_model(inputs["seg_checkpoint"])
            embed_model, embed_config, extra = self.model_manager.load_embed_model(inputs["embed_checkpoint"])
            config = self.config.model_copy(update={"segnet": seg_config, "embed": embed_config})

            gate = self.outputs.get("tracker_gate") or extra.get("tracker_gate") or config.tracker.max_distance
            params = config.tracker.model_copy(update={"max_distance": float(gate)})
            self.context.manifest.tracker_gate = params.max_distance
            self.logger.info(f"🎚️ association gate {params.max_distance:.4f}, max_age {params.max_age}")

            tracks_dir = self.outputs.get("tracks_dir") or self.context.result_path("tracks")
            sequences = load_split(inputs["data_dir"], inputs["test_ids"])
            for sequence in sequences:
                tracked = track_frames(sequence, seg_model, embed_model, config, params)
                write_mots_lines(os.path.join(tracks_dir, f"{sequence.sequence_id}.txt"), tracked)

            self.outputs["tracks_dir"] = tracks_dir
            self.context.add_artifact("tracks_dir", tracks_dir)
            return self._create_success_result(f"Tracked {len(sequences)} sequences into {tracks_dir}", "Evaluation")

        except Exception as e:
            return self._failure_from_exception("Tracking", e)
