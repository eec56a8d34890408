import os

from agents.agent import BaseAgent
from core.pipeline import split_sequence_ids, write_split
from core.synthetic import generate_dataset, write_dataset
from models.run_models import PipelineNode


class GenerateAgent(BaseAgent):
    def execute_agent(self, node: PipelineNode):
        """Handles the 'GenerateAgent' node - renders and writes the synthetic dataset"""
        self.logger.info("---------------------------------------------------------------")
        self.logger.info("🎞️ Starting DATA GENERATION phase")

        try:
            data_dir = self.outputs.get("data_dir") or os.path.join(self.context.results_dir, "data")
            sequences = generate_dataset(self.config.synthetic, self.config.num_sequences)
            write_dataset(sequences, data_dir)

            train_ids, test_ids = split_sequence_ids([s.sequence_id for s in sequences],
                                                     self.config.held_out_sequences)
            write_split(data_dir, train_ids, test_ids)
            self.outputs.update(data_dir=data_dir, train_ids=train_ids, test_ids=test_ids)
            digest = self.context.record_input("generated_data", data_dir)
            self.context.add_artifact("data_dir", data_dir)

            masks = sum(s.num_instances() for s in sequences)
            self.logger.info(f"📊 {len(sequences)} sequences, {masks} GT masks, tree hash {digest}")
            return self._create_success_result(
                f"Generated {len(sequences)} sequences ({len(train_ids)} train / {len(test_ids)} held out)",
                "Segmentation")

        except Exception as e:
            return self._failure_from_exception("Data generation", e)
