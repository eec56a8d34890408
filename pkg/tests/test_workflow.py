import json
import os

import numpy as np
import pytest
import torch

from client import MOTSClient
from core.context import RunContext
from core.exceptions import ConfigurationError, DataFormatError
from core.pipeline import (
    SPLIT_FILE,
    resolve_split,
    segment_frame,
    split_sequence_ids,
    track_frames,
    write_split,
)
from core.run_manager import RunManager
from core.synthetic import write_dataset
from core.workflow import PipelineWorkflow
from models.mots_models import InstanceSegmentation
from modules.embed_net import EmbedNet
from modules.seg_net import SegNet


@pytest.fixture
def context(tiny_config, tmp_path):
    return RunContext(tiny_config, "pipeline", ["pipeline"], manager=RunManager(str(tmp_path / "runs")),
                      console=False)


def test_split_holds_out_last_sequences():
    train, test = split_sequence_ids(["0003", "0000", "0002", "0001"], 1)
    assert train == ["0000", "0001", "0002"] and test == ["0003"]
    with pytest.raises(DataFormatError):
        split_sequence_ids(["0000", "0001"], 2)


def test_resolve_split_prefers_recorded_split(tiny_sequences, tmp_path):
    with pytest.raises(DataFormatError):
        resolve_split(str(tmp_path), 1)
    data_dir = write_dataset(tiny_sequences[:3], str(tmp_path / "data"))
    assert resolve_split(data_dir, 1) == (["0000", "0001"], ["0002"])
    write_split(data_dir, ["0002"], ["0000", "0001"])
    assert resolve_split(data_dir, 1) == (["0002"], ["0000", "0001"])


def test_segment_frame_returns_input_resolution_instances(tiny_config, tiny_sequences):
    torch.manual_seed(0)
    frame = tiny_sequences[0].frames[0]
    segmentation = segment_frame(frame, SegNet(tiny_config.segnet), tiny_config)
    InstanceSegmentation(frame_index=frame.frame_index, instances=segmentation.instances)
    for inst in segmentation.instances:
        assert inst.mask.shape == frame.image.shape[:2]
    assert [inst.instance_id for inst in segmentation.instances] == list(range(1, len(segmentation) + 1))


def test_track_frames_covers_every_frame(tiny_config, tiny_sequences):
    torch.manual_seed(0)
    sequence = tiny_sequences[0]
    tracked = track_frames(sequence, SegNet(tiny_config.segnet), EmbedNet(tiny_config.embed), tiny_config)
    assert sorted(tracked) == [f.frame_index for f in sequence.frames]
    for instances in tracked.values():
        assert all(inst.instance_id == int(inst.class_id) * 1000 + inst.track_id for inst in instances)


def test_generate_stage_alone(context):
    result = PipelineWorkflow(context).execute_workflow(stop_after="generate_1")
    assert result["success"], result["message"]
    assert result["executed_nodes"] == ["generate_1"]

    outputs = result["outputs"]
    assert outputs["train_ids"] == ["0000", "0001", "0002"] and outputs["test_ids"] == ["0003", "0004"]
    with open(os.path.join(outputs["data_dir"], SPLIT_FILE), encoding="utf-8") as f:
        assert json.load(f) == {"train": outputs["train_ids"], "test": outputs["test_ids"]}
    assert "generated_data" in context.manifest.input_hashes
    assert os.path.exists(os.path.join(context.results_dir, "pipeline_graph.json"))

    manifest = RunManager.load_manifest(context.run_dir)
    assert manifest.status == "completed"


def test_stage_without_inputs_fails_with_error_type(context):
    result = PipelineWorkflow(context).execute_workflow(start_node_id="track_4")
    assert not result["success"]
    assert result["error_type"] == "ContractViolation"
    assert result["failed_nodes"] == ["track_4"]

    manifest = RunManager.load_manifest(context.run_dir)
    assert manifest.status == "failed"
    assert manifest.errors[0]["type"] == "ContractViolation"


def test_missing_checkpoint_is_a_data_error(context, tmp_path):
    context.outputs.update(data_dir=str(tmp_path), test_ids=["0000"],
                           seg_checkpoint=str(tmp_path / "none.pt"), embed_checkpoint=str(tmp_path / "none.pt"))
    result = PipelineWorkflow(context).execute_workflow(start_node_id="track_4", stop_after="track_4")
    assert result["error_type"] == "DataFormatError"


@pytest.mark.slow
def test_closed_loop_on_tiny_profile(context):
    result = PipelineWorkflow(context).execute_workflow()
    assert result["success"], result["message"]
    assert result["executed_nodes"] == ["generate_1", "train_seg_2", "train_embed_3", "track_4",
                                        "evaluate_5", "end_workflow"]

    metrics = result["outputs"]["metrics"]
    for key in ("all.sMOTSA", "all.MOTSA", "all.IDS", "cars.sMOTSA", "pedestrians.sMOTSA"):
        assert key in metrics
    assert float(metrics["all.sMOTSA"]) <= float(metrics["all.MOTSA"]) + 1e-9
    assert sorted(os.listdir(result["outputs"]["tracks_dir"])) == ["0003.txt", "0004.txt"]

    manifest = RunManager.load_manifest(context.run_dir)
    assert manifest.s_schedule == [8, 2, 1, 5]
    assert manifest.embed_stages == ["m_f", "m_e", "m_p", "m_a"]
    assert manifest.tracker_gate is not None and np.isfinite(manifest.tracker_gate)
    assert {"seg_checkpoint", "embed_checkpoint", "tracks_dir", "metrics"} <= set(manifest.artifacts)


def test_client_rejects_unknown_profile(tmp_path):
    with pytest.raises(ConfigurationError):
        MOTSClient(profile="enormous", runs_dir=str(tmp_path)).run_pipeline()
