import json
import os

import pytest

from core.context import RunContext
from core.exceptions import DataFormatError
from core.graph import NodeType, PipelineGraph
from core.run_manager import MANIFEST_NAME, RunManager
from models.config_models import PipelineConfig
from utils.hashing import config_hash, content_hash, git_blob_hash, git_tree_hash, hash_inputs


def test_blob_hash_matches_git():
    assert git_blob_hash(b"hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a"
    assert git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"


def test_empty_tree_hash_matches_git(tmp_path):
    assert git_tree_hash(str(tmp_path)) == "4b825dc642cb6eb9a060e54bf8d69288fbee4904"


def test_tree_hash_follows_content(tmp_path):
    (tmp_path / "seqs").mkdir()
    (tmp_path / "seqs" / "0000.txt").write_text("1 2001 2 4 4 xyz\n")
    first = content_hash(str(tmp_path))
    assert content_hash(str(tmp_path)) == first
    (tmp_path / "seqs" / "0000.txt").write_text("1 2001 2 4 4 xyw\n")
    assert content_hash(str(tmp_path)) != first
    assert content_hash(str(tmp_path / "seqs" / "0000.txt")) == git_blob_hash(b"1 2001 2 4 4 xyw\n")


def test_hash_inputs_skips_missing_paths(tmp_path):
    (tmp_path / "a.txt").write_bytes(b"hello\n")
    hashes = hash_inputs({"a": str(tmp_path / "a.txt"), "b": str(tmp_path / "nope"), "c": None})
    assert hashes == {"a": "ce013625030ba8dba906f756967f9e9ca394464a"}


def test_config_hash_is_canonical():
    config = PipelineConfig(num_sequences=3, held_out_sequences=1)
    assert config_hash(config) == config_hash(config.model_dump(mode="json"))
    assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})
    assert config_hash(config) != config_hash(config.model_copy(update={"seed": 1}))


def test_graph_stages_in_order():
    graph = PipelineGraph()
    ids = [node.id for node in graph.nodes]
    assert ids == ["generate_1", "train_seg_2", "train_embed_3", "track_4", "evaluate_5", "end_workflow"]
    assert graph.get_start_node().id == "generate_1"
    assert graph.get_node_by_command("train-seg").id == "train_seg_2"
    assert [n.id for n in graph.get_next_nodes("track_4")] == ["evaluate_5"]
    assert graph.get_next_nodes("track_4", output="FAILURE") == []
    assert graph.get_node_by_id("end_workflow").type == NodeType.END.value


def test_graph_survives_save_and_load(tmp_path):
    graph = PipelineGraph()
    path = str(tmp_path / "graph.json")
    graph.save_to_file(path)
    restored = PipelineGraph.load_from_file(path)
    assert [n.id for n in restored.nodes] == [n.id for n in graph.nodes]
    assert restored.get_workflow_summary()["start_node"] == "generate_1"


def test_graph_rejects_unknown_agent(tmp_path):
    path = tmp_path / "steps.json"
    path.write_text(json.dumps({"generate": {"agent": "MysteryAgent", "phase": "Data"}}))
    with pytest.raises(ValueError):
        PipelineGraph(str(path))


def test_runs_are_created_saved_and_listed(tmp_path):
    manager = RunManager(str(tmp_path))
    manifest = manager.create_run("gen", ["gen", "--seed", "3"], profile="tiny", seed=3)
    for path in (manifest.logs_dir, manifest.checkpoints_dir, manifest.results_dir):
        assert os.path.isdir(path)
    manager.update_run_status(manifest.run_id, "completed")
    manager.save_manifest(manifest.run_id)

    loaded = RunManager(str(tmp_path)).get_run(manifest.run_id)
    assert loaded.status == "completed" and loaded.argv == ["gen", "--seed", "3"]
    assert loaded.end_time is not None
    summaries = manager.list_runs()
    assert [s["run_id"] for s in summaries] == [manifest.run_id]
    assert summaries[0]["profile"] == "tiny"


def test_loading_without_manifest_is_a_data_error(tmp_path):
    with pytest.raises(DataFormatError):
        RunManager.load_manifest(str(tmp_path))
    (tmp_path / MANIFEST_NAME).write_text("{}")
    with pytest.raises(DataFormatError):
        RunManager.load_manifest(str(tmp_path))


def test_run_context_records_config_errors_and_inputs(tmp_path):
    config = PipelineConfig(num_sequences=3, held_out_sequences=1)
    context = RunContext(config, "eval", ["eval"], manager=RunManager(str(tmp_path)), console=False)
    assert context.run_dir.startswith(str(tmp_path))
    context.start_phase("Evaluation")
    context.add_error("Evaluation", "boom", "DataFormatError")
    context.end_phase("Evaluation", success=False)
    (tmp_path / "input.txt").write_bytes(b"hello\n")
    assert context.record_input("gt", str(tmp_path / "input.txt")) == "ce013625030ba8dba906f756967f9e9ca394464a"
    assert context.record_input("missing", str(tmp_path / "none")) is None
    path = context.finish(success=False)

    data = json.loads(open(path, encoding="utf-8").read())
    assert data["status"] == "failed"
    assert data["config_hash"] == config_hash(config)
    assert data["errors"][0]["type"] == "DataFormatError"
    assert data["phase_timings"]["Evaluation"]["success"] is False
    assert data["input_hashes"] == {"gt": "ce013625030ba8dba906f756967f9e9ca394464a"}
    assert os.listdir(context.logs_dir)
