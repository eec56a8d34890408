#!/usr/bin/env python3
"""
MOTS CLI - gen, train-seg, train-embed, track, eval, ablate, paste-preview, render
Every invocation creates a run directory with a manifest (config hash, seed,
content hashes of its inputs). Exit codes: 0 success, 2 configuration error
or bad usage, 3 data error, 1 anything else.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

# Add project root to path
project_root = Path(__file__).parent.parent
sys.path.append(str(project_root))

from core.ablation import AblationRowFailed, format_ablation_table, run_ablation
from core.augment import PasteStats, build_instance_db, copy_paste
from core.context import RunContext
from core.exceptions import ConfigurationError, DataFormatError, EvaluationRefusal, MOTSError, PaddingRequiredError
from core.graph import PipelineGraph
from core.metrics import evaluate_directories, evaluate_files, format_report, report_key_values, write_report
from core.mots_io import load_mots_results
from core.pipeline import resolve_split
from core.run_manager import RunManager
from core.synthetic import load_dataset
from core.workflow import PipelineWorkflow
from models.config_models import ABLATION_ROWS
from modules.model_manager import ModelManager
from utils.rendering import render_paste_preview, render_sequence

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3

ERROR_EXIT_CODES = {
    "ConfigurationError": EXIT_CONFIG,
    "PaddingRequiredError": EXIT_CONFIG,
    "DataFormatError": EXIT_DATA,
    "AnnotationParseError": EXIT_DATA,
    "EvaluationRefusal": EXIT_DATA,
}


def exit_code_for(error: Any) -> int:
    """Exit code for an exception or the error-type name carried by a workflow result"""
    if isinstance(error, BaseException):
        if isinstance(error, (ConfigurationError, PaddingRequiredError)):
            return EXIT_CONFIG
        if isinstance(error, (DataFormatError, EvaluationRefusal)):
            return EXIT_DATA
        return EXIT_FAILURE
    return ERROR_EXIT_CODES.get(error, EXIT_FAILURE)


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _create_context(args, command: str) -> RunContext:
    manager = ModelManager()
    manager.configure_threads()
    config = manager.load_config(args.profile, args.config, args.seed)
    return RunContext(config, command, argv=args.argv, manager=RunManager(args.runs_dir),
                      log_level=args.log_level, console=not args.quiet)


def _require_dir(path: str, what: str) -> str:
    if not path or not os.path.isdir(path):
        raise DataFormatError(f"{what} directory not found: {path}")
    return path


def _run_stage(args, command: str, outputs: Dict[str, Any]) -> Dict[str, Any]:
    """Run the single graph node owned by `command`; returns the workflow result"""
    context = _create_context(args, command)
    context.outputs.update(outputs)
    node = PipelineGraph().get_node_by_command(command)
    result = PipelineWorkflow(context).execute_workflow(start_node_id=node.id, stop_after=node.id)
    result["context"] = context
    if not result["success"]:
        error = result.get("error") or {}
        print(f"❌ {command} failed: {error.get('message', result['message'])}")
    return result


def _data_outputs(args, data_dir: str) -> Dict[str, Any]:
    config = ModelManager().load_config(args.profile, args.config, args.seed)
    train_ids, test_ids = resolve_split(_require_dir(data_dir, "data"), config.held_out_sequences)
    return {"data_dir": data_dir, "train_ids": train_ids, "test_ids": test_ids}


# ---------------------------------------------------------------------------
# Sub-commands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    """Generate the synthetic dataset"""
    outputs = {"data_dir": args.out} if args.out else {}
    result = _run_stage(args, "gen", outputs)
    if not result["success"]:
        return exit_code_for(result["error_type"])
    manifest = result["context"].manifest
    data_dir = result["outputs"]["data_dir"]
    print(f"📁 data: {data_dir}")
    print(f"🔐 tree hash: {manifest.input_hashes.get('generated_data')}")
    print(f"🆔 run: {manifest.run_dir}")
    return EXIT_OK


def cmd_train_seg(args) -> int:
    result = _run_stage(args, "train-seg", _data_outputs(args, args.data))
    if not result["success"]:
        return exit_code_for(result["error_type"])
    print(f"💾 segmentation checkpoint: {result['outputs']['seg_checkpoint']}")
    print(f"🆔 run: {result['run_dir']}")
    return EXIT_OK


def cmd_train_embed(args) -> int:
    result = _run_stage(args, "train-embed", _data_outputs(args, args.data))
    if not result["success"]:
        return exit_code_for(result["error_type"])
    manifest = result["context"].manifest
    print(f"💾 embedding checkpoint: {result['outputs']['embed_checkpoint']}")
    print(f"📐 S schedule: {manifest.s_schedule} ({', '.join(manifest.embed_stages)})")
    print(f"🎚️ tracker gate: {manifest.tracker_gate:.6f}")
    if result["outputs"].get("triplet_accuracy") is not None:
        print(f"🎯 held-out triplet accuracy: {result['outputs']['triplet_accuracy']:.4f}")
    print(f"🆔 run: {result['run_dir']}")
    return EXIT_OK


def cmd_track(args) -> int:
    outputs = _data_outputs(args, args.data)
    if args.sequences:
        outputs["test_ids"] = args.sequences
    outputs.update(seg_checkpoint=args.seg, embed_checkpoint=args.embed)
    if args.gate is not None:
        outputs["tracker_gate"] = args.gate
    if args.out:
        outputs["tracks_dir"] = args.out
    result = _run_stage(args, "track", outputs)
    if not result["success"]:
        return exit_code_for(result["error_type"])
    print(f"🧭 tracks: {result['outputs']['tracks_dir']}")
    print(f"🆔 run: {result['run_dir']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    """Evaluate one result file against one GT file, or two KITTI-layout directories"""
    for path in (args.gt, args.res):
        if not os.path.exists(path):
            raise DataFormatError(f"not found: {path}")
    if os.path.isdir(args.gt) != os.path.isdir(args.res):
        raise DataFormatError("--gt and --res must both be files or both be directories")

    context = _create_context(args, "eval")
    success = False
    try:
        context.record_input("gt", args.gt)
        context.record_input("res", args.res)
        context.start_phase("Evaluation")
        if os.path.isdir(args.gt):
            report = evaluate_directories(args.gt, args.res, use_ignore=not args.no_ignore)
        else:
            report = evaluate_files(args.gt, args.res, use_ignore=not args.no_ignore)
        write_report(report, context.result_path("metrics.txt"), context.result_path("metrics_kv.txt"))
        context.manifest.metrics.update(dict(line.split("=", 1) for line in report_key_values(report)))
        context.end_phase("Evaluation")
        success = True
    finally:
        context.finish(success)

    overall = report.overall
    print(f"sMOTSA={overall.smotsa}")
    print(f"MOTSA={overall.motsa}")
    print(f"IDS={overall.ids}")
    if not args.quiet:
        print(format_report(report))
    return EXIT_OK


def cmd_ablate(args) -> int:
    rows = ABLATION_ROWS
    if args.rows:
        wanted = [label.strip() for label in args.rows.split(",")]
        by_label = {spec.label: spec for spec in ABLATION_ROWS}
        unknown = [label for label in wanted if label not in by_label]
        if unknown:
            raise ConfigurationError(f"unknown ablation rows {unknown} (known: {list(by_label)})")
        rows = [by_label[label] for label in wanted]

    context = _create_context(args, "ablate")
    success = False
    try:
        if args.data:
            outputs = _data_outputs(args, args.data)
        else:
            context.logger.info("🎞️ no --data given; generating the synthetic benchmark first")
            workflow = PipelineWorkflow(context)
            result = workflow.execute_workflow(stop_after="generate_1", finish=False)
            if not result["success"]:
                return exit_code_for(result["error_type"])
            outputs = {key: context.outputs[key] for key in ("data_dir", "train_ids", "test_ids")}
        context.record_input("data_dir", outputs["data_dir"])

        context.start_phase("Ablation")
        try:
            table = run_ablation(context, rows, outputs["data_dir"], outputs["train_ids"], outputs["test_ids"])
        except AblationRowFailed as e:
            context.end_phase("Ablation", success=False)
            context.add_error("Ablation", str(e), e.error_type or "MOTSError")
            print(f"❌ {e}")
            return exit_code_for(e.error_type)
        context.end_phase("Ablation")
        success = True
    finally:
        context.finish(success)

    reference = None if args.no_reference else ModelManager.load_reference_results().get("ablation")
    print(format_ablation_table(table, reference))
    if reference:
        print("(pub = published KITTI MOTS sMOTSA, documentation only)")
    return EXIT_OK


def cmd_paste_preview(args) -> int:
    context = _create_context(args, "paste-preview")
    success = False
    try:
        data_dir = _require_dir(args.data, "data")
        context.record_input("data_dir", data_dir)
        sequences = load_dataset(data_dir)
        if not sequences:
            raise DataFormatError(f"no sequences under {data_dir}")
        sequence = next((s for s in sequences if s.sequence_id == args.sequence), None) if args.sequence else sequences[0]
        if sequence is None:
            raise DataFormatError(f"sequence {args.sequence} not found under {data_dir}")
        frame_index = args.frame if args.frame is not None else next(
            (f.frame_index for f in sequence.frames if sequence.annotations_for(f.frame_index)), None)
        frame = sequence.get_frame(frame_index) if frame_index is not None else None
        if frame is None:
            raise DataFormatError(f"sequence {sequence.sequence_id} has no usable frame {frame_index}")

        paste = context.config.paste
        if args.probability is not None:
            paste = paste.model_copy(update={"p_car": args.probability, "p_ped": args.probability})
        instance_db = build_instance_db(sequences)
        rng = np.random.default_rng(context.config.seed)
        stats = PasteStats()
        annotations = sequence.annotations_for(frame.frame_index)
        out_dir = args.out or context.result_path("paste_preview")
        for index in range(args.count):
            pasted_frame, pasted = copy_paste(frame, annotations, instance_db, paste, rng, stats)
            path = os.path.join(out_dir, f"{sequence.sequence_id}_{frame.frame_index:06d}_{index:02d}.png")
            render_paste_preview(frame, annotations, pasted_frame, pasted, path)
        context.add_artifact("paste_preview", out_dir)
        context.manifest.metrics["paste_stats"] = stats.model_dump()
        success = True
    finally:
        context.finish(success)

    print(f"🖼️ previews: {out_dir}")
    print(f"📊 hosts={stats.hosts} selected={stats.selected} applied={stats.applied} "
          f"fallbacks={stats.fallbacks} infeasible={stats.infeasible} rate={stats.paste_rate:.3f}")
    return EXIT_OK


def cmd_render(args) -> int:
    context = _create_context(args, "render")
    success = False
    written: List[str] = []
    try:
        data_dir = _require_dir(args.data, "data")
        context.record_input("data_dir", data_dir)
        context.record_input("res", args.res)
        if os.path.isdir(args.res):
            result_files = sorted(Path(args.res).glob("*.txt"))
        elif os.path.exists(args.res):
            result_files = [Path(args.res)]
        else:
            raise DataFormatError(f"not found: {args.res}")
        if args.sequence:
            result_files = [p for p in result_files if p.stem == args.sequence]

        out_dir = args.out or context.result_path("render")
        for result_file in result_files:
            sequences = load_dataset(data_dir, [result_file.stem])
            if not sequences or not sequences[0].frames:
                raise DataFormatError(f"no images for sequence {result_file.stem} under {data_dir}")
            written += render_sequence(sequences[0].frames, load_mots_results(str(result_file)),
                                       os.path.join(out_dir, result_file.stem))
        context.add_artifact("render", out_dir)
        success = True
    finally:
        context.finish(success)

    print(f"🖼️ rendered {len(written)} frames into {out_dir}")
    return EXIT_OK


def cmd_runs(args) -> int:
    """List run manifests"""
    runs = RunManager(args.runs_dir).list_runs()[:args.limit]
    print(f"📋 Runs ({len(runs)}):")
    for run in runs:
        icon = "✅" if run["status"] == "completed" else "🔄" if run["status"] == "running" else "❌"
        print(f"  {icon} {run['run_id']}  profile={run['profile']} seed={run['seed']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--profile", help="Profile from config/profiles.yaml (default: $MOTS_PROFILE or small)")
    common.add_argument("--config", help="YAML file deep-merged over the profile")
    common.add_argument("--seed", type=int, help="Master seed (overrides the profile)")
    common.add_argument("--runs-dir", default=os.getenv("MOTS_RUNS_DIR", "runs"), help="Where run directories go")
    common.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING (default: $MOTS_LOG_LEVEL or INFO)")
    common.add_argument("--quiet", action="store_true", help="No console logging")

    parser = argparse.ArgumentParser(prog="mots", description="SegTrack MOTS pipeline CLI")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    gen = subparsers.add_parser("gen", parents=[common], help="Generate the synthetic benchmark")
    gen.add_argument("--out", help="Output directory (default: <run>/results/data)")

    train_seg = subparsers.add_parser("train-seg", parents=[common], help="Train the segmentation network")
    train_seg.add_argument("--data", required=True, help="Dataset directory (KITTI MOTS layout)")

    train_embed = subparsers.add_parser("train-embed", parents=[common], help="Train the embedding network")
    train_embed.add_argument("--data", required=True, help="Dataset directory (KITTI MOTS layout)")

    track = subparsers.add_parser("track", parents=[common], help="Track held-out sequences")
    track.add_argument("--data", required=True, help="Dataset directory")
    track.add_argument("--seg", required=True, help="Segmentation checkpoint")
    track.add_argument("--embed", required=True, help="Embedding checkpoint")
    track.add_argument("--sequences", nargs="+", help="Sequence ids (default: held-out split)")
    track.add_argument("--gate", type=float, help="Association gate (default: calibrated value in the checkpoint)")
    track.add_argument("--out", help="Result directory (default: <run>/results/tracks)")

    evaluate = subparsers.add_parser("eval", parents=[common], help="Compute sMOTSA / MOTSA / IDS")
    evaluate.add_argument("--gt", required=True, help="Ground-truth file or directory")
    evaluate.add_argument("--res", required=True, help="Result file or directory")
    evaluate.add_argument("--no-ignore", action="store_true", help="Count hypotheses in ignore regions as FP")

    ablate = subparsers.add_parser("ablate", parents=[common], help="Run the 2X / Sem / CP / Sep ablation")
    ablate.add_argument("--data", help="Dataset directory (default: generate one)")
    ablate.add_argument("--rows", help="Comma-separated row labels, e.g. 'baseline,2X' (default: all)")
    ablate.add_argument("--no-reference", action="store_true", help="Omit published reference numbers")

    preview = subparsers.add_parser("paste-preview", parents=[common], help="Render copy-and-paste composites")
    preview.add_argument("--data", required=True, help="Dataset directory")
    preview.add_argument("--sequence", help="Sequence id (default: first)")
    preview.add_argument("--frame", type=int, help="Frame index (default: first annotated frame)")
    preview.add_argument("--probability", type=float, help="Paste probability for both classes")
    preview.add_argument("--count", type=int, default=4, help="Number of composites")
    preview.add_argument("--out", help="Output directory")

    render = subparsers.add_parser("render", parents=[common], help="Overlay tracking results on frames")
    render.add_argument("--data", required=True, help="Dataset directory with images/")
    render.add_argument("--res", required=True, help="Result file or directory")
    render.add_argument("--sequence", help="Only this sequence")
    render.add_argument("--out", help="Output directory")

    runs = subparsers.add_parser("runs", help="List runs")
    runs.add_argument("--runs-dir", default=os.getenv("MOTS_RUNS_DIR", "runs"))
    runs.add_argument("--limit", type=int, default=20)

    return parser


COMMANDS = {
    "gen": cmd_gen,
    "train-seg": cmd_train_seg,
    "train-embed": cmd_train_embed,
    "track": cmd_track,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "paste-preview": cmd_paste_preview,
    "render": cmd_render,
    "runs": cmd_runs,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Parse argv, dispatch, map errors to exit codes"""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG

    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    args.argv = argv

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("\n⚠️ Operation interrupted")
        return EXIT_FAILURE
    except MOTSError as e:
        print(f"❌ {args.command} failed: {e}")
        return exit_code_for(e)
    except Exception as e:
        print(f"❌ Command failed: {type(e).__name__}: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
