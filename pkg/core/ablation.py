"""
Ablation harness - one pipeline run per modification row
Rows share the generated dataset; each trains, tracks and evaluates in its
own child run directory under <run_dir>/rows. A failed row stops the table,
which is saved with the rows completed so far.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

from core.context import RunContext
from core.exceptions import MOTSError
from core.run_manager import RunManager
from core.workflow import PipelineWorkflow
from models.config_models import AblationSpec
from models.metrics_models import AblationRow, AblationTable

logger = logging.getLogger(__name__)

TRAIN_START_NODE = "train_seg_2"


class AblationRowFailed(MOTSError):
    def __init__(self, label: str, message: str, error_type: Optional[str], table_path: str):
        self.label = label
        self.error_type = error_type
        self.table_path = table_path
        super().__init__(f"ablation row {label} failed: {message} (partial table in {table_path})")


def save_table(table: AblationTable, path: str) -> str:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(table.model_dump_json(indent=2), encoding="utf-8")
    return path


def run_ablation(context: RunContext, rows: List[AblationSpec], data_dir: str,
                 train_ids: List[str], test_ids: List[str]) -> AblationTable:
    """
    Train and evaluate every row in order.

    Raises:
        AblationRowFailed: a row did not complete; earlier rows are kept in the saved table
    """
    table = AblationTable(rows=[AblationRow(label=spec.label, spec=spec) for spec in rows])
    table_path = context.result_path("ablation_table.json")
    row_manager = RunManager(os.path.join(context.run_dir, "rows"))

    for index, row in enumerate(table.rows):
        logger.info(f"🧪 ablation row {index + 1}/{len(rows)}: {row.label}")
        row_context = RunContext(context.config.with_ablation(row.spec), command=f"row{index}",
                                 argv=context.manifest.argv, manager=row_manager, console=False)
        row_context.outputs.update(data_dir=data_dir, train_ids=list(train_ids), test_ids=list(test_ids))
        result = PipelineWorkflow(row_context).execute_workflow(start_node_id=TRAIN_START_NODE)
        row.run_id = row_context.run_id

        if not result["success"]:
            row.status = "failed"
            row.error = (result.get("error") or {}).get("message") or result["message"]
            save_table(table, table_path)
            context.add_artifact("ablation_table", table_path)
            raise AblationRowFailed(row.label, row.error, result.get("error_type"), table_path)

        row.status = "completed"
        row.report = row_context.outputs["metrics_report"]
        save_table(table, table_path)
        for problem in row.report.violations():
            logger.warning(f"⚠️ row {row.label}: {problem}")

    context.add_artifact("ablation_table", table_path)
    return table


def format_ablation_table(table: AblationTable, reference: Optional[Dict[str, Any]] = None) -> str:
    """
    Fixed-width table: flags, synthetic cars/pedestrians sMOTSA, MOTSA, IDS,
    plus the published cars/pedestrians sMOTSA of the same row when given.
    """
    header = (f"{'2X':>3} {'Sem':>3} {'CP':>3} {'Sep':>3} | "
              f"{'car sMOTSA':>10} {'MOTSA':>7} {'IDS':>4} | {'ped sMOTSA':>10} {'MOTSA':>7} {'IDS':>4}")
    if reference:
        header += f" | {'pub car':>7} {'pub ped':>7}"
    lines = [header, "-" * len(header)]
    for row in table.rows:
        flags = " ".join(f"{'v' if on else '':>3}" for on in (row.spec.two_x, row.spec.sem, row.spec.cp, row.spec.sep))
        if row.report is None:
            body = f"{row.status:>52}"
        else:
            cars, peds = row.report.classes["cars"], row.report.classes["pedestrians"]
            body = (f"{cars.smotsa * 100:10.2f} {cars.motsa * 100:7.2f} {cars.ids:4d} | "
                    f"{peds.smotsa * 100:10.2f} {peds.motsa * 100:7.2f} {peds.ids:4d}")
        line = f"{flags} | {body}"
        if reference:
            published = reference.get(row.label, {})
            car_ref = published.get("cars", {}).get("sMOTSA")
            ped_ref = published.get("pedestrians", {}).get("sMOTSA")
            line += " | " + " ".join(f"{v:7.2f}" if v is not None else f"{'-':>7}" for v in (car_ref, ped_ref))
        lines.append(line)
    return "\n".join(lines)
