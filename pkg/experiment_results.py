import os

import pandas as pd
from pydantic import ValidationError

from etp.Utils.errors import InputError
from etp.Utils.utils import ensure_dir, read_json_file, save_json
from evaluate import EvalReport
from logs import logger


def report_frame(report) -> pd.DataFrame:
    """Classes x IoU thresholds, AP in percent, with an mAP row at the bottom."""
    columns = [f"{alpha:.2f}" for alpha in report.alphas]
    df = pd.DataFrame(report.ap, index=report.class_names, columns=columns, dtype=float) * 100.0
    df["num_gt"] = report.num_gt
    df.loc["mAP"] = [m * 100.0 for m in report.mean_ap] + [sum(report.num_gt)]
    df["num_gt"] = df["num_gt"].astype(int)
    df.index.name = "class"
    return df


def format_table(df: pd.DataFrame) -> str:
    return df.to_string(float_format=lambda x: f"{x:6.2f}") + "\n"


def compare_runs(reports: dict) -> pd.DataFrame:
    """mAP per IoU threshold for several named runs (ablations, unit length sweeps)."""
    rows = {name: {f"{a:.2f}": m * 100.0 for a, m in zip(r.alphas, r.mean_ap)} for name, r in reports.items()}
    df = pd.DataFrame.from_dict(rows, orient="index")
    df.index.name = "run"
    return df


def write_report(report, out_prefix: str) -> str:
    """``<out_prefix>.json`` holds the full report, ``<out_prefix>.txt`` the aligned table."""
    ensure_dir(os.path.dirname(out_prefix))
    save_json(report.model_dump(), out_prefix + ".json")
    table = format_table(report_frame(report))
    with open(out_prefix + ".txt", 'w', encoding='utf-8') as f:
        f.write(table)
    summary = ", ".join(f"mAP@{a:.2f} {m * 100.0:.2f}" for a, m in zip(report.alphas, report.mean_ap))
    logger.info(f'\033[31m{summary}; results written to {out_prefix}.json !\033[0m')
    return table


def load_report(path: str) -> EvalReport:
    """Read back a ``report.json`` written by ``write_report``."""
    try:
        return EvalReport.model_validate(read_json_file(path))
    except ValidationError as e:
        raise InputError(f"{path} is not an evaluation report: {e}")


def write_comparison(reports: dict, out_path: str) -> str:
    table = format_table(compare_runs(reports))
    ensure_dir(os.path.dirname(out_path))
    with open(out_path, 'w', encoding='utf-8') as f:
        f.write(table)
    return table
