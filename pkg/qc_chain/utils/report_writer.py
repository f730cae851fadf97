import csv
import json
import logging
import os
import threading
from pathlib import Path
from typing import Any, Dict, Union

from ..models.chain_model import PeriodicChain
from ..models.study_model import StudyTable

logger = logging.getLogger(__name__)

CSV_FIELDS = ["model", "param", "dof", "m", "error", "iterations"]

_write_lock = threading.Lock()


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def write_report(table: StudyTable, output_path: Union[str, Path], fmt: str = "csv") -> Path:
    """
    写出实验结果

    CSV 每行一个 (模型, 参数)，浮点数保留 17 位有效数字；JSON 附带 metadata。
    相同输入写出的文件逐字节相同。

    :param fmt: csv | json
    """
    path = Path(output_path)
    os.makedirs(path.parent, exist_ok=True)
    with _write_lock:
        if fmt == "csv":
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(CSV_FIELDS)
                for r in table.rows:
                    writer.writerow([r.model, r.param, r.dof, r.m, _fmt(r.error), r.iterations])
        elif fmt == "json":
            payload = {
                "study": table.study,
                "metadata": table.metadata,
                "rows": [r.as_dict() for r in table.rows],
            }
            write_json(payload, path)
        else:
            raise ValueError(f"未知的输出格式: {fmt}")
    logger.info(f"[Report] 已写出 {path}")
    return path


def write_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, ensure_ascii=False, indent=2, allow_nan=False))
        f.write("\n")
    return path


def write_chain(chain: PeriodicChain, path: Union[str, Path]) -> Path:
    """原子位置表 index,position"""
    path = Path(path)
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["index", "position"])
        for i, u in enumerate(chain.positions, start=1):
            writer.writerow([i, _fmt(u)])
    return path
