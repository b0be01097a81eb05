"""
Output writers

JSON for scalars and verdicts, CSV for tables. Every float is written with
17 significant digits, so a rerun with the same config reproduces every
numeric field; result_digest hashes the result without its timing fields.
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union
import csv
import hashlib
import io
import json
import logging
import math
import sys

import numpy as np

from harness.tables import CSV_HEADER, ConvergenceTable

logger = logging.getLogger(__name__)

FLOAT_FORMAT = ".17g"
RENEWAL_HEADER = ("x", "estimate", "stderr", "K_term")
PMF_HEADER = ("n", "z", "probability")
# run-to-run varying fields, left out of the result digest
TIMING_KEYS = frozenset({"timestamp", "elapsed_ms"})


def format_float(x: float) -> str:
    """%.17g, kept a JSON float ("1.0", not "1"); NaN and infinities as Python's json does"""
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    text = format(x, FLOAT_FORMAT)
    if text.lstrip("-").isdigit():
        text += ".0"
    return text


def to_jsonable(obj: Any) -> Any:
    """Plain Python containers and scalars from results, enums and numpy values"""
    if hasattr(obj, "to_dict") and callable(obj.to_dict):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k.value if isinstance(k, Enum) else k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _emit(obj: Any, indent: int, level: int, out: List[str]) -> None:
    pad = " " * (indent * (level + 1))
    close = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}{json.dumps(k)}: ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(close + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            out.append("[" + ", ".join(format_float(v) if isinstance(v, float) else str(v) for v in obj) + "]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(close + "]")
    elif isinstance(obj, float):
        out.append(format_float(obj))
    else:
        out.append(json.dumps(obj))


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with every float at 17 significant digits"""
    out: List[str] = []
    _emit(to_jsonable(obj), indent, 0, out)
    return "".join(out)


def _open_target(target: Union[str, Path]):
    if str(target) == "-":
        return None
    path = Path(target)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def strip_keys(obj: Any, keys: frozenset = TIMING_KEYS) -> Any:
    if isinstance(obj, dict):
        return {k: strip_keys(v, keys) for k, v in obj.items() if k not in keys}
    if isinstance(obj, list):
        return [strip_keys(v, keys) for v in obj]
    return obj


def write_json(obj: Any, target: Union[str, Path]) -> Optional[Path]:
    """Result file, timing fields included"""
    return write_text(dumps(obj) + "\n", target)


def result_digest(payload: Any, tables: Dict[str, str]) -> str:
    """blake2b of the JSON payload without timing fields and of every CSV table; equal across replays"""
    h = hashlib.blake2b(digest_size=16)
    h.update(dumps(strip_keys(to_jsonable(payload))).encode())
    for name in sorted(tables):
        h.update(name.encode())
        h.update(tables[name].encode())
    return h.hexdigest()


# =============================================================================
# CSV
# =============================================================================

def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if value is None:
        return ""
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(row.get(col)) for col in header])
    return buffer.getvalue()


def table_header(table: ConvergenceTable) -> List[str]:
    """n, statistic, stderr, then the table's extra columns in sorted order"""
    extras = sorted({k for r in table.rows for k in r.extra})
    return list(CSV_HEADER) + extras


def convergence_csv(table: ConvergenceTable) -> str:
    return csv_text(table_header(table), table.to_rows())


def renewal_csv(rows: Iterable[Dict[str, Any]]) -> str:
    return csv_text(RENEWAL_HEADER, rows)


def pmf_csv(pmfs: Dict[int, Dict[int, float]]) -> str:
    rows = [{"n": n, "z": z, "probability": p} for n in sorted(pmfs) for z, p in sorted(pmfs[n].items())]
    return csv_text(PMF_HEADER, rows)


def write_text(text: str, target: Union[str, Path]) -> Optional[Path]:
    path = _open_target(target)
    if path is None:
        sys.stdout.write(text)
        return None
    path.write_text(text)
    logger.info(f"Wrote {path}")
    return path


def write_tables(tables: Dict[str, str], directory: Union[str, Path]) -> List[Path]:
    """One CSV file per named table under directory"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [write_text(text, directory / f"{name}.csv") for name, text in tables.items()]
