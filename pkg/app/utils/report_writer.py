"""
Deterministic serialization of reports and result tables.
"""
import csv
import json
import math
import os
from enum import Enum
from typing import Any, Iterable, List, Sequence

import numpy as np
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from app.config import settings


class ReportWriter:
    """Turns reports into JSON-safe data and writes byte-stable files."""

    @staticmethod
    def format_float(value: float) -> str:
        return f"{float(value):.{settings.float_digits}g}"

    @staticmethod
    def standardize(data: Any) -> Any:
        """Convert models, enums and numpy values into plain JSON types."""
        if isinstance(data, BaseModel):
            return ReportWriter.standardize(data.model_dump(by_alias=True))
        if isinstance(data, dict):
            return {str(key.value if isinstance(key, Enum) else key): ReportWriter.standardize(value)
                    for key, value in data.items()}
        if isinstance(data, (list, tuple)):
            return [ReportWriter.standardize(item) for item in data]
        if isinstance(data, np.ndarray):
            return [ReportWriter.standardize(item) for item in data.tolist()]
        if isinstance(data, Enum):
            return data.value
        if isinstance(data, (bool, np.bool_)):
            return bool(data)
        if isinstance(data, (int, np.integer)):
            return int(data)
        if isinstance(data, (float, np.floating)):
            value = float(data)
            if not math.isfinite(value):
                return "inf" if value > 0 else ("-inf" if value < 0 else "nan")
            return float(ReportWriter.format_float(value))
        return data

    @staticmethod
    def to_json_text(data: Any) -> str:
        return json.dumps(ReportWriter.standardize(data), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @staticmethod
    def write_json(path: str, data: Any) -> str:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(ReportWriter.to_json_text(data))
        return path

    @staticmethod
    def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([ReportWriter._cell(value) for value in row])
        return path

    @staticmethod
    def create_standardized_response(data: Any, status_code: int = 200) -> JSONResponse:
        return JSONResponse(content=ReportWriter.standardize(data), status_code=status_code)

    @staticmethod
    def _cell(value: Any) -> str:
        if value is None:
            return ""
        if isinstance(value, Enum):
            return str(value.value)
        if isinstance(value, (bool, np.bool_)):
            return "true" if value else "false"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return ReportWriter.format_float(value)
        return str(value)


def surface_rows(times: np.ndarray, states, qbar: np.ndarray, zbar: np.ndarray, q: np.ndarray) -> List[list]:
    """Row-major (t, x) rows of a value surface; x is empty in ODE mode."""
    rows = []
    xs = states if states is not None else [None]
    for i, t in enumerate(times):
        for j, x in enumerate(xs):
            rows.append([float(t), None if x is None else float(x), qbar[i, j], zbar[i, j], q[i, j]])
    return rows
