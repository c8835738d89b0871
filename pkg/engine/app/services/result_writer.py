"""
Path: engine/app/services/result_writer.py
Purpose: Atomic CSV / JSON writers for experiment outputs
Logic:
  - Write to a temp file in the target directory, then os.replace onto the final name
  - Floats are written with repr() so reruns are byte-identical
"""

import csv
import json
import os
import tempfile
from typing import Any, Iterable, Sequence

from ..models.flows import FlowGrid
from ..models.paths import EnsembleSample, PathRecord


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _atomic_write(path: str, writer) -> str:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            writer(handle)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    def _write(handle):
        out = csv.writer(handle, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([_cell(v) for v in row])
    return _atomic_write(path, _write)


def write_json(path: str, payload: Any) -> str:
    def _write(handle):
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return _atomic_write(path, _write)


def write_flow(path: str, grid: FlowGrid) -> str:
    return write_csv(path, ["t"] + grid.columns(), grid.rows())


def write_path(path: str, record: PathRecord) -> str:
    return write_csv(path, ["t", "y1", "y2", "event"], record.rows())


def write_ensemble(csv_path: str, sidecar_path: str, sample: EnsembleSample) -> str:
    rows = [(i, float(y1), int(y2)) for i, (y1, y2) in enumerate(sample.states)]
    write_csv(csv_path, ["replica", "y1", "y2"], rows)
    return write_json(sidecar_path, sample.sidecar())
