# app/storage/runstore.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Union

import pandas as pd

LOG = logging.getLogger("runstore")

FLOAT_FORMAT = "%.17g"


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, float) and obj != obj:
        return "nan"
    if obj == float("inf"):
        return "inf"
    if obj == float("-inf"):
        return "-inf"
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def dumps(doc: Any) -> str:
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def frame_csv(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


class RunStore:
    """
    Output directory of one experiment:

        instance.json
        traces/<method>/cell<NNN>_seed<S>.csv   (+ .json metadata)
        cells.csv
        summary.csv

    Every file is written to a temp file in its own directory and then
    moved into place, so a crash never leaves a half-written artifact.
    """

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    # ---------------------- paths ----------------------
    def trace_path(self, method: str, cell: int, seed: int, suffix: str = ".csv") -> Path:
        return self.root / "traces" / method / f"cell{cell:03d}_seed{seed}{suffix}"

    # ---------------------- disk ----------------------
    def _write_text(self, path: Path, text: str) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp_name = None
        try:
            with tempfile.NamedTemporaryFile(
                "w", delete=False, dir=path.parent, encoding="utf-8", newline=""
            ) as tf:
                tf.write(text)
                tmp_name = tf.name
            os.replace(tmp_name, path)
            tmp_name = None
        finally:
            if tmp_name and os.path.exists(tmp_name):
                os.remove(tmp_name)
        return path

    def write_json(self, relpath: Union[str, Path], doc: Any) -> Path:
        return self._write_text(self.root / relpath, dumps(doc))

    def write_frame(self, relpath: Union[str, Path], df: pd.DataFrame) -> Path:
        return self._write_text(self.root / relpath, frame_csv(df))

    def save_trace(self, method: str, cell: int, seed: int, frame: pd.DataFrame, metadata: dict) -> Path:
        csv_path = self.trace_path(method, cell, seed)
        self.write_frame(csv_path.relative_to(self.root), frame)
        self.write_json(self.trace_path(method, cell, seed, ".json").relative_to(self.root), metadata)
        LOG.debug("saved %s (%d rows)", csv_path.name, len(frame))
        return csv_path

    def read_json(self, relpath: Union[str, Path]) -> Any:
        with open(self.root / relpath, "r", encoding="utf-8") as f:
            return json.load(f)
