# app/config.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import os
import pathlib
from dataclasses import dataclass
from dotenv import load_dotenv

# load variables from .env when present
load_dotenv()


def _get_int(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, str(default)).strip())
    except Exception:
        return default


def _get_float(name: str, default: float) -> float:
    try:
        return float(os.getenv(name, repr(default)).strip())
    except Exception:
        return default


_DEFAULT_GRIDS = pathlib.Path(__file__).resolve().parent / "presets" / "grids.yaml"


@dataclass
class Settings:
    # --- Tuner ---
    count_cap: int = _get_int("SIM_COUNT_CAP", 10_000)           # b_max when a cost is zero
    bisect_max_iter: int = _get_int("SIM_BISECT_MAX_ITER", 200)
    bisect_rtol: float = _get_float("SIM_BISECT_RTOL", 1e-12)
    budget_growth: float = _get_float("SIM_BUDGET_GROWTH", 1.01)
    budget_growth_steps: int = _get_int("SIM_BUDGET_GROWTH_STEPS", 5000)

    # --- Runs ---
    divergence_limit: float = _get_float("SIM_DIVERGENCE_LIMIT", 1e150)
    trace_every: int = _get_int("SIM_TRACE_EVERY", 1)
    x0_norm: float = _get_float("SIM_X0_NORM", 10.0)

    # --- Selection ---
    brute_force_max: int = _get_int("SIM_BRUTE_FORCE_MAX", 16)

    # --- Harness ---
    parallelism: int = _get_int("SIM_PARALLELISM", 4)
    out_dir: str = os.getenv("SIM_OUT_DIR", "runs")
    grids_file: str = str(pathlib.Path(os.getenv("SIM_GRIDS_FILE", str(_DEFAULT_GRIDS))).resolve())

    log_level: str = (os.getenv("SIM_LOG_LEVEL", "INFO") or "INFO").upper()

    def __post_init__(self) -> None:
        if self.count_cap < 1:
            self.count_cap = 10_000
        if self.trace_every < 1:
            self.trace_every = 1
        if self.parallelism < 1:
            self.parallelism = 1
        if self.budget_growth <= 1.0:
            self.budget_growth = 1.01


settings = Settings()
