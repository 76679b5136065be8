# app/handlers/simulate.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import argparse
import logging

from app.services.harness import load_config, run_experiment
from app.utils import numfmt

LOG = logging.getLogger("simulate")

EXIT_OK = 0
EXIT_ALL_DIVERGED = 3


def render_summary(summary) -> str:
    lines = []
    for row in summary.itertuples(index=False):
        if row.status == "all_diverged":
            lines.append(f"{row.method:<15} all cells diverged")
            continue
        lines.append(
            f"{row.method:<15} cell {row.cell:>3}  gamma={row.gamma:<10.4g} "
            f"time={numfmt.seconds(row.time_to_threshold):<24} f_gap={row.final_f_gap:.3g}  [{row.status}]"
        )
    return "\n".join(lines)


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    result = run_experiment(cfg, out_dir=args.out, parallelism=args.parallelism)
    print(render_summary(result.summary))
    print(f"artifacts: {result.out_dir}")
    failed = result.all_diverged
    if failed:
        LOG.error("every cell diverged for: %s", ", ".join(failed))
        return EXIT_ALL_DIVERGED
    return EXIT_OK
