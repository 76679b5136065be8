# app/handlers/select_workers.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import argparse
from pathlib import Path

import pandas as pd

from app.services.harness import build_cluster, build_instance, load_config
from app.services.selection import (
    SelectionResult,
    brute_force_subset,
    select_optimal_subset,
    selection_constants,
)
from app.storage.runstore import RunStore, dumps, frame_csv


def selection_document(result: SelectionResult, oracle: SelectionResult = None) -> dict:
    best = result.best
    doc = {
        "subset": list(best.subset),
        "objective": best.objective,
        "t": best.t_of_S,
        "s_star": best.s_star_of_S,
        "kappa_max": best.kappa_max_of_S,
        "candidates": [
            {"subset": list(c.subset), "t": c.t_of_S, "s_star": c.s_star_of_S, "objective": c.objective}
            for c in result.candidates
        ],
    }
    if oracle is not None:
        doc["brute_force"] = {"subset": list(oracle.subset), "objective": oracle.objective}
    return doc


def candidate_frame(result: SelectionResult) -> pd.DataFrame:
    chosen = tuple(result.subset)
    return pd.DataFrame(
        [(c.label(), c.t_of_S, c.s_star_of_S, c.objective, tuple(c.subset) == chosen) for c in result.candidates],
        columns=["subset", "t", "s_star", "objective", "chosen"],
    )


def cmd_select_workers(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    instance = build_instance(cfg.problem)
    cluster = build_cluster(cfg.cluster, cfg.problem.n)
    constants = selection_constants(instance, cfg.sigma, cfg.epsilon)

    result = select_optimal_subset(cluster, constants)
    oracle = brute_force_subset(cluster, constants) if args.brute_force else None
    doc = selection_document(result, oracle)

    if args.out:
        out = Path(args.out)
        store = RunStore(out.parent)
        store.write_json(out.name, doc)
        store.write_frame(out.stem + "_candidates.csv", candidate_frame(result))
        print(f"selected {len(result.subset)} of {cluster.n} workers -> {out}")
    elif args.format == "csv":
        print(frame_csv(candidate_frame(result)), end="")
    else:
        print(dumps(doc), end="")
    return 0
