# tests/test_harness.py
# -*- coding: utf-8 -*-
# pytest -q tests/test_harness.py

import copy
import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from app.services.harness import (
    build_cluster,
    build_instance,
    grid_search,
    load_config,
    method_cells,
    parse_config,
    resolved_document,
    run_experiment,
)
from app.storage.runstore import RunStore
from app.utils.errors import ConfigError

BASE = {
    "problem": {"d": 2, "lambda": 0.01, "n": 1},
    "cluster": {"h": 0.001, "tau": 0.001, "kappa": 0.001},
    "sigma": 0.0,
    "methods": [{"name": "sync", "gammas": [1.0]}],
    "stopping": {"f_gap": 1e-6, "max_iters": 5000},
}


def _cfg(**over):
    raw = copy.deepcopy(BASE)
    for key, value in over.items():
        raw[key] = value
    return parse_config(raw)


# ---------------------- config ----------------------

def test_minimal_config_defaults_and_echo():
    cfg = _cfg()
    assert cfg.seeds == [0]
    assert cfg.methods[0].mode == "grid"
    assert cfg.epsilon == 1e-6
    doc = resolved_document(cfg)
    assert doc["problem"]["lambda"] == 0.01
    assert doc["stopping"]["max_iters"] == 5000


def test_unknown_key_is_named_by_path():
    raw = copy.deepcopy(BASE)
    raw["problem"]["foo"] = 1
    with pytest.raises(ConfigError, match=r"problem\.foo"):
        parse_config(raw)


@pytest.mark.parametrize(
    "patch,where",
    [
        ({"problem": {"d": 3, "lambda": 0.5, "n": 1}}, "problem.d"),
        ({"problem": {"d": 2, "lambda": 0.0, "n": 1}}, "problem.lambda"),
        ({"sigma": -1.0}, "sigma"),
        ({"methods": [{"name": "adam"}]}, "methods.0.name"),
        ({"methods": [{"name": "m4", "etas": [1.5]}]}, "methods.0.etas"),
        ({"stopping": {}}, "stopping"),
    ],
)
def test_invalid_fields_raise_config_error(patch, where):
    raw = copy.deepcopy(BASE)
    raw.update(patch)
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        parse_config(raw)


def test_worker_list_must_match_problem_size():
    with pytest.raises(ConfigError, match="workers"):
        _cfg(cluster={"workers": [{"h": 0, "tau": 0, "kappa": 0}] * 2})


def test_duplicate_methods_rejected():
    with pytest.raises(ConfigError, match="once"):
        _cfg(methods=[{"name": "sync"}, {"name": "sync"}])


def test_epsilon_required_without_thresholds():
    with pytest.raises(ConfigError, match="epsilon"):
        _cfg(stopping={"max_iters": 10})


def test_load_config_reports_file_problems(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(BASE), encoding="utf-8")
    assert load_config(good).problem.d == 2


def test_hetero_instance_depends_only_on_seed():
    problem = {"family": "hetero", "d": 8, "lambda": 0.1, "n": 4, "scale_std": 0.5, "seed": 3}
    a = build_instance(_cfg(problem=problem).problem)
    b = build_instance(_cfg(problem=problem).problem)
    assert np.array_equal(a.xi, b.xi)
    c = build_instance(_cfg(problem=dict(problem, seed=4)).problem)
    assert not np.array_equal(a.xi, c.xi)


def test_worker_list_builds_heterogeneous_cluster():
    cfg = _cfg(
        problem={"d": 2, "lambda": 0.5, "n": 2},
        cluster={"workers": [{"h": 1, "tau": 0.5, "kappa": 0.1}, {"h": 0.2, "tau": 3, "kappa": 0.4}]},
    )
    cluster = build_cluster(cfg.cluster, cfg.problem.n)
    assert list(cluster.M) == [1, 3]


def test_theorem_cell_carries_iteration_bound():
    cfg = _cfg(
        problem={"d": 10, "lambda": 0.1, "n": 4},
        sigma=0.01,
        methods=[{"name": "inkheart", "mode": "theorem"}],
        stopping={"grad_norm_sq": 1e-3},
    )
    inst = build_instance(cfg.problem)
    cells = method_cells(cfg, cfg.methods[0], inst, build_cluster(cfg.cluster, 4))
    assert len(cells) == 1
    assert cells[0].mode == "theorem"
    assert cells[0].notes["iteration_bound"] > 0


# ---------------------- grid search ----------------------

def test_noise_free_grid_picks_unit_step():
    cfg = _cfg(methods=[{"name": "sync"}])
    out = grid_search(cfg, "sync", parallelism=2)
    assert out.ok
    assert out.best.config.gamma == 1.0
    assert len(out.cells) == 14


def test_single_cell_grid_wins_trivially():
    out = grid_search(_cfg(), "sync")
    assert out.ok and out.best.index == 0
    assert out.best.status == "reached"


def test_diverging_cell_never_wins():
    cfg = _cfg(
        problem={"d": 2, "lambda": 1.0, "n": 1},
        methods=[{"name": "sync", "gammas": [0.5, 4.0]}],
        stopping={"f_gap": 1e-8, "max_iters": 1000},
    )
    out = grid_search(cfg, "sync")
    assert out.ok
    assert out.best.config.gamma == 0.5
    assert out.cells[1].status == "diverged"


def test_all_cells_diverged():
    cfg = _cfg(
        problem={"d": 2, "lambda": 1.0, "n": 1},
        methods=[{"name": "sync", "gammas": [4.0, 8.0]}],
    )
    out = grid_search(cfg, "sync")
    assert not out.ok
    assert out.best is None
    assert "diverged" in out.error


# ---------------------- experiments ----------------------

def test_single_run_writes_one_trace(tmp_path):
    res = run_experiment(_cfg(), tmp_path / "out")
    root = res.out_dir
    assert sorted(p.name for p in (root / "traces" / "sync").iterdir()) == [
        "cell000_seed0.csv", "cell000_seed0.json",
    ]
    trace = pd.read_csv(root / "traces" / "sync" / "cell000_seed0.csv")
    assert list(trace.columns) == ["iter", "time_s", "grad_norm_sq", "f_gap", "up_coords", "down_coords"]
    assert trace["f_gap"].iloc[-1] <= 1e-6
    meta = RunStore(root).read_json("traces/sync/cell000_seed0.json")
    assert meta["status"] == "reached" and meta["config"]["gamma"] == 1.0
    inst = RunStore(root).read_json("instance.json")
    assert inst["lambda"] == 0.01 and "constants" in inst
    summary = pd.read_csv(root / "summary.csv")
    assert summary["status"].tolist() == ["reached"]
    assert res.all_diverged == []


def _three_methods(parallelism=None):
    return _cfg(
        problem={"d": 4, "lambda": 0.1, "n": 2},
        sigma=0.01,
        epsilon=0.01,
        methods=[
            {"name": "sync", "gammas": [0.5]},
            {"name": "inkheart", "gammas": [0.25], "keep_counts": [1]},
            {"name": "m4", "gammas": [0.1], "keep_counts": [1], "etas": [0.5]},
        ],
        stopping={"max_iters": 50},
        seeds=[0, 1],
        parallelism=parallelism,
    )


def test_three_methods_two_seeds(tmp_path):
    run_experiment(_three_methods(), tmp_path)
    csvs = sorted(p.relative_to(tmp_path).as_posix() for p in tmp_path.glob("traces/*/*.csv"))
    assert len(csvs) == 6
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert summary["method"].tolist() == ["sync", "inkheart", "m4"]
    assert (summary["status"] == "budget").all()
    cells = pd.read_csv(tmp_path / "cells.csv")
    assert len(cells) == 3


def test_reruns_are_byte_identical(tmp_path):
    run_experiment(_three_methods(parallelism=1), tmp_path / "a")
    run_experiment(_three_methods(parallelism=3), tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_all_diverged_method_is_reported(tmp_path):
    cfg = _cfg(
        problem={"d": 2, "lambda": 1.0, "n": 1},
        methods=[{"name": "sync", "gammas": [4.0]}],
    )
    res = run_experiment(cfg, tmp_path)
    assert res.all_diverged == ["sync"]
    summary = pd.read_csv(tmp_path / "summary.csv")
    assert summary["status"].tolist() == ["all_diverged"]
    assert math.isinf(summary["time_to_threshold"].iloc[0])


# ---------------------- pruning ----------------------

def _pruning_grid(prune, parallelism=None):
    return _cfg(
        problem={"d": 4, "lambda": 0.1, "n": 2},
        sigma=0.001,
        methods=[{"name": "sync", "gammas": [0.0625, 0.125, 0.25, 0.5, 1.0, 1.5]}],
        stopping={"f_gap": 1e-4, "max_iters": 5000},
        seeds=[0, 1, 2],
        prune=prune,
        parallelism=parallelism,
    )


def test_pruning_keeps_the_winner_and_its_median():
    full = grid_search(_pruning_grid(False), "sync")
    pruned = grid_search(_pruning_grid(True), "sync")
    assert full.ok and pruned.ok
    assert pruned.best.index == full.best.index
    assert pruned.best.time_to_threshold == full.best.time_to_threshold
    # the two smallest steps run in the second wave, under the cap
    for i in (0, 1):
        slow = pruned.cells[i]
        assert slow.config.notes["pruned_max_time"] >= full.best.time_to_threshold
        assert slow.traces[0].final.k < full.cells[i].traces[0].final.k
    assert "pruned_max_time" not in pruned.cells[5].config.notes


def test_pruned_runs_are_byte_identical_across_parallelism(tmp_path):
    run_experiment(_pruning_grid(True, parallelism=1), tmp_path / "a")
    run_experiment(_pruning_grid(True, parallelism=4), tmp_path / "b")
    for name in ("cells.csv", "summary.csv", "traces/sync/cell000_seed2.csv", "traces/sync/cell000_seed2.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_pruning_needs_an_odd_seed_count():
    with pytest.raises(ConfigError, match="odd"):
        _cfg(seeds=[0, 1], prune=True)


@pytest.mark.slow
def test_compressed_method_beats_sync_when_communication_dominates(tmp_path):
    d = 60
    cfg = _cfg(
        problem={"d": d, "lambda": 0.05, "n": 10},
        cluster={"h": 0.0, "tau": 1 / d, "kappa": 1 / d},
        sigma=0.001,
        methods=[
            {"name": "sync", "gammas": [0.25, 0.5, 1.0]},
            {"name": "inkheart", "gammas": [0.0625, 0.125, 0.25, 0.5, 1.0], "keep_counts": [1, 6]},
        ],
        stopping={"f_gap": 1e-3, "max_time": 1e4, "max_iters": 20000},
        trace_every=100,
    )
    res = run_experiment(cfg, tmp_path)
    sync, ink = res.outcomes["sync"], res.outcomes["inkheart"]
    assert sync.ok and ink.ok
    assert ink.best.time_to_threshold < sync.best.time_to_threshold


@pytest.mark.slow
def test_reference_cell_orders_methods_and_cluster_sizes(tmp_path):
    configs = Path(__file__).resolve().parents[1] / "configs"
    big = run_experiment(load_config(configs / "quad_homog_n300.json"), tmp_path / "n300")
    small = run_experiment(load_config(configs / "quad_homog_n50.json"), tmp_path / "n50")
    assert big.all_diverged == [] and small.all_diverged == []
    ink = big.outcomes["inkheart"].best.time_to_threshold
    assert math.isfinite(ink)
    assert ink < big.outcomes["sync"].best.time_to_threshold
    assert ink < big.outcomes["m4"].best.time_to_threshold
    assert ink < small.outcomes["inkheart"].best.time_to_threshold
