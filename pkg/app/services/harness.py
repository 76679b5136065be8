# app/services/harness.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import asyncio
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..config import settings
from ..storage.runstore import RunStore
from ..utils import numfmt
from ..utils.errors import ConfigError, DivergenceError
from ..utils.rng import generator
from .methods import RunTrace, Stopping, run
from .problems import (
    NoiseSpec,
    ProblemInstance,
    instance_to_document,
    make_block_quadratic,
    make_hetero_quadratic,
)
from .timemodel import ClusterProfile
from .tuner import (
    METHODS,
    MethodConfig,
    grid_cells,
    inkheart_iteration_bound,
    load_grids,
    theorem_config,
)

LOG = logging.getLogger("harness")

CELL_COLUMNS = [
    "method", "cell", "gamma", "keep_count", "eta",
    "time_to_threshold", "final_f_gap", "reached", "diverged", "status",
]

# cells per pruning wave, independent of parallelism
PRUNE_WAVE = 4


# ---------------------- config schema ----------------------

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ProblemSection(_Section):
    family: Literal["block", "hetero"] = "block"
    d: int = Field(gt=0)
    lam: float = Field(alias="lambda", gt=0.0, le=1.0)
    scale_std: float = Field(0.0, ge=0.0)
    n: int = Field(ge=1)
    seed: int = 0
    x0_norm: Optional[float] = Field(None, gt=0.0)

    @field_validator("d")
    @classmethod
    def _even(cls, v: int) -> int:
        if v % 2:
            raise ValueError("d must be even")
        return v


class WorkerSection(_Section):
    h: float = Field(ge=0.0)
    tau: float = Field(ge=0.0)
    kappa: float = Field(ge=0.0)


class ClusterSection(_Section):
    h: Optional[float] = Field(None, ge=0.0)
    tau: Optional[float] = Field(None, ge=0.0)
    kappa: Optional[float] = Field(None, ge=0.0)
    workers: Optional[List[WorkerSection]] = None

    @model_validator(mode="after")
    def _one_form(self) -> "ClusterSection":
        flat = [v is not None for v in (self.h, self.tau, self.kappa)]
        if self.workers is not None:
            if any(flat):
                raise ValueError("give either h/tau/kappa or a workers list, not both")
        elif not all(flat):
            raise ValueError("homogeneous cluster needs h, tau and kappa")
        return self


class MethodSection(_Section):
    name: Literal["sync", "inkheart", "inkheart_heter", "m4"]
    mode: Literal["theorem", "grid"] = "grid"
    gammas: Optional[List[float]] = Field(None, min_length=1)
    keep_counts: Optional[List[int]] = Field(None, min_length=1)
    etas: Optional[List[float]] = Field(None, min_length=1)
    batch: int = Field(1, ge=1)

    @field_validator("gammas")
    @classmethod
    def _positive_gammas(cls, v):
        if v is not None and any(g <= 0 or not math.isfinite(g) for g in v):
            raise ValueError("step sizes must be positive and finite")
        return v

    @field_validator("etas")
    @classmethod
    def _unit_etas(cls, v):
        if v is not None and any(not 0.0 < e <= 1.0 for e in v):
            raise ValueError("momentum values must lie in (0, 1]")
        return v


class StoppingSection(_Section):
    grad_norm_sq: Optional[float] = Field(None, gt=0.0)
    f_gap: Optional[float] = Field(None, gt=0.0)
    max_time: Optional[float] = Field(None, gt=0.0)
    max_iters: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _any_limit(self) -> "StoppingSection":
        if all(v is None for v in (self.grad_norm_sq, self.f_gap, self.max_time, self.max_iters)):
            raise ValueError("at least one stopping criterion is required")
        return self

    def to_stopping(self) -> Stopping:
        return Stopping(self.grad_norm_sq, self.f_gap, self.max_time, self.max_iters)


class ExperimentConfig(_Section):
    problem: ProblemSection
    cluster: ClusterSection
    sigma: float = Field(0.0, ge=0.0)
    epsilon: Optional[float] = Field(None, gt=0.0)
    methods: List[MethodSection] = Field(min_length=1)
    stopping: StoppingSection
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    output_dir: Optional[str] = None
    parallelism: Optional[int] = Field(None, ge=1)
    trace_every: Optional[int] = Field(None, ge=1)
    prune: bool = False

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        if self.cluster.workers is not None and len(self.cluster.workers) != self.problem.n:
            raise ValueError(
                f"cluster lists {len(self.cluster.workers)} workers but problem.n is {self.problem.n}"
            )
        if self.epsilon is None:
            # tuning target defaults to the gradient threshold, then the gap threshold
            self.epsilon = self.stopping.grad_norm_sq or self.stopping.f_gap
        if self.epsilon is None:
            raise ValueError("epsilon is required when the stopping rule has no gradient or gap threshold")
        if self.prune and len(self.seeds) % 2 == 0:
            raise ValueError("prune needs an odd number of seeds")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("each method may appear only once")
        return self

    @property
    def sigma_sq_full(self) -> float:
        return self.problem.d * self.sigma ** 2

    def method(self, name: str) -> MethodSection:
        for m in self.methods:
            if m.name == name:
                return m
        raise ConfigError(f"method {name!r} is not configured")


def _format_validation(ex: ValidationError) -> str:
    lines = []
    for err in ex.errors():
        loc = ".".join(str(p) for p in err.get("loc", ())) or "<root>"
        lines.append(f"{loc}: {err.get('msg', 'invalid')}")
    return "; ".join(lines)


def parse_config(raw: Any) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as ex:
        raise ConfigError(_format_validation(ex)) from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read, validate and echo an experiment file. Any problem is a ConfigError."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except OSError as ex:
        raise ConfigError(f"cannot read {p}: {ex}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as ex:
        raise ConfigError(f"{p.name}: invalid JSON at line {ex.lineno} column {ex.colno}: {ex.msg}") from None
    cfg = parse_config(raw)
    LOG.info("config %s resolved: %s", p.name, json.dumps(resolved_document(cfg), sort_keys=True))
    return cfg


def resolved_document(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json", by_alias=True)


# ---------------------- building blocks ----------------------

def build_instance(problem: ProblemSection) -> ProblemInstance:
    if problem.family == "block":
        return make_block_quadratic(problem.d, problem.lam, problem.n, x0_norm=problem.x0_norm)
    rng = generator(problem.seed, "instance")
    return make_hetero_quadratic(
        problem.d, problem.lam, problem.scale_std, problem.n, rng,
        seed=problem.seed, x0_norm=problem.x0_norm,
    )


def build_cluster(section: ClusterSection, n: int) -> ClusterProfile:
    if section.workers is not None:
        ws = section.workers
        return ClusterProfile.from_lists([w.h for w in ws], [w.tau for w in ws], [w.kappa for w in ws])
    return ClusterProfile.homogeneous(n, section.h, section.tau, section.kappa)


def method_cells(
    cfg: ExperimentConfig,
    section: MethodSection,
    instance: ProblemInstance,
    cluster: ClusterProfile,
    grids: Optional[dict] = None,
) -> List[MethodConfig]:
    if section.mode == "theorem":
        conf = theorem_config(section.name, instance, cluster, cfg.sigma_sq_full, cfg.epsilon)
        if section.name in ("inkheart", "inkheart_heter"):
            c = instance.constants
            conf.notes["iteration_bound"] = inkheart_iteration_bound(conf, c.L_max, c.L_A, instance.delta, cfg.epsilon)
        return [conf]
    grids = grids or load_grids()
    return grid_cells(
        section.name,
        cluster.n,
        instance.dimension,
        cfg.sigma_sq_full,
        cfg.epsilon,
        section.gammas or grids["gammas"],
        section.keep_counts or grids["keep_counts"],
        section.etas or grids["etas"],
        batch=section.batch,
    )


# ---------------------- grid search ----------------------

@dataclass
class CellResult:
    method: str
    index: int
    config: MethodConfig
    traces: List[RunTrace] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)

    @property
    def diverged(self) -> bool:
        return any(t.status == "diverged" for t in self.traces)

    @property
    def time_to_threshold(self) -> float:
        return float(pd.Series([t.time_to_threshold for t in self.traces], dtype=float).median())

    @property
    def final_f_gap(self) -> float:
        gaps = [t.final.f_gap if t.final is not None else math.nan for t in self.traces]
        return float(pd.Series(gaps, dtype=float).median())

    @property
    def reached(self) -> int:
        return sum(t.status == "reached" for t in self.traces)

    @property
    def status(self) -> str:
        if self.diverged:
            return "diverged"
        return "reached" if math.isfinite(self.time_to_threshold) else "budget"

    def sort_key(self) -> Tuple[float, float, int]:
        return (self.time_to_threshold, self.config.gamma, self.config.uplink.keep_count)

    def to_row(self) -> dict:
        return {
            "method": self.method,
            "cell": self.index,
            "gamma": self.config.gamma,
            "keep_count": self.config.uplink.keep_count,
            "eta": self.config.eta,
            "time_to_threshold": self.time_to_threshold,
            "final_f_gap": self.final_f_gap,
            "reached": self.reached,
            "diverged": sum(t.status == "diverged" for t in self.traces),
            "status": self.status,
        }


@dataclass
class GridOutcome:
    ok: bool
    method: str
    best: Optional[CellResult] = None
    cells: List[CellResult] = field(default_factory=list)
    error: Optional[str] = None


def _run_cell_seed(
    method: str,
    instance: ProblemInstance,
    cluster: ClusterProfile,
    config: MethodConfig,
    stopping: Stopping,
    seed: int,
    noise: NoiseSpec,
    trace_every: Optional[int],
) -> RunTrace:
    try:
        return run(method, instance, cluster, config, stopping, seed, noise, trace_every=trace_every)
    except DivergenceError as ex:
        LOG.warning("%s gamma=%g seed=%d diverged: %s", method, config.gamma, seed, ex)
        trace = ex.trace if ex.trace is not None else RunTrace(method=method)
        trace.status = "diverged"
        return trace


def pick_best(method: str, cells: List[CellResult]) -> GridOutcome:
    stable = [c for c in cells if not c.diverged]
    if not stable:
        return GridOutcome(False, method, None, cells, f"all {len(cells)} cells diverged")
    best = min(stable, key=CellResult.sort_key)
    return GridOutcome(True, method, best, cells)


async def _run_jobs(jobs: List[tuple], parallelism: int) -> List[RunTrace]:
    sem = asyncio.Semaphore(max(1, int(parallelism)))

    async def _one(args):
        async with sem:
            return await asyncio.to_thread(_run_cell_seed, *args)

    tasks = [asyncio.create_task(_one(j)) for j in jobs]
    return await asyncio.gather(*tasks)


def _run_cells(
    cells: List[CellResult],
    cfg: ExperimentConfig,
    instance: ProblemInstance,
    cluster: ClusterProfile,
    stopping: Stopping,
    parallelism: int,
) -> None:
    noise = NoiseSpec(cfg.sigma)
    jobs: List[tuple] = []
    for cell in cells:
        cell.seeds = list(cfg.seeds)
        for seed in cell.seeds:
            jobs.append((cell.method, instance, cluster, cell.config, stopping, seed, noise, cfg.trace_every))
    traces = asyncio.run(_run_jobs(jobs, parallelism))
    it = iter(traces)
    for cell in cells:
        cell.traces = [next(it) for _ in cell.seeds]


def _run_pruned(
    cells: List[CellResult],
    cfg: ExperimentConfig,
    instance: ProblemInstance,
    cluster: ClusterProfile,
    stopping: Stopping,
    parallelism: int,
) -> None:
    """
    Largest step sizes first, PRUNE_WAVE cells at a time. Later waves stop at
    the best median time reached so far; with an odd seed count this leaves
    the median of every cell that could still win unchanged.
    """
    order = sorted(cells, key=lambda c: (-c.config.gamma, c.index))
    bound = math.inf
    for start in range(0, len(order), PRUNE_WAVE):
        wave = order[start:start + PRUNE_WAVE]
        rule = stopping
        if math.isfinite(bound):
            cap = bound * (1.0 + 1e-9)
            if stopping.max_time is None or cap < stopping.max_time:
                rule = replace(stopping, max_time=cap)
                for cell in wave:
                    cell.config.notes["pruned_max_time"] = cap
        _run_cells(wave, cfg, instance, cluster, rule, parallelism)
        for cell in wave:
            if not cell.diverged:
                bound = min(bound, cell.time_to_threshold)
    LOG.info("%s: pruned grid, best median %s", cells[0].method, numfmt.seconds(bound))


def _evaluate(
    cfg: ExperimentConfig,
    instance: ProblemInstance,
    cluster: ClusterProfile,
    plan: List[Tuple[str, List[MethodConfig]]],
    parallelism: int,
) -> Dict[str, GridOutcome]:
    stopping = cfg.stopping.to_stopping()
    cells = [CellResult(method, i, conf) for method, confs in plan for i, conf in enumerate(confs)]
    LOG.info(
        "running %s jobs over %d cells (parallelism=%d)",
        numfmt.coords(len(cells) * len(cfg.seeds)), len(cells), parallelism,
    )
    if cfg.prune:
        for method, _ in plan:
            _run_pruned([c for c in cells if c.method == method], cfg, instance, cluster, stopping, parallelism)
    else:
        _run_cells(cells, cfg, instance, cluster, stopping, parallelism)

    outcomes: Dict[str, GridOutcome] = {}
    for method, _ in plan:
        outcomes[method] = pick_best(method, [c for c in cells if c.method == method])
    return outcomes


def grid_search(
    cfg: ExperimentConfig,
    method: str,
    *,
    instance: Optional[ProblemInstance] = None,
    cluster: Optional[ClusterProfile] = None,
    parallelism: Optional[int] = None,
) -> GridOutcome:
    """
    Run every cell of one method over all seeds and pick the one with the
    smallest median virtual time to the threshold; ties go to the smaller
    step size, then the smaller keep count. Divergent cells never win.
    """
    section = cfg.method(method)
    instance = instance or build_instance(cfg.problem)
    cluster = cluster or build_cluster(cfg.cluster, cfg.problem.n)
    confs = method_cells(cfg, section, instance, cluster)
    par = parallelism or cfg.parallelism or settings.parallelism
    return _evaluate(cfg, instance, cluster, [(method, confs)], par)[method]


# ---------------------- experiment ----------------------

@dataclass
class ExperimentResult:
    out_dir: Path
    outcomes: Dict[str, GridOutcome]
    summary: pd.DataFrame

    @property
    def all_diverged(self) -> List[str]:
        return [m for m, o in self.outcomes.items() if not o.ok]


def _trace_metadata(
    cell: CellResult, seed: int, trace: RunTrace, cfg: ExperimentConfig, instance: ProblemInstance
) -> dict:
    return {
        "method": cell.method,
        "cell": cell.index,
        "seed": seed,
        "status": trace.status,
        "rows": len(trace.rows),
        "config": cell.config.to_document(),
        "constants": instance.constants.to_document(),
        "sigma": cfg.sigma,
        "epsilon": cfg.epsilon,
        "stopping": cfg.stopping.model_dump(mode="json"),
        "instance": "instance.json",
        "cluster": build_cluster(cfg.cluster, cfg.problem.n).to_document(),
    }


def _summary_frame(outcomes: Dict[str, GridOutcome]) -> pd.DataFrame:
    rows = []
    for method, o in outcomes.items():
        if o.ok:
            rows.append(o.best.to_row())
        else:
            rows.append({
                "method": method, "cell": -1, "gamma": math.nan, "keep_count": -1, "eta": math.nan,
                "time_to_threshold": math.inf, "final_f_gap": math.nan,
                "reached": 0, "diverged": sum(len(c.traces) for c in o.cells), "status": "all_diverged",
            })
    return pd.DataFrame(rows, columns=CELL_COLUMNS)


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: Optional[Union[str, Path]] = None,
    parallelism: Optional[int] = None,
) -> ExperimentResult:
    """
    Tune and run every configured method, then write traces, per-cell
    medians and the best-cell summary. Output bytes depend only on cfg.
    """
    root = Path(out_dir or cfg.output_dir or settings.out_dir)
    par = parallelism or cfg.parallelism or settings.parallelism
    instance = build_instance(cfg.problem)
    cluster = build_cluster(cfg.cluster, cfg.problem.n)
    grids = load_grids()
    plan = [(s.name, method_cells(cfg, s, instance, cluster, grids)) for s in cfg.methods]

    outcomes = _evaluate(cfg, instance, cluster, plan, par)

    store = RunStore(root)
    inst_doc = instance_to_document(instance)
    inst_doc["constants"] = instance.constants.to_document()
    store.write_json("instance.json", inst_doc)

    cell_rows = []
    for method, o in outcomes.items():
        for cell in o.cells:
            cell_rows.append(cell.to_row())
            for seed, trace in zip(cell.seeds, cell.traces):
                store.save_trace(
                    method, cell.index, seed, trace.to_frame(),
                    _trace_metadata(cell, seed, trace, cfg, instance),
                )
    store.write_frame("cells.csv", pd.DataFrame(cell_rows, columns=CELL_COLUMNS))
    summary = _summary_frame(outcomes)
    store.write_frame("summary.csv", summary)

    for method, o in outcomes.items():
        if o.ok:
            LOG.info(
                "%s best cell %d: gamma=%g time=%s f_gap=%.3g",
                method, o.best.index, o.best.config.gamma,
                numfmt.seconds(o.best.time_to_threshold), o.best.final_f_gap,
            )
        else:
            LOG.warning("%s: %s", method, o.error)
    return ExperimentResult(root, outcomes, summary)


__all__ = [
    "METHODS",
    "ExperimentConfig",
    "GridOutcome",
    "CellResult",
    "load_config",
    "parse_config",
    "build_instance",
    "build_cluster",
    "method_cells",
    "grid_search",
    "run_experiment",
]
