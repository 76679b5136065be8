# app/services/methods.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Union

import numpy as np
import pandas as pd

from ..config import settings
from ..utils.errors import ContractError, DivergenceError
from ..utils.rng import RandomStreams, bernoulli_sample
from .compress import compress_rows
from .problems import NoiseSpec, ProblemInstance, grad_norm_sq, minibatch_sum, value
from .timemodel import (
    ClusterProfile,
    VirtualClock,
    inkheart_iteration_time,
    m4_iteration_time,
    warm_start_time,
)
from .tuner import MethodConfig, check_simplex

LOG = logging.getLogger("methods")

TRACE_COLUMNS = ["iter", "time_s", "grad_norm_sq", "f_gap", "up_coords", "down_coords"]


# ---------------------- state ----------------------

@dataclass
class SyncState:
    x: np.ndarray
    k: int = 0


@dataclass
class InkheartState:
    x: np.ndarray
    local: np.ndarray
    k: int = 0

    @classmethod
    def start(cls, x0: np.ndarray, n: int) -> "InkheartState":
        x0 = np.asarray(x0, dtype=float)
        return cls(x=x0.copy(), local=np.tile(x0, (n, 1)), k=0)


@dataclass
class M4State:
    x: np.ndarray
    shadow: np.ndarray
    local: np.ndarray
    momentum: np.ndarray
    estimator: np.ndarray
    k: int = 0


State = Union[SyncState, InkheartState, M4State]


class StepResult(NamedTuple):
    state: Any
    seconds: float
    up_coords: int
    down_coords: int
    synced: bool = True
    synced_up: bool = True


def _column(counts, n: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(counts, dtype=float), (n,))


def _worker_mean(rows: np.ndarray) -> np.ndarray:
    return rows.mean(axis=0)


def _broadcast(x: np.ndarray, n: int) -> np.ndarray:
    return np.broadcast_to(x, (n, x.shape[0]))


# ---------------------- SyncSGD ----------------------

def sync_sgd_step(
    state: SyncState,
    instance: ProblemInstance,
    noise: NoiseSpec,
    gamma: float,
    b,
    streams: RandomStreams,
    cluster: Optional[ClusterProfile] = None,
) -> StepResult:
    """x+ = x - gamma * mean_i (1/b) sum_r grad f_i(x; xi_r), all workers at the shared x."""
    n, d = instance.worker_count, instance.dimension
    bb = _column(b, n)
    if np.any(bb < 1):
        raise ContractError("batch must be at least 1")
    rs = streams.at(state.k)
    S = minibatch_sum(instance, _broadcast(state.x, n), bb, noise, rs.noise)
    g = _worker_mean(S / bb[:, None])
    x_next = state.x - gamma * g
    seconds = 0.0 if cluster is None else inkheart_iteration_time(cluster, bb, 1, 1, True, d, d, d)
    return StepResult(SyncState(x_next, state.k + 1), seconds, n * d, n * d)


# ---------------------- Inkheart ----------------------

def inkheart_estimator(
    local: np.ndarray,
    instance: ProblemInstance,
    noise: NoiseSpec,
    config: MethodConfig,
    noise_rng: np.random.Generator,
    uplink_rng: np.random.Generator,
    weights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    g = sum_i beta_i / (b_i m_i) sum_j C_ij(sum_r grad f(x_i; xi_r)).
    Uniform beta when `weights` is None.
    """
    n = instance.worker_count
    bb = _column(config.b, n)
    S = minibatch_sum(instance, local, bb, noise, noise_rng)
    messages = compress_rows(config.uplink, S, uplink_rng, copies=config.m)
    contrib = messages / bb[:, None]
    if weights is None:
        return _worker_mean(contrib)
    return weights @ contrib


def _inkheart_update(
    state: InkheartState,
    instance: ProblemInstance,
    noise: NoiseSpec,
    config: MethodConfig,
    streams: RandomStreams,
    cluster: Optional[ClusterProfile],
    weights: Optional[np.ndarray],
) -> StepResult:
    n, d = instance.worker_count, instance.dimension
    if config.n != n:
        raise ContractError(f"config is for {config.n} workers, instance has {n}")
    rs = streams.at(state.k)

    g = inkheart_estimator(state.local, instance, noise, config, rs.noise, rs.uplink, weights)
    x_next = state.x - config.gamma * g

    synced = bernoulli_sample(rs.coin, config.p)
    if synced:
        local = np.tile(x_next, (n, 1))
    else:
        step = x_next - state.x
        local = state.local + compress_rows(config.downlink, _broadcast(step, n), rs.downlink, copies=config.ell)

    k_up, k_down = config.uplink.keep_count, config.downlink.keep_count
    seconds = 0.0
    if cluster is not None:
        seconds = inkheart_iteration_time(cluster, config.b, config.m, config.ell, synced, d, k_up, k_down)
    up = int(sum(config.m)) * k_up
    down = n * d if synced else int(sum(config.ell)) * k_down
    return StepResult(InkheartState(x_next, local, state.k + 1), seconds, up, down, synced)


def inkheart_step(
    state: InkheartState,
    instance: ProblemInstance,
    noise: NoiseSpec,
    config: MethodConfig,
    streams: RandomStreams,
    cluster: Optional[ClusterProfile] = None,
) -> StepResult:
    return _inkheart_update(state, instance, noise, config, streams, cluster, None)


def inkheart_heter_step(
    state: InkheartState,
    instance: ProblemInstance,
    noise: NoiseSpec,
    config: MethodConfig,
    streams: RandomStreams,
    cluster: Optional[ClusterProfile] = None,
) -> StepResult:
    if config.beta is None:
        raise ContractError("heterogeneous Inkheart needs weights beta")
    check_simplex(config.beta, instance.worker_count)
    weights = np.asarray(config.beta, dtype=float)
    return _inkheart_update(state, instance, noise, config, streams, cluster, weights)


# ---------------------- M4 ----------------------

def m4_initial_state(
    instance: ProblemInstance,
    noise: NoiseSpec,
    config: MethodConfig,
    streams: RandomStreams,
) -> M4State:
    """v_i^0 from a b_init minibatch at x0 (noise stream 0); g^0 = mean_i v_i^0."""
    n = instance.worker_count
    b_init = config.b_init or config.b[0]
    X = np.tile(instance.x0, (n, 1))
    bb = _column(b_init, n)
    v = minibatch_sum(instance, X, bb, noise, streams.at(0).noise) / bb[:, None]
    return M4State(
        x=instance.x0.copy(),
        shadow=X.copy(),
        local=X.copy(),
        momentum=v,
        estimator=_worker_mean(v),
        k=0,
    )


def m4_step(
    state: M4State,
    instance: ProblemInstance,
    noise: NoiseSpec,
    config: MethodConfig,
    streams: RandomStreams,
    cluster: Optional[ClusterProfile] = None,
) -> StepResult:
    n, d = instance.worker_count, instance.dimension
    if config.eta is None or config.p_s is None:
        raise ContractError("M4 needs eta and p_s")
    eta = config.eta
    rs = streams.at(state.k)

    x_next = state.x - config.gamma * state.estimator

    # both coins are always drawn so the coin stream layout is fixed
    coin = rs.coin
    full_down = bernoulli_sample(coin, config.p_s)
    full_up = bernoulli_sample(coin, config.p)

    if full_down:
        shadow = np.tile(x_next, (n, 1))
    else:
        step = x_next - state.x
        shadow = state.shadow + compress_rows(config.downlink, _broadcast(step, n), rs.downlink)
    local = (1.0 - eta) * state.local + eta * shadow

    bb = _column(config.b, n)
    # momentum after step k uses noise stream k+1
    S = minibatch_sum(instance, local, bb, noise, streams.at(state.k + 1).noise)
    momentum = (1.0 - eta) * state.momentum + eta * (S / bb[:, None])

    if full_up:
        estimator = _worker_mean(momentum)
    else:
        estimator = state.estimator + _worker_mean(
            compress_rows(config.uplink, momentum - state.momentum, rs.uplink)
        )

    k_up, k_down = config.uplink.keep_count, config.downlink.keep_count
    seconds = 0.0
    if cluster is not None:
        seconds = m4_iteration_time(cluster, int(max(config.b)), k_up, k_down, full_down, full_up, d)
    up = n * (d if full_up else k_up)
    down = n * (d if full_down else k_down)
    nxt = M4State(x_next, shadow, local, momentum, estimator, state.k + 1)
    return StepResult(nxt, seconds, up, down, full_down, full_up)


# ---------------------- runs ----------------------

@dataclass(frozen=True)
class Stopping:
    grad_norm_sq: Optional[float] = None
    f_gap: Optional[float] = None
    max_time: Optional[float] = None
    max_iters: Optional[int] = None

    def __post_init__(self) -> None:
        if all(v is None for v in (self.grad_norm_sq, self.f_gap, self.max_time, self.max_iters)):
            raise ContractError("stopping rule needs at least one criterion")

    def reached(self, gn: float, fg: float) -> bool:
        if self.grad_norm_sq is not None and gn <= self.grad_norm_sq:
            return True
        if self.f_gap is not None and fg <= self.f_gap:
            return True
        return False

    def exhausted(self, k: int, now: float) -> bool:
        if self.max_iters is not None and k >= self.max_iters:
            return True
        if self.max_time is not None and now >= self.max_time:
            return True
        return False

    def to_document(self) -> dict:
        return {
            "grad_norm_sq": self.grad_norm_sq,
            "f_gap": self.f_gap,
            "max_time": self.max_time,
            "max_iters": self.max_iters,
        }


class TraceRow(NamedTuple):
    k: int
    time_s: float
    grad_norm_sq: float
    f_gap: float
    up_coords: int
    down_coords: int


@dataclass
class RunTrace:
    method: str
    rows: List[TraceRow] = field(default_factory=list)
    status: str = "running"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def append(self, row: TraceRow) -> None:
        if self.rows:
            last = self.rows[-1]
            if row.k <= last.k or row.time_s < last.time_s:
                raise ContractError("trace rows must advance in k and never go back in time")
        self.rows.append(row)

    @property
    def final(self) -> Optional[TraceRow]:
        return self.rows[-1] if self.rows else None

    @property
    def time_to_threshold(self) -> float:
        if self.status != "reached" or not self.rows:
            return math.inf
        return self.rows[-1].time_s

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame.from_records(self.rows, columns=list(TraceRow._fields))
        df.columns = TRACE_COLUMNS
        return df.astype({"iter": "int64", "up_coords": "int64", "down_coords": "int64"})


def _initial_state(method: str, instance: ProblemInstance, noise: NoiseSpec, config: MethodConfig, streams: RandomStreams) -> State:
    n = instance.worker_count
    if method == "sync":
        return SyncState(instance.x0.copy(), 0)
    if method in ("inkheart", "inkheart_heter"):
        return InkheartState.start(instance.x0, n)
    if method == "m4":
        return m4_initial_state(instance, noise, config, streams)
    raise ContractError(f"unknown method {method!r}")


def _step(method: str, state: State, instance, noise, config: MethodConfig, streams, cluster) -> StepResult:
    if method == "sync":
        return sync_sgd_step(state, instance, noise, config.gamma, config.b, streams, cluster)
    if method == "inkheart":
        return inkheart_step(state, instance, noise, config, streams, cluster)
    if method == "inkheart_heter":
        return inkheart_heter_step(state, instance, noise, config, streams, cluster)
    return m4_step(state, instance, noise, config, streams, cluster)


def _is_finite(state: State, limit: float) -> bool:
    # NaN compares false, so it counts as divergence too
    for arr in vars(state).values():
        if isinstance(arr, np.ndarray) and arr.size and not float(np.max(np.abs(arr))) <= limit:
            return False
    return True


def run(
    method: str,
    instance: ProblemInstance,
    cluster: ClusterProfile,
    config: MethodConfig,
    stopping: Stopping,
    seed: int,
    noise: Optional[NoiseSpec] = None,
    *,
    trace_every: Optional[int] = None,
) -> RunTrace:
    """
    Iterate one method on the virtual clock until the first stopping criterion.
    A non-finite or exploding iterate raises DivergenceError with the rows so far.
    """
    noise = noise or NoiseSpec(0.0)
    n = instance.worker_count
    if cluster.n != n or config.n != n:
        raise ContractError(f"worker counts disagree: instance {n}, cluster {cluster.n}, config {config.n}")
    if config.dimension != instance.dimension:
        raise ContractError("config dimension does not match the instance")
    every = settings.trace_every if trace_every is None else max(1, int(trace_every))
    limit = settings.divergence_limit

    streams = RandomStreams(seed)
    clock = VirtualClock()
    state = _initial_state(method, instance, noise, config, streams)
    if method == "m4":
        clock.advance(warm_start_time(cluster, config.b_init or config.b[0]))

    trace = RunTrace(method=method)
    up = down = 0
    gn, fg = grad_norm_sq(instance, state.x), value(instance, state.x)
    row = TraceRow(0, clock.now, gn, fg, 0, 0)
    trace.append(row)
    if stopping.reached(gn, fg):
        trace.status = "reached"
        return trace

    while True:
        if stopping.exhausted(state.k, clock.now):
            trace.status = "budget"
            break
        res = _step(method, state, instance, noise, config, streams, cluster)
        state = res.state
        if not _is_finite(state, limit):
            trace.status = "diverged"
            LOG.debug("%s diverged at iteration %d (gamma=%g)", method, state.k, config.gamma)
            raise DivergenceError(f"{method} diverged at iteration {state.k}", trace=trace)
        now = max(clock.advance(res.seconds), row.time_s)
        up += res.up_coords
        down += res.down_coords
        gn, fg = grad_norm_sq(instance, state.x), value(instance, state.x)
        row = TraceRow(state.k, now, gn, fg, up, down)
        if stopping.reached(gn, fg):
            trace.append(row)
            trace.status = "reached"
            return trace
        if state.k % every == 0:
            trace.append(row)

    if trace.final is not row:
        trace.append(row)
    return trace
