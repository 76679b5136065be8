# app/services/timemodel.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from ..utils.errors import ContractError

Counts = Union[int, Sequence[int], np.ndarray]


@dataclass(frozen=True)
class WorkerProfile:
    """h: s per stochastic gradient; tau: s per uplink coordinate; kappa: s per downlink coordinate."""

    h: float = 0.0
    tau: float = 0.0
    kappa: float = 0.0

    def __post_init__(self) -> None:
        for name in ("h", "tau", "kappa"):
            v = float(getattr(self, name))
            if not (v >= 0.0 and math.isfinite(v)):
                raise ContractError(f"worker {name} must be finite and nonnegative, got {v}")

    @property
    def M(self) -> float:
        return max(self.h, self.tau, self.kappa)


@dataclass(frozen=True)
class ClusterProfile:
    workers: tuple

    def __post_init__(self) -> None:
        ws = tuple(self.workers)
        if not ws:
            raise ContractError("cluster needs at least one worker")
        object.__setattr__(self, "workers", ws)

    @classmethod
    def homogeneous(cls, n: int, h: float, tau: float, kappa: float) -> "ClusterProfile":
        if int(n) < 1:
            raise ContractError("cluster needs at least one worker")
        return cls(tuple(WorkerProfile(h, tau, kappa) for _ in range(int(n))))

    @classmethod
    def from_lists(cls, h: Iterable[float], tau: Iterable[float], kappa: Iterable[float]) -> "ClusterProfile":
        hs, ts, ks = list(h), list(tau), list(kappa)
        if not (len(hs) == len(ts) == len(ks)):
            raise ContractError("h, tau and kappa lists must have equal length")
        return cls(tuple(WorkerProfile(a, b, c) for a, b, c in zip(hs, ts, ks)))

    @property
    def n(self) -> int:
        return len(self.workers)

    @property
    def h(self) -> np.ndarray:
        return np.array([w.h for w in self.workers], dtype=float)

    @property
    def tau(self) -> np.ndarray:
        return np.array([w.tau for w in self.workers], dtype=float)

    @property
    def kappa(self) -> np.ndarray:
        return np.array([w.kappa for w in self.workers], dtype=float)

    @property
    def M(self) -> np.ndarray:
        return np.array([w.M for w in self.workers], dtype=float)

    @property
    def kappa_max(self) -> float:
        return max(w.kappa for w in self.workers)

    @property
    def is_homogeneous(self) -> bool:
        return len(set(self.workers)) == 1

    def subset(self, indices: Iterable[int]) -> "ClusterProfile":
        return ClusterProfile(tuple(self.workers[i] for i in indices))

    def to_document(self) -> list:
        return [{"h": w.h, "tau": w.tau, "kappa": w.kappa} for w in self.workers]


def _per_worker(cluster: ClusterProfile, counts: Counts, name: str) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(counts, dtype=float), (cluster.n,))
    if np.any(arr < 1):
        raise ContractError(f"{name} counts must be at least 1")
    return arr


def inkheart_iteration_time(
    cluster: ClusterProfile,
    b: Counts,
    m: Counts,
    ell: Counts,
    broadcast_full: bool,
    d: int,
    uplink_keep: int,
    downlink_keep: int,
) -> float:
    bb = _per_worker(cluster, b, "b")
    mm = _per_worker(cluster, m, "m")
    ll = _per_worker(cluster, ell, "ell")
    work = float(np.max(bb * cluster.h + mm * uplink_keep * cluster.tau))
    if broadcast_full:
        # everyone waits for the slowest downlink
        down = d * cluster.kappa_max
    else:
        down = float(np.max(ll * downlink_keep * cluster.kappa))
    return work + down


def m4_iteration_time(
    cluster: ClusterProfile,
    b: int,
    uplink_keep: int,
    downlink_keep: int,
    coin_downlink_full: bool,
    coin_uplink_full: bool,
    d: int,
) -> float:
    if b < 1 or uplink_keep < 1 or downlink_keep < 1:
        raise ContractError("M4 counts must be at least 1")
    compute = b * float(cluster.h.max())
    down = (d if coin_downlink_full else downlink_keep) * cluster.kappa_max
    up = (d if coin_uplink_full else uplink_keep) * float(cluster.tau.max())
    return compute + down + up


def sync_iteration_time(cluster: ClusterProfile, b: int, d: int) -> float:
    """Every worker computes b gradients, sends d coordinates, receives d coordinates."""
    return inkheart_iteration_time(cluster, b, 1, 1, True, d, d, d)


def warm_start_time(cluster: ClusterProfile, b_init: int) -> float:
    return b_init * float(cluster.h.max())


def expected_broadcast_time(cluster: ClusterProfile, p: float, ell: Counts, d: int, downlink_keep: int = 1) -> float:
    ll = _per_worker(cluster, ell, "ell")
    partial = float(np.max(ll * downlink_keep * cluster.kappa))
    return p * d * cluster.kappa_max + (1.0 - p) * partial


class VirtualClock:
    """Neumaier-compensated accumulator of simulated seconds."""

    __slots__ = ("_sum", "_comp")

    def __init__(self, start: float = 0.0):
        self._sum = 0.0
        self._comp = 0.0
        if start:
            self.advance(start)

    def advance(self, seconds: float) -> float:
        if seconds < 0 or not math.isfinite(seconds):
            raise ContractError(f"time increments must be finite and nonnegative, got {seconds}")
        t = self._sum + seconds
        if abs(self._sum) >= abs(seconds):
            self._comp += (self._sum - t) + seconds
        else:
            self._comp += (seconds - t) + self._sum
        self._sum = t
        return self.now

    @property
    def now(self) -> float:
        return self._sum + self._comp
