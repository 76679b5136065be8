# app/services/selection.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

from ..config import settings
from ..utils.errors import ContractError, GuardError
from .problems import ProblemInstance
from .timemodel import ClusterProfile
from .tuner import equilibrium_solve

LOG = logging.getLogger("selection")


class SelectionConstants(NamedTuple):
    d: int
    omega: float
    omega_s: float
    sigma_sq_full: float
    epsilon: float
    L_max: float
    L_A: float


def selection_constants(instance: ProblemInstance, sigma: float, epsilon: float) -> SelectionConstants:
    """Rand-1 in both directions, as in the heterogeneous tuner."""
    d = instance.dimension
    c = instance.constants
    return SelectionConstants(
        d=d,
        omega=float(d - 1),
        omega_s=float(d - 1),
        sigma_sq_full=d * sigma ** 2,
        epsilon=float(epsilon),
        L_max=c.L_max,
        L_A=c.L_A,
    )


@dataclass(frozen=True)
class SubsetEvaluation:
    subset: Tuple[int, ...]
    t_of_S: float
    s_star_of_S: float
    kappa_max_of_S: float
    objective: float

    def label(self) -> str:
        return ";".join(str(i) for i in self.subset)


@dataclass
class SelectionResult:
    best: SubsetEvaluation
    candidates: List[SubsetEvaluation] = field(default_factory=list)

    @property
    def subset(self) -> Tuple[int, ...]:
        return self.best.subset

    @property
    def objective(self) -> float:
        return self.best.objective


def _normalize(cluster: ClusterProfile, S: Iterable[int]) -> Tuple[int, ...]:
    key = tuple(sorted(set(int(i) for i in S)))
    if not key:
        raise ContractError("subset must be nonempty")
    if key[0] < 0 or key[-1] >= cluster.n:
        raise ContractError(f"subset {key} out of range for {cluster.n} workers")
    return key


def evaluate_subset(
    cluster: ClusterProfile,
    S: Iterable[int],
    constants: SelectionConstants,
    cache: Optional[Dict[Tuple[int, ...], SubsetEvaluation]] = None,
) -> SubsetEvaluation:
    key = _normalize(cluster, S)
    if cache is not None and key in cache:
        return cache[key]

    sub = cluster.subset(key)
    kmax = sub.kappa_max
    s_star = equilibrium_solve(
        sub, constants.omega, constants.omega_s, constants.sigma_sq_full, constants.epsilon, constants.d,
        kappa_max=kmax,
    )
    t = max(float(sub.M.max()), s_star)
    objective = max(t * constants.L_max, constants.d * kmax * constants.L_A)
    ev = SubsetEvaluation(key, t, s_star, kmax, objective)
    if cache is not None:
        cache[key] = ev
    return ev


def _argmin(evals: Sequence[SubsetEvaluation]) -> SubsetEvaluation:
    # first minimum in evaluation order
    best = evals[0]
    for ev in evals[1:]:
        if ev.objective < best.objective:
            best = ev
    return best


def select_optimal_subset(cluster: ClusterProfile, constants: SelectionConstants) -> SelectionResult:
    """
    Sort workers by kappa; for every kappa-prefix re-sort by M and evaluate
    each prefix of that order. O(n^2) candidates, memoized by index set.
    """
    kappa, M = cluster.kappa, cluster.M
    by_kappa = sorted(range(cluster.n), key=lambda i: (kappa[i], i))
    cache: Dict[Tuple[int, ...], SubsetEvaluation] = {}
    candidates: List[SubsetEvaluation] = []
    seen = set()

    for k in range(1, cluster.n + 1):
        by_m = sorted(by_kappa[:k], key=lambda i: (M[i], i))
        for j in range(1, k + 1):
            ev = evaluate_subset(cluster, by_m[:j], constants, cache)
            if ev.subset not in seen:
                seen.add(ev.subset)
                candidates.append(ev)

    best = _argmin(candidates)
    LOG.info("selection: %d candidates, best %s objective=%.6g", len(candidates), best.label(), best.objective)
    return SelectionResult(best=best, candidates=candidates)


def brute_force_subset(cluster: ClusterProfile, constants: SelectionConstants) -> SelectionResult:
    limit = settings.brute_force_max
    if cluster.n > limit:
        raise GuardError(f"brute force over {cluster.n} workers refused (limit {limit})")
    evals: List[SubsetEvaluation] = []
    for size in range(1, cluster.n + 1):
        for S in itertools.combinations(range(cluster.n), size):
            evals.append(evaluate_subset(cluster, S, constants))
    return SelectionResult(best=_argmin(evals), candidates=evals)
