# tests/test_selection.py
# -*- coding: utf-8 -*-
# pytest -q tests/test_selection.py

import numpy as np
import pytest

from app.services.problems import make_block_quadratic
from app.services.selection import (
    SelectionConstants,
    brute_force_subset,
    evaluate_subset,
    select_optimal_subset,
    selection_constants,
)
from app.services.timemodel import ClusterProfile
from app.services.tuner import equilibrium_solve
from app.utils.errors import ContractError, GuardError


def _constants(L_A=0.0, d=20, sigma=0.01, eps=1e-3):
    return SelectionConstants(
        d=d, omega=d - 1.0, omega_s=d - 1.0, sigma_sq_full=d * sigma ** 2, epsilon=eps, L_max=1.0, L_A=L_A
    )


def _random_cluster(rng, n):
    h = rng.uniform(0, 1, n) * rng.choice([1e-3, 1e-1, 1.0], n)
    tau = rng.uniform(0, 1, n) * rng.choice([1e-4, 1e-2], n)
    kappa = rng.uniform(0, 1, n) * rng.choice([1e-4, 1e-2, 1.0], n)
    return ClusterProfile.from_lists(h, tau, kappa)


def test_constants_use_rand1_both_ways():
    inst = make_block_quadratic(10, 0.1, n=3)
    c = selection_constants(inst, 0.1, 1e-3)
    assert c.omega == c.omega_s == 9.0
    assert c.sigma_sq_full == pytest.approx(10 * 0.01)
    assert c.L_A == 0.0 and c.L_max == pytest.approx(1.0)


def test_matches_brute_force_on_random_clusters():
    rng = np.random.default_rng(0)
    for trial in range(200):
        n = int(rng.integers(1, 9))
        L_A = [0.0, 0.5, 1e3][trial % 3]
        cluster = _random_cluster(rng, n)
        consts = _constants(L_A=L_A)
        fast = select_optimal_subset(cluster, consts)
        slow = brute_force_subset(cluster, consts)
        assert fast.objective == pytest.approx(slow.objective, rel=1e-9)
        assert fast.objective >= slow.objective * (1 - 1e-9)


@pytest.mark.slow
def test_matches_brute_force_on_300_clusters_up_to_ten_workers():
    rng = np.random.default_rng(10)
    for trial in range(300):
        n = int(rng.integers(2, 11))
        cluster = _random_cluster(rng, n)
        consts = _constants(L_A=[0.0, 0.5, 1e3][trial % 3])
        fast = select_optimal_subset(cluster, consts)
        slow = brute_force_subset(cluster, consts)
        assert fast.objective == pytest.approx(slow.objective, rel=1e-9)


def test_candidates_are_unique_and_quadratic_at_most():
    rng = np.random.default_rng(1)
    cluster = _random_cluster(rng, 9)
    res = select_optimal_subset(cluster, _constants())
    subsets = [c.subset for c in res.candidates]
    assert len(subsets) == len(set(subsets))
    assert len(subsets) <= 9 * 10 // 2
    assert res.best in res.candidates


def test_adding_a_faster_worker_never_hurts():
    rng = np.random.default_rng(2)
    for _ in range(50):
        n = int(rng.integers(1, 7))
        cluster = _random_cluster(rng, n)
        consts = _constants(L_A=0.5)
        before = select_optimal_subset(cluster, consts).objective
        h = list(cluster.h) + [float(cluster.h.min()) / 2]
        tau = list(cluster.tau) + [float(cluster.tau.min()) / 2]
        kappa = list(cluster.kappa) + [float(cluster.kappa.min()) / 2]
        after = select_optimal_subset(ClusterProfile.from_lists(h, tau, kappa), consts).objective
        assert after <= before * (1 + 1e-9)


def _subset_and_newcomer(rng, dominated):
    """Random cluster, a subset S and a worker j outside S with kappa_j <= kappa_max(S)."""
    n = int(rng.integers(2, 11))
    cluster = _random_cluster(rng, n)
    S = [int(i) for i in np.flatnonzero(rng.random(n) < 0.5)] or [0]
    sub = cluster.subset(S)
    outside = [
        j for j in range(n)
        if j not in S
        and cluster.kappa[j] <= sub.kappa_max
        and (not dominated or cluster.M[j] <= sub.M.max())
    ]
    if outside:
        return cluster, S, outside[int(rng.integers(len(outside)))]
    # scaled-down copy of a member of S
    src = cluster.workers[S[int(rng.integers(len(S)))]]
    f = rng.uniform(0.1, 1.0, 3)
    h = list(cluster.h) + [src.h * f[0]]
    tau = list(cluster.tau) + [src.tau * f[1]]
    kappa = list(cluster.kappa) + [src.kappa * f[2]]
    return ClusterProfile.from_lists(h, tau, kappa), S, n


def test_adding_a_dominated_worker_never_raises_the_objective():
    rng = np.random.default_rng(4)
    for trial in range(1000):
        cluster, S, j = _subset_and_newcomer(rng, dominated=True)
        consts = _constants(L_A=[0.0, 0.5, 1e3][trial % 3])
        before = evaluate_subset(cluster, S, consts).objective
        after = evaluate_subset(cluster, S + [j], consts).objective
        assert after <= before * (1 + 1e-9) + 1e-9, (S, j)


def test_equilibrium_time_does_not_grow_with_more_workers():
    rng = np.random.default_rng(5)
    consts = _constants(L_A=0.5)
    for _ in range(300):
        cluster, S, j = _subset_and_newcomer(rng, dominated=False)
        kmax = cluster.subset(S).kappa_max
        before, after = (
            equilibrium_solve(
                cluster.subset(T), consts.omega, consts.omega_s, consts.sigma_sq_full, consts.epsilon, consts.d,
                kappa_max=kmax,
            )
            for T in (S, sorted(S + [j]))
        )
        assert after <= before * (1 + 1e-9), (S, j)
        assert evaluate_subset(cluster, S + [j], consts).s_star_of_S == pytest.approx(after, rel=1e-12)


def test_single_worker_cluster():
    cluster = ClusterProfile.homogeneous(1, 0.1, 0.01, 0.01)
    res = select_optimal_subset(cluster, _constants(L_A=1.0))
    assert res.subset == (0,)
    assert len(res.candidates) == 1


def test_identical_workers_reach_the_full_cluster_objective():
    cluster = ClusterProfile.homogeneous(6, 0.01, 0.001, 0.001)
    consts = _constants(L_A=0.2)
    res = select_optimal_subset(cluster, consts)
    full = evaluate_subset(cluster, range(6), consts)
    assert res.objective == pytest.approx(full.objective, rel=1e-9)


def test_full_subset_matches_whole_cluster_solve():
    rng = np.random.default_rng(3)
    cluster = _random_cluster(rng, 5)
    consts = _constants(L_A=0.3)
    ev = evaluate_subset(cluster, [4, 2, 0, 1, 3], consts)
    s = equilibrium_solve(cluster, consts.omega, consts.omega_s, consts.sigma_sq_full, consts.epsilon, consts.d,
                          kappa_max=cluster.kappa_max)
    assert ev.subset == (0, 1, 2, 3, 4)
    assert ev.s_star_of_S == s
    assert ev.t_of_S == max(float(cluster.M.max()), s)
    assert ev.kappa_max_of_S == cluster.kappa_max


def test_slow_broadcaster_is_left_out():
    cluster = ClusterProfile.from_lists([0.01, 0.01, 0.01], [0.001, 0.001, 0.001], [0.001, 0.001, 1000.0])
    res = select_optimal_subset(cluster, _constants(L_A=1.0))
    assert 2 not in res.subset
    assert res.objective < 20 * 1000.0


@pytest.mark.parametrize("S", [[], [5], [-1]])
def test_bad_subset_rejected(S):
    cluster = ClusterProfile.homogeneous(3, 0.1, 0.1, 0.1)
    with pytest.raises(ContractError):
        evaluate_subset(cluster, S, _constants())


def test_brute_force_refuses_large_clusters():
    cluster = ClusterProfile.homogeneous(17, 0.1, 0.1, 0.1)
    with pytest.raises(GuardError):
        brute_force_subset(cluster, _constants())


def test_cache_is_reused_by_index_set():
    cluster = ClusterProfile.homogeneous(3, 0.1, 0.01, 0.01)
    cache = {}
    a = evaluate_subset(cluster, [2, 0], _constants(), cache)
    b = evaluate_subset(cluster, (0, 2, 2), _constants(), cache)
    assert a is b
    assert list(cache) == [(0, 2)]
