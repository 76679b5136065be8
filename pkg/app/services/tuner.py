# app/services/tuner.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from ..config import settings
from ..utils.errors import ContractError
from .compress import CompressorSpec
from .problems import ProblemInstance
from .timemodel import ClusterProfile, WorkerProfile, expected_broadcast_time

LOG = logging.getLogger("tuner")

METHODS = ("sync", "inkheart", "inkheart_heter", "m4")
M4_GAMMA_CONSTANT = 1416.0
_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class MethodConfig:
    """
    Resolved hyperparameters of one run.
    Per-worker counts are always stored as tuples of length n.
    """

    method: str
    gamma: float
    b: Tuple[int, ...]
    m: Tuple[int, ...]
    ell: Tuple[int, ...]
    uplink: CompressorSpec
    downlink: CompressorSpec
    p: float = 1.0
    p_s: Optional[float] = None
    eta: Optional[float] = None
    b_init: Optional[int] = None
    beta: Optional[Tuple[float, ...]] = None
    t: Optional[float] = None
    s_star: Optional[float] = None
    mode: str = "theorem"
    notes: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ContractError(f"unknown method {self.method!r}")
        if not (self.gamma >= 0.0 and math.isfinite(self.gamma)):
            raise ContractError(f"gamma must be finite and nonnegative, got {self.gamma}")
        n = len(self.b)
        if n < 1 or len(self.m) != n or len(self.ell) != n:
            raise ContractError("b, m and ell must be per-worker tuples of equal length")
        if min(self.b) < 1 or min(self.m) < 1 or min(self.ell) < 1:
            raise ContractError("b, m and ell must be at least 1")
        if not 0.0 < self.p <= 1.0:
            raise ContractError(f"p must lie in (0, 1], got {self.p}")
        if self.p_s is not None and not 0.0 < self.p_s <= 1.0:
            raise ContractError(f"p_s must lie in (0, 1], got {self.p_s}")
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ContractError(f"eta must lie in (0, 1], got {self.eta}")
        if self.b_init is not None and self.b_init < 1:
            raise ContractError("b_init must be at least 1")
        if self.beta is not None:
            check_simplex(self.beta, n)
        if self.uplink.dimension != self.downlink.dimension:
            raise ContractError("uplink and downlink compressors disagree on dimension")

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def dimension(self) -> int:
        return self.uplink.dimension

    def with_gamma(self, gamma: float) -> "MethodConfig":
        return replace(self, gamma=float(gamma))

    def to_document(self) -> dict:
        return {
            "method": self.method,
            "mode": self.mode,
            "gamma": self.gamma,
            "b": list(self.b),
            "m": list(self.m),
            "ell": list(self.ell),
            "p": self.p,
            "p_s": self.p_s,
            "eta": self.eta,
            "b_init": self.b_init,
            "beta": None if self.beta is None else list(self.beta),
            "uplink": self.uplink.to_document(),
            "downlink": self.downlink.to_document(),
            "t": self.t,
            "s_star": self.s_star,
            "notes": dict(self.notes),
        }


def check_simplex(beta: Sequence[float], n: int) -> None:
    arr = np.asarray(beta, dtype=float)
    if arr.shape != (n,):
        raise ContractError(f"weights must have length {n}")
    if np.any(arr < 0) or np.any(arr > 1) or abs(math.fsum(arr) - 1.0) > _SIMPLEX_TOL:
        raise ContractError("weights must lie on the probability simplex")


def _count(t: float, cost: float, cap: int) -> int:
    if cost == 0:
        return cap
    return int(min(cap, max(1, math.floor(t / cost))))


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf
    return num / den


# ---------------------- step-size floors ----------------------

def gamma_floor_threshold(linear: float, quadratic: Sequence[float] = ()) -> float:
    if linear <= 0 or any(q <= 0 for q in quadratic):
        raise ContractError("step-size floor coefficients must be positive")
    k = len(quadratic)
    scale = max([2.0 * linear] + [math.sqrt(2.0 * q) for q in quadratic])
    return 1.0 / ((k + 1) * scale)


def gamma_floor_check(gamma: float, L: float, linear: float, quadratic: Sequence[float] = ()) -> bool:
    """
    True when 1/(2 gamma) - linear - sum(quadratic) * gamma is guaranteed positive
    and gamma does not exceed the smoothness step 1/L.
    With no quadratic terms the bound 1/(2 linear) is exclusive.
    """
    if not L > 0:
        raise ContractError(f"smoothness constant must be positive, got {L}")
    if gamma <= 0 or gamma > 1.0 / L:
        return False
    thr = gamma_floor_threshold(linear, quadratic)
    if not quadratic:
        return gamma < thr
    return gamma <= thr


def cubic_bracket(a: float, b: float, c: float) -> Tuple[float, float]:
    """[x/2, x] around the positive root of a x^3 + b x^2 + c x - 1 with x = 1/max(a^(1/3), b^(1/2), c)."""
    if not (a > 0 and b > 0 and c > 0):
        raise ContractError(f"cubic coefficients must be positive, got {(a, b, c)}")
    a, b, c = float(a), float(b), float(c)
    xbar = 1.0 / max(a ** (1.0 / 3.0), math.sqrt(b), c)
    # the dominant term is 1 only up to rounding; step up until g(hi) > 0
    while _cubic(a, b, c, xbar) <= 0.0:
        xbar = math.nextafter(xbar, math.inf)
    return xbar / 2.0, xbar


def _cubic(a: float, b: float, c: float, x: float) -> float:
    try:
        return a * x ** 3 + b * x ** 2 + c * x - 1.0
    except OverflowError:
        return math.inf


# ---------------------- equilibrium time ----------------------

def _equilibrium_coefficients(
    cluster: ClusterProfile,
    omega: float,
    omega_s: float,
    sigma_sq_full: float,
    epsilon: float,
    d: int,
    kappa_max: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    h, tau, kap = cluster.h, cluster.tau, cluster.kappa
    kmax = cluster.kappa_max if kappa_max is None else float(kappa_max)
    s2e = sigma_sq_full / epsilon
    a1 = 16.0 * omega * tau + 16.0 * s2e * h
    a2 = 32.0 * s2e * omega * h * tau + 4.0 * d * omega_s * kmax * kap
    a3 = 8.0 * d * omega_s * omega * kmax * kap * tau
    return a1, a2, a3


def _throughput(s: float, a1: np.ndarray, a2: np.ndarray, a3: np.ndarray) -> float:
    # sum_i 1 / (a1/s + a2/s^2 + a3/s^3) = 1 / delta(s)
    with np.errstate(divide="ignore", over="ignore"):
        denom = a1 / s + a2 / s ** 2 + a3 / s ** 3
        terms = 1.0 / denom
    return math.fsum(terms.tolist())


def equilibrium_delta(
    s: float,
    cluster: ClusterProfile,
    omega: float,
    omega_s: float,
    sigma_sq_full: float,
    epsilon: float,
    d: int,
    kappa_max: Optional[float] = None,
) -> float:
    a1, a2, a3 = _equilibrium_coefficients(cluster, omega, omega_s, sigma_sq_full, epsilon, d, kappa_max)
    psi = _throughput(float(s), a1, a2, a3)
    return 0.0 if math.isinf(psi) else 1.0 / psi


def equilibrium_solve(
    cluster: ClusterProfile,
    omega: float,
    omega_s: float,
    sigma_sq_full: float,
    epsilon: float,
    d: int,
    kappa_max: Optional[float] = None,
) -> float:
    """
    Root s* of delta(s) = 1. delta is strictly decreasing, so the root is
    bracketed by doubling/halving and refined by bisection.
    Returns 0.0 when some worker contributes no cost at all (free system).
    """
    a1, a2, a3 = _equilibrium_coefficients(cluster, omega, omega_s, sigma_sq_full, epsilon, d, kappa_max)
    free = (a1 == 0) & (a2 == 0) & (a3 == 0)
    if free.any():
        LOG.info("equilibrium: worker(s) %s carry no cost, s*=0", np.flatnonzero(free).tolist())
        return 0.0

    n = cluster.n
    tiny = 1e-300
    lo_r, hi_r = cubic_bracket(
        max(float(a3.mean()) / n, tiny), max(float(a2.mean()) / n, tiny), max(float(a1.mean()) / n, tiny)
    )
    guess = 1.0 / hi_r
    if not math.isfinite(guess) or guess <= 0:
        guess = 1.0

    def psi(s: float) -> float:
        return _throughput(s, a1, a2, a3)

    s_hi = guess
    for _ in range(4096):
        if psi(s_hi) >= 1.0:
            break
        s_hi *= 2.0
    s_lo = min(guess, s_hi)
    for _ in range(4096):
        if psi(s_lo) < 1.0 or s_lo < tiny:
            break
        s_lo /= 2.0

    for _ in range(settings.bisect_max_iter):
        if s_hi - s_lo <= settings.bisect_rtol * s_hi:
            break
        mid = 0.5 * (s_lo + s_hi)
        if psi(mid) < 1.0:
            s_lo = mid
        else:
            s_hi = mid
    return 0.5 * (s_lo + s_hi)


# ---------------------- Inkheart ----------------------

def weights_inverse(
    b: Sequence[float],
    m: Sequence[float],
    ell: Sequence[float],
    omega: float,
    omega_s: float,
    sigma_sq_full: float,
    epsilon: float,
    p: float,
) -> np.ndarray:
    b, m, ell = (np.asarray(v, dtype=float) for v in (b, m, ell))
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    if not 0.0 < p <= 1.0:
        raise ContractError(f"p must lie in (0, 1], got {p}")
    s2e = sigma_sq_full / epsilon
    return (
        8.0 * omega / m
        + 8.0 * s2e * omega / (b * m)
        + 8.0 * s2e / b
        + omega_s * omega / (p * m * ell)
        + omega_s / (p * ell)
    )


def weights_from_inverse(inv: Sequence[float]) -> np.ndarray:
    inv = np.asarray(inv, dtype=float)
    zero = inv == 0
    if zero.any():
        # infinite weights share the mass equally
        return zero / float(zero.sum())
    w = 1.0 / inv
    return w / math.fsum(w.tolist())


def weight_objective(beta: Sequence[float], inv: Sequence[float]) -> float:
    """sum_i beta_i^2 / w_i, minimized at beta proportional to w."""
    beta = np.asarray(beta, dtype=float)
    return math.fsum((beta ** 2 * np.asarray(inv, dtype=float)).tolist())


def inkheart_weights(
    b: Sequence[float],
    m: Sequence[float],
    ell: Sequence[float],
    omega: float,
    omega_s: float,
    sigma_sq_full: float,
    epsilon: float,
    p: float,
) -> np.ndarray:
    inv = weights_inverse(b, m, ell, omega, omega_s, sigma_sq_full, epsilon, p)
    return weights_from_inverse(inv)


def _downlink_spread(omega: float, omega_s: float, p: float, m: np.ndarray, ell: np.ndarray, beta: np.ndarray) -> float:
    return math.fsum(((omega * omega_s / (p * m * ell) + omega_s / (p * ell)) * beta ** 2).tolist())


def _drift(omega_s: float, p: float, ell: np.ndarray, beta: np.ndarray) -> float:
    return math.fsum((omega_s * beta / ell).tolist()) / p


def inkheart_gamma(
    L_max: float,
    L_A: float,
    omega: float,
    omega_s: float,
    p: float,
    m: Sequence[float],
    ell: Sequence[float],
    beta: Sequence[float],
) -> float:
    m, ell, beta = (np.asarray(v, dtype=float) for v in (m, ell, beta))
    spread = _downlink_spread(omega, omega_s, p, m, ell, beta)
    drift = _drift(omega_s, p, ell, beta)
    return min(
        _ratio(1.0, L_max),
        _ratio(1.0, L_max * math.sqrt(spread)),
        _ratio(1.0, L_A * math.sqrt(drift)),
    ) / 6.0


def inkheart_iteration_bound(config: MethodConfig, L_max: float, L_A: float, delta: float, epsilon: float) -> int:
    m = np.asarray(config.m, dtype=float)
    ell = np.asarray(config.ell, dtype=float)
    beta = np.full(config.n, 1.0 / config.n) if config.beta is None else np.asarray(config.beta)
    omega, omega_s = config.uplink.omega, config.downlink.omega
    rate = max(
        L_max,
        L_max * math.sqrt(_downlink_spread(omega, omega_s, config.p, m, ell, beta)),
        L_A * math.sqrt(_drift(omega_s, config.p, ell, beta)),
    )
    return int(math.ceil(48.0 * delta / epsilon * rate))


def _resolve_inkheart(
    method: str,
    cluster: ClusterProfile,
    t: float,
    d: int,
    sigma_sq_full: float,
    epsilon: float,
    L_max: float,
    L_A: float,
    s_star: Optional[float],
    cap: int,
) -> MethodConfig:
    omega = omega_s = float(d - 1)
    kmax = cluster.kappa_max
    notes: Dict[str, Any] = {}
    t0 = t

    steps = settings.budget_growth_steps
    for step in range(steps + 1):
        b = np.array([_count(t, w.h, cap) for w in cluster.workers])
        m = np.array([_count(t, w.tau, cap) for w in cluster.workers])
        ell = np.array([d if w.kappa == 0 else _count(t, w.kappa, cap) for w in cluster.workers])
        if kmax == 0:
            p = 1.0
        else:
            p = min(_count(t, kmax, cap) / d, 1.0)
        inv = weights_inverse(b, m, ell, omega, omega_s, sigma_sq_full, epsilon, p)
        beta = weights_from_inverse(inv)
        value = weight_objective(beta, inv)
        if value <= 1.0 + 1e-12:
            break
        if step == steps or t == 0:
            raise ContractError(
                f"weights bound sum beta^2/w = {value:.6g} > 1 at the count cap; raise SIM_COUNT_CAP"
            )
        t *= settings.budget_growth

    if t != t0:
        notes["budget_adjusted_from"] = t0
        LOG.info("inkheart budget enlarged %.6g -> %.6g to satisfy the weights bound", t0, t)
    if (b >= cap).any() or (m >= cap).any():
        notes["count_cap"] = cap

    gamma = inkheart_gamma(L_max, L_A, omega, omega_s, p, m, ell, beta)
    quad = [
        q for q in (
            L_max ** 2 * _downlink_spread(omega, omega_s, p, m, ell, beta),
            L_A ** 2 * _drift(omega_s, p, ell, beta),
        ) if q > 0
    ]
    if not gamma_floor_check(gamma, L_max, L_max / 2.0, quad):
        LOG.warning("inkheart step %.6g exceeds the descent threshold", gamma)

    server = expected_broadcast_time(cluster, p, ell, d, 1)
    notes["weights_bound"] = value
    notes["expected_broadcast_s"] = server
    if server > 2.0 * t * (1.0 + 1e-12) and t > 0:
        LOG.warning("expected broadcast time %.6g exceeds 2t=%.6g", server, 2.0 * t)

    return MethodConfig(
        method=method,
        gamma=gamma,
        b=tuple(int(v) for v in b),
        m=tuple(int(v) for v in m),
        ell=tuple(int(v) for v in ell),
        uplink=CompressorSpec.rand1(d),
        downlink=CompressorSpec.rand1(d),
        p=p,
        beta=None if method == "inkheart" else tuple(float(v) for v in beta),
        t=t,
        s_star=s_star,
        mode="theorem",
        notes=notes,
    )


def inkheart_budget_terms(
    h: float, tau: float, kappa: float, sigma_sq_full: float, epsilon: float, n: int, d: int
) -> List[float]:
    omega = d - 1
    s2 = sigma_sq_full
    return [
        h,
        tau,
        kappa,
        16.0 * omega * tau / n,
        16.0 * s2 * h / (n * epsilon),
        2.0 * d * kappa / math.sqrt(n),
        math.sqrt(32.0 * d * s2 * h * tau / (n * epsilon)),
        (8.0 * d ** 3 * tau * kappa ** 2 / n) ** (1.0 / 3.0),
    ]


def inkheart_tune_homog(
    h: float,
    tau: float,
    kappa: float,
    sigma_sq_full: float,
    epsilon: float,
    n: int,
    d: int,
    L_max: float,
    L_A: float,
    *,
    cap: Optional[int] = None,
) -> MethodConfig:
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    cap = settings.count_cap if cap is None else int(cap)
    t = max(inkheart_budget_terms(h, tau, kappa, sigma_sq_full, epsilon, n, d))
    cluster = ClusterProfile.homogeneous(n, h, tau, kappa)
    return _resolve_inkheart("inkheart", cluster, t, d, sigma_sq_full, epsilon, L_max, L_A, None, cap)


def inkheart_tune_heter(
    cluster: ClusterProfile,
    sigma_sq_full: float,
    epsilon: float,
    d: int,
    L_max: float,
    L_A: float,
    *,
    cap: Optional[int] = None,
) -> MethodConfig:
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    cap = settings.count_cap if cap is None else int(cap)
    omega = omega_s = float(d - 1)
    s_star = equilibrium_solve(cluster, omega, omega_s, sigma_sq_full, epsilon, d)
    t = max(float(cluster.M.max()), s_star)
    return _resolve_inkheart("inkheart_heter", cluster, t, d, sigma_sq_full, epsilon, L_max, L_A, s_star, cap)


# ---------------------- M4 ----------------------

def m4_eta(omega: float, omega_s: float, b: int, n: int, sigma_sq_full: float, epsilon: float) -> float:
    s2 = sigma_sq_full
    return min(
        _ratio(1.0, 6.0) * math.sqrt(_ratio(b * n * epsilon, omega * (omega + 1.0) * s2)),
        _ratio(b * n * epsilon, 6.0 * s2),
        _ratio(n, omega * (omega + 1.0) * omega_s) ** (1.0 / 3.0),
        1.0,
    )


def m4_noise_lhs(eta: float, omega: float, p: float, b: int, n: int, sigma_sq_full: float) -> float:
    s2 = sigma_sq_full
    return 9.0 * eta ** 2 * omega * s2 / (n * p * b) + 3.0 * eta * s2 / (n * b)


def m4_gamma(
    omega: float, omega_s: float, n: int, eta: float, L_A: float, L_B: float, L_max: float,
    c: float = M4_GAMMA_CONSTANT,
) -> float:
    inner = (
        omega_s * (omega_s + 1.0) * L_A ** 2
        + (omega_s / n) * (omega_s + 1.0) * L_B ** 2
        + (omega * (omega + 1.0) / n + 1.0 / eta ** 2) * L_max ** 2
    )
    return 1.0 / (6.0 * math.sqrt(c * inner))


def m4_b_init(b: int, eta: float, n: int, sigma_sq_full: float, epsilon: float) -> int:
    return int(math.ceil(math.sqrt((b / eta) * (1.0 + sigma_sq_full / (n * epsilon)))))


def m4_tune(
    h: float,
    tau: float,
    kappa: float,
    sigma_sq_full: float,
    epsilon: float,
    n: int,
    d: int,
    L_A: float,
    L_B: float,
    L_max: float,
    *,
    cap: Optional[int] = None,
) -> MethodConfig:
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    cap = settings.count_cap if cap is None else int(cap)
    s2 = sigma_sq_full
    t = max(h, tau, kappa, (d ** 2 * tau ** 2 * h * s2 / (n * epsilon)) ** (1.0 / 3.0))
    k_up = d if tau == 0 else min(d, _count(t, tau, cap))
    k_down = d if kappa == 0 else min(d, _count(t, kappa, cap))
    b = _count(t, h, cap)
    up, down = CompressorSpec(d, k_up), CompressorSpec(d, k_down)
    omega, omega_s = up.omega, down.omega
    notes: Dict[str, Any] = {}

    eta = m4_eta(omega, omega_s, b, n, s2, epsilon)
    p_s = 1.0 / (omega_s + 1.0)
    p = 1.0 / (omega + 1.0)
    eta0 = eta
    while m4_noise_lhs(eta, omega, p, b, n, s2) > epsilon / 2.0:
        eta /= 2.0
    if eta != eta0:
        notes["eta_shrunk_from"] = eta0
        LOG.info("m4 momentum shrunk %.6g -> %.6g to meet the noise condition", eta0, eta)
    if h == 0:
        notes["count_cap"] = cap

    b_init = m4_b_init(b, eta, n, s2, epsilon)
    gamma = m4_gamma(omega, omega_s, n, eta, L_A, L_B, L_max)
    notes["noise_lhs"] = m4_noise_lhs(eta, omega, p, b, n, s2)

    return MethodConfig(
        method="m4",
        gamma=gamma,
        b=(b,) * n,
        m=(1,) * n,
        ell=(1,) * n,
        uplink=up,
        downlink=down,
        p=p,
        p_s=p_s,
        eta=eta,
        b_init=b_init,
        t=t,
        mode="theorem",
        notes=notes,
    )


# ---------------------- SyncSGD ----------------------

def sync_tune(n: int, d: int, sigma_sq_full: float, epsilon: float, L: float, *, cap: Optional[int] = None) -> MethodConfig:
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    cap = settings.count_cap if cap is None else int(cap)
    b = int(min(cap, max(1, math.ceil(2.0 * sigma_sq_full / (n * epsilon)))))
    ident = CompressorSpec.identity(d)
    return MethodConfig(
        method="sync", gamma=1.0 / L, b=(b,) * n, m=(1,) * n, ell=(1,) * n,
        uplink=ident, downlink=ident, mode="theorem",
    )


# ---------------------- dispatch ----------------------

def theorem_config(
    method: str,
    instance: ProblemInstance,
    cluster: ClusterProfile,
    sigma_sq_full: float,
    epsilon: float,
) -> MethodConfig:
    c = instance.constants
    n, d = cluster.n, instance.dimension
    if method == "sync":
        return sync_tune(n, d, sigma_sq_full, epsilon, c.L)
    if method == "inkheart_heter":
        return inkheart_tune_heter(cluster, sigma_sq_full, epsilon, d, c.L_max, c.L_A)
    if method in ("inkheart", "m4"):
        if not cluster.is_homogeneous:
            raise ContractError(f"{method} theorem mode needs identical workers; use inkheart_heter")
        w: WorkerProfile = cluster.workers[0]
        if method == "inkheart":
            return inkheart_tune_homog(w.h, w.tau, w.kappa, sigma_sq_full, epsilon, n, d, c.L_max, c.L_A)
        return m4_tune(w.h, w.tau, w.kappa, sigma_sq_full, epsilon, n, d, c.L_A, c.L_B, c.L_max)
    raise ContractError(f"unknown method {method!r}")


# ---------------------- grids ----------------------

def load_grids(path: Optional[str] = None) -> dict:
    path = path or settings.grids_file
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    g = raw.get("gamma", {})
    base = float(g.get("base", 2.0))
    lo, hi = int(g.get("low", -10)), int(g.get("high", 3))
    return {
        "gammas": [base ** e for e in range(lo, hi + 1)],
        "keep_counts": [int(k) for k in raw.get("keep_counts", [])],
        "etas": [float(e) for e in raw.get("etas", [])],
    }


def grid_cells(
    method: str,
    n: int,
    d: int,
    sigma_sq_full: float,
    epsilon: float,
    gammas: Sequence[float],
    keep_counts: Sequence[int] = (),
    etas: Sequence[float] = (),
    batch: int = 1,
) -> List[MethodConfig]:
    """Every cell of the practical grid for one method."""
    if not gammas:
        raise ContractError("gamma grid is empty")
    ks = sorted({int(k) for k in keep_counts if 1 <= int(k) <= d}) or [d]
    b = (int(batch),) * n
    ones = (1,) * n
    cells: List[MethodConfig] = []

    if method == "sync":
        ident = CompressorSpec.identity(d)
        for g in gammas:
            cells.append(MethodConfig("sync", g, b, ones, ones, ident, ident, mode="grid"))
        return cells

    if method in ("inkheart", "inkheart_heter"):
        for g, k in itertools.product(gammas, ks):
            spec = CompressorSpec(d, k)
            p = min(k / d, 1.0)
            beta = None
            if method == "inkheart_heter":
                beta = tuple(float(v) for v in inkheart_weights(
                    b, ones, ones, spec.omega, spec.omega, sigma_sq_full, epsilon, p))
            cells.append(MethodConfig(method, g, b, ones, ones, spec, spec, p=p, beta=beta, mode="grid"))
        return cells

    if method == "m4":
        if not etas:
            raise ContractError("eta grid is empty")
        for g, k, e in itertools.product(gammas, ks, etas):
            spec = CompressorSpec(d, k)
            p = min(k / d, 1.0)
            cells.append(MethodConfig(
                "m4", g, b, ones, ones, spec, spec, p=p, p_s=p, eta=float(e),
                b_init=m4_b_init(int(batch), float(e), n, sigma_sq_full, epsilon), mode="grid",
            ))
        return cells

    raise ContractError(f"unknown method {method!r}")
