# app/services/problems.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ..config import settings
from ..utils.errors import ContractError

LOG = logging.getLogger("problems")

XI_LOW, XI_HIGH = 0.1, 2.0


@dataclass(frozen=True)
class NoiseSpec:
    """
    Additive Gaussian gradient noise, `sigma` per coordinate.
    The full-vector variance E||grad(x; xi) - grad(x)||^2 is d * sigma^2.
    """

    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma >= 0.0 and math.isfinite(self.sigma)):
            raise ContractError(f"sigma must be finite and nonnegative, got {self.sigma}")

    def full_variance(self, d: int) -> float:
        return float(d) * self.sigma ** 2


class StructureConstants(NamedTuple):
    L: float
    L_A: float
    L_B: float
    L_max: float
    L_hat_sq: float

    def to_document(self) -> dict:
        return {k: float(v) for k, v in self._asdict().items()}


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """
    f(x) = (1/n) sum_i 1/2 x^T (xi_i A) x with A = diag(1 x d/2, lambda x d/2).
    Immutable; every array is a private copy.
    """

    family: str
    dimension: int
    lam: float
    xi: np.ndarray
    x0: np.ndarray
    scale_std: float = 0.0
    seed: Optional[int] = None

    @property
    def worker_count(self) -> int:
        return int(self.xi.shape[0])

    @cached_property
    def base_diag(self) -> np.ndarray:
        half = self.dimension // 2
        return np.concatenate([np.ones(half), np.full(half, float(self.lam))])

    @cached_property
    def hessians(self) -> np.ndarray:
        """(n, d) per-worker Hessian diagonals."""
        return self.xi[:, None] * self.base_diag[None, :]

    @cached_property
    def mean_hessian(self) -> np.ndarray:
        return float(np.mean(self.xi)) * self.base_diag

    @property
    def f_star(self) -> float:
        return 0.0

    @cached_property
    def delta(self) -> float:
        return value(self, self.x0) - self.f_star

    @cached_property
    def constants(self) -> StructureConstants:
        return structure_constants(self)


# ---------------------- construction ----------------------

def default_start(d: int, norm: Optional[float] = None) -> np.ndarray:
    norm = settings.x0_norm if norm is None else float(norm)
    return np.full(d, norm / math.sqrt(d))


def _check_dimension(d: int, lam: float) -> None:
    if int(d) < 2 or int(d) % 2:
        raise ContractError(f"dimension must be a positive even integer, got {d}")
    if not 0.0 < float(lam) <= 1.0:
        raise ContractError(f"lambda must lie in (0, 1], got {lam}")


def quadratic_from_scales(
    d: int,
    lam: float,
    xi: Sequence[float],
    *,
    x0: Optional[Sequence[float]] = None,
    x0_norm: Optional[float] = None,
    family: str = "hetero",
    scale_std: float = 0.0,
    seed: Optional[int] = None,
) -> ProblemInstance:
    _check_dimension(d, lam)
    scales = np.array(xi, dtype=float)
    if scales.ndim != 1 or scales.size < 1:
        raise ContractError("need at least one worker scale")
    if np.any(scales <= 0) or not np.all(np.isfinite(scales)):
        raise ContractError("worker scales must be positive and finite")
    start = default_start(int(d), x0_norm) if x0 is None else np.array(x0, dtype=float)
    if start.shape != (int(d),):
        raise ContractError(f"x0 must have length {d}, got shape {start.shape}")

    inst = ProblemInstance(
        family=family,
        dimension=int(d),
        lam=float(lam),
        xi=scales,
        x0=start,
        scale_std=float(scale_std),
        seed=seed,
    )
    _check_initial_gradient(inst)
    return inst


def make_block_quadratic(d: int, lam: float, n: int = 1, *, x0_norm: Optional[float] = None) -> ProblemInstance:
    if int(n) < 1:
        raise ContractError("n must be at least 1")
    return quadratic_from_scales(d, lam, np.ones(int(n)), x0_norm=x0_norm, family="block")


def sample_scales(scale_std: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Normal(1, scale_std^2) truncated to [0.1, 2] by rejection."""
    if scale_std < 0:
        raise ContractError("scale_std must be nonnegative")
    if scale_std == 0:
        return np.ones(n)
    xi = rng.normal(1.0, scale_std, size=n)
    bad = (xi < XI_LOW) | (xi > XI_HIGH)
    while bad.any():
        xi[bad] = rng.normal(1.0, scale_std, size=int(bad.sum()))
        bad = (xi < XI_LOW) | (xi > XI_HIGH)
    return xi


def make_hetero_quadratic(
    d: int,
    lam: float,
    scale_std: float,
    n: int,
    rng: np.random.Generator,
    *,
    seed: Optional[int] = None,
    x0_norm: Optional[float] = None,
) -> ProblemInstance:
    if int(n) < 1:
        raise ContractError("n must be at least 1")
    xi = sample_scales(float(scale_std), int(n), rng)
    return quadratic_from_scales(
        d, lam, xi, x0_norm=x0_norm, family="hetero", scale_std=scale_std, seed=seed
    )


def _check_initial_gradient(inst: ProblemInstance) -> None:
    # ||grad f(x0)||^2 <= 2 L (f(x0) - f*)
    g2 = grad_norm_sq(inst, inst.x0)
    bound = 2.0 * inst.constants.L * inst.delta
    if g2 > bound * (1.0 + 1e-12):
        raise ContractError(f"initial gradient bound violated: {g2!r} > {bound!r}")


# ---------------------- oracles ----------------------

def _as_point(inst: ProblemInstance, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.dimension,):
        raise ContractError(f"point must have shape ({inst.dimension},), got {x.shape}")
    return x


def value(inst: ProblemInstance, x: np.ndarray) -> float:
    x = _as_point(inst, x)
    return 0.5 * float(np.dot(inst.mean_hessian, x * x))


def grad(inst: ProblemInstance, worker_index: int, x: np.ndarray) -> np.ndarray:
    x = _as_point(inst, x)
    if not 0 <= int(worker_index) < inst.worker_count:
        raise ContractError(f"worker index {worker_index} out of range")
    return inst.hessians[int(worker_index)] * x


def full_grad(inst: ProblemInstance, x: np.ndarray) -> np.ndarray:
    return inst.mean_hessian * _as_point(inst, x)


def grad_norm_sq(inst: ProblemInstance, x: np.ndarray) -> float:
    g = full_grad(inst, x)
    return float(np.dot(g, g))


def stoch_grad(
    inst: ProblemInstance,
    worker_index: int,
    x: np.ndarray,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    g = grad(inst, worker_index, x)
    if noise.sigma == 0:
        return g
    return g + noise.sigma * rng.standard_normal(inst.dimension)


def grad_rows(inst: ProblemInstance, X: np.ndarray) -> np.ndarray:
    """Row i is grad f_i at X[i]."""
    return inst.hessians * X


def minibatch_sum(
    inst: ProblemInstance,
    X: np.ndarray,
    batch: np.ndarray,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Row i is sum_{r<b_i} grad f_i(X[i]; xi_r).

    The sum of b independent N(0, sigma^2) draws is N(0, b sigma^2), so one
    standard normal row per worker is scaled by sqrt(b_i); the stream layout
    does not depend on the batch sizes.
    """
    b = np.asarray(batch, dtype=float).reshape(-1, 1)
    if noise.sigma == 0:
        return b * grad_rows(inst, X)
    z = rng.standard_normal(X.shape)
    return b * grad_rows(inst, X) + (noise.sigma * np.sqrt(b)) * z


# ---------------------- structure ----------------------

def structure_constants(inst: ProblemInstance) -> StructureConstants:
    """
    Closed forms for diagonal quadratics.

    With D = max_i ||(xi_i - mean xi) A|| and B = ||mean xi A||,
    L_A^2 = D (D + B) and L_B^2 = B (B + D); both follow from
    ||a + b||^2 <= (1 + c)||a||^2 + (1 + 1/c)||b||^2 at c = B / D.
    """
    H = inst.hessians
    mean = inst.mean_hessian
    L = float(np.max(np.abs(mean)))
    Li = np.max(np.abs(H), axis=1)
    top = float(np.max(inst.base_diag))
    # equal scales give exactly zero spread
    D = 0.0 if np.ptp(inst.xi) == 0 else float(np.max(np.abs(inst.xi - np.mean(inst.xi)))) * top
    L_A = math.sqrt(D * (D + L))
    L_B = math.sqrt(L * (L + D))
    L_max = max(float(Li.max()), L_A, L_B)
    L_hat_sq = float(np.mean(Li ** 2))
    return StructureConstants(L=L, L_A=L_A, L_B=L_B, L_max=L_max, L_hat_sq=L_hat_sq)


def similarity_gap(inst: ProblemInstance, U: np.ndarray) -> float:
    """
    rhs - lhs of the functional (L_A, L_B) inequality for perturbations U (n, d).
    For quadratics the left side does not depend on the base point.
    """
    c = inst.constants
    U = np.asarray(U, dtype=float)
    lhs_vec = (inst.hessians * U).mean(axis=0)
    lhs = float(np.dot(lhs_vec, lhs_vec))
    ubar = U.mean(axis=0)
    rhs = c.L_A ** 2 * float(np.mean(np.sum(U * U, axis=1))) + c.L_B ** 2 * float(np.dot(ubar, ubar))
    return rhs - lhs


# ---------------------- serialization ----------------------

def instance_to_document(inst: ProblemInstance) -> dict:
    return {
        "family": inst.family,
        "d": inst.dimension,
        "lambda": inst.lam,
        "scale_std": inst.scale_std,
        "seed": inst.seed,
        "xi": [float(v) for v in inst.xi],
        "x0": [float(v) for v in inst.x0],
    }


def instance_from_document(doc: dict) -> ProblemInstance:
    try:
        return quadratic_from_scales(
            int(doc["d"]),
            float(doc["lambda"]),
            doc["xi"],
            x0=doc["x0"],
            family=str(doc.get("family", "hetero")),
            scale_std=float(doc.get("scale_std", 0.0)),
            seed=doc.get("seed"),
        )
    except KeyError as ex:
        raise ContractError(f"instance document missing field {ex.args[0]!r}") from None
