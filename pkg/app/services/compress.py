# app/services/compress.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from ..utils.errors import ContractError

LOG = logging.getLogger("compress")

# rows per partial Fisher-Yates block; bounds the (rows, d) permutation buffer
_CHUNK_ROWS = 4096
_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class CompressorSpec:
    """Rand-K sparsifier on R^d: keep K uniform coordinates, scale them by d/K."""

    dimension: int
    keep_count: int

    def __post_init__(self) -> None:
        if int(self.dimension) < 1:
            raise ContractError(f"compressor dimension must be positive, got {self.dimension}")
        if not 1 <= int(self.keep_count) <= int(self.dimension):
            raise ContractError(
                f"keep_count must lie in [1, {self.dimension}], got {self.keep_count}"
            )

    @property
    def omega(self) -> float:
        return float(Fraction(int(self.dimension), int(self.keep_count)) - 1)

    @property
    def scale(self) -> float:
        return self.dimension / self.keep_count

    @property
    def is_identity(self) -> bool:
        return self.keep_count == self.dimension

    @classmethod
    def identity(cls, d: int) -> "CompressorSpec":
        return cls(d, d)

    @classmethod
    def rand1(cls, d: int) -> "CompressorSpec":
        return cls(d, 1)

    def to_document(self) -> dict:
        return {"d": int(self.dimension), "K": int(self.keep_count), "omega": self.omega}


def omega_of(spec: CompressorSpec) -> float:
    return spec.omega


# ---------------------- index sampling ----------------------

def _fisher_yates_block(d: int, picks: int, rows: int, rng: np.random.Generator) -> np.ndarray:
    perm = np.tile(np.arange(d, dtype=np.int64), (rows, 1))
    ridx = np.arange(rows)
    for j in range(picks):
        r = rng.integers(j, d, size=rows)
        head = perm[ridx, j].copy()
        perm[ridx, j] = perm[ridx, r]
        perm[ridx, r] = head
    return perm


def sample_supports(d: int, k: int, rows: int, rng: np.random.Generator) -> np.ndarray:
    """
    `rows` independent uniform K-subsets of range(d), shape (rows, K).

    Partial Fisher-Yates run over all rows at once. When K > d/2 the
    d-K excluded coordinates are drawn instead and the tail is kept.
    """
    if rows <= 0:
        return np.empty((0, k), dtype=np.int64)
    if k == 1:
        return rng.integers(0, d, size=(rows, 1))
    picks = min(k, d - k)
    out = np.empty((rows, k), dtype=np.int64)
    for start in range(0, rows, _CHUNK_ROWS):
        stop = min(rows, start + _CHUNK_ROWS)
        perm = _fisher_yates_block(d, picks, stop - start, rng)
        out[start:stop] = perm[:, :k] if picks == k else perm[:, picks:]
    return out


# ---------------------- compression ----------------------

def _check_vector(spec: CompressorSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dimension:
        raise ContractError(
            f"vector length {x.shape[-1]} does not match compressor dimension {spec.dimension}"
        )
    return x


def apply_support(spec: CompressorSpec, x: np.ndarray, support: Sequence[int]) -> np.ndarray:
    """Deterministic Rand-K outcome for a given support."""
    x = _check_vector(spec, x)
    idx = np.asarray(support, dtype=np.int64)
    if idx.shape != (spec.keep_count,) or len(set(idx.tolist())) != spec.keep_count:
        raise ContractError(f"support must hold {spec.keep_count} distinct indices")
    out = np.zeros_like(x)
    out[idx] = x[idx] * spec.scale
    return out


def compress_rand_k(spec: CompressorSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    x = _check_vector(spec, x)
    if x.ndim != 1:
        raise ContractError("compress_rand_k expects a single vector")
    return compress_rows(spec, x[None, :], rng)[0]


def compress_rows(
    spec: CompressorSpec,
    X: np.ndarray,
    rng: np.random.Generator,
    copies: Union[int, Sequence[int], np.ndarray] = 1,
) -> np.ndarray:
    """
    Row i of the result is (1/c_i) * sum of c_i independent Rand-K draws of X[i].

    The sum is formed from per-coordinate selection counts, which equals the
    explicit sum of the c_i sparse messages.
    """
    X = _check_vector(spec, X)
    if X.ndim != 2:
        raise ContractError("compress_rows expects a (rows, d) matrix")
    rows, d = X.shape
    c = np.broadcast_to(np.asarray(copies, dtype=np.int64), (rows,))
    if np.any(c < 1):
        raise ContractError("every row needs at least one message")
    if spec.is_identity:
        # all copies coincide with X
        return X.copy()

    total = int(c.sum())
    supports = sample_supports(d, spec.keep_count, total, rng)
    if total == rows:
        out = np.zeros_like(X)
        ridx = np.arange(rows)[:, None]
        out[ridx, supports] = X[ridx, supports] * spec.scale
        return out

    owner = np.repeat(np.arange(rows), c)
    flat = (owner[:, None] * d + supports).ravel()
    counts = np.bincount(flat, minlength=rows * d).reshape(rows, d)
    return X * spec.scale * counts / c[:, None]


def average_compress(
    x: np.ndarray,
    specs: Sequence[CompressorSpec],
    weights: Sequence[float],
    rng: np.random.Generator,
) -> np.ndarray:
    """Sum_i weights_i * C_i(x) with independent draws, in the order given."""
    if len(specs) == 0 or len(specs) != len(weights):
        raise ContractError("specs and weights must be nonempty and of equal length")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > _WEIGHT_TOL:
        raise ContractError(f"weights must be nonnegative and sum to 1, got sum={w.sum()!r}")
    dims = {s.dimension for s in specs}
    if len(dims) != 1:
        raise ContractError(f"compressors disagree on dimension: {sorted(dims)}")
    x = _check_vector(specs[0], x)

    out = np.zeros_like(x)
    for wi, spec in zip(w, specs):
        out += wi * compress_rand_k(spec, x, rng)
    return out


def averaged_omega(specs: Sequence[CompressorSpec], weights: Sequence[float]) -> float:
    """Variance factor of the weighted average: sum_i w_i^2 omega_i."""
    return float(sum(float(w) ** 2 * s.omega for s, w in zip(specs, weights)))
