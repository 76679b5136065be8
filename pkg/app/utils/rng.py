# app/utils/rng.py
# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import Dict

import numpy as np

# stable role ids; appending is fine, reordering changes every stream
ROLES: Dict[str, int] = {
    "noise": 0,
    "uplink": 1,
    "downlink": 2,
    "coin": 3,
    "instance": 4,
}


def generator(seed: int, role: str, iteration: int = 0) -> np.random.Generator:
    """Independent generator for one (role, iteration) pair under a master seed."""
    try:
        rid = ROLES[role]
    except KeyError:
        raise KeyError(f"unknown random role: {role}") from None
    ss = np.random.SeedSequence(int(seed), spawn_key=(rid, int(iteration)))
    return np.random.Generator(np.random.PCG64(ss))


class IterationStreams:
    """
    Lazily created generators of one iteration.
    Row i of any draw belongs to worker i, so worker layout is fixed by shape.
    """

    __slots__ = ("seed", "iteration", "_cache")

    def __init__(self, seed: int, iteration: int):
        self.seed = int(seed)
        self.iteration = int(iteration)
        self._cache: Dict[str, np.random.Generator] = {}

    def get(self, role: str) -> np.random.Generator:
        g = self._cache.get(role)
        if g is None:
            g = generator(self.seed, role, self.iteration)
            self._cache[role] = g
        return g

    @property
    def noise(self) -> np.random.Generator:
        return self.get("noise")

    @property
    def uplink(self) -> np.random.Generator:
        return self.get("uplink")

    @property
    def downlink(self) -> np.random.Generator:
        return self.get("downlink")

    @property
    def coin(self) -> np.random.Generator:
        return self.get("coin")


class RandomStreams:
    """Master seed split into per-(role, iteration) streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def at(self, iteration: int) -> IterationStreams:
        return IterationStreams(self.seed, iteration)

    def __repr__(self) -> str:
        return f"RandomStreams(seed={self.seed})"


def bernoulli_sample(rng: np.random.Generator, prob: float) -> bool:
    return bool(rng.random() < prob)
