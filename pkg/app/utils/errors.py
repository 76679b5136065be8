# app/utils/errors.py
# -*- coding: utf-8 -*-
from __future__ import annotations

from typing import Any, Optional


class SimulatorError(Exception):
    """Base class for every error raised by the simulator."""


class ContractError(SimulatorError, ValueError):
    """Input contract violated (dimension mismatch, weights off the simplex, ...)."""


class GuardError(SimulatorError):
    """A cost guard refused the request (e.g. brute force over too many workers)."""


class ConfigError(SimulatorError):
    """Experiment file missing, unparsable or invalid."""


class DivergenceError(SimulatorError, ArithmeticError):
    """
    Iterate left the finite range during a run.
    `trace` holds every row recorded before the blow-up.
    """

    def __init__(self, message: str, trace: Optional[Any] = None):
        super().__init__(message)
        self.trace = trace
