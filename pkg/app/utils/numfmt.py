# app/utils/numfmt.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import datetime as dt
import math

import humanize


def coords(count: int) -> str:
    return humanize.intcomma(int(count))


def seconds(value: float) -> str:
    """Virtual seconds for log lines: '3.2e-05 s', '12.5 s (12 seconds)', 'never'."""
    if value is None or not math.isfinite(value):
        return "never"
    if value < 1.0:
        return f"{value:.3g} s"
    if value > 1e12:
        # beyond what timedelta can hold
        return f"{value:.4g} s"
    return f"{value:.4g} s ({humanize.naturaldelta(dt.timedelta(seconds=value))})"
