# app/handlers/tune.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import argparse

from app.services.harness import MethodSection, build_cluster, build_instance, load_config, method_cells
from app.storage.runstore import dumps
from app.utils.errors import ConfigError


def cmd_tune(args: argparse.Namespace) -> int:
    """Print the resolved MethodConfig (one per cell in grid mode) without running anything."""
    cfg = load_config(args.config)
    try:
        section = cfg.method(args.method)
    except ConfigError:
        # not listed in the file: resolve the theory parameters
        section = MethodSection(name=args.method, mode="theorem")
    instance = build_instance(cfg.problem)
    cluster = build_cluster(cfg.cluster, cfg.problem.n)
    cells = method_cells(cfg, section, instance, cluster)
    doc = {
        "method": section.name,
        "mode": section.mode,
        "constants": instance.constants.to_document(),
        "cells": [c.to_document() for c in cells],
    }
    print(dumps(doc), end="")
    return 0
