# app/cli.py
# -*- coding: utf-8 -*-
from __future__ import annotations

import argparse
import logging
from typing import Optional, Sequence

from app.handlers.select_workers import cmd_select_workers
from app.handlers.simulate import cmd_simulate
from app.handlers.tune import cmd_tune
from app.services.tuner import METHODS
from app.utils.errors import ConfigError, ContractError, GuardError

LOG = logging.getLogger("cli")

EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="main.py", description="Virtual-time simulator for compressed distributed SGD")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="tune and run every method in the config")
    sp.add_argument("config", help="experiment JSON file")
    sp.add_argument("--out", "-o", default=None, help="output directory (overrides the config)")
    sp.add_argument("--parallelism", "-j", type=int, default=None, help="concurrent runs")
    sp.set_defaults(handler=cmd_simulate)

    sw = sub.add_parser("select-workers", help="choose the worker subset for heterogeneous Inkheart")
    sw.add_argument("config", help="experiment JSON file")
    sw.add_argument("--out", "-o", default=None, help="write the selection JSON here instead of stdout")
    sw.add_argument("--brute-force", action="store_true", help="also enumerate every subset (small n only)")
    sw.add_argument("--format", "-f", choices=("json", "csv"), default="json",
                    help="stdout format without --out: selection JSON or the candidate table as CSV")
    sw.set_defaults(handler=cmd_select_workers)

    tp = sub.add_parser("tune", help="print the resolved MethodConfig")
    tp.add_argument("config", help="experiment JSON file")
    tp.add_argument("--method", "-m", required=True, choices=METHODS)
    tp.set_defaults(handler=cmd_tune)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "parallelism", None) is not None and args.parallelism < 1:
        LOG.error("--parallelism must be at least 1")
        return EXIT_CONFIG
    try:
        return args.handler(args)
    except ConfigError as ex:
        LOG.error("config error: %s", ex)
        return EXIT_CONFIG
    except (ContractError, GuardError) as ex:
        # the file parsed but describes an impossible setup
        LOG.error("invalid setup: %s", ex)
        return EXIT_CONFIG
