#!/usr/bin/env python
"""
Depth restoration toolkit command line.
Usage: python cli/sred.py <subcommand> [--config FILE] [--seed N] [--jobs N] [--out DIR] [--<key> VALUE ...]

Subcommands: register, make-targets, train, restore, evaluate, synth-noise, bench.
Every configuration key can be overridden with a flag of the same name, e.g. --inpaint.radius 7.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure.
"""
import os
import sys
import django

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'sred_project.settings')
django.setup()

import argparse
import logging
from django.conf import settings
from django.core.management import call_command

from sred_app.commands import COMMANDS
from sred_app.config import load_config
from sred_app.errors import SredError

logger = logging.getLogger(__name__)

# Global flags and the configuration keys they set
GLOBAL_FLAGS = {
    'seed': 'run.seed',
    'jobs': 'run.jobs',
    'out': 'run.out',
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='PATH', help="key = value configuration file")
    common.add_argument('--seed', type=int, help="top-level random seed")
    common.add_argument('--jobs', type=int, help="worker processes for per-frame work")
    common.add_argument('--out', metavar='DIR', help="output directory")
    common.add_argument('--verbose', action='store_true', help="debug logging")
    keys = common.add_argument_group('configuration keys')
    for key, (kind, default) in settings.SRED_DEFAULTS.items():
        keys.add_argument(f'--{key}', dest=key, metavar=kind.__name__.upper(),
                          help=f"default: {default}")

    parser = argparse.ArgumentParser(prog='sred', description="Depth restoration toolkit")
    sub = parser.add_subparsers(dest='command', required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        level=logging.DEBUG if args.verbose else logging.INFO
    )

    overrides = {key: getattr(args, key) for key in settings.SRED_DEFAULTS}
    for flag, key in GLOBAL_FLAGS.items():
        if getattr(args, flag) is not None:
            overrides[key] = getattr(args, flag)

    try:
        call_command('migrate', verbosity=0, interactive=False)
        cfg = load_config(args.config, overrides)
        logger.info("Running %s (seed %d)", args.command, cfg.seed)
        COMMANDS[args.command](cfg)
    except SredError as e:
        logger.error("%s failed: %s", args.command, e)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
