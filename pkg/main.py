#!/usr/bin/env python3
"""
Span-based DP-DBSCAN
Main entry point for the command-line tool
"""

import argparse
import logging
import sys
from typing import List, Optional

from src.command_processor import CommandProcessor
from src.config import Config
from src.datagen import KINDS
from src.errors import DpDbscanError


def setup_logging(log_level="INFO", log_file=None):
    """Setup logging configuration; reports go to stdout, logs to stderr"""
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )


def _add_input_flags(parser):
    parser.add_argument('--input', type=str, help='Input CSV, one point per row')
    parser.add_argument('--cols', type=str, default=None,
                        help='Comma-separated column names or 0-based indices')
    parser.add_argument('--header', action='store_true', help='Input CSV has a header row')
    parser.add_argument('--project-latlon', action='store_true',
                        help='Treat the two columns as (lat, lon) degrees and project to km')


def _add_privacy_flags(parser):
    parser.add_argument('--epsilon', type=float, default=None, help='Privacy budget')
    parser.add_argument('--beta', type=float, default=None, help='Failure probability')
    parser.add_argument('--eta-prime', dest='eta_prime', type=float, default=None,
                        help='Cell-size constant in (0, 1]')
    parser.add_argument('--theta', type=float, default=None,
                        help='Threshold for the linear histogram (default: automatic)')
    parser.add_argument('--hist', choices=['auto', 'naive', 'linear'], default=None,
                        help='Histogram mechanism')
    parser.add_argument('--minpts', type=int, default=None, help='Non-private MinPts')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Span-based differentially private DBSCAN')
    parser.add_argument('--config', type=str, default='config.yaml',
                        help='Configuration file path')
    parser.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        default=None, help='Logging level')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='Release spans for a CSV dataset')
    _add_input_flags(run)
    _add_privacy_flags(run)
    run.add_argument('--alpha', type=float, default=None, help='DBSCAN radius in raw data units')
    run.add_argument('--seed', type=int, default=None, help='Random seed')
    run.add_argument('--out', type=str, help='Spans JSON output path')
    run.add_argument('--minpts-sweep', dest='minpts_sweep', type=str, default=None,
                     help='Extra MinPts values a,b,c thresholded on the same release')
    run.add_argument('--hist-dump', dest='hist_dump', type=str, default=None,
                     help='Write the released histogram to this path')
    run.add_argument('--one-sided-tau', dest='one_sided_tau', action='store_true',
                     help='Shift MinPts by Gamma instead of 2 Gamma (experiment)')

    evaluate = sub.add_parser('evaluate', help='Score a spans file against points')
    _add_input_flags(evaluate)
    evaluate.add_argument('--spans', type=str, help='Spans JSON produced by run')
    evaluate.add_argument('--labels', type=str, default=None, help='Ground-truth labels CSV')
    evaluate.add_argument('--labels-col', dest='labels_col', type=str, default=None,
                          help='Ground-truth label column in the input CSV')
    evaluate.add_argument('--out', type=str, default=None, help='Write the report as JSON')

    generate = sub.add_parser('generate', help='Write a synthetic dataset as CSV')
    generate.add_argument('--kind', choices=list(KINDS), default='moons')
    generate.add_argument('--n', type=int, default=None)
    generate.add_argument('--seed', type=int, default=None)
    generate.add_argument('--noise-sd', dest='noise_sd', type=float, default=None)
    generate.add_argument('--d', type=int, default=2)
    generate.add_argument('--out', type=str)

    plot = sub.add_parser('plot', help='Write span cell rectangles as CSV')
    plot.add_argument('--spans', type=str)
    plot.add_argument('--out', type=str)

    bounds = sub.add_parser('bounds', help='Print error quantities without reading data')
    _add_privacy_flags(bounds)
    bounds.add_argument('--d', type=int, default=2)
    bounds.add_argument('--alpha', type=float, default=None, help='Radius in normalized units')
    bounds.add_argument('--n', type=int, default=None, help='Number of points')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = Config(args.config)
    except DpDbscanError as e:
        setup_logging(args.log_level or "INFO")
        logging.getLogger(__name__).error(f"Configuration error: {e}")
        return e.exit_code

    setup_logging(args.log_level or config.get('logging.level', 'INFO'), config.get('logging.file'))
    logger = logging.getLogger(__name__)
    logger.debug(f"Running '{args.command}' with configuration {config.config_path}")

    command_processor = CommandProcessor(config)
    return command_processor.execute(args)


if __name__ == "__main__":
    sys.exit(main())
