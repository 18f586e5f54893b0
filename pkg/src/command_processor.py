"""
Command Processing Module
Handles ingestion, execution and reporting for the dp-dbscan subcommands
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .datagen import SynthSpec, generate_with_transform, write_csv
from .dbscan_oracle import Labeling
from .dp_dbscan import HISTOGRAM_MODES, release_histogram, sweep_min_pts
from .dp_histogram import HistogramLimits, choose_theta, dump_histogram
from .dp_noise import ApproxBounds, GammaKind, PrivacyParams, asymptotic_tau, linear_threshold
from .errors import ConfigError, DataError, DpDbscanError, ParameterError
from .evaluation import ami, ari, coverage_report, extract_labels
from .grid import GridSpec, kappa, kappa_bound
from .span_io import AffineTransform, read_spans, write_rectangles, write_spans

logger = logging.getLogger(__name__)

# Kilometres per degree near 40 degrees north
KM_PER_DEG_LAT = 111.2
KM_PER_DEG_LON = 85.2


@dataclass
class Command:
    """Data class for command definition"""
    name: str
    handler: Callable
    description: str
    category: str = "general"


@dataclass
class IngestResult:
    points: np.ndarray
    transform: AffineTransform
    truth: Optional[np.ndarray] = None


@dataclass
class RunConfig:
    """Everything one `run` needs; flag > config file > built-in default"""
    input: Path
    out: Path
    alpha: float
    min_pts: int = 7
    epsilon: float = 1.0
    beta: float = 1.0 / 3.0
    eta_prime: float = 1.0
    theta: Optional[float] = None
    histogram_mode: str = "auto"
    seed: Optional[int] = None
    columns: Optional[List[str]] = None
    header: bool = False
    minpts_sweep: List[int] = field(default_factory=list)
    hist_dump: Optional[Path] = None
    project_latlon: bool = False
    one_sided_tau: bool = False
    limits: HistogramLimits = HistogramLimits()

    @classmethod
    def from_args(cls, args, config) -> "RunConfig":
        def pick(flag, key):
            value = getattr(args, flag, None)
            return config.get(key) if value is None else value

        if not getattr(args, 'input', None) or not getattr(args, 'out', None):
            raise ConfigError("run needs --input and --out")
        if getattr(args, 'alpha', None) is None:
            raise ConfigError("run needs --alpha (in raw data units)")
        theta = pick('theta', 'privacy.theta')
        run_config = cls(
            input=Path(args.input),
            out=Path(args.out),
            alpha=float(args.alpha),
            min_pts=int(pick('minpts', 'dbscan.min_pts')),
            epsilon=float(pick('epsilon', 'privacy.epsilon')),
            beta=float(pick('beta', 'privacy.beta')),
            eta_prime=float(pick('eta_prime', 'privacy.eta_prime')),
            theta=None if theta is None else float(theta),
            histogram_mode=str(pick('hist', 'privacy.histogram_mode')),
            seed=getattr(args, 'seed', None),
            columns=parse_columns(getattr(args, 'cols', None)),
            header=bool(getattr(args, 'header', False)),
            minpts_sweep=parse_int_list(getattr(args, 'minpts_sweep', None)),
            hist_dump=Path(args.hist_dump) if getattr(args, 'hist_dump', None) else None,
            project_latlon=bool(getattr(args, 'project_latlon', False)),
            one_sided_tau=bool(getattr(args, 'one_sided_tau', False)
                               or config.get('privacy.one_sided_tau', False)),
            limits=HistogramLimits.from_config(config),
        )
        run_config.validate()
        return run_config

    def validate(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.beta < 1.0:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
        if not 0.0 < self.eta_prime <= 1.0:
            raise ConfigError(f"eta_prime must lie in (0, 1], got {self.eta_prime}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.min_pts < 1:
            raise ConfigError(f"min_pts must be >= 1, got {self.min_pts}")
        if self.histogram_mode not in HISTOGRAM_MODES:
            raise ConfigError(f"Unknown histogram mode '{self.histogram_mode}'")
        if self.theta is not None and not self.theta > 0:
            raise ConfigError(f"theta must be positive, got {self.theta}")
        if any(k < 1 for k in self.minpts_sweep):
            raise ConfigError(f"MinPts sweep values must be >= 1, got {self.minpts_sweep}")

    def describe(self) -> Dict[str, Any]:
        data = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in data.items()}


def parse_columns(text: Optional[str]) -> Optional[List[str]]:
    if text is None or str(text).strip() == "":
        return None
    return [token.strip() for token in str(text).split(',') if token.strip()]


def parse_int_list(text) -> List[int]:
    if text is None or text == "":
        return []
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    try:
        return [int(token) for token in str(text).split(',') if token.strip()]
    except ValueError as e:
        raise ConfigError(f"Expected a comma-separated list of integers, got '{text}'") from e


def _read_frame(path: Path, header: bool) -> pd.DataFrame:
    if not path.exists():
        raise DataError(f"Input file {path} not found")
    try:
        return pd.read_csv(path, header=0 if header else None, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise DataError(f"Input file {path} is empty") from e
    except pd.errors.ParserError as e:
        raise DataError(f"Input file {path} could not be parsed: {e}") from e


def _select(frame: pd.DataFrame, columns: Optional[Sequence[str]]) -> pd.DataFrame:
    if columns is None:
        return frame
    picked = []
    for token in columns:
        if token in frame.columns:
            picked.append(frame[token])
        elif token.lstrip('-').isdigit() and -frame.shape[1] <= int(token) < frame.shape[1]:
            picked.append(frame.iloc[:, int(token)])
        else:
            raise DataError(f"Column '{token}' not found; available: {list(frame.columns)}")
    return pd.concat(picked, axis=1)


def _numeric(frame: pd.DataFrame, header: bool, what: str) -> np.ndarray:
    numeric = frame.apply(pd.to_numeric, errors='coerce')
    bad = numeric.isna().any(axis=1) | ~np.isfinite(numeric.to_numpy(dtype=np.float64)).all(axis=1)
    if bad.any():
        # file rows are 1-based and the header takes row 1
        rows = [int(i) + 1 + int(header) for i in np.flatnonzero(bad.to_numpy())]
        shown = ", ".join(str(r) for r in rows[:10]) + (" ..." if len(rows) > 10 else "")
        raise DataError(f"Non-numeric {what} in {len(rows)} row(s): {shown}")
    return numeric.to_numpy(dtype=np.float64)


def project_latlon(raw: np.ndarray) -> np.ndarray:
    """(lat, lon) degrees to kilometres with fixed per-degree factors"""
    if raw.shape[1] != 2:
        raise DataError(f"--project-latlon needs exactly two columns (lat, lon), got {raw.shape[1]}")
    return raw * np.array([KM_PER_DEG_LAT, KM_PER_DEG_LON])


def read_raw(path, columns: Optional[Sequence[str]] = None, header: bool = False,
             labels_col: Optional[str] = None, latlon: bool = False):
    """Raw coordinates and optional truth labels from a CSV file"""
    frame = _read_frame(Path(path), header)
    truth = None
    if labels_col is not None:
        truth = _numeric(_select(frame, [labels_col]), header, "labels").ravel().astype(np.int64)
        if columns is None:
            frame = frame.drop(columns=_select(frame, [labels_col]).columns)
    raw = _numeric(_select(frame, columns), header, "coordinates")
    if raw.shape[0] == 0:
        raise DataError(f"Input file {path} has no data rows")
    if latlon:
        raw = project_latlon(raw)
    return raw, truth


def ingest(path, columns: Optional[Sequence[str]] = None, header: bool = False,
           labels_col: Optional[str] = None, latlon: bool = False) -> IngestResult:
    """Read the selected columns and rescale them into [0,1]^d"""
    raw, truth = read_raw(path, columns, header, labels_col, latlon)
    extent = raw.max(axis=0) - raw.min(axis=0)
    constant = np.flatnonzero(extent == 0)
    if constant.size:
        raise DataError(f"Axis {constant.tolist()} is constant (zero extent); drop it with --cols")
    transform = AffineTransform.fit(raw)
    return IngestResult(points=transform.apply(raw), transform=transform, truth=truth)


def read_labels(path, header: bool = False) -> np.ndarray:
    frame = _read_frame(Path(path), header)
    return _numeric(frame.iloc[:, :1], header, "labels").ravel().astype(np.int64)


def sweep_path(out: Path, min_pts: int) -> Path:
    return out.with_name(f"{out.stem}.minpts{min_pts}{out.suffix}")


def provenance_path(out: Path) -> Path:
    return out.with_name(f"{out.stem}.provenance.json")


def cmd_run(run_config: RunConfig) -> Dict[str, Any]:
    """One histogram release, one or more thresholded span files"""
    data = ingest(run_config.input, run_config.columns, run_config.header,
                  latlon=run_config.project_latlon)
    alpha = data.transform.normalize_length(run_config.alpha)
    logger.info(f"Ingested {data.points.shape[0]} points in {data.points.shape[1]} dimensions; "
                f"alpha={run_config.alpha} raw = {alpha:.4g} normalized")

    rng = np.random.default_rng(run_config.seed)
    privacy = PrivacyParams(run_config.epsilon, run_config.beta, run_config.theta or 0.0)
    release = release_histogram(data.points, alpha, privacy, run_config.eta_prime, rng,
                                mode=run_config.histogram_mode, limits=run_config.limits,
                                seed=run_config.seed, d=data.points.shape[1])
    if run_config.hist_dump:
        dump_histogram(release.histogram, run_config.hist_dump)

    thresholds = [run_config.min_pts] + [k for k in run_config.minpts_sweep if k != run_config.min_pts]
    span_sets = sweep_min_pts(release, thresholds, run_config.one_sided_tau)

    outputs = []
    for k in thresholds:
        path = run_config.out if k == run_config.min_pts else sweep_path(run_config.out, k)
        write_spans(path, span_sets[k], data.transform)
        outputs.append({"min_pts": k, "path": str(path), "spans": len(span_sets[k])})

    record = {
        "provenance": span_sets[run_config.min_pts].provenance.as_dict(),
        "outputs": outputs,
        "shared_budget": True,
        "epsilon_total": release.privacy.epsilon,
    }
    prov = provenance_path(run_config.out)
    with open(prov, 'w', newline='\n') as f:
        f.write(json.dumps(record, sort_keys=True, indent=2) + "\n")
    logger.info(f"Wrote provenance to {prov}")
    return {"outputs": outputs, "provenance_path": str(prov)}


def cmd_evaluate(spans_path, input_path, columns: Optional[Sequence[str]] = None,
                 header: bool = False, labels_path=None, labels_col: Optional[str] = None,
                 latlon: bool = False) -> Dict[str, Any]:
    """Label points by span membership and report coverage, ARI and AMI"""
    span_set, transform = read_spans(spans_path)
    raw, truth = read_raw(input_path, columns, header, labels_col, latlon)
    if raw.shape[1] != span_set.grid.d:
        raise ParameterError(f"Input has {raw.shape[1]} columns but spans are {span_set.grid.d}-dimensional")

    normalized = (raw - np.asarray(transform.offset)) / np.asarray(transform.scale)
    inside = np.all((normalized >= 0.0) & (normalized <= 1.0), axis=1)
    if not inside.all():
        logger.warning(f"{int((~inside).sum())} point(s) fall outside the released domain; labeled noise")
    labels = np.zeros(raw.shape[0], dtype=np.int64)
    labels[inside] = extract_labels(span_set, normalized[inside]).labels

    report: Dict[str, Any] = coverage_report(Labeling.from_array(labels), len(span_set))
    report["n_outside"] = int((~inside).sum())

    if labels_path is not None:
        truth = read_labels(labels_path, header)
    if truth is not None:
        if truth.shape[0] != labels.shape[0]:
            raise ParameterError(f"{truth.shape[0]} truth labels for {labels.shape[0]} points")
        report["ari"] = ari(truth, labels)
        report["ami"] = ami(truth, labels)
    return report


def cmd_generate(spec: SynthSpec, out) -> Dict[str, Any]:
    points, labels, transform = generate_with_transform(spec)
    path = write_csv(points, labels, out)
    return {"path": str(path), "n": spec.n, "kind": spec.kind, "transform": transform.as_dict()}


def cmd_plot(spans_path, out) -> Dict[str, Any]:
    span_set, transform = read_spans(spans_path)
    path = write_rectangles(out, span_set, transform)
    return {"path": str(path), "spans": len(span_set), "cells": span_set.num_cells}


def cmd_bounds(d: int, alpha: float, eta_prime: float, epsilon: float, beta: float, n: int,
               min_pts: Optional[int] = None, mode: str = "auto",
               theta: Optional[float] = None) -> Dict[str, Any]:
    """Error quantities for a configuration, without touching any data"""
    grid = GridSpec.create(d, alpha, eta_prime)
    universe = grid.universe_size
    if mode == "naive":
        theta = 0.0
    elif theta is None:
        theta = choose_theta(grid, n, epsilon) if mode == "auto" else linear_threshold(universe, n, epsilon)
    resolved = "linear" if theta > 0 else "naive"
    kind = GammaKind.LINEAR_HIST if resolved == "linear" else GammaKind.LAPLACE
    bounds = ApproxBounds.derive(kind, kappa(grid), epsilon, universe, beta, eta_prime, theta=theta)
    report = {
        "grid": grid.describe(),
        "universe_size": universe,
        "kappa": bounds.kappa,
        "kappa_bound": kappa_bound(d, eta_prime),
        "gamma": bounds.gamma,
        "big_gamma": bounds.big_gamma,
        "tau": bounds.tau,
        "rho": bounds.rho,
        "theta": theta,
        "histogram_mode": resolved,
        "asymptotic_tau": asymptotic_tau(d, 4.0 * eta_prime, epsilon, alpha, beta),
    }
    if min_pts is not None:
        report["min_pts_effective"] = min_pts + bounds.tau
    return report


class CommandProcessor:
    def __init__(self, config):
        self.config = config
        self.logger = logging.getLogger(__name__)

        self.commands: Dict[str, Command] = {}
        self._register_default_commands()

    def _register_default_commands(self):
        """Register the subcommands"""
        self._register_command(Command("run", self._run, "Release a DP histogram and write spans", "privacy"))
        self._register_command(Command("evaluate", self._evaluate, "Score spans against points", "evaluation"))
        self._register_command(Command("generate", self._generate, "Write a synthetic dataset", "data"))
        self._register_command(Command("plot", self._plot, "Write span cell rectangles as CSV", "data"))
        self._register_command(Command("bounds", self._bounds, "Print kappa, gamma, Gamma and tau", "privacy"))

    def _register_command(self, command: Command):
        """Register a command in the command registry"""
        self.commands[command.name] = command
        self.logger.debug(f"Registered command: {command.name}")

    def execute(self, args) -> int:
        """Run one subcommand and map errors to exit codes"""
        command = self.commands.get(getattr(args, 'command', None))
        if command is None:
            self.logger.error(f"Unknown command '{getattr(args, 'command', None)}'")
            return ConfigError.exit_code
        try:
            result = command.handler(args)
        except DpDbscanError as e:
            self.logger.error(f"{command.name} failed: {e}")
            return e.exit_code
        except Exception as e:
            self.logger.exception(f"Unexpected error in {command.name}: {e}")
            return 1
        self._report(result)
        return 0

    def _report(self, result: Dict[str, Any]):
        print(json.dumps(result, sort_keys=True, indent=2, default=str))

    def _run(self, args) -> Dict[str, Any]:
        run_config = RunConfig.from_args(args, self.config)
        self.logger.debug(f"Run configuration: {run_config.describe()}")
        return cmd_run(run_config)

    def _evaluate(self, args) -> Dict[str, Any]:
        if not args.spans or not args.input:
            raise ConfigError("evaluate needs --spans and --input")
        report = cmd_evaluate(args.spans, args.input, parse_columns(args.cols), args.header,
                              args.labels, args.labels_col, args.project_latlon)
        if args.out:
            with open(args.out, 'w', newline='\n') as f:
                f.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        return report

    def _generate(self, args) -> Dict[str, Any]:
        if not args.out:
            raise ConfigError("generate needs --out")
        spec = SynthSpec.from_config(args.kind, self.config, n=args.n, seed=args.seed,
                                     noise_sd=args.noise_sd, d=args.d)
        return cmd_generate(spec, args.out)

    def _plot(self, args) -> Dict[str, Any]:
        if not args.spans or not args.out:
            raise ConfigError("plot needs --spans and --out")
        return cmd_plot(args.spans, args.out)

    def _bounds(self, args) -> Dict[str, Any]:
        def pick(value, key):
            return self.config.get(key) if value is None else value

        if args.alpha is None or args.n is None:
            raise ConfigError("bounds needs --alpha (normalized) and --n")
        return cmd_bounds(
            d=args.d, alpha=args.alpha,
            eta_prime=float(pick(args.eta_prime, 'privacy.eta_prime')),
            epsilon=float(pick(args.epsilon, 'privacy.epsilon')),
            beta=float(pick(args.beta, 'privacy.beta')),
            n=args.n, min_pts=args.minpts,
            mode=str(pick(args.hist, 'privacy.histogram_mode')),
            theta=pick(args.theta, 'privacy.theta'),
        )
