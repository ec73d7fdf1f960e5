"""Command line: run an experiment from a YAML config, or re-fit / compare existing tables.

    vortex-thermal spectrum configs/thermal_spectrum.yaml
    vortex-thermal turbulence configs/coherent_ensemble.yaml --workers 4
    vortex-thermal fit runs/<run_id>/spectrum_counts.csv
    vortex-thermal kl measured.csv reference.csv --base 2
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

from vortex_thermal.analysis import DEFAULT_WINDOW, FIT_METHODS, fit_thermal, kl_divergence, mean_energy
from vortex_thermal.errors import ConfigError, VortexThermalError
from vortex_thermal.experiments import (
    run_aperture_sweep,
    run_pump_sweep,
    run_spectrum,
    run_turbulence,
)
from vortex_thermal.initialization import configure_logging, load_experiment_config, load_settings
from vortex_thermal.tables_util import read_table, spectrum_from_table, write_table

logger = logging.getLogger(__name__)

RUNNERS = {
    'spectrum': (run_spectrum, ('spectrum',)),
    'pump-sweep': (run_pump_sweep, ('pump-sweep',)),
    'aperture-sweep': (run_aperture_sweep, ('aperture-sweep',)),
    'turbulence': (run_turbulence, ('turbulence', 'coherent-turbulence', 'ensemble')),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='vortex-thermal',
                                     description="Heralded OAM thermal-state simulator and analysis toolkit")
    parser.add_argument('--log-level', default=None, help="Override VORTEX_LOG_LEVEL (DEBUG, INFO, ...)")
    commands = parser.add_subparsers(dest='command', required=True)

    for name in RUNNERS:
        sub = commands.add_parser(name, help=f"Run a {name} experiment from a YAML config")
        sub.add_argument('config', help="Config file path, or a name inside VORTEX_CONFIGS_DIR")
        sub.add_argument('--output-root', type=Path, default=None,
                         help="Parent directory of the run directory (default VORTEX_OUTPUT_ROOT)")
        sub.add_argument('--workers', type=int, default=None,
                         help="Threads for independent points (default VORTEX_MAX_WORKERS)")

    fit = commands.add_parser('fit', help="Re-fit a thermal distribution to an existing spectrum table")
    fit.add_argument('table', type=Path)
    fit.add_argument('--window', type=int, default=DEFAULT_WINDOW)
    fit.add_argument('--method', choices=FIT_METHODS, default='auto',
                     help="auto: Poisson likelihood on counts, least squares otherwise")
    fit.add_argument('--output', type=Path, default=None, help="Write the fit record as a table")

    kl = commands.add_parser('kl', help="KL divergence D(measured || reference) between two spectrum tables")
    kl.add_argument('measured', type=Path)
    kl.add_argument('reference', type=Path)
    kl.add_argument('--window', type=int, default=DEFAULT_WINDOW)
    kl.add_argument('--base', type=float, default=None, help="Log base (default natural log)")
    return parser


def _run_experiment(args, settings) -> dict:
    runner, kinds = RUNNERS[args.command]
    config = load_experiment_config(args.config, settings)
    if config.kind not in kinds:
        raise ConfigError(f"'{args.command}' cannot run a config of kind '{config.kind}'")
    output_root = args.output_root or settings.output_root
    workers = args.workers if args.workers is not None else settings.max_workers
    if workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {workers}")
    manifest = runner(config, output_root, workers)
    return {'run_id': manifest['run_id'], 'summary': manifest['summary']}


def _fit_table(args) -> dict:
    df, header = read_table(args.table)
    spectrum = spectrum_from_table(df)
    fit = fit_thermal(spectrum, window=args.window, method=args.method)
    record = fit.to_record()
    record['energy'] = mean_energy(spectrum)
    if args.output:
        source_header = {f"source_{key}": value for key, value in header.items()}
        write_table(pd.DataFrame([record]), args.output, {'table': args.table.name, **source_header})
    return record


def _kl_tables(args) -> dict:
    measured = spectrum_from_table(read_table(args.measured)[0])
    reference = spectrum_from_table(read_table(args.reference)[0])
    value = kl_divergence(measured, reference, window=args.window, base=args.base)
    return {'kl': value, 'window': args.window, 'base': args.base or 'e'}


def run_command(args) -> dict:
    """Dispatch a parsed command; returns a JSON-serializable result."""
    settings = load_settings()
    configure_logging(args.log_level or settings.log_level)

    if args.command in RUNNERS:
        return _run_experiment(args, settings)

    elif args.command == 'fit':
        return _fit_table(args)

    elif args.command == 'kl':
        return _kl_tables(args)

    raise ConfigError(f"unknown command: {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = run_command(args)
    except VortexThermalError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


if __name__ == '__main__':
    sys.exit(main())
