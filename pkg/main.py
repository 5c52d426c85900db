#!/usr/bin/env python3
"""
GPWPC Toolkit - Study Runner Main Module

This is the main entry point for the GPWPC toolkit. It orchestrates basis
self-checks, coefficient/sparsity studies and the interpolation, quadrature
and least-squares convergence studies, then writes records and reports.

Usage:
    python main.py basis-check [--a 1.0]
    python main.py coeff-sparsity --config study.json
    python main.py interp-study --budgets 1,9,41,137,400 --out output/interp.csv
    python main.py quad-study --format json --out output/quad.json
    python main.py ls-study --method ls-quad --mode christoffel
    python main.py report output/interp.csv output/ls.csv

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 budget exceeded, 1 anything else.
"""

import argparse
import importlib
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from gpwpc.config import StudyConfig, load_config
from gpwpc.errors import ConfigurationError, GpwpcError, InsufficientDataError
from gpwpc.load import DataLoader, emit, load_records, records_frame
from gpwpc.study import (RateFit, StudyRecord, field_from_config, fit_rate, run_basis_check, run_sparsity,
                         run_study, weights_from_config)

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# methods each study subcommand accepts through --method
STUDY_METHODS = {
    'interp-study': ('interp', 'truncation'),
    'quad-study': ('quad',),
    'ls-study': ('ls', 'ls-quad'),
}

# CLI flag destination -> config key
OVERRIDE_KEYS = ('a', 'tau', 'theta0', 'dims', 'cells', 'p', 'budgets', 'seed', 'out', 'format', 'kappa', 'mode',
                 'method', 'mc_samples', 'reference_samples', 'workers', 'db_url')


def setup_logging(log_file: str, verbose: bool = False) -> None:
    """Configure the root logger once: log file plus stdout."""
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(sys.stdout)
        ],
        force=True,
    )


def parse_budgets(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"budgets must be comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON study configuration')
    common.add_argument('--a', type=float, help='shape of the generalized Laplace law')
    common.add_argument('--tau', type=float, help='decay of the field expansion')
    common.add_argument('--theta0', type=float, help='amplitude of the field expansion')
    common.add_argument('--dims', type=int, help='number of parametric dimensions')
    common.add_argument('--cells', type=int, help='FEM cells')
    common.add_argument('--p', type=float, help='summability exponent of the weights')
    common.add_argument('--budgets', type=parse_budgets, help='comma-separated increasing budgets')
    common.add_argument('--seed', type=int)
    common.add_argument('--out', help='output file (records) or directory stem (reports)')
    common.add_argument('--format', choices=('csv', 'json'))
    common.add_argument('--kappa', type=float, help='least-squares oversampling factor')
    common.add_argument('--mode', choices=('plain', 'christoffel'), help='least-squares sampling mode')
    common.add_argument('--method', help='study method')
    common.add_argument('--mc-samples', dest='mc_samples', type=int)
    common.add_argument('--reference-samples', dest='reference_samples', type=int)
    common.add_argument('--workers', type=int, help='threads for PDE solves')
    common.add_argument('--db-url', dest='db_url', help='also write records to this SQL database')
    common.add_argument('--verbose', action='store_true', help='DEBUG logging')

    parser = argparse.ArgumentParser(description='GPWPC toolkit: Laguerre piecewise-polynomial chaos studies')
    commands = parser.add_subparsers(dest='command', required=True)
    commands.add_parser('basis-check', parents=[common], help='univariate basis, Gauss and Lebesgue self-checks')
    commands.add_parser('coeff-sparsity', parents=[common], help='expansion coefficients and sparsity diagnostics')
    commands.add_parser('interp-study', parents=[common], help='sparse interpolation (or truncation) convergence')
    commands.add_parser('quad-study', parents=[common], help='sparse quadrature convergence')
    commands.add_parser('ls-study', parents=[common], help='least-squares (or LS quadrature) convergence')
    report = commands.add_parser('report', parents=[common], help='rate fits and summary of record files')
    report.add_argument('inputs', nargs='+', help='record files written by a study (CSV or JSON)')
    return parser


def resolve_config(args: argparse.Namespace) -> StudyConfig:
    """Config file plus flag overrides; study subcommands pick their default method."""
    overrides = {key: getattr(args, key, None) for key in OVERRIDE_KEYS}
    allowed = STUDY_METHODS.get(args.command)
    if allowed is not None:
        method = overrides['method'] or allowed[0]
        if method not in allowed:
            raise ConfigurationError(f"{args.command} runs one of {allowed}, not {method!r}")
        overrides['method'] = method
    return load_config(args.config, overrides)


def output_dir(cfg: StudyConfig) -> Path:
    return Path(cfg.output['out']).parent


def fit_rates(records: Sequence[StudyRecord]) -> Dict[str, Optional[RateFit]]:
    """Rate fit per method; methods with too few usable points get None."""
    rates: Dict[str, Optional[RateFit]] = {}
    for method in sorted({record.method for record in records}):
        try:
            rates[method] = fit_rate([record for record in records if record.method == method])
        except InsufficientDataError as e:
            logger.warning(f"⚠️  no rate for {method}: {e}")
            rates[method] = None
    return rates


def run_basis_command(cfg: StudyConfig) -> bool:
    logger.info("\n" + "="*30)
    logger.info("STEP 1: BASIS SELF-CHECKS")
    logger.info("="*30)
    results = run_basis_check(cfg)

    logger.info("\n" + "="*30)
    logger.info("STEP 2: RESULT LOADING")
    logger.info("="*30)
    return DataLoader(output_dir=str(output_dir(cfg))).load_to_json(results, "basis_check.json")


def run_sparsity_command(cfg: StudyConfig) -> bool:
    logger.info("\n" + "="*30)
    logger.info("STEP 1: COEFFICIENTS AND SPARSITY")
    logger.info("="*30)
    table, report, curve = run_sparsity(cfg)
    logger.info(f"coefficient box {table.box.as_dict()}: {len(table)} signed coefficients")
    logger.info(f"Parseval sum {report.parseval_sum:.6g}, residual {report.parseval_residual}")

    logger.info("\n" + "="*30)
    logger.info("STEP 2: RESULT LOADING")
    logger.info("="*30)
    loader = DataLoader(output_dir=str(output_dir(cfg)))
    weights = weights_from_config(cfg, field_from_config(cfg))
    results = [
        loader.load_to_csv(report.frame(weights), "sparsity.csv"),
        loader.load_to_json(report.to_json(), "sparsity.json"),
        loader.load_to_csv(curve, "best_n_term.csv"),
        loader.load_to_json(table.to_json(include_vectors=False), "coefficients.json"),
    ]
    return all(results)


def run_study_command(cfg: StudyConfig) -> bool:
    logger.info("\n" + "="*30)
    logger.info(f"STEP 1: {cfg.method.upper()} STUDY")
    logger.info("="*30)
    records = run_study(cfg)

    logger.info("\n" + "="*30)
    logger.info("STEP 2: RECORD LOADING")
    logger.info("="*30)
    emit(records, cfg.output['out'], cfg.output['format'], cfg)
    loader = DataLoader(output_dir=str(output_dir(cfg)))
    success = True
    if cfg.output['db_url']:
        success = loader.load_to_db(records_frame(records), 'study_records', db_url=cfg.output['db_url'])

    logger.info("\n" + "="*30)
    logger.info("STEP 3: RATE FIT")
    logger.info("="*30)
    rates = fit_rates(records)
    for method, rate in rates.items():
        if rate is not None:
            logger.info(f"{method}: rate {rate.slope:.4f}, R^2 {rate.r_squared:.4f}")
    return success


def run_report_command(cfg: StudyConfig, inputs: Sequence[str]) -> bool:
    logger.info("\n" + "="*30)
    logger.info("STEP 1: RECORD EXTRACTION")
    logger.info("="*30)
    records: List[StudyRecord] = []
    for path in inputs:
        if not Path(path).exists():
            raise ConfigurationError(f"record file {path} not found")
        loaded = load_records(path)
        logger.info(f"✅ {path}: {len(loaded)} records")
        records.extend(loaded)
    if not records:
        logger.error("No records found in the given files.")
        return False

    logger.info("\n" + "="*30)
    logger.info("STEP 2: RATE FIT AND REPORT")
    logger.info("="*30)
    rates = fit_rates(records)
    loader = DataLoader(output_dir=str(output_dir(cfg)))
    results = loader.load_all(records, rates, db_url=cfg.output['db_url'], to_db=bool(cfg.output['db_url']))
    return all(results.values())


def run_command(args: argparse.Namespace, cfg: StudyConfig) -> bool:
    """
    Execute one subcommand.

    Returns:
        bool: True if every output was written, False otherwise
    """
    logger.info("="*60)
    logger.info(f"Starting GPWPC {args.command}")
    logger.info(f"Started at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    logger.info(f"Config hash: {cfg.config_hash()}")
    logger.info("="*60)

    if args.command == 'basis-check':
        success = run_basis_command(cfg)
    elif args.command == 'coeff-sparsity':
        success = run_sparsity_command(cfg)
    elif args.command == 'report':
        success = run_report_command(cfg, args.inputs)
    else:
        success = run_study_command(cfg)

    if success:
        logger.info(f"✅ {args.command} completed successfully!")
    else:
        logger.warning(f"⚠️  {args.command} completed with some issues.")
    logger.info(f"Finished at: {datetime.now().strftime('%Y-%m-%d %H:%M:%S')}")
    logger.info("="*60)
    return success


def check_dependencies() -> bool:
    """
    Check if required dependencies are available.

    Returns:
        bool: True if all dependencies are available, False otherwise
    """
    logger.info("Checking dependencies...")
    missing_deps = []
    for name in ('numpy', 'scipy', 'pandas', 'sqlalchemy'):
        try:
            importlib.import_module(name)
            logger.debug(f"✅ {name} is available")
        except ImportError:
            missing_deps.append(name)

    if missing_deps:
        logger.error("❌ Missing required dependencies:")
        for dep in missing_deps:
            logger.error(f"  - {dep}")
        logger.error("Install missing dependencies with:")
        logger.error("  pip install " + " ".join(missing_deps))
        return False

    logger.info("✅ All dependencies are available")
    return True


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except GpwpcError as e:
        setup_logging('gpwpc_study.log', args.verbose)
        logger.error(f"❌ Configuration error: {e}")
        return e.exit_code

    setup_logging(cfg.output['log_file'], args.verbose)
    if not check_dependencies():
        return 1

    try:
        success = run_command(args, cfg)
    except GpwpcError as e:
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"\n❌ {args.command} failed. Check the logs for details.")
        return e.exit_code
    except Exception as e:
        logger.exception(f"❌ {args.command} failed with unexpected error: {e}")
        print(f"\n❌ {args.command} failed. Check the logs for details.")
        return 1

    if success:
        print(f"\n🎉 {args.command} completed successfully!")
        print(f"📁 Check '{output_dir(cfg)}' for records and reports.")
        return 0
    print(f"\n❌ {args.command} finished with failed outputs. Check the logs for details.")
    return 1


if __name__ == "__main__":
    sys.exit(main())
