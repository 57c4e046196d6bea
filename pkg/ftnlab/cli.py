import argparse
import logging
import sys
from pathlib import Path
from typing import Iterable, NoReturn

from ftnlab.modulation import DEFAULT_BETA, export_profile_csv, export_pulse_csv, isi_coefficients, rrc_taps
from ftnlab.networks import ConvBaselineNetwork, FkNetwork, save_model
from ftnlab.training import TrainConfig, train
from ftnlab.complexity import (
    LutWeights, build_cost_reports, conv_stage_counts, fk_stage_counts, format_cost_report, reproduce_tables,
    write_cost_csv
)
from ftnlab.experiments import (
    ExperimentConfig, default_output_dir, run_ber_sweep, run_coded_sweep, spectral_efficiency,
    spectral_efficiency_grid
)
from ftnlab.logs import configure_logging
from ftnlab.errors.core_errors import FtnLabError


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TABLE_MISMATCH = 2


class UsageErrorParser(argparse.ArgumentParser):
    """Parser exiting with the usage code 1 instead of argparse's 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _print_lines(lines: Iterable[str]) -> None:
    for line in lines:
        print(line)


def _load_weights(path: str | None) -> LutWeights:
    return LutWeights() if path is None else LutWeights.from_yaml(path)


def _run_isi(arguments: argparse.Namespace) -> int:
    pulse = rrc_taps(arguments.beta)
    profile = isi_coefficients(pulse, arguments.tau, arguments.n_max)

    _print_lines(f"x{index} {coefficient: .6e}" for index, coefficient in enumerate(profile.coeffs))

    if arguments.csv:
        export_profile_csv(profile, arguments.csv)
    if arguments.pulse_csv:
        export_pulse_csv(pulse, arguments.pulse_csv)

    return EXIT_OK


def _run_train(arguments: argparse.Namespace) -> int:
    overrides = {
        'tau': arguments.tau,
        'modulation': arguments.modulation,
        'detector': arguments.detector,
        'epochs': arguments.epochs,
        'desk_scale': arguments.desk_scale,
        'seed': arguments.seed,
        'channel_mode': arguments.channel_mode,
    }
    overrides = {name: value for name, value in overrides.items() if value is not None}

    if arguments.config:
        config = TrainConfig.from_mapping(TrainConfig.from_yaml(arguments.config).to_mapping() | overrides)
    else:
        config = TrainConfig.from_mapping(overrides)

    network, history = train(config)

    output = Path(arguments.output) if arguments.output else (
        default_output_dir() / f"{config.detector}_tau{config.tau:g}_{config.scheme.name}.json"
    )
    output.parent.mkdir(parents=True, exist_ok=True)

    save_model(network, output)
    history.to_csv(output.with_suffix('.history.csv'))

    logger.info("Saved %r to %s", network, output)

    return EXIT_OK


def _experiment_config(arguments: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.from_yaml(arguments.config) if arguments.config else None
    overrides = dict(
        detector=arguments.detector,
        tau=arguments.tau,
        beta=arguments.beta,
        modulation=arguments.modulation,
        snr_db=arguments.snr,
        channel=arguments.channel,
        frames=arguments.frames,
        symbols_per_frame=arguments.symbols_per_frame,
        min_errors=arguments.min_errors,
        seed=arguments.seed,
        model_path=arguments.model,
        workers=arguments.workers,
        name=arguments.name,
        code=getattr(arguments, 'code', None),
        max_iters=getattr(arguments, 'max_iters', None),
    )

    if base is None:
        return ExperimentConfig.from_mapping({name: value for name, value in overrides.items() if value is not None})

    return base.with_overrides(**overrides)


def _print_points(points: Iterable) -> None:
    print(f"{'snr_db':>8}{'ebn0_db':>9}{'bits':>12}{'errors':>8}{'ber':>12}{'ci_low':>12}{'ci_high':>12}  stop")

    for point in points:
        print(
            f"{point.snr_db:>8g}{point.ebn0_db:>9.2f}{point.bits:>12}{point.errors:>8}"
            f"{point.ber:>12.4e}{point.ci_low:>12.4e}{point.ci_high:>12.4e}  {point.stop_reason}"
        )


def _run_ber(arguments: argparse.Namespace) -> int:
    points, _ = run_ber_sweep(_experiment_config(arguments), arguments.output_dir or default_output_dir())
    _print_points(points)

    return EXIT_OK


def _run_coded_ber(arguments: argparse.Namespace) -> int:
    points, _ = run_coded_sweep(_experiment_config(arguments), arguments.output_dir or default_output_dir())
    _print_points(points)

    return EXIT_OK


def _run_complexity(arguments: argparse.Namespace) -> int:
    weights = _load_weights(arguments.lut_weights)
    reports = build_cost_reports(weights)

    print(format_cost_report(reports, weights))

    fixed = fk_stage_counts(FkNetwork.zeros(0.9, (2, 1))).kernel
    conventional = conv_stage_counts(ConvBaselineNetwork.zeros(0.9, 2, 3)).kernel
    print()
    print(
        f"Kernel stage at N = 2: fixed kernels {fixed.mult} mult, {fixed.add} add; "
        f"sliding r = 3 kernels {conventional.mult} mult, {conventional.add} add"
    )

    if arguments.csv:
        write_cost_csv(reports, arguments.csv)

    return EXIT_OK


def _run_se(arguments: argparse.Namespace) -> int:
    if arguments.M is not None:
        tau = 1. if arguments.tau is None else arguments.tau
        beta = DEFAULT_BETA if arguments.beta is None else arguments.beta
        print(f"{spectral_efficiency(arguments.M, tau, beta):.4f}")

        return EXIT_OK

    print(f"{'modulation':<12}{'beta':>6}{'tau':>6}{'bps/Hz':>9}")
    _print_lines(
        f"{name:<12}{beta:>6}{tau:>6}{efficiency:>9.4f}"
        for name, beta, tau, efficiency in spectral_efficiency_grid()
    )

    return EXIT_OK


def _run_reproduce_tables(arguments: argparse.Namespace) -> int:
    reproduction = reproduce_tables(_load_weights(arguments.lut_weights))
    print(reproduction.to_text())

    return EXIT_OK if reproduction.is_exact else EXIT_TABLE_MISMATCH


def _add_experiment_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--config', help="YAML experiment file; flags override its values")
    parser.add_argument('--detector', help="fk-cnn, conv-k2..conv-k5, map-oracle or mf-threshold")
    parser.add_argument('--tau', type=float)
    parser.add_argument('--beta', type=float)
    parser.add_argument('--modulation')
    parser.add_argument('--snr', type=float, nargs='*', help="Es/N0 points in dB")
    parser.add_argument('--channel', choices=('awgn', 'block_fading', 'fixed_fading'))
    parser.add_argument('--frames', type=int)
    parser.add_argument('--symbols-per-frame', type=int)
    parser.add_argument('--min-errors', type=int)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--model', help="model file of a network detector")
    parser.add_argument('--workers', type=int)
    parser.add_argument('--name', help="base name of the CSV and manifest")
    parser.add_argument('--output-dir', type=Path)


def create_parser() -> argparse.ArgumentParser:
    parser = UsageErrorParser(prog="ftnlab", description="Faster-than-Nyquist detection lab")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')

    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=UsageErrorParser)

    isi = subparsers.add_parser('isi', help="print one-sided ISI coefficients")
    isi.add_argument('--tau', type=float, required=True)
    isi.add_argument('--beta', type=float, default=DEFAULT_BETA)
    isi.add_argument('--n-max', type=int, default=8)
    isi.add_argument('--csv', type=Path)
    isi.add_argument('--pulse-csv', type=Path)
    isi.set_defaults(handler=_run_isi)

    training = subparsers.add_parser('train', help="train a detector network")
    training.add_argument('--config', help="YAML training file; flags override its values")
    training.add_argument('--tau', type=float)
    training.add_argument('--modulation')
    training.add_argument('--detector')
    training.add_argument('--epochs', type=int)
    training.add_argument('--desk-scale', type=int)
    training.add_argument('--seed', type=int)
    training.add_argument('--channel-mode', choices=('awgn', 'block_fading', 'fixed_fading'))
    training.add_argument('--output', help="model file to write")
    training.set_defaults(handler=_run_train)

    ber = subparsers.add_parser('ber', help="uncoded Monte-Carlo BER sweep")
    _add_experiment_arguments(ber)
    ber.set_defaults(handler=_run_ber)

    coded = subparsers.add_parser('coded-ber', help="LDPC-coded Monte-Carlo BER sweep")
    _add_experiment_arguments(coded)
    coded.add_argument('--code', help="packaged code name or alist path")
    coded.add_argument('--max-iters', type=int)
    coded.set_defaults(handler=_run_coded_ber)

    complexity = subparsers.add_parser('complexity', help="operation counts and LUT-weighted costs")
    complexity.add_argument('--lut-weights', help="YAML file overriding the LUT weights")
    complexity.add_argument('--csv', type=Path)
    complexity.set_defaults(handler=_run_complexity)

    se = subparsers.add_parser('se', help="spectral efficiency")
    se.add_argument('--M', type=int, help="constellation size; omit for the whole grid")
    se.add_argument('--tau', type=float)
    se.add_argument('--beta', type=float)
    se.set_defaults(handler=_run_se)

    tables = subparsers.add_parser('reproduce-tables', help="recompute the published tables")
    tables.add_argument('--lut-weights', help="YAML file overriding the LUT weights")
    tables.set_defaults(handler=_run_reproduce_tables)

    return parser


def main(argv: list[str] | None = None) -> int:
    arguments = create_parser().parse_args(argv)

    if arguments.verbose:
        configure_logging(logging.DEBUG)
    elif arguments.quiet:
        configure_logging(logging.WARNING)
    else:
        configure_logging(logging.INFO)

    try:
        return arguments.handler(arguments)
    except (FtnLabError, OSError) as error:
        logger.error("%s: %s", type(error).__name__, error)

        return EXIT_USAGE
