import csv
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Mapping
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
import yaml
from beautiful_repr import StylizedMixin, Field

from ftnlab.modulation import BPSK, QPSK, ModulationScheme, isi_coefficients, rrc_taps
from ftnlab.networks import ConvBaselineNetwork, DetectorNetwork, FkNetwork, KERNEL_ALLOCATIONS
from ftnlab.tools import Report, ReportAnalyzer, BadReportHandler, StrictToStateMixin
from ftnlab.errors.complexity_errors import *


logger = logging.getLogger(__name__)

DEFAULT_LUT_WEIGHTS_PATH = Path(__file__).parent / "data" / "lut_weights_default.yaml"

REPORT_SYMBOLS = 100
OPERATIONS = ('mult', 'add', 'cmp', 'div', 'exp', 'tanh', 'sigmoid')

COUNTING_CONVENTION = (
    "fixed-kernel filter: 3 mult, 3 add, 1 tanh; "
    "sliding filter of length r: r mult, r add, 1 tanh per position; "
    "dense or output neuron with F inputs: F mult, 2F-1 add, 1 activation; "
    "dual-branch modulations count both branches"
)


@dataclass(frozen=True, repr=False)
class OpCounts(StylizedMixin, StrictToStateMixin):
    """Operation counts over a tagged number of detected symbols."""

    _repr_fields = tuple(Field(name) for name in (*OPERATIONS, 'symbols'))
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(OperationCountError), ))

    mult: int = 0
    add: int = 0
    cmp: int = 0
    div: int = 0
    exp: int = 0
    tanh: int = 0
    sigmoid: int = 0
    symbols: int = 1

    def __post_init__(self) -> None:
        self._check_state_errors()

    def __add__(self, other: Self) -> Self:
        if self.symbols != other.symbols:
            raise OperationCountError(f"Counts over {self.symbols} and {other.symbols} symbols do not add up")

        return OpCounts(
            **{name: getattr(self, name) + getattr(other, name) for name in OPERATIONS},
            symbols=self.symbols
        )

    def times(self, factor: int) -> Self:
        """Method for repeating the same work factor times over the same symbols."""

        return OpCounts(**{name: getattr(self, name) * factor for name in OPERATIONS}, symbols=self.symbols)

    def per(self, symbols: int) -> Self:
        """Method for rescaling per-symbol counts onto a block of symbols."""

        if self.symbols != 1:
            raise OperationCountError(f"Only per-symbol counts can be rescaled, these cover {self.symbols}")

        return OpCounts(**{name: getattr(self, name) * symbols for name in OPERATIONS}, symbols=symbols)

    def as_dict(self) -> dict[str, int]:
        return {name: getattr(self, name) for name in OPERATIONS}

    def _is_correct(self) -> Report:
        return Report.of_checks((
            *(
                (isinstance(getattr(self, name), (int, np.integer)) and getattr(self, name) >= 0,
                 f"Count of {name} must be a non-negative integer, not {getattr(self, name)!r}")
                for name in OPERATIONS
            ),
            (self.symbols >= 1, f"Counts must cover at least one symbol, not {self.symbols}"),
        ))


@dataclass(frozen=True)
class StageCounts:
    kernel: OpCounts
    dense: OpCounts
    output: OpCounts

    @property
    def total(self) -> OpCounts:
        return self.kernel + self.dense + self.output


@dataclass(frozen=True, repr=False)
class LutWeights(StylizedMixin, StrictToStateMixin):
    """LUT cost of a single operation of each kind."""

    _repr_fields = tuple(Field(name) for name in OPERATIONS)
    _state_report_analyzer = ReportAnalyzer((BadReportHandler(LutWeightsError), ))

    mult: int = 113
    add: int = 10
    cmp: int = 11
    div: int = 236
    exp: int = 73
    tanh: int = 1
    sigmoid: int = 1

    def __post_init__(self) -> None:
        self._check_state_errors()

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> Self:
        unknown = set(mapping) - set(OPERATIONS)

        if unknown:
            raise LutWeightsError(f"Unknown operations in LUT weights: {', '.join(sorted(unknown))}")

        return cls(**mapping)

    @classmethod
    def from_yaml(cls, path: str | Path) -> Self:
        with open(path) as file:
            mapping = yaml.safe_load(file) or dict()

        if not isinstance(mapping, Mapping):
            raise LutWeightsError(f"LUT weights file {path} must hold a mapping")

        weights = cls.from_mapping(mapping)

        if not weights.is_default:
            logger.warning("Non-default LUT weights loaded from %s: %r", path, weights)

        return weights

    @property
    def is_default(self) -> bool:
        return self == LutWeights()

    def as_dict(self) -> dict[str, int]:
        return asdict(self)

    def _is_correct(self) -> Report:
        return Report.of_checks(
            (
                isinstance(getattr(self, name), (int, np.integer)) and getattr(self, name) > 0,
                f"LUT weight of {name} must be a positive integer, not {getattr(self, name)!r}"
            )
            for name in OPERATIONS
        )


def _neuron_layer_counts(neurons: int, inputs: int, activation: str) -> OpCounts:
    return OpCounts(mult=neurons * inputs, add=neurons * (2 * inputs - 1), **{activation: neurons})


def _head_stage_counts(net: DetectorNetwork, kernel: OpCounts, input_width: int) -> StageCounts:
    branches = net.modulation.dimensions
    head = net.head

    return StageCounts(
        kernel.times(branches),
        _neuron_layer_counts(head.width, input_width, 'tanh').times(branches),
        _neuron_layer_counts(head.output_bits, head.width, 'sigmoid').times(branches)
    )


def fk_stage_counts(net: FkNetwork) -> StageCounts:
    filters = sum(net.allocation)

    return _head_stage_counts(net, OpCounts(mult=3 * filters, add=3 * filters, tanh=filters), filters)


def count_fk_ops(net: FkNetwork) -> OpCounts:
    """Function counting the operations spent per detected symbol by a fixed-kernel network."""

    return fk_stage_counts(net).total


def conv_stage_counts(net: ConvBaselineNetwork, N: int | None = None) -> StageCounts:
    N = net.isi_length if N is None else N
    r = net.kernel_length

    if r > 2 * N + 1:
        raise OperationCountError(f"Kernel length {r} exceeds the window width {2 * N + 1}")

    positions = 2 * N + 2 - r
    evaluations = net.filter_count * positions

    return _head_stage_counts(
        net,
        OpCounts(mult=evaluations * r, add=evaluations * r, tanh=evaluations),
        evaluations
    )


def count_conv_ops(net: ConvBaselineNetwork, N: int | None = None) -> OpCounts:
    return conv_stage_counts(net, N).total


def weighted_total(counts: OpCounts, weights: LutWeights) -> int:
    return int(sum(getattr(counts, name) * getattr(weights, name) for name in OPERATIONS))


def lut_cost(counts: OpCounts, weights: LutWeights | None = None, symbols: int = REPORT_SYMBOLS) -> int:
    """Function returning symbols times the LUT-weighted sum of per-symbol counts."""

    weights = LutWeights() if weights is None else weights

    return symbols * weighted_total(counts, weights)


def compare_reference(cnn_cost: int, reference_cost: int) -> int | None:
    """
    Function returning the percentage saving over the reference rounded half
    up to an integer, None when there is no saving.
    """

    if reference_cost <= 0:
        raise OperationCountError(f"Reference cost {reference_cost} must be positive")

    improvement = (200 * (reference_cost - cnn_cost) + reference_cost) // (2 * reference_cost)

    return None if improvement < 0 else int(improvement)


TABLE_TAUS = (0.7, 0.8, 0.9)
TABLE_SCHEMES = (BPSK, QPSK)

# Published reduced-state BCJR counts per 100 symbols, not computed here.
MBCJR_COUNTS = {
    ("bpsk", 0.7): OpCounts(4631, 9982, 4160, 3982, 205, 104, 0, symbols=100),
    ("bpsk", 0.8): OpCounts(2783, 5129, 1056, 2981, 204, 103, 0, symbols=100),
    ("bpsk", 0.9): OpCounts(1877, 2584, 272, 1436, 203, 102, 0, symbols=100),
    ("qpsk", 0.7): OpCounts(33048, 70857, 29283, 28819, 410, 208, 0, symbols=100),
    ("qpsk", 0.8): OpCounts(19964, 36137, 7439, 21857, 408, 206, 0, symbols=100),
    ("qpsk", 0.9): OpCounts(13916, 18671, 1976, 9488, 406, 204, 0, symbols=100),
}

# Published Go-Back-K counts per 100 BPSK symbols at tau = 0.8 and its stated LUT total.
GO_BACK_K_COUNTS = OpCounts(mult=14850, add=15444, cmp=300, symbols=100)
GO_BACK_K_STATED_TOTAL = 1696790

EXPECTED_CNN_COUNTS = {
    ("bpsk", 0.7): {'mult': 17900, 'add': 27800, 'tanh': 2900, 'sigmoid': 100},
    ("bpsk", 0.8): {'mult': 8100, 'add': 12400, 'tanh': 1500, 'sigmoid': 100},
    ("bpsk", 0.9): {'mult': 2500, 'add': 3600, 'tanh': 700, 'sigmoid': 100},
    ("qpsk", 0.7): {'mult': 35800, 'add': 55600, 'tanh': 5800, 'sigmoid': 200},
    ("qpsk", 0.8): {'mult': 16200, 'add': 24800, 'tanh': 3000, 'sigmoid': 200},
    ("qpsk", 0.9): {'mult': 5000, 'add': 7200, 'tanh': 1400, 'sigmoid': 200},
}

EXPECTED_LUT_COSTS = {
    ("CNN", "bpsk", 0.7): 2303700,
    ("CNN", "bpsk", 0.8): 1040900,
    ("CNN", "bpsk", 0.9): 319300,
    ("CNN", "qpsk", 0.7): 4607400,
    ("CNN", "qpsk", 0.8): 2081800,
    ("CNN", "qpsk", 0.9): 638600,
    ("M-BCJR", "bpsk", 0.7): 1623704,
    ("M-BCJR", "bpsk", 0.8): 1095896,
    ("M-BCJR", "bpsk", 0.9): 594750,
    ("M-BCJR", "qpsk", 0.7): 11596529,
    ("M-BCJR", "qpsk", 0.8): 7887373,
    ("M-BCJR", "qpsk", 0.9): 4049964,
}

EXPECTED_IMPROVEMENTS = {
    ("bpsk", 0.7): None,
    ("bpsk", 0.8): 5,
    ("bpsk", 0.9): 46,
    ("qpsk", 0.7): 60,
    ("qpsk", 0.8): 74,
    ("qpsk", 0.9): 84,
}

# One-sided ISI coefficients x0..x8 of the beta = 0.35 pulse as published.
TABLE_I_REFERENCE = {
    0.7: (0.999, 0.353, -0.183, 0.0324, 0.0316, -0.0279, 0.0137, 0.000331, -0.00173),
    0.8: (0.999, 0.222, -0.152, 0.0762, -0.0244, 0.00593, 0.00316, -0.00173, 0.000664),
    0.9: (0.999, 0.102, -0.0786, 0.0487, -0.0226, 0.0124, -0.00361, 0.000981, -0.000169),
}
TABLE_I_TOLERANCE = 2e-2


@dataclass(frozen=True, repr=False)
class CostReport(StylizedMixin):
    """LUT-weighted cost of one architecture against its references, per 100 symbols."""

    _repr_fields = (Field('architecture'), Field('weighted_total'), Field('improvements'))

    architecture: str
    modulation: str
    tau: float
    counts: OpCounts
    weighted_total: int
    reference_totals: dict[str, int] = field(default_factory=dict)
    improvements: dict[str, int | None] = field(default_factory=dict)


def table_network(modulation: ModulationScheme, tau: float) -> FkNetwork:
    return FkNetwork.zeros(tau, KERNEL_ALLOCATIONS[tau], modulation)


def build_cost_reports(weights: LutWeights | None = None) -> list[CostReport]:
    """Function building the CNN and reference reports of every tabulated configuration."""

    weights = LutWeights() if weights is None else weights
    reports = list()

    for scheme in TABLE_SCHEMES:
        for tau in TABLE_TAUS:
            reference = MBCJR_COUNTS[(scheme.name, tau)]
            reference_total = weighted_total(reference, weights)
            cnn_counts = count_fk_ops(table_network(scheme, tau)).per(REPORT_SYMBOLS)
            cnn_total = weighted_total(cnn_counts, weights)

            reference_totals = {"M-BCJR": reference_total}
            improvements = {"M-BCJR": compare_reference(cnn_total, reference_total)}

            if scheme == BPSK and tau == 0.8:
                go_back_total = weighted_total(GO_BACK_K_COUNTS, weights)
                reference_totals |= {"Go-Back-K": go_back_total, "Go-Back-K stated": GO_BACK_K_STATED_TOTAL}
                improvements |= {
                    "Go-Back-K": compare_reference(cnn_total, go_back_total),
                    "Go-Back-K stated": compare_reference(cnn_total, GO_BACK_K_STATED_TOTAL),
                }

            reports.append(CostReport("CNN", scheme.name, tau, cnn_counts, cnn_total, reference_totals, improvements))
            reports.append(CostReport("M-BCJR", scheme.name, tau, reference, reference_total))

    return reports


def write_cost_csv(reports: Iterable[CostReport], path: str | Path) -> None:
    with open(path, 'w', newline='') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(('architecture', 'modulation', 'tau', *OPERATIONS, 'lut_cost', 'improvement_over_mbcjr'))

        for report in reports:
            improvement = report.improvements.get("M-BCJR")
            writer.writerow((
                report.architecture,
                report.modulation,
                report.tau,
                *report.counts.as_dict().values(),
                report.weighted_total,
                '' if improvement is None else improvement
            ))


def _percent(value: int | None) -> str:
    return "n/a" if value is None else f"{value}%"


def format_cost_report(reports: Iterable[CostReport], weights: LutWeights | None = None) -> str:
    """Function rendering operation counts, LUT costs and savings as aligned text tables."""

    weights = LutWeights() if weights is None else weights
    reports = tuple(reports)
    lines = [
        f"Operation counts per {REPORT_SYMBOLS} symbols ({COUNTING_CONVENTION})",
        f"{'arch':<8}{'mod':<6}{'tau':>5}" + ''.join(f"{name:>9}" for name in OPERATIONS),
    ]
    lines.extend(
        f"{report.architecture:<8}{report.modulation:<6}{report.tau:>5}"
        + ''.join(f"{count:>9}" for count in report.counts.as_dict().values())
        for report in reports
    )

    lines.append('')
    lines.append("LUT weights: " + ', '.join(f"{name}={weight}" for name, weight in weights.as_dict().items())
                 + ('' if weights.is_default else "  (non-default)"))
    lines.append(f"{'mod':<6}{'tau':>5}{'CNN':>12}{'M-BCJR':>12}{'saving':>8}")

    for report in reports:
        if report.architecture != "CNN":
            continue

        lines.append(
            f"{report.modulation:<6}{report.tau:>5}{report.weighted_total:>12}"
            f"{report.reference_totals['M-BCJR']:>12}{_percent(report.improvements['M-BCJR']):>8}"
        )

    for report in reports:
        if "Go-Back-K" in report.reference_totals:
            lines.append('')
            lines.append(
                f"Go-Back-K ({report.modulation}, tau = {report.tau}): computed total "
                f"{report.reference_totals['Go-Back-K']}, stated total {report.reference_totals['Go-Back-K stated']}; "
                "the stated total does not follow from the published counts"
            )
            lines.append(
                f"CNN saving over Go-Back-K: {_percent(report.improvements['Go-Back-K stated'])} against the stated "
                f"total, {_percent(report.improvements['Go-Back-K'])} against the computed total"
            )

    return '\n'.join(lines)


@dataclass(frozen=True)
class TableCell:
    table: str
    row: str
    column: str
    expected: float | int | None
    actual: float | int | None
    tolerance: float = 0.

    @property
    def matches(self) -> bool:
        if self.expected is None or self.actual is None:
            return self.expected is None and self.actual is None
        elif self.tolerance == 0:
            return self.expected == self.actual

        is_close = abs(self.expected - self.actual) <= self.tolerance
        is_sign_bound = abs(self.expected) > self.tolerance

        return is_close and (not is_sign_bound or np.sign(self.expected) == np.sign(self.actual))


@dataclass(frozen=True)
class TableReproduction:
    cells: tuple[TableCell, ...]
    weights: LutWeights

    @property
    def mismatches(self) -> tuple[TableCell, ...]:
        return tuple(cell for cell in self.cells if not cell.matches)

    @property
    def is_exact(self) -> bool:
        return not self.mismatches

    @property
    def isi_deviation(self) -> float:
        return max(abs(cell.expected - cell.actual) for cell in self.cells if cell.table == "I")

    def to_text(self) -> str:
        exact_tables = ("V", "VII", "VIII")
        lines = list()

        if not self.weights.is_default:
            lines.append("LUT weights are non-default; differences in Tables VII and VIII are expected")

        for table in exact_tables:
            failed = [cell for cell in self.mismatches if cell.table == table]
            lines.append(f"Table {table}: " + ("exact match" if not failed else f"{len(failed)} mismatching cells"))

        isi_failed = [cell for cell in self.mismatches if cell.table == "I"]
        lines.append(
            f"Table I: max |Δ| = {self.isi_deviation:.4f} "
            + (f"≤ {TABLE_I_TOLERANCE:g}" if not isi_failed else f"with {len(isi_failed)} cells out of tolerance")
        )

        for cell in self.mismatches:
            lines.append(
                f"  Table {cell.table} [{cell.row}, {cell.column}]: expected {cell.expected}, got {cell.actual}"
            )

        return '\n'.join(lines)


def reproduce_tables(weights: LutWeights | None = None) -> TableReproduction:
    """Function recomputing every tabulated cell and pairing it with its published value."""

    weights = LutWeights() if weights is None else weights
    cells = list()
    pulse = rrc_taps()

    for tau, expected_coefficients in TABLE_I_REFERENCE.items():
        coefficients = isi_coefficients(pulse, tau, len(expected_coefficients) - 1).coeffs

        cells.extend(
            TableCell("I", f"x{index}", f"tau={tau}", expected, float(actual), TABLE_I_TOLERANCE)
            for index, (expected, actual) in enumerate(zip(expected_coefficients, coefficients))
        )

    for report in build_cost_reports(weights):
        key = (report.modulation, report.tau)
        row = f"{report.architecture} {report.modulation}"
        column = f"tau={report.tau}"

        if report.architecture == "CNN":
            counts = report.counts.as_dict()
            cells.extend(
                TableCell("V", f"{row} {name}", column, expected, counts[name])
                for name, expected in EXPECTED_CNN_COUNTS[key].items()
            )
            cells.append(TableCell("VIII", report.modulation, column, EXPECTED_IMPROVEMENTS[key], report.improvements["M-BCJR"]))

        cells.append(TableCell("VII", row, column, EXPECTED_LUT_COSTS[(report.architecture, *key)], report.weighted_total))

    reproduction = TableReproduction(tuple(cells), weights)

    for cell in reproduction.mismatches:
        logger.warning("Table %s [%s, %s] differs: expected %s, got %s", cell.table, cell.row, cell.column, cell.expected, cell.actual)

    return reproduction


def check_tables(weights: LutWeights | None = None) -> TableReproduction:
    reproduction = reproduce_tables(weights)

    if not reproduction.is_exact:
        raise TableMismatchError(reproduction.to_text())

    return reproduction
