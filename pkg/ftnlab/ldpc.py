import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable
try:
    from typing import Self
except ImportError:
    from typing_extensions import Self

import numpy as np
from beautiful_repr import StylizedMixin, Field
from scipy import sparse

from ftnlab.interfaces import IDetector, IFrameSimulator
from ftnlab.modulation import FtnConfig, modulate
from ftnlab.channels import FadingChannel, MatrixModelSimulator
from ftnlab.networks import to_llr
from ftnlab.errors.ldpc_errors import *


logger = logging.getLogger(__name__)

CODES_DIR = Path(__file__).parent / "data" / "codes"

LLR_CLAMP = 30.
TANH_CLAMP = 1 - 1e-12
DEFAULT_MAX_ITERS = 50


def code_path(name: str) -> Path:
    """Function resolving the name of a packaged parity matrix into its alist path."""

    path = CODES_DIR / (name if name.endswith(".alist") else f"{name}.alist")

    if not path.is_file():
        shipped = ', '.join(sorted(file.stem for file in CODES_DIR.glob("*.alist")))
        raise AlistParseError(f"No packaged code {name!r}; shipped codes are {shipped}")

    return path


def clamp_llrs(llrs: Iterable[float], limit: float = LLR_CLAMP) -> np.ndarray:
    return np.clip(np.asarray(llrs, dtype=np.float64), -limit, limit)


@dataclass(frozen=True)
class SystematicEncoder:
    """
    Encoder obtained by GF(2) elimination of H: pivot columns carry parity,
    the remaining info columns carry the message unchanged.
    """

    info_columns: np.ndarray
    parity_columns: np.ndarray
    parity_matrix: np.ndarray

    @property
    def n(self) -> int:
        return len(self.info_columns) + len(self.parity_columns)

    @property
    def k(self) -> int:
        return len(self.info_columns)

    @property
    def permutation(self) -> np.ndarray:
        """Column order under which the reduced matrix reads [P | I]."""

        return np.concatenate((self.info_columns, self.parity_columns))

    def encode(self, info_bits: Iterable[int]) -> np.ndarray:
        info_bits = np.asarray(info_bits, dtype=np.uint8)

        if info_bits.shape != (self.k, ):
            raise InfoLengthError(f"Encoder takes {self.k} info bits, not {info_bits.shape}")

        codeword = np.zeros(self.n, dtype=np.uint8)
        codeword[self.info_columns] = info_bits
        codeword[self.parity_columns] = (self.parity_matrix.astype(np.int64) @ info_bits) % 2

        return codeword

    def extract_info(self, codeword: Iterable[int]) -> np.ndarray:
        codeword = np.asarray(codeword, dtype=np.uint8)

        if codeword.shape != (self.n, ):
            raise CodewordLengthError(f"Codeword of shape {codeword.shape} is not {self.n} bits long")

        return codeword[self.info_columns]


def _row_echelon(matrix: np.ndarray) -> tuple[np.ndarray, list[int]]:
    reduced = matrix.copy()
    pivots = list()
    row = 0

    for column in range(reduced.shape[1]):
        if row == reduced.shape[0]:
            break

        candidates = np.flatnonzero(reduced[row:, column]) + row

        if not len(candidates):
            continue

        pivot = candidates[0]

        if pivot != row:
            reduced[[row, pivot]] = reduced[[pivot, row]]

        others = np.flatnonzero(reduced[:, column])
        others = others[others != row]
        reduced[others] ^= reduced[row]

        pivots.append(column)
        row += 1

    return reduced[:row], pivots


def build_encoder(code: 'LdpcCode') -> SystematicEncoder:
    reduced, pivots = _row_echelon(code.H.toarray().astype(np.uint8))
    parity_columns = np.asarray(pivots, dtype=np.int64)
    info_columns = np.setdiff1d(np.arange(code.n), parity_columns)

    if len(pivots) < code.m:
        logger.warning(
            "Parity matrix %dx%d has rank %d; proceeding with k = %d",
            code.m, code.n, len(pivots), len(info_columns)
        )

    return SystematicEncoder(info_columns, parity_columns, reduced[:, info_columns])


@dataclass(frozen=True, repr=False, eq=False)
class LdpcCode(StylizedMixin):
    """Binary LDPC code given by a sparse m x n parity-check matrix."""

    _repr_fields = (Field('n'), Field('m'), Field('k'), Field('name'))

    H: sparse.csr_matrix
    name: str = "ldpc"

    def __post_init__(self) -> None:
        matrix = sparse.csr_matrix(self.H, dtype=np.uint8)
        matrix.sum_duplicates()
        matrix.eliminate_zeros()
        object.__setattr__(self, 'H', matrix)

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    @property
    def k(self) -> int:
        return self.encoder.k

    @property
    def rate(self) -> float:
        return self.k / self.n

    @cached_property
    def encoder(self) -> SystematicEncoder:
        return build_encoder(self)

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(check, variable) index pairs of every edge, ordered by check."""

        coordinates = self.H.tocoo()
        order = np.lexsort((coordinates.col, coordinates.row))

        return coordinates.row[order].astype(np.int64), coordinates.col[order].astype(np.int64)

    @property
    def column_degrees(self) -> np.ndarray:
        return np.asarray(self.H.sum(axis=0)).ravel().astype(np.int64)

    @property
    def row_degrees(self) -> np.ndarray:
        return np.asarray(self.H.sum(axis=1)).ravel().astype(np.int64)

    def syndrome(self, bits: Iterable[int]) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)

        if bits.shape != (self.n, ):
            raise CodewordLengthError(f"Word of shape {bits.shape} is not {self.n} bits long")

        return (self.H.astype(np.int64) @ bits) % 2

    def is_codeword(self, bits: Iterable[int]) -> bool:
        return not self.syndrome(bits).any()

    def encode(self, info_bits: Iterable[int]) -> np.ndarray:
        return self.encoder.encode(info_bits)

    def extract_info(self, codeword: Iterable[int]) -> np.ndarray:
        return self.encoder.extract_info(codeword)

    @classmethod
    def from_checks(cls, n: int, checks: Iterable[Iterable[int]], name: str = "ldpc") -> Self:
        """Method for building a code from the 0-based variable lists of its checks."""

        checks = [tuple(check) for check in checks]
        rows = np.repeat(np.arange(len(checks)), [len(check) for check in checks])
        columns = np.fromiter((variable for check in checks for variable in check), dtype=np.int64)

        entries = np.ones(len(columns), dtype=np.uint8)

        return cls(sparse.csr_matrix((entries, (rows, columns)), shape=(len(checks), n)), name)


class _AlistReader:
    def __init__(self, lines: list[str]):
        self.__lines = lines
        self.__position = 0

    @property
    def line_number(self) -> int:
        return self.__position

    def numbers(self, expected: int | None = None, what: str = "values") -> list[int]:
        while self.__position < len(self.__lines) and not self.__lines[self.__position].strip():
            self.__position += 1

        if self.__position >= len(self.__lines):
            raise AlistParseError(f"file ends before the {what}", self.__position + 1)

        self.__position += 1

        try:
            numbers = [int(token) for token in self.__lines[self.__position - 1].split()]
        except ValueError as error:
            raise AlistParseError(f"non-integer token in the {what}", self.__position) from error

        if expected is not None and len(numbers) != expected:
            raise AlistParseError(f"expected {expected} {what}, found {len(numbers)}", self.__position)

        return numbers


def load_alist(path: str | Path) -> LdpcCode:
    """
    Function reading a parity matrix in alist layout: n m, the maximum column
    and row degrees, the column and row degree lists, then the 1-based check
    list of every column and variable list of every row. Zero padding of
    index lists is ignored.
    """

    path = Path(path)

    with open(path) as file:
        lines = file.read().splitlines()

    reader = _AlistReader(lines)

    if not any(line.strip() for line in lines):
        raise AlistParseError(f"{path} is empty", 1)

    n, m = reader.numbers(2, "dimensions")
    max_column_degree, max_row_degree = reader.numbers(2, "maximum degrees")

    if n <= 0 or m <= 0:
        raise AlistParseError(f"dimensions {n}x{m} must be positive", 1)

    column_degrees = reader.numbers(n, "column degrees")
    column_degrees_line = reader.line_number
    row_degrees = reader.numbers(m, "row degrees")

    if max(column_degrees) > max_column_degree:
        raise AlistParseError(f"column degree above the declared maximum {max_column_degree}", column_degrees_line)
    if max(row_degrees) > max_row_degree:
        raise AlistParseError(f"row degree above the declared maximum {max_row_degree}", reader.line_number)

    column_entries = set()

    for column, degree in enumerate(column_degrees):
        checks = [index for index in reader.numbers(what=f"checks of column {column + 1}") if index != 0]

        if len(checks) != degree:
            raise AlistParseError(f"column {column + 1} lists {len(checks)} checks, degree is {degree}", reader.line_number)
        if any(not 1 <= check <= m for check in checks):
            raise AlistParseError(f"column {column + 1} names a check outside 1..{m}", reader.line_number)

        column_entries.update((check - 1, column) for check in checks)

    row_entries = set()

    for row, degree in enumerate(row_degrees):
        variables = [index for index in reader.numbers(what=f"variables of row {row + 1}") if index != 0]

        if len(variables) != degree:
            raise AlistParseError(f"row {row + 1} lists {len(variables)} variables, degree is {degree}", reader.line_number)
        if any(not 1 <= variable <= n for variable in variables):
            raise AlistParseError(f"row {row + 1} names a variable outside 1..{n}", reader.line_number)

        row_entries.update((row, variable - 1) for variable in variables)

    if column_entries != row_entries:
        raise AlistParseError("column and row lists describe different matrices", reader.line_number)

    rows, columns = np.array(sorted(row_entries), dtype=np.int64).reshape(-1, 2).T
    H = sparse.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, columns)), shape=(m, n))

    return LdpcCode(H, path.stem)


def write_alist(code: LdpcCode, path: str | Path) -> None:
    csc = code.H.tocsc()
    column_lists = [sorted(csc.indices[csc.indptr[column]:csc.indptr[column + 1]] + 1) for column in range(code.n)]
    row_lists = [sorted(code.H.indices[code.H.indptr[row]:code.H.indptr[row + 1]] + 1) for row in range(code.m)]

    max_column_degree = max(map(len, column_lists))
    max_row_degree = max(map(len, row_lists))

    def padded(indices: list[int], width: int) -> str:
        return ' '.join(map(str, list(indices) + [0] * (width - len(indices))))

    with open(path, 'w') as file:
        file.write(f"{code.n} {code.m}\n{max_column_degree} {max_row_degree}\n")
        file.write(' '.join(str(len(indices)) for indices in column_lists) + '\n')
        file.write(' '.join(str(len(indices)) for indices in row_lists) + '\n')
        file.writelines(padded(indices, max_column_degree) + '\n' for indices in column_lists)
        file.writelines(padded(indices, max_row_degree) + '\n' for indices in row_lists)


@dataclass(frozen=True, repr=False, eq=False)
class DecodeResult(StylizedMixin):
    _repr_fields = (Field('iterations'), Field('converged'))

    bits: np.ndarray
    iterations: int
    converged: bool
    posterior_llrs: np.ndarray


def _check_messages(
    variable_messages: np.ndarray,
    edge_checks: np.ndarray,
    check_count: int
) -> np.ndarray:
    halves = np.tanh(variable_messages / 2)
    magnitudes = np.abs(halves)
    is_zero = magnitudes == 0
    is_negative = halves < 0

    logs = np.log(np.where(is_zero, 1., magnitudes))
    total_logs = np.bincount(edge_checks, weights=logs, minlength=check_count)
    zero_counts = np.bincount(edge_checks, weights=is_zero, minlength=check_count)
    negative_counts = np.bincount(edge_checks, weights=is_negative, minlength=check_count)

    other_zeros = zero_counts[edge_checks] - is_zero
    other_negatives = negative_counts[edge_checks] - is_negative

    products = np.where(other_zeros > 0, 0., np.exp(total_logs[edge_checks] - logs))
    products = np.where(other_negatives % 2 == 1, -products, products)

    return 2 * np.arctanh(np.clip(products, -TANH_CLAMP, TANH_CLAMP))


def decode_bp(
    code: LdpcCode,
    llrs: Iterable[float],
    max_iters: int = DEFAULT_MAX_ITERS,
    early_stop: bool = True
) -> DecodeResult:
    """
    Function decoding channel LLRs (positive means bit 0) with the flooding
    sum-product schedule.

    The syndrome is checked before the first iteration and after each one; a
    decode converges when the syndrome is zero and no posterior LLR is
    exactly zero. Without early_stop all max_iters iterations are run.
    """

    llrs = clamp_llrs(llrs)

    if llrs.shape != (code.n, ):
        raise LlrLengthError(f"Expected {code.n} LLRs, got shape {llrs.shape}")

    edge_checks, edge_variables = code.edges
    check_messages = np.zeros(len(edge_checks))
    posterior = llrs.copy()
    iterations = 0

    def has_converged(posterior: np.ndarray) -> bool:
        return not np.any(posterior == 0) and code.is_codeword((posterior < 0).astype(np.uint8))

    converged = has_converged(posterior)

    while iterations < max_iters and not (early_stop and converged):
        variable_messages = posterior[edge_variables] - check_messages
        check_messages = _check_messages(variable_messages, edge_checks, code.m)
        posterior = llrs + np.bincount(edge_variables, weights=check_messages, minlength=code.n)

        iterations += 1
        converged = has_converged(posterior)

    logger.debug("BP stopped after %d iterations, converged: %s", iterations, converged)

    return DecodeResult((posterior < 0).astype(np.uint8), iterations, converged, posterior)


def coded_frame_pipeline(
    info_bits: Iterable[int],
    code: LdpcCode,
    ftn_config: FtnConfig,
    detector: IDetector,
    n0: float,
    rng: np.random.Generator,
    simulator: IFrameSimulator | None = None,
    channel: FadingChannel | None = None,
    max_iters: int = DEFAULT_MAX_ITERS
) -> np.ndarray:
    """
    Function sending one codeword through the FTN link: encode, modulate,
    transmit, detect soft bits, convert them into LLRs, decode and return
    the info bits.
    """

    scheme = ftn_config.modulation

    if code.n % scheme.bits_per_symbol:
        raise CodewordLengthError(
            f"Codeword of {code.n} bits does not fill whole {scheme.name} symbols"
        )

    simulator = MatrixModelSimulator(ftn_config) if simulator is None else simulator

    codeword = code.encode(info_bits)
    received = simulator(modulate(codeword, scheme), n0, rng, channel)
    result = decode_bp(code, to_llr(detector.bit_probabilities(received)), max_iters)

    return code.extract_info(result.bits)
