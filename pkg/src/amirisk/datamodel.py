"""Cohort loading and the baseline summary table.

The canonical feature schema has 11 predictors: five numeric (bPEP, bET,
BMI, ABI, age) and six binary (PCI, sex, dyslipidemia, diabetes,
hypertension, STEMI).  Raw CSV headers and binary encodings are declared
in a mapping file rather than guessed, and the parser rejects any empty
or unmappable cell with its row and column.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import stats

NUMERIC = "numeric"
BINARY = "binary"

CANONICAL_ENTRIES = (
    ("bPEP", NUMERIC),
    ("bET", NUMERIC),
    ("BMI", NUMERIC),
    ("ABI", NUMERIC),
    ("age", NUMERIC),
    ("PCI", BINARY),
    ("sex", BINARY),
    ("dyslipidemia", BINARY),
    ("diabetes", BINARY),
    ("hypertension", BINARY),
    ("STEMI", BINARY),
)


class CohortError(ValueError):
    """Raised for malformed datasets or mapping files."""


@dataclass(frozen=True)
class FeatureSchema:
    entries: tuple[tuple[str, str], ...]

    def __post_init__(self):
        names = [name for name, _ in self.entries]
        if len(set(names)) != len(names):
            raise CohortError("feature names must be unique")
        for _, kind in self.entries:
            if kind not in (NUMERIC, BINARY):
                raise CohortError(f"unknown feature kind {kind!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.entries)

    @property
    def numeric_names(self) -> tuple[str, ...]:
        return tuple(n for n, k in self.entries if k == NUMERIC)

    @property
    def binary_names(self) -> tuple[str, ...]:
        return tuple(n for n, k in self.entries if k == BINARY)

    def kind_of(self, name: str) -> str:
        for n, k in self.entries:
            if n == name:
                return k
        raise KeyError(name)

    def index_of(self, name: str) -> int:
        return self.names.index(name)

    def apply_mask(self, excluded) -> "FeatureSchema":
        """Schema with the given features removed, survivor order preserved."""
        excluded = tuple(excluded)
        unknown = set(excluded) - set(self.names)
        if unknown:
            raise CohortError(f"cannot mask unknown features: {sorted(unknown)}")
        return FeatureSchema(tuple(e for e in self.entries if e[0] not in excluded))


def canonical_schema() -> FeatureSchema:
    return FeatureSchema(CANONICAL_ENTRIES)


@dataclass(frozen=True)
class SchemaMapping:
    """Raw-CSV-to-canonical bindings.

    ``column_map`` maps canonical feature names to raw header names;
    ``positive_values`` names the raw value that encodes 1 for each
    binary feature (default "1").
    """

    column_map: dict[str, str]
    outcome_column: str
    positive_outcome_value: str
    positive_values: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        canonical = set(canonical_schema().names)
        mapped = set(self.column_map)
        if mapped != canonical:
            missing = canonical - mapped
            extra = mapped - canonical
            parts = []
            if missing:
                parts.append(f"unmapped features: {sorted(missing)}")
            if extra:
                parts.append(f"unknown features: {sorted(extra)}")
            raise CohortError("; ".join(parts))
        if self.outcome_column in self.column_map.values():
            raise CohortError("outcome column must not double as a feature column")

    def positive_value(self, feature: str) -> str:
        return self.positive_values.get(feature, "1")


def load_mapping(path) -> SchemaMapping:
    """Parse a flat ``key = value`` mapping file ('#' starts a comment)."""
    column_map: dict[str, str] = {}
    positive: dict[str, str] = {}
    outcome_column = None
    outcome_positive = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CohortError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("column."):
            name = key[len("column."):]
            if name in column_map:
                raise CohortError(f"{path}:{lineno}: duplicate mapping for {name!r}")
            column_map[name] = value
        elif key.startswith("positive."):
            positive[key[len("positive."):]] = value
        elif key == "outcome.column":
            outcome_column = value
        elif key == "outcome.positive":
            outcome_positive = value
        else:
            raise CohortError(f"{path}:{lineno}: unknown key {key!r}")
    if outcome_column is None or outcome_positive is None:
        raise CohortError(f"{path}: outcome.column and outcome.positive are required")
    return SchemaMapping(column_map, outcome_column, outcome_positive, positive)


@dataclass(frozen=True)
class CohortTable:
    """Parsed dataset: one row per patient, outcome 1 = died within follow-up."""

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X.flags.writeable = False
        self.y.flags.writeable = False

    @property
    def n_rows(self) -> int:
        return int(self.y.size)

    @property
    def n_died(self) -> int:
        return int(np.sum(self.y == 1))

    @property
    def n_survived(self) -> int:
        return int(np.sum(self.y == 0))

    def select(self, indices) -> "CohortView":
        return CohortView(self, np.asarray(indices, dtype=np.int64))


@dataclass(frozen=True)
class CohortView:
    """A row subset of a cohort; carries its source indices for provenance."""

    table: CohortTable
    indices: np.ndarray

    @property
    def X(self) -> np.ndarray:
        return self.table.X[self.indices]

    @property
    def y(self) -> np.ndarray:
        return self.table.y[self.indices]

    @property
    def n_rows(self) -> int:
        return int(self.indices.size)


class _BinaryDecoder:
    """Maps the two raw values of a binary column onto {1, 0}."""

    def __init__(self, column: str, positive: str):
        self.column = column
        self.positive = positive
        self.negative = None

    def decode(self, raw: str, row: int) -> int:
        if raw == self.positive:
            return 1
        if self.negative is None:
            self.negative = raw
        if raw != self.negative:
            raise CohortError(
                f"row {row}, column {self.column!r}: unmappable binary value {raw!r} "
                f"(saw {self.positive!r} and {self.negative!r})"
            )
        return 0


def load_cohort(csv_path, mapping: SchemaMapping,
                schema: FeatureSchema | None = None) -> CohortTable:
    """Load and validate a cohort CSV; row order is preserved from the file."""
    schema = schema or canonical_schema()
    path = Path(csv_path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CohortError(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        col_idx = {}
        for name in schema.names:
            raw = mapping.column_map[name]
            if raw not in header:
                raise CohortError(f"{path}: missing mapped column {raw!r} for {name!r}")
            col_idx[name] = header.index(raw)
        if mapping.outcome_column not in header:
            raise CohortError(f"{path}: missing outcome column {mapping.outcome_column!r}")
        outcome_idx = header.index(mapping.outcome_column)

        decoders = {
            name: _BinaryDecoder(name, mapping.positive_value(name))
            for name in schema.binary_names
        }
        outcome_decoder = _BinaryDecoder(mapping.outcome_column,
                                         mapping.positive_outcome_value)

        rows = []
        outcomes = []
        for rownum, record in enumerate(reader, start=1):
            if not record or all(not c.strip() for c in record):
                continue
            values = []
            for name in schema.names:
                cell = record[col_idx[name]].strip() if col_idx[name] < len(record) else ""
                if cell == "":
                    raise CohortError(f"row {rownum}, column {name!r}: empty cell")
                if schema.kind_of(name) == NUMERIC:
                    try:
                        values.append(float(cell))
                    except ValueError:
                        raise CohortError(
                            f"row {rownum}, column {name!r}: non-numeric value {cell!r}"
                        ) from None
                else:
                    values.append(float(decoders[name].decode(cell, rownum)))
            cell = record[outcome_idx].strip() if outcome_idx < len(record) else ""
            if cell == "":
                raise CohortError(f"row {rownum}, column {mapping.outcome_column!r}: empty cell")
            outcomes.append(outcome_decoder.decode(cell, rownum))
            rows.append(values)

    if not rows:
        raise CohortError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(outcomes, dtype=np.int8)
    return CohortTable(schema, X, y)


# ---------------------------------------------------------------------------
# cohort summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeatureSummary:
    name: str
    kind: str
    # numeric: (mean, sd) per group; binary: (count, pct) per group
    died: tuple[float, float]
    survived: tuple[float, float]
    test: stats.TestResult

    @property
    def significant(self) -> bool:
        return self.test.significant


@dataclass(frozen=True)
class CohortSummary:
    n_died: int
    n_survived: int
    rows: tuple[FeatureSummary, ...]


def cohort_summary(cohort: CohortTable, pooled_t: bool = True,
                   yates: bool = True) -> CohortSummary:
    """Per-feature group statistics with t-test / chi-square p-values.

    Numeric features report mean and sample sd per outcome group; binary
    features report count and percentage.  Degenerate inputs yield an
    undefined (NaN) p-value rather than an error.
    """
    died = cohort.y == 1
    surv = cohort.y == 0
    n1, n0 = int(died.sum()), int(surv.sum())
    if n1 < 2 or n0 < 2:
        raise CohortError("cohort summary needs at least two rows per outcome group")

    rows = []
    for i, (name, kind) in enumerate(cohort.schema.entries):
        col = cohort.X[:, i]
        x1, x0 = col[died], col[surv]
        if kind == NUMERIC:
            d = (float(np.mean(x1)), float(np.std(x1, ddof=1)))
            s = (float(np.mean(x0)), float(np.std(x0, ddof=1)))
            test = stats.two_sample_t_test(x1, x0, pooled=pooled_t)
        else:
            c1, c0 = float(np.sum(x1 == 1)), float(np.sum(x0 == 1))
            d = (c1, 100.0 * c1 / n1)
            s = (c0, 100.0 * c0 / n0)
            table = [[c1, c0], [n1 - c1, n0 - c0]]
            try:
                test = stats.chi_square_2x2(table, yates=yates)
            except ValueError:
                test = stats.TestResult(math.nan, (1.0,), math.nan, "chi-square")
        rows.append(FeatureSummary(name, kind, d, s, test))
    return CohortSummary(n1, n0, tuple(rows))
