"""Datasets of prediction errors and uncertainties.

A dataset holds, for ``M`` predictions, the error ``E = R - V`` (reference
minus prediction), the predicted standard uncertainty ``u``, any number of
named real-valued input features, and optional categorical group labels.

Molecular formulas can stand in for input features: the molecular mass
(``X1``) and the fraction of heteroatoms (``X2``) are derived from them.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from bvscal._io import fmt
from bvscal.errors import DataValidationError, ParseError, SchemaError

# IUPAC 2021 abridged standard atomic weights (Da).
ATOMIC_MASS = MappingProxyType(
    {
        "H": 1.008,
        "C": 12.011,
        "N": 14.007,
        "O": 15.999,
        "F": 18.998403162,
    }
)
HEAVY_ATOMS = ("C", "N", "O", "F")
HETERO_ATOMS = ("N", "O", "F")

UNCERTAINTY = "u"

_TOKEN = re.compile(r"([A-Z][a-z]*)(\d*)")


@dataclass(frozen=True)
class Formula:
    """Element counts of a molecule made of H, C, N, O and F."""

    counts: Mapping[str, int]

    def __post_init__(self):
        counts = {el: 0 for el in ATOMIC_MASS}
        for el, n in dict(self.counts).items():
            if el not in ATOMIC_MASS:
                raise ParseError(f"unsupported element {el!r}")
            n = int(n)
            if n < 0:
                raise ParseError(f"negative count for {el}")
            counts[el] += n
        if sum(counts[el] for el in HEAVY_ATOMS) == 0:
            raise ParseError("formula has no heavy atom (C, N, O or F)")
        object.__setattr__(self, "counts", MappingProxyType(counts))

    def __getitem__(self, element: str) -> int:
        return self.counts[element]


def parse_formula(text: str) -> Formula:
    """Parse a Hill-style formula such as ``"C2H6O"``.

    Repeated symbols are summed. Only H, C, N, O and F are accepted.
    """
    text = text.strip()
    if not text:
        raise ParseError("empty formula")
    counts: dict[str, int] = {}
    pos = 0
    for m in _TOKEN.finditer(text):
        if m.start() != pos:
            break
        el, n = m.group(1), m.group(2)
        if el not in ATOMIC_MASS:
            raise ParseError(f"unsupported element {el!r} in formula {text!r}")
        counts[el] = counts.get(el, 0) + (int(n) if n else 1)
        pos = m.end()
    if pos != len(text):
        raise ParseError(f"cannot parse formula {text!r} at position {pos}")
    return Formula(counts)


def molecular_mass(f: Formula) -> float:
    return math.fsum(n * ATOMIC_MASS[el] for el, n in f.counts.items())


def hetero_fraction(f: Formula) -> float:
    """Fraction of heavy atoms that are N, O or F (hydrogens not counted)."""
    heavy = sum(f[el] for el in HEAVY_ATOMS)
    return sum(f[el] for el in HETERO_ATOMS) / heavy


def composition_group(f: Formula) -> str:
    """Oxygen/nitrogen composition label, e.g. ``"O1N2"``."""
    return f"O{f['O']}N{f['N']}"


def _as_float_array(values, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    bad = np.flatnonzero(~np.isfinite(arr))
    if bad.size:
        raise DataValidationError(f"{what}: non-finite value at index {bad[0]}")
    return arr


@dataclass(frozen=True, eq=False)
class UQDataset:
    """Aligned errors, uncertainties, features and optional group labels.

    Arrays are copied and made read-only on construction, so an instance can
    be shared freely. The name ``"u"`` is reserved for the uncertainties when
    a binning variable is looked up with :meth:`variable`.
    """

    errors: np.ndarray
    uncertainties: np.ndarray
    features: Mapping[str, np.ndarray] = field(default_factory=dict)
    groups: np.ndarray | None = None

    def __post_init__(self):
        e = _as_float_array(self.errors, "errors")
        u = _as_float_array(self.uncertainties, "uncertainties")
        if e.size != u.size:
            raise DataValidationError(
                f"errors ({e.size}) and uncertainties ({u.size}) differ in length"
            )
        if e.size < 2:
            raise DataValidationError(f"dataset needs at least 2 points, got {e.size}")
        nonpos = np.flatnonzero(u <= 0)
        if nonpos.size:
            raise DataValidationError(
                f"uncertainty must be > 0, got {u[nonpos[0]]} at index {nonpos[0]}"
            )
        feats = {}
        for name, col in dict(self.features).items():
            if name == UNCERTAINTY:
                raise DataValidationError(f"feature name {UNCERTAINTY!r} is reserved")
            arr = _as_float_array(col, f"feature {name!r}")
            if arr.size != e.size:
                raise DataValidationError(
                    f"feature {name!r} has length {arr.size}, expected {e.size}"
                )
            arr.flags.writeable = False
            feats[name] = arr
        groups = None
        if self.groups is not None:
            groups = np.array(self.groups, dtype=object).reshape(-1)
            if groups.size != e.size:
                raise DataValidationError(
                    f"groups have length {groups.size}, expected {e.size}"
                )
            groups.flags.writeable = False
        e.flags.writeable = False
        u.flags.writeable = False
        object.__setattr__(self, "errors", e)
        object.__setattr__(self, "uncertainties", u)
        object.__setattr__(self, "features", MappingProxyType(feats))
        object.__setattr__(self, "groups", groups)

    @property
    def size(self) -> int:
        return int(self.errors.size)

    def __len__(self) -> int:
        return self.size

    @property
    def feature_names(self) -> tuple[str, ...]:
        return tuple(self.features)

    @property
    def z2(self) -> np.ndarray:
        return (self.errors / self.uncertainties) ** 2

    def variable(self, name: str) -> np.ndarray:
        if name == UNCERTAINTY:
            return self.uncertainties
        try:
            return self.features[name]
        except KeyError:
            raise SchemaError(
                f"unknown variable {name!r}; available: {[UNCERTAINTY, *self.features]}"
            ) from None

    def with_uncertainties(self, uncertainties) -> "UQDataset":
        return UQDataset(self.errors, uncertainties, self.features, self.groups)

    def subset(self, indices) -> "UQDataset":
        idx = np.asarray(indices)
        return UQDataset(
            self.errors[idx],
            self.uncertainties[idx],
            {k: v[idx] for k, v in self.features.items()},
            None if self.groups is None else self.groups[idx],
        )

    def equals(self, other: "UQDataset") -> bool:
        if self.feature_names != other.feature_names:
            return False
        if (self.groups is None) != (other.groups is None):
            return False
        same = np.array_equal(self.errors, other.errors) and np.array_equal(
            self.uncertainties, other.uncertainties
        )
        same = same and all(
            np.array_equal(self.features[k], other.features[k]) for k in self.features
        )
        if self.groups is not None:
            same = same and list(self.groups) == list(other.groups)
        return bool(same)


@dataclass(frozen=True)
class Schema:
    """Column mapping for :func:`load_dataset`.

    Give either ``error`` or both ``reference`` and ``prediction``. When
    ``features`` is empty and ``formula`` is set, features ``X1`` (molecular
    mass) and ``X2`` (heteroatom fraction) are derived from the formulas.
    ``group_from_formula`` labels each row by its O/N composition.
    """

    uncertainty: str = "u"
    error: str | None = None
    reference: str | None = None
    prediction: str | None = None
    features: tuple[str, ...] = ()
    formula: str | None = None
    group: str | None = None
    group_from_formula: bool = False

    def __post_init__(self):
        if self.error is None and (self.reference is None or self.prediction is None):
            raise SchemaError(
                "schema needs an error column or both reference and prediction columns"
            )
        if self.error is not None and (self.reference or self.prediction):
            raise SchemaError("give either an error column or reference/prediction, not both")
        if len(set(self.features)) != len(self.features):
            raise SchemaError(f"duplicate feature names in {self.features}")
        if self.group_from_formula and self.formula is None:
            raise SchemaError("group_from_formula requires a formula column")
        object.__setattr__(self, "features", tuple(self.features))


def _parse_cell(text: str, row: int, col: str) -> float:
    if text.strip() == "":
        raise DataValidationError(f"missing value in row {row}, column {col!r}")
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"non-numeric value {text!r} in row {row}, column {col!r}") from None


def load_dataset(path: str | Path, schema: Schema) -> UQDataset:
    """Read a UTF-8 comma-separated file with a header row.

    Row numbers in error messages count data rows from 1. Rows with missing
    values are rejected rather than dropped.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column names in header")
        rows = list(reader)

    index = {name: i for i, name in enumerate(header)}

    def col(name: str) -> int:
        if name not in index:
            raise SchemaError(f"{path}: missing column {name!r}; header is {header}")
        return index[name]

    numeric = [schema.uncertainty]
    if schema.error is not None:
        numeric.append(schema.error)
    else:
        numeric += [schema.reference, schema.prediction]
    numeric += list(schema.features)
    num_idx = {name: col(name) for name in numeric}
    formula_idx = col(schema.formula) if schema.formula else None
    group_idx = col(schema.group) if schema.group else None

    values = {name: np.empty(len(rows)) for name in numeric}
    formulas: list[Formula] = []
    labels: list[str] = []
    for r, row in enumerate(rows, start=1):
        if not row:
            raise DataValidationError(f"{path}: empty row {r}")
        if len(row) != len(header):
            raise ParseError(
                f"{path}: row {r} has {len(row)} fields, header has {len(header)}"
            )
        for name, i in num_idx.items():
            values[name][r - 1] = _parse_cell(row[i], r, name)
        if formula_idx is not None:
            try:
                formulas.append(parse_formula(row[formula_idx]))
            except ParseError as exc:
                raise ParseError(f"{path}: row {r}, column {schema.formula!r}: {exc}") from None
        if group_idx is not None:
            label = row[group_idx].strip()
            if label == "":
                raise DataValidationError(f"missing value in row {r}, column {schema.group!r}")
            labels.append(label)

    u = values[schema.uncertainty]
    bad = np.flatnonzero(~(u > 0) | ~np.isfinite(u))
    if bad.size:
        raise DataValidationError(
            f"{path}: uncertainty must be positive and finite, got {u[bad[0]]} in row {bad[0] + 1}"
        )
    if schema.error is not None:
        errors = values[schema.error]
    else:
        errors = values[schema.reference] - values[schema.prediction]

    features = {name: values[name] for name in schema.features}
    if not features and formulas:
        features = {
            "X1": np.array([molecular_mass(f) for f in formulas]),
            "X2": np.array([hetero_fraction(f) for f in formulas]),
        }
    groups = None
    if labels:
        groups = np.array(labels, dtype=object)
    elif schema.group_from_formula:
        groups = np.array([composition_group(f) for f in formulas], dtype=object)

    return UQDataset(errors, u, features, groups)


def save_dataset(dataset: UQDataset, path: str | Path, *, error: str = "E",
                 uncertainty: str = "u", group: str = "group") -> Schema:
    """Write ``dataset`` as CSV and return the schema that reads it back."""
    header = [error, uncertainty, *dataset.feature_names]
    if dataset.groups is not None:
        header.append(group)
    cols = [dataset.errors, dataset.uncertainties, *dataset.features.values()]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(dataset.size):
            row = [fmt(c[i]) for c in cols]
            if dataset.groups is not None:
                row.append(str(dataset.groups[i]))
            writer.writerow(row)
    return Schema(
        uncertainty=uncertainty,
        error=error,
        features=dataset.feature_names,
        group=group if dataset.groups is not None else None,
    )


def from_arrays(errors: Sequence[float], uncertainties: Sequence[float],
                **features: Sequence[float]) -> UQDataset:
    return UQDataset(errors, uncertainties, features)
