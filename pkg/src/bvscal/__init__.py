"""Binwise variance scaling for regression prediction uncertainties.

Recalibrates per-point uncertainties by multiplying them with one factor per
bin of a binning variable (the uncertainty itself, an input feature, a pair of
them, or categorical groups), and scores the result for average calibration,
consistency and adaptivity.
"""

from bvscal._version import __version__
from bvscal.binning import (
    BinPartition,
    assign_bin,
    equal_count_partition,
    group_partition,
    partition_2d,
)
from bvscal.data import Formula, Schema, UQDataset, load_dataset, save_dataset
from bvscal.errors import (
    BVSError,
    DataError,
    DataValidationError,
    NumericalError,
    ParseError,
    SchemaError,
)
from bvscal.isotonic import IsotonicMap, apply_isotonic, fit_isotonic
from bvscal.metrics import ScoreReport, ence, nll, s_binned, s_cal, score_report, zms
from bvscal.scaling import (
    ScalingModel,
    apply,
    fit_analytic,
    fit_optimized,
    sweep_bins,
    temperature_scale,
)
from bvscal.validation import (
    SimulatedReference,
    ValidationReport,
    fv,
    lzms_intervals,
    simulate_reference,
)


__all__ = [
    "BVSError",
    "BinPartition",
    "DataError",
    "DataValidationError",
    "Formula",
    "IsotonicMap",
    "NumericalError",
    "ParseError",
    "ScalingModel",
    "Schema",
    "SchemaError",
    "ScoreReport",
    "SimulatedReference",
    "UQDataset",
    "ValidationReport",
    "apply",
    "apply_isotonic",
    "assign_bin",
    "ence",
    "equal_count_partition",
    "fit_analytic",
    "fit_isotonic",
    "fit_optimized",
    "fv",
    "group_partition",
    "load_dataset",
    "lzms_intervals",
    "nll",
    "partition_2d",
    "s_binned",
    "s_cal",
    "save_dataset",
    "score_report",
    "simulate_reference",
    "sweep_bins",
    "temperature_scale",
    "zms",
]
