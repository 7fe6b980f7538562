"""Confidence curves and plot-ready LZMS tables."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bvscal.data import UNCERTAINTY, UQDataset
from bvscal.validation import DEFAULT_DRAWS, DEFAULT_LEVEL, lzms_intervals

BY_UNCERTAINTY = "by_uncertainty"
ORACLE = "oracle"
CURVE_HEADER = ("fraction", "rms", "variant")
LZMS_HEADER = ("bin_center", "zms", "ci_lo", "ci_hi", "valid")


@dataclass(frozen=True, eq=False)
class ConfidenceCurve:
    fractions: np.ndarray
    rms: np.ndarray
    variant: str

    def rows(self) -> list[tuple]:
        return [(float(f), float(r), self.variant) for f, r in zip(self.fractions, self.rms)]


def pruning_order(dataset: UQDataset, variant: str = BY_UNCERTAINTY) -> np.ndarray:
    """Indices in the order they are pruned: largest key first, ties by index."""
    if variant == BY_UNCERTAINTY:
        key = dataset.uncertainties
    elif variant == ORACLE:
        key = np.abs(dataset.errors)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    # only the ordering of the key matters, so any increasing transform of u
    # gives the same curve
    return np.lexsort((np.arange(dataset.size), -key))


def confidence_curve(dataset: UQDataset, steps: int = 100, variant: str = BY_UNCERTAINTY,
                     max_fraction: float = 0.99, fractions=None) -> ConfidenceCurve:
    """RMS of the errors left after pruning the first ``ceil(k*M)`` points.

    ``variant="oracle"`` prunes by decreasing ``|E|`` instead of ``u``.
    """
    if fractions is None:
        if steps < 2:
            raise ValueError(f"steps must be >= 2, got {steps}")
        fractions = np.linspace(0.0, max_fraction, steps)
    fr = np.asarray(fractions, dtype=float)
    if np.any(np.diff(fr) <= 0) or fr[0] < 0:
        raise ValueError("fractions must be nonnegative and strictly increasing")
    m = dataset.size
    # tolerance keeps k*M from rounding up past an exact integer
    removed = np.array([math.ceil(f * m - 1e-9) for f in fr])
    if removed.max() >= m:
        raise ValueError(f"fraction {fr[-1]} prunes all {m} points")
    e2 = dataset.errors[pruning_order(dataset, variant)] ** 2
    tail = np.cumsum(e2[::-1])[::-1]  # tail[k] = sum of e2 kept after pruning k
    rms = np.sqrt(tail[removed] / (m - removed))
    return ConfidenceCurve(fr, rms, variant)


def lzms_table(dataset: UQDataset, variable: str = UNCERTAINTY, n_score_bins: int = 100,
               draws: int = DEFAULT_DRAWS, seed: int = 0,
               level: float = DEFAULT_LEVEL) -> list[tuple]:
    """Rows ``(bin_center, zms, ci_lo, ci_hi, valid)``; center is the bin median."""
    return [tuple(r) for r in lzms_intervals(dataset, variable, n_score_bins, draws, seed, level)]
