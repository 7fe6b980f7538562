"""Isotonic-regression recalibration baseline.

Squared errors are regressed on the uncertainty with a nondecreasing step
function (pool-adjacent-violators); the calibrated uncertainty is the square
root of the fitted level. Tied uncertainties are averaged before pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bvscal.data import UQDataset
from bvscal.errors import NumericalError


def pava(y, w=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit of the sequence ``y``."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    levels: list[float] = []
    weights: list[float] = []
    sizes: list[int] = []
    for yi, wi in zip(y, w):
        levels.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(levels) > 1 and levels[-2] > levels[-1]:
            wt = weights[-2] + weights[-1]
            lv = (levels[-2] * weights[-2] + levels[-1] * weights[-1]) / wt
            n = sizes[-2] + sizes[-1]
            del levels[-1], weights[-1], sizes[-1]
            levels[-1], weights[-1], sizes[-1] = lv, wt, n
    return np.repeat(levels, sizes)


@dataclass(frozen=True, eq=False)
class IsotonicMap:
    """Step function from uncertainty to calibrated variance."""

    breakpoints: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float).reshape(-1)
        lv = np.array(self.levels, dtype=float).reshape(-1)
        if b.size != lv.size or b.size == 0:
            raise ValueError("breakpoints and levels must be non-empty and of equal length")
        if np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if np.any(np.diff(lv) < 0) or np.any(lv <= 0):
            raise ValueError("levels must be positive and nondecreasing")
        b.flags.writeable = False
        lv.flags.writeable = False
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "levels", lv)

    def __call__(self, u) -> np.ndarray:
        """Calibrated uncertainty; flat beyond the first and last breakpoints."""
        pos = np.searchsorted(self.breakpoints, np.asarray(u, dtype=float), side="right") - 1
        return np.sqrt(self.levels[np.clip(pos, 0, self.levels.size - 1)])

    def to_dict(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "levels": self.levels.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "IsotonicMap":
        return cls(d["breakpoints"], d["levels"])


def fit_isotonic(dataset: UQDataset) -> IsotonicMap:
    e2 = dataset.errors**2
    if not np.any(e2 > 0):
        raise NumericalError("all errors are zero; isotonic variance map is undefined")
    ub, inverse, counts = np.unique(dataset.uncertainties, return_inverse=True, return_counts=True)
    mean_e2 = np.bincount(inverse.reshape(-1), weights=e2) / counts
    fitted = pava(mean_e2, counts)
    # a leading block of exact zeros cannot give a usable uncertainty
    floor = fitted[fitted > 0].min()
    return IsotonicMap(ub, np.maximum(fitted, floor))


def apply_isotonic(mapping: IsotonicMap, dataset: UQDataset) -> UQDataset:
    return dataset.with_uncertainties(mapping(dataset.uncertainties))
