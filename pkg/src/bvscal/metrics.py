"""Calibration scores built on squared z-scores ``Z^2 = (E/u)^2``.

* ``zms``: mean of ``Z^2``; 1 for an average-calibrated set.
* ``s_cal = |ln zms|``.
* ``s_binned``: mean over the bins of a partition of ``|ln ZMS_bin|``.
  Binning on ``u`` measures consistency, binning on input features measures
  adaptivity.
* ``nll``: mean Gaussian negative log-likelihood.
* ``ence``: mean over bins of ``|RMV - RMSE| / RMV``.

:func:`score_report` bins every variable into ``n_score_bins`` equal-count
bins built on the evaluated dataset itself, independently of any binning
used for scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from bvscal.binning import BinPartition, rank_bins
from bvscal.data import UNCERTAINTY, UQDataset
from bvscal.errors import NumericalError

LN_2PI = math.log(2.0 * math.pi)
DEFAULT_N_SCORE_BINS = 100


def _pair(errors, uncertainties) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(errors, dtype=float).reshape(-1)
    u = np.asarray(uncertainties, dtype=float).reshape(-1)
    if e.size != u.size:
        raise ValueError(f"length mismatch: {e.size} errors, {u.size} uncertainties")
    if e.size == 0:
        raise ValueError("empty input")
    return e, u


def zms(errors, uncertainties) -> float:
    e, u = _pair(errors, uncertainties)
    return float(np.mean((e / u) ** 2))


def s_cal(errors, uncertainties) -> float:
    v = zms(errors, uncertainties)
    if v == 0.0:
        raise NumericalError("ZMS is zero (all errors are zero); ln ZMS is undefined")
    return abs(math.log(v))


def nll(errors, uncertainties) -> float:
    e, u = _pair(errors, uncertainties)
    return 0.5 * (float(np.mean((e / u) ** 2)) + float(np.mean(np.log(u**2))) + LN_2PI)


def bin_means(values: np.ndarray, bin_index: np.ndarray, n_bins: int) -> np.ndarray:
    counts = np.bincount(bin_index, minlength=n_bins)
    if np.any(counts == 0):
        raise NumericalError(f"empty bin {int(np.argmin(counts))}")
    return np.bincount(bin_index, weights=values, minlength=n_bins) / counts


def _abs_log_mean(v: np.ndarray) -> float:
    if np.any(v <= 0.0):
        raise NumericalError(
            f"bin {int(np.argmin(v))} has a zero ZMS (all errors zero); ln ZMS is undefined"
        )
    return float(np.mean(np.abs(np.log(v))))


def _ence_from_bins(mse: np.ndarray, mv: np.ndarray) -> float:
    rmv = np.sqrt(mv)
    return float(np.mean(np.abs(rmv - np.sqrt(mse)) / rmv))


def _training_index(partition: BinPartition, m: int) -> np.ndarray:
    if partition.bin_index is None:
        raise ValueError("partition carries no membership")
    if partition.bin_index.size != m:
        raise ValueError(f"partition covers {partition.bin_index.size} points, data has {m}")
    if np.any(partition.bin_index < 0):
        raise ValueError("partition leaves points unassigned; score the retained subset instead")
    return partition.bin_index


def s_binned(errors, uncertainties, partition: BinPartition) -> float:
    e, u = _pair(errors, uncertainties)
    idx = _training_index(partition, e.size)
    return _abs_log_mean(bin_means((e / u) ** 2, idx, partition.n_bins))


def ence(errors, uncertainties, partition: BinPartition) -> float:
    e, u = _pair(errors, uncertainties)
    idx = _training_index(partition, e.size)
    return _ence_from_bins(bin_means(e**2, idx, partition.n_bins),
                           bin_means(u**2, idx, partition.n_bins))


@dataclass
class ScoreReport:
    nll: float
    s_cal: float
    s_per_variable: dict[str, float]
    s_con: float
    s_ada: float
    s_tot: float
    ence_per_variable: dict[str, float]
    n_score_bins: int
    zms_global: float
    features: tuple[str, ...] = field(default=())

    @property
    def s_u(self) -> float:
        return self.s_per_variable[UNCERTAINTY]

    def to_dict(self) -> dict:
        d: dict = {"nll": self.nll, "s_cal": self.s_cal, "s_u": self.s_u}
        for name in self.features:
            d[f"s_x.{name}"] = self.s_per_variable[name]
        d.update(s_con=self.s_con, s_ada=self.s_ada, s_tot=self.s_tot)
        for name, v in self.ence_per_variable.items():
            d[f"ence.{name}"] = v
        d.update(zms_global=self.zms_global, n_score_bins=self.n_score_bins)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScoreReport":
        feats = tuple(k[4:] for k in d if k.startswith("s_x."))
        s = {UNCERTAINTY: float(d["s_u"])}
        s.update({k: float(d[f"s_x.{k}"]) for k in feats})
        ence_ = {k[5:]: float(v) for k, v in d.items() if k.startswith("ence.")}
        return cls(float(d["nll"]), float(d["s_cal"]), s, float(d["s_con"]), float(d["s_ada"]),
                   float(d["s_tot"]), ence_, int(d["n_score_bins"]), float(d["zms_global"]), feats)


def combine(s_cal_value: float, s_values: Mapping[str, float], variables: Sequence[str]) -> float:
    """``s_cal`` plus the ``S_x`` of ``variables``, summed in a fixed order."""
    total = s_cal_value
    for name in variables:
        total += s_values[name]
    return total


class ScoreContext:
    """Score partitions of fixed feature columns, reused across many calls.

    Feature bins depend only on the features, so they are built once. The
    ``u`` bins follow the uncertainties being scored and are rebuilt per call
    unless ``u_bins`` is supplied.
    """

    def __init__(self, features: Mapping[str, np.ndarray], n_score_bins: int = DEFAULT_N_SCORE_BINS,
                 feature_names: Sequence[str] | None = None):
        if n_score_bins < 1:
            raise ValueError("n_score_bins must be >= 1")
        names = tuple(features) if feature_names is None else tuple(feature_names)
        self.feature_bins: dict[str, np.ndarray] = {}
        for name in names:
            col = np.asarray(features[name], dtype=float)
            m = col.size
            if n_score_bins > m:
                raise ValueError(f"n_score_bins ({n_score_bins}) exceeds the number of points ({m})")
            self.feature_bins[name] = rank_bins(col, n_score_bins)
        self.features = names
        self.n_score_bins = n_score_bins

    def u_bins(self, u: np.ndarray) -> np.ndarray:
        if self.n_score_bins > u.size:
            raise ValueError(f"n_score_bins ({self.n_score_bins}) exceeds the number of points ({u.size})")
        return rank_bins(u, self.n_score_bins)

    def s_components(self, e2: np.ndarray, u: np.ndarray, u_bins: np.ndarray | None = None,
                     variables: Sequence[str] | None = None) -> tuple[float, dict[str, float]]:
        """``s_cal`` and per-variable ``S_x`` for squared errors ``e2``."""
        z2 = e2 / u**2
        v = float(np.mean(z2))
        if v == 0.0:
            raise NumericalError("ZMS is zero (all errors are zero); ln ZMS is undefined")
        scal = abs(math.log(v))
        wanted = (UNCERTAINTY, *self.features) if variables is None else tuple(variables)
        out = {}
        for name in wanted:
            if name == UNCERTAINTY:
                idx = self.u_bins(u) if u_bins is None else u_bins
            else:
                idx = self.feature_bins[name]
            out[name] = _abs_log_mean(bin_means(z2, idx, self.n_score_bins))
        return scal, out

    def report(self, errors: np.ndarray, u: np.ndarray, u_bins: np.ndarray | None = None) -> ScoreReport:
        e2 = errors**2
        idx_u = self.u_bins(u) if u_bins is None else u_bins
        scal, s = self.s_components(e2, u, idx_u)
        n = self.n_score_bins
        mv_u = u**2
        ence_ = {}
        for name in (UNCERTAINTY, *self.features):
            idx = idx_u if name == UNCERTAINTY else self.feature_bins[name]
            ence_[name] = _ence_from_bins(bin_means(e2, idx, n), bin_means(mv_u, idx, n))
        return ScoreReport(
            nll=nll(errors, u),
            s_cal=scal,
            s_per_variable=s,
            s_con=combine(scal, s, (UNCERTAINTY,)),
            s_ada=combine(scal, s, self.features),
            s_tot=combine(scal, s, (UNCERTAINTY, *self.features)),
            ence_per_variable=ence_,
            n_score_bins=n,
            zms_global=float(np.mean(e2 / mv_u)),
            features=self.features,
        )


def score_report(dataset: UQDataset, feature_names: Sequence[str] | None = None,
                 n_score_bins: int = DEFAULT_N_SCORE_BINS) -> ScoreReport:
    """All scores of ``dataset``; features default to every dataset feature."""
    ctx = ScoreContext(dataset.features, n_score_bins, feature_names)
    return ctx.report(dataset.errors, dataset.uncertainties)
