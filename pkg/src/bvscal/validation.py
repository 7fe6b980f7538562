"""Bootstrap intervals on local ZMS values and simulated score targets.

For each equal-count bin of a variable, the ZMS of the bin gets a BCa
bootstrap interval from resampling the bin's ``Z^2`` values. A bin is
*valid* when its interval contains 1, and ``f_v`` is the fraction of valid
bins, reported with an exact binomial (Clopper-Pearson) interval.

Perfect calibration does not give zero ``S_x`` or ENCE on a finite sample.
:func:`simulate_reference` estimates the attainable values by redrawing
pseudo-errors ``E ~ N(0, u)`` for the same uncertainties and rescoring.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from bvscal._rng import generator
from bvscal.binning import rank_bins
from bvscal.data import UNCERTAINTY, UQDataset
from bvscal.metrics import DEFAULT_N_SCORE_BINS, ScoreContext

DEFAULT_DRAWS = 1500
DEFAULT_LEVEL = 0.95
MIN_BIN_SIZE = 5
ACCEL_FLOOR = 1e-12


class Interval(NamedTuple):
    lo: float
    hi: float


class BinInterval(NamedTuple):
    center: float
    zms: float
    lo: float
    hi: float
    valid: bool


class Fv(NamedTuple):
    fraction: float
    lo: float
    hi: float


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def bca_from_replicates(estimate: float, replicates: np.ndarray, jackknife: np.ndarray,
                        level: float = DEFAULT_LEVEL) -> Interval:
    """BCa interval from bootstrap replicates and leave-one-out estimates.

    The bias correction comes from the fraction of replicates below
    ``estimate``, the acceleration from the skewness of the jackknife values.
    When the acceleration denominator vanishes, the plain percentile interval
    is returned.
    """
    reps = np.asarray(replicates, dtype=float)
    jack = np.asarray(jackknife, dtype=float)
    alpha = 0.5 * (1.0 - level)
    d = jack.mean() - jack
    denom = 6.0 * float(np.sum(d**2)) ** 1.5
    if denom < ACCEL_FLOOR:
        q = np.quantile(reps, [alpha, 1.0 - alpha])
        return Interval(float(q[0]), float(q[1]))
    b = reps.size
    # keep z0 finite when every replicate falls on one side
    p = min(max(float(np.mean(reps < estimate)), 0.5 / b), 1.0 - 0.5 / b)
    z0 = stats.norm.ppf(p)
    a = float(np.sum(d**3)) / denom
    zq = stats.norm.ppf([alpha, 1.0 - alpha])
    adj = stats.norm.cdf(z0 + (z0 + zq) / (1.0 - a * (z0 + zq)))
    q = np.quantile(reps, adj)
    return Interval(float(q[0]), float(q[1]))


def percentile_from_replicates(replicates: np.ndarray, level: float = DEFAULT_LEVEL) -> Interval:
    alpha = 0.5 * (1.0 - level)
    q = np.quantile(np.asarray(replicates, dtype=float), [alpha, 1.0 - alpha])
    return Interval(float(q[0]), float(q[1]))


def bootstrap_mean_ci(values: np.ndarray, draws: int, rng: np.random.Generator,
                      level: float = DEFAULT_LEVEL) -> Interval:
    """BCa interval for the mean of ``values``."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < MIN_BIN_SIZE:
        raise ValueError(f"bin of size {n} is too small for a bootstrap interval (< {MIN_BIN_SIZE})")
    if np.all(x == x[0]):
        return Interval(float(x[0]), float(x[0]))
    reps = x[rng.integers(0, n, size=(draws, n))].mean(axis=1)
    jack = (x.sum() - x) / (n - 1)
    return bca_from_replicates(float(x.mean()), reps, jack, level)


def clopper_pearson(k: int, n: int, level: float = DEFAULT_LEVEL) -> Interval:
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="exact")
    return Interval(float(ci.low), float(ci.high))


def _check_bin_size(m: int, n_score_bins: int) -> None:
    if m / n_score_bins < math.sqrt(m) / 2:
        warnings.warn(
            f"bins of about {m / n_score_bins:.0f} points are small for M={m}; "
            f"about sqrt(M)={math.sqrt(m):.0f} points per bin is advisable",
            stacklevel=3,
        )


def lzms_intervals(dataset: UQDataset, variable: str = UNCERTAINTY,
                   n_score_bins: int = DEFAULT_N_SCORE_BINS, draws: int = DEFAULT_DRAWS,
                   seed: int = 0, level: float = DEFAULT_LEVEL) -> list[BinInterval]:
    """Local ZMS with a BCa interval for each equal-count bin of ``variable``.

    Bins are ordered by increasing ``variable``; ``center`` is the median of
    the variable within the bin. Each bin draws from its own random stream.
    """
    if draws < 100:
        raise ValueError(f"draws must be >= 100, got {draws}")
    x = dataset.variable(variable)
    if n_score_bins > x.size:
        raise ValueError(f"n_score_bins ({n_score_bins}) exceeds the number of points ({x.size})")
    _check_bin_size(x.size, n_score_bins)
    bins = rank_bins(x, n_score_bins)
    z2 = dataset.z2
    order = np.argsort(bins, kind="stable")
    splits = np.split(order, np.cumsum(np.bincount(bins, minlength=n_score_bins))[:-1])
    key = _stream_key(variable)
    rows = []
    for i, members in enumerate(splits):
        z = z2[members]
        lo, hi = bootstrap_mean_ci(z, draws, generator(seed, key, i), level)
        rows.append(BinInterval(float(np.median(x[members])), float(z.mean()), lo, hi,
                                bool(lo <= 1.0 <= hi)))
    return rows


def fv_from_intervals(rows: Sequence[BinInterval], level: float = DEFAULT_LEVEL) -> Fv:
    k = sum(r.valid for r in rows)
    n = len(rows)
    lo, hi = clopper_pearson(k, n, level)
    return Fv(k / n, lo, hi)


def fv(dataset: UQDataset, variable: str = UNCERTAINTY, n_score_bins: int = DEFAULT_N_SCORE_BINS,
       draws: int = DEFAULT_DRAWS, seed: int = 0, level: float = DEFAULT_LEVEL) -> Fv:
    """Fraction of bins whose ZMS interval contains 1, with its binomial interval."""
    return fv_from_intervals(lzms_intervals(dataset, variable, n_score_bins, draws, seed, level), level)


@dataclass
class ValidationReport:
    per_variable: dict[str, list[BinInterval]]
    fv: dict[str, Fv]
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "settings": self.settings,
            "fv": {k: v._asdict() for k, v in self.fv.items()},
            "lzms": {k: [r._asdict() for r in rows] for k, rows in self.per_variable.items()},
        }


def validate(dataset: UQDataset, variables: Sequence[str] | None = None,
             n_score_bins: int = DEFAULT_N_SCORE_BINS, draws: int = DEFAULT_DRAWS,
             seed: int = 0, level: float = DEFAULT_LEVEL) -> ValidationReport:
    """LZMS intervals and ``f_v`` for ``u`` and every feature (by default)."""
    names = (UNCERTAINTY, *dataset.feature_names) if variables is None else tuple(variables)
    per = {name: lzms_intervals(dataset, name, n_score_bins, draws, seed, level) for name in names}
    return ValidationReport(
        per_variable=per,
        fv={name: fv_from_intervals(rows, level) for name, rows in per.items()},
        settings={"n_score_bins": n_score_bins, "draws": draws, "level": level, "seed": seed},
    )


@dataclass
class SimulatedReference:
    """Score statistics over datasets with simulated, perfectly calibrated errors."""

    replicates: int
    mean: dict[str, float]
    sd: dict[str, float]
    interval: dict[str, Interval]
    fv: dict[str, Fv] = field(default_factory=dict)
    fv_replicates: int = 0
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "replicates": self.replicates,
            "settings": self.settings,
            "mean": self.mean,
            "sd": self.sd,
            "interval": {k: list(v) for k, v in self.interval.items()},
            "fv_replicates": self.fv_replicates,
            "fv": {k: v._asdict() for k, v in self.fv.items()},
        }


def pseudo_errors(uncertainties: np.ndarray, seed: int, replicate: int) -> np.ndarray:
    u = np.asarray(uncertainties, dtype=float)
    return generator(seed, 1, replicate).normal(0.0, 1.0, size=u.size) * u


def simulate_reference(uncertainties: Sequence[float], features: Mapping[str, Sequence[float]] | None = None,
                       n_score_bins: int = DEFAULT_N_SCORE_BINS, replicates: int = 1000, seed: int = 0,
                       fv_replicates: int = 0, draws: int = DEFAULT_DRAWS,
                       level: float = DEFAULT_LEVEL) -> SimulatedReference:
    """Score floors for the given uncertainties and features.

    Each replicate draws ``E ~ N(0, u)`` and computes the full score report.
    The first ``fv_replicates`` replicates also get ``f_v`` statistics, whose
    mean and central ``level`` interval across replicates are reported.

    The simulated NLL is only a reference: because the errors are replaced,
    it can exceed the NLL of the actual data.
    """
    if replicates < 2:
        raise ValueError(f"replicates must be >= 2, got {replicates}")
    if replicates < 100:
        warnings.warn(f"only {replicates} replicates; simulated references will be noisy",
                      stacklevel=2)
    u = np.asarray(uncertainties, dtype=float)
    feats = {k: np.asarray(v, dtype=float) for k, v in (features or {}).items()}
    ctx = ScoreContext(feats, n_score_bins)
    u_bins = ctx.u_bins(u)
    rows = []
    fv_rows: dict[str, list[float]] = {}
    for r in range(replicates):
        e = pseudo_errors(u, seed, r)
        rows.append(ctx.report(e, u, u_bins).to_dict())
        if r < fv_replicates:
            ds = UQDataset(e, u, feats)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                rep = validate(ds, None, n_score_bins, draws, seed + r + 1, level)
            for name, f in rep.fv.items():
                fv_rows.setdefault(name, []).append(f.fraction)
    keys = [k for k in rows[0] if k != "n_score_bins"]
    table = {k: np.array([row[k] for row in rows]) for k in keys}
    alpha = 0.5 * (1.0 - level)
    fv_stats = {}
    for name, vals in fv_rows.items():
        q = np.quantile(vals, [alpha, 1.0 - alpha])
        fv_stats[name] = Fv(float(np.mean(vals)), float(q[0]), float(q[1]))
    return SimulatedReference(
        replicates=replicates,
        mean={k: float(v.mean()) for k, v in table.items()},
        sd={k: float(v.std(ddof=1)) for k, v in table.items()},
        interval={k: Interval(*map(float, np.quantile(v, [alpha, 1.0 - alpha])))
                  for k, v in table.items()},
        fv=fv_stats,
        fv_replicates=min(fv_replicates, replicates),
        settings={"n_score_bins": n_score_bins, "seed": seed, "draws": draws, "level": level},
    )
