"""Binwise variance scaling (BVS).

Points are partitioned into bins; every uncertainty in bin ``i`` is
multiplied by ``s_i``. Scaling ``u`` by ``s`` divides the ZMS by ``s**2``, so
the analytic factors ``s_i = ZMS_i ** 0.5`` make the ZMS of each training bin
exactly 1; they also minimize the training NLL. Factors can
instead be tuned to minimize an ``S``-score loss (``S_tot``, ``S_con`` or
``S_ada``): a population-based global search in log-factor space, started
from the analytic factors, followed by Nelder-Mead refinement. If that does
not strictly improve the loss, the analytic factors are kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import optimize

from bvscal._io import read_json, write_json
from bvscal._rng import generator
from bvscal._version import __version__
from bvscal.binning import GROUP, BinPartition, equal_count_partition
from bvscal.data import UNCERTAINTY, UQDataset
from bvscal.errors import DataValidationError, NumericalError
from bvscal.metrics import DEFAULT_N_SCORE_BINS, ScoreContext, ScoreReport, combine, nll, score_report

log = logging.getLogger(__name__)

NLL = "NLL"
S_TOT = "S_tot"
S_CON = "S_con"
S_ADA = "S_ada"
LOSSES = (NLL, S_TOT, S_CON, S_ADA)
MODEL_VERSION = 1
LOG_BOUND = 2.0


def binning_values(partition: BinPartition, dataset: UQDataset) -> tuple:
    if partition.scheme == GROUP:
        if dataset.groups is None:
            raise DataValidationError("group-binned model needs group labels in the dataset")
        return (dataset.groups,)
    return tuple(dataset.variable(name) for name in partition.variables)


@dataclass(frozen=True, eq=False)
class ScalingModel:
    """Fitted per-bin multiplicative factors for uncertainties."""

    partition: BinPartition
    factors: np.ndarray
    loss: str = NLL
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        f = np.array(self.factors, dtype=float).reshape(-1)
        if f.size != self.partition.n_bins:
            raise ValueError(f"{f.size} factors for {self.partition.n_bins} bins")
        if not np.all(np.isfinite(f) & (f > 0)):
            raise ValueError("scaling factors must be positive and finite")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        f.flags.writeable = False
        object.__setattr__(self, "factors", f)

    @property
    def n_bins(self) -> int:
        return self.partition.n_bins

    def point_factors(self, dataset: UQDataset, strict: bool = True) -> np.ndarray:
        """Factor for every point of ``dataset``.

        Points whose group label the model has not seen get factor 1, or raise
        :class:`DataValidationError` when ``strict``.
        """
        idx = self.partition.assign(*binning_values(self.partition, dataset))
        unseen = idx < 0
        if unseen.any():
            if strict:
                labels = sorted({str(g) for g in dataset.groups[unseen]})
                raise DataValidationError(f"group labels unknown to the model: {labels}")
            return np.where(unseen, 1.0, self.factors[np.maximum(idx, 0)])
        return self.factors[idx]

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "loss": self.loss,
            "partition": self.partition.to_dict(),
            "factors": self.factors.tolist(),
            "seed": self.provenance.get("seed"),
            "provenance": {k: v for k, v in self.provenance.items() if k != "seed"},
            "creator": f"bvscal {__version__}",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingModel":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        prov = dict(d.get("provenance", {}))
        prov["seed"] = d.get("seed")
        return cls(BinPartition.from_dict(d["partition"]), np.array(d["factors"], dtype=float),
                   d["loss"], prov)

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "ScalingModel":
        return cls.from_dict(read_json(path))


def _retained(dataset: UQDataset, partition: BinPartition) -> tuple[UQDataset, np.ndarray]:
    if partition.bin_index is None:
        raise ValueError("partition carries no training membership")
    if partition.bin_index.size != dataset.size:
        raise ValueError(f"partition covers {partition.bin_index.size} points, dataset has {dataset.size}")
    keep = partition.bin_index >= 0
    if keep.all():
        return dataset, partition.bin_index
    return dataset.subset(np.flatnonzero(keep)), partition.bin_index[keep]


def fit_analytic(dataset: UQDataset, partition: BinPartition) -> ScalingModel:
    """Factors ``ZMS_bin ** 0.5`` on the partition's training membership."""
    data, idx = _retained(dataset, partition)
    n = partition.n_bins
    counts = np.bincount(idx, minlength=n)
    if np.any(counts == 0):
        raise NumericalError(f"bin {int(np.argmin(counts))} is empty")
    v = np.bincount(idx, weights=data.z2, minlength=n) / counts
    zero = np.flatnonzero(v == 0.0)
    if zero.size:
        raise NumericalError(f"bin {zero[0]} has zero ZMS (all errors zero); no scaling factor exists")
    return ScalingModel(partition.descriptor(), np.sqrt(v), NLL,
                        {"n_train": data.size, "method": "analytic"})


def apply(model: ScalingModel, dataset: UQDataset, strict: bool = True) -> UQDataset:
    """Scale the uncertainties of ``dataset`` by the factor of each point's bin."""
    return dataset.with_uncertainties(dataset.uncertainties * model.point_factors(dataset, strict))


def apply_training(model: ScalingModel, dataset: UQDataset, partition: BinPartition) -> UQDataset:
    """Scale the training set using its recorded membership.

    Unlike :func:`apply`, this keeps tied binning values in the bin they were
    fitted in, and drops points the partition rejected.
    """
    data, idx = _retained(dataset, partition)
    if partition.n_bins != model.n_bins:
        raise ValueError("model and partition differ in bin count")
    return data.with_uncertainties(data.uncertainties * model.factors[idx])


def temperature_scale(dataset: UQDataset) -> ScalingModel:
    """Single global factor restoring ``<Z^2> = 1``."""
    return fit_analytic(dataset, equal_count_partition(dataset.uncertainties, 1, UNCERTAINTY))


class LossFunction:
    """Loss of the scaled training set as a function of the log-factors."""

    def __init__(self, dataset: UQDataset, bin_index: np.ndarray, loss: str,
                 feature_names: Sequence[str] | None = None,
                 n_score_bins: int = DEFAULT_N_SCORE_BINS):
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}; expected one of {LOSSES}")
        self.loss = loss
        self.errors = dataset.errors
        self.e2 = dataset.errors**2
        self.u = dataset.uncertainties
        self.bin_index = bin_index
        self.n_evals = 0
        feats = dataset.feature_names if feature_names is None else tuple(feature_names)
        if loss == S_ADA and not feats:
            raise ValueError("the S_ada loss needs at least one feature")
        if loss == S_CON:
            self.variables: tuple[str, ...] = (UNCERTAINTY,)
        elif loss == S_ADA:
            self.variables = tuple(feats)
        else:
            self.variables = (UNCERTAINTY, *feats)
        self.ctx = None
        if loss != NLL:
            self.ctx = ScoreContext(dataset.features, n_score_bins,
                                    [v for v in self.variables if v != UNCERTAINTY])

    def scaled(self, log_factors: np.ndarray) -> np.ndarray:
        return self.u * np.exp(log_factors)[self.bin_index]

    def __call__(self, log_factors: np.ndarray) -> float:
        self.n_evals += 1
        u = self.scaled(np.asarray(log_factors, dtype=float))
        if self.loss == NLL:
            return nll(self.errors, u)
        scal, s = self.ctx.s_components(self.e2, u, variables=self.variables)
        return combine(scal, s, self.variables)


def fit_optimized(dataset: UQDataset, partition: BinPartition, loss: str = S_TOT,
                  feature_names: Sequence[str] | None = None,
                  n_score_bins: int = DEFAULT_N_SCORE_BINS, maxiter: int = 30,
                  popsize: int = 10, seed: int = 0) -> ScalingModel:
    """Factors minimizing ``loss`` on the scaled training set.

    Parameters
    ----------
    maxiter, popsize : budget of the global search (generations, and
        population members per factor). The local search stops when the
        relative loss change falls below 1e-8 or after ``10 * n_bins**2``
        evaluations.

    The model's ``provenance`` records the initial and final losses, whether
    the analytic start was kept, and ``converged=False`` when a budget ran
    out before convergence.
    """
    init = fit_analytic(dataset, partition)
    data, idx = _retained(dataset, partition)
    fun = LossFunction(data, idx, loss, feature_names, n_score_bins)
    theta0 = np.log(init.factors)
    f0 = fun(theta0)
    n = theta0.size
    bounds = optimize.Bounds(theta0 - LOG_BOUND, theta0 + LOG_BOUND)

    de = optimize.differential_evolution(
        fun, bounds, x0=theta0, maxiter=maxiter, popsize=popsize, tol=1e-8,
        polish=False, init="latinhypercube", rng=generator(seed, 0),
    )
    max_local = 10 * n * n
    local = optimize.minimize(
        fun, de.x, method="Nelder-Mead", bounds=bounds,
        options={"maxfev": max_local, "fatol": 1e-8 * max(abs(de.fun), 1e-300),
                 "xatol": np.inf},
    )
    best_x, best_f = (local.x, float(local.fun)) if local.fun < de.fun else (de.x, float(de.fun))
    kept = not best_f < f0
    factors = init.factors if kept else np.exp(best_x)
    converged = bool(de.success) and local.nfev < max_local
    if not converged:
        log.info("optimizer budget exhausted for loss %s with %d bins; returning best so far",
                    loss, n)
    prov = {
        "n_train": data.size,
        "method": "optimized",
        "seed": seed,
        "loss_initial": f0,
        "loss_final": f0 if kept else best_f,
        "kept_initial": kept,
        "converged": converged,
        "evaluations": fun.n_evals,
        "n_score_bins": n_score_bins,
        "score_variables": list(fun.variables),
    }
    return ScalingModel(partition.descriptor(), factors, loss, prov)


def fit(dataset: UQDataset, partition: BinPartition, loss: str = NLL, **kwargs) -> ScalingModel:
    """Analytic factors for ``NLL`` unless ``optimize_nll`` is set, else optimized."""
    optimize_nll = kwargs.pop("optimize_nll", False)
    if loss == NLL and not optimize_nll:
        model = fit_analytic(dataset, partition)
        model.provenance["seed"] = kwargs.get("seed", 0)
        return model
    return fit_optimized(dataset, partition, loss, **kwargs)


@dataclass
class SweepRow:
    n_bins: int
    scores: ScoreReport
    fv: dict[str, tuple[float, float, float]]


def sweep_bins(train: UQDataset, test: UQDataset, bin_range: Iterable[int], loss: str = NLL,
               variable: str = UNCERTAINTY, feature_names: Sequence[str] | None = None,
               n_score_bins: int = DEFAULT_N_SCORE_BINS, seed: int = 0, draws: int = 1500,
               level: float = 0.95, **fit_kwargs) -> list[SweepRow]:
    """Fit on ``train`` for each bin count and score the scaled ``test`` set.

    ``draws=0`` skips the bootstrap ``f_v`` statistics. Each bin count draws
    from its own seed stream, so rows do not depend on the range.
    """
    from bvscal.validation import validate

    rows = []
    m = train.size
    for n_b in bin_range:
        if not 1 <= n_b <= m:
            raise ValueError(f"bin count {n_b} outside [1, {m}]")
        part = equal_count_partition(train.variable(variable), n_b, variable)
        row_seed = int(np.random.SeedSequence(seed, spawn_key=(n_b,)).generate_state(1)[0])
        model = fit(train, part, loss, feature_names=feature_names, n_score_bins=n_score_bins,
                    seed=row_seed, **fit_kwargs)
        scaled = apply(model, test)
        scores = score_report(scaled, feature_names, n_score_bins)
        fvs = {}
        if draws:
            rep = validate(scaled, (UNCERTAINTY, *scores.features), n_score_bins, draws, row_seed, level)
            fvs = {k: tuple(v) for k, v in rep.fv.items()}
        rows.append(SweepRow(n_b, scores, fvs))
        log.info("n_bins=%d nll=%.4f s_tot=%.4f", n_b, scores.nll, scores.s_tot)
    return rows


def sweep_table(rows: Sequence[SweepRow]) -> tuple[list[str], list[list]]:
    """Header and rows for writing a sweep as CSV."""
    if not rows:
        return ["n_bins"], []
    score_keys = [k for k in rows[0].scores.to_dict() if k != "n_score_bins"]
    fv_keys = list(rows[0].fv)
    header = ["n_bins", *score_keys]
    for k in fv_keys:
        header += [f"fv.{k}", f"fv_lo.{k}", f"fv_hi.{k}"]
    out = []
    for r in rows:
        d = r.scores.to_dict()
        line = [r.n_bins, *(d[k] for k in score_keys)]
        for k in fv_keys:
            line += list(r.fv[k])
        out.append(line)
    return header, out
