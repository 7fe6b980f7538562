"""Equal-count, two-dimensional and label-based partitions of a dataset.

Variable partitions sort the binning values (stable sort, so tied values
keep input order and may straddle two bins) and cut the sorted sequence into
runs whose sizes differ by at most one. Edges sit halfway between the last
value of a bin and the first value of the next one, with ``-inf``/``+inf``
sentinels outside, so any new value maps to a bin; values beyond the
training range fall in the extreme bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from bvscal.errors import DataValidationError

VARIABLE = "variable"
TWO_D = "2d"
GROUP = "group"
SCHEMES = (VARIABLE, TWO_D, GROUP)


def bin_sizes(m: int, n_bins: int) -> np.ndarray:
    """Sizes of ``n_bins`` contiguous equal-count runs over ``m`` points."""
    q, r = divmod(m, n_bins)
    return np.array([q + 1] * r + [q] * (n_bins - r), dtype=np.intp)


def rank_bins(values: np.ndarray, n_bins: int) -> np.ndarray:
    """Bin index of every point for an equal-count cut of ``values``."""
    values = np.asarray(values)
    order = np.argsort(values, kind="stable")
    labels = np.repeat(np.arange(n_bins, dtype=np.intp), bin_sizes(values.size, n_bins))
    out = np.empty(values.size, dtype=np.intp)
    out[order] = labels
    return out


def _check_n_bins(m: int, n_bins: int) -> None:
    if n_bins < 1:
        raise ValueError(f"n_bins must be >= 1, got {n_bins}")
    if n_bins > m:
        raise ValueError(f"n_bins ({n_bins}) exceeds the number of points ({m})")


def _finite(values, what="values") -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise DataValidationError(f"{what} must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class BinPartition:
    """Assignment of dataset indices to bins, plus the rule for new points.

    Attributes
    ----------
    scheme : {"variable", "2d", "group"}
    variables : names of the binning variable(s); ``("group",)`` for groups.
    edges : per axis, ``n+1`` nondecreasing boundaries with infinite ends.
    labels : group label of each bin (group scheme only).
    cells : ``(n_bins, 2)`` marginal cell coordinates of each bin (2d only).
    bin_index : training bin of every point, ``-1`` for rejected points;
        ``None`` for a partition restored from JSON.
    """

    scheme: str
    variables: tuple[str, ...]
    edges: tuple[np.ndarray, ...] = ()
    labels: tuple[Any, ...] = ()
    cells: np.ndarray | None = None
    bin_index: np.ndarray | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        for arr in (self.cells, self.bin_index):
            if arr is not None:
                arr.flags.writeable = False
        for e in self.edges:
            e.flags.writeable = False

    @property
    def n_bins(self) -> int:
        if self.scheme == VARIABLE:
            return self.edges[0].size - 1
        if self.scheme == TWO_D:
            return self.cells.shape[0]
        return len(self.labels)

    @property
    def members(self) -> list[np.ndarray]:
        if self.bin_index is None:
            raise ValueError("partition carries no training membership")
        order = np.argsort(self.bin_index, kind="stable")
        counts = np.bincount(self.bin_index[self.bin_index >= 0], minlength=self.n_bins)
        n_rej = int(np.sum(self.bin_index < 0))
        return np.split(order[n_rej:], np.cumsum(counts)[:-1])

    @property
    def rejected(self) -> np.ndarray:
        if self.bin_index is None:
            return np.empty(0, dtype=np.intp)
        return np.flatnonzero(self.bin_index < 0)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.bin_index[self.bin_index >= 0], minlength=self.n_bins)

    def assign(self, *values) -> np.ndarray:
        """Bin of each query point; ``-1`` for unseen group labels.

        Pass one array for variable and group schemes, two for 2d.
        """
        if self.scheme == GROUP:
            (labels,) = values
            lookup = {lab: i for i, lab in enumerate(self.labels)}
            labels = np.asarray(labels, dtype=object).reshape(-1)
            return np.array([lookup.get(str(lab), -1) for lab in labels], dtype=np.intp)
        if len(values) != len(self.edges):
            raise ValueError(f"{self.scheme} partition needs {len(self.edges)} value arrays")
        idx = [
            _locate(edges, _finite(v, f"values of {name!r}"))
            for edges, v, name in zip(self.edges, values, self.variables)
        ]
        if self.scheme == VARIABLE:
            return idx[0]
        return self._cell_lookup(idx[0], idx[1])

    def _cell_lookup(self, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
        n_b = self.edges[1].size - 1
        cell_ids = self.cells[:, 0] * n_b + self.cells[:, 1]
        pos = np.searchsorted(cell_ids, ia * n_b + ib)
        pos = np.minimum(pos, cell_ids.size - 1)
        out = np.where(cell_ids[pos] == ia * n_b + ib, pos, -1)
        for k in np.flatnonzero(out < 0):
            # dropped cell: nearest non-empty cell in marginal-index distance,
            # argmin keeps the lowest bin index on ties
            dist = np.abs(self.cells[:, 0] - ia[k]) + np.abs(self.cells[:, 1] - ib[k])
            out[k] = int(np.argmin(dist))
        return out

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"scheme": self.scheme, "variables": list(self.variables),
                             "n_bins": self.n_bins}
        if self.scheme != GROUP:
            d["edges"] = [e.tolist() for e in self.edges]
        if self.scheme == TWO_D:
            d["cells"] = self.cells.tolist()
        if self.scheme == GROUP:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BinPartition":
        edges = tuple(np.array([float(x) for x in e]) for e in d.get("edges", ()))
        cells = np.array(d["cells"], dtype=np.intp).reshape(-1, 2) if "cells" in d else None
        part = cls(d["scheme"], tuple(d["variables"]), edges, tuple(d.get("labels", ())), cells)
        if part.n_bins != d["n_bins"]:
            raise ValueError(f"n_bins mismatch: stored {d['n_bins']}, edges give {part.n_bins}")
        return part

    def descriptor(self) -> "BinPartition":
        """Copy without training membership."""
        return BinPartition(self.scheme, self.variables, self.edges, self.labels, self.cells)


def _locate(edges: np.ndarray, values: np.ndarray) -> np.ndarray:
    # half-open [lo, hi); the infinite sentinels make the search clamp
    return np.searchsorted(edges[1:-1], values, side="right").astype(np.intp)


def _edges(values: np.ndarray, n_bins: int) -> np.ndarray:
    sorted_v = np.sort(values, kind="stable")
    stops = np.cumsum(bin_sizes(values.size, n_bins))[:-1]
    lo, hi = sorted_v[stops - 1], sorted_v[stops]
    inner = 0.5 * lo + 0.5 * hi
    # the midpoint can round onto lo for adjacent floats; lo must stay left of the edge
    inner = np.where((inner <= lo) & (lo < hi), hi, inner)
    return np.concatenate(([-np.inf], inner, [np.inf]))


def equal_count_partition(values: Sequence[float], n_bins: int, name: str = "u") -> BinPartition:
    """Split points into ``n_bins`` equal-count bins along ``values``.

    ``n_bins=1`` is the single global bin; ``n_bins=len(values)`` puts every
    point in its own bin.
    """
    v = _finite(values)
    _check_n_bins(v.size, n_bins)
    return BinPartition(VARIABLE, (name,), (_edges(v, n_bins),), bin_index=rank_bins(v, n_bins))


def partition_2d(values_a: Sequence[float], values_b: Sequence[float], n_a: int, n_b: int,
                 names: tuple[str, str] = ("a", "b")) -> BinPartition:
    """Cross two marginal equal-count partitions and keep the non-empty cells."""
    a, b = _finite(values_a), _finite(values_b)
    if a.size != b.size:
        raise ValueError("values_a and values_b differ in length")
    _check_n_bins(a.size, n_a)
    _check_n_bins(b.size, n_b)
    ia, ib = rank_bins(a, n_a), rank_bins(b, n_b)
    cell_id = ia * n_b + ib
    present, bin_index = np.unique(cell_id, return_inverse=True)
    cells = np.stack([present // n_b, present % n_b], axis=1).astype(np.intp)
    return BinPartition(TWO_D, tuple(names), (_edges(a, n_a), _edges(b, n_b)),
                        cells=cells, bin_index=bin_index.astype(np.intp).reshape(-1))


def group_partition(labels: Sequence[Any], min_size: int = 1) -> BinPartition:
    """One bin per label with at least ``min_size`` members.

    Points of smaller groups are rejected (``bin_index == -1``) and listed by
    :attr:`BinPartition.rejected`. Bins follow the sorted label order.
    """
    arr = np.asarray(labels, dtype=object).reshape(-1)
    uniq, inverse, counts = np.unique(arr.astype(str), return_inverse=True, return_counts=True)
    keep = counts >= min_size
    if not keep.any():
        raise ValueError(f"no group has at least {min_size} members")
    new_id = np.full(uniq.size, -1, dtype=np.intp)
    new_id[keep] = np.arange(int(keep.sum()))
    return BinPartition(GROUP, ("group",), labels=tuple(str(x) for x in uniq[keep]),
                        bin_index=new_id[inverse.reshape(-1)])


def assign_bin(partition: BinPartition, point) -> int | None:
    """Bin of a single point, or ``None`` for an unseen group label.

    ``point`` is a number (variable scheme), a pair (2d) or a label (group).
    """
    if partition.scheme == TWO_D:
        a, b = point
        return int(partition.assign([a], [b])[0])
    idx = int(partition.assign([point])[0])
    return None if idx < 0 else idx
