"""Per-outlet, per-time-slot running mean and variance of consumption."""

from __future__ import annotations

from typing import Optional, TextIO

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

SECONDS_PER_DAY = 86400
METRICS = ("variance", "variance_over_mean")


class ColdStart(LookupError):
    """No observations recorded for the requested (outlet, slot)."""


def slot_of(time, slots_per_day: int = 48):
    """Slot index of a time in seconds; multi-day times wrap at midnight.

    Works on scalars and arrays. The last slot absorbs any remainder when
    86400 is not a multiple of ``slots_per_day``.
    """
    if slots_per_day <= 0:
        raise ValueError("slots_per_day must be positive")
    width = SECONDS_PER_DAY // slots_per_day
    t = np.mod(time, SECONDS_PER_DAY)
    idx = np.minimum(np.floor_divide(t, width), slots_per_day - 1).astype(int)
    return int(idx) if np.ndim(idx) == 0 else idx


class SlotStatistics(BaseEstimator):
    """Running population mean/variance keyed by (outlet, slot of day).

    ``X`` holds rows of ``(time_s, outlet)``, ``y`` the observed watts.
    Batches are merged with the pairwise (Chan et al.) update, single
    observations with Welford's recurrence, so the result does not depend
    on how the data was chunked.
    """

    def __init__(self, slots_per_day: int = 48, n_outlets: Optional[int] = None):
        self.slots_per_day = slots_per_day
        self.n_outlets = n_outlets

    def _init_state(self, n_outlets: int) -> None:
        shape = (n_outlets, self.slots_per_day)
        self.count_ = np.zeros(shape, dtype=np.int64)
        self.mean_ = np.zeros(shape)
        self.m2_ = np.zeros(shape)
        self.max_ = np.zeros(shape)

    def _grow(self, n_outlets: int) -> None:
        if not hasattr(self, "count_"):
            self._init_state(max(n_outlets, self.n_outlets or 0))
            return
        extra = n_outlets - self.count_.shape[0]
        if extra > 0:
            pad = ((0, extra), (0, 0))
            self.count_ = np.pad(self.count_, pad)
            self.mean_ = np.pad(self.mean_, pad)
            self.m2_ = np.pad(self.m2_, pad)
            self.max_ = np.pad(self.max_, pad)

    def fit(self, X, y):
        for attr in ("count_", "mean_", "m2_", "max_"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X, y)

    def partial_fit(self, X, y):
        X = check_array(X, ensure_2d=True, dtype=float, ensure_min_samples=0)
        y = check_array(y, ensure_2d=False, dtype=float, ensure_min_samples=0)
        if X.shape[1] != 2:
            raise ValueError("X must have two columns: time_s, outlet")
        if X.shape[0] != y.shape[0]:
            raise ValueError("X and y have different lengths")
        if np.any(y < 0):
            raise ValueError("observed watts must be >= 0")
        outlets = X[:, 1].astype(int)
        if np.any(outlets < 0):
            raise ValueError("outlet ids must be non-negative")
        self._grow(int(outlets.max()) + 1 if outlets.size else (self.n_outlets or 0))
        if y.size == 0:
            return self
        slots = slot_of(X[:, 0], self.slots_per_day)
        n_cells = self.slots_per_day
        cell = outlets * n_cells + slots
        size = self.count_.size
        nb = np.bincount(cell, minlength=size)
        sb = np.bincount(cell, weights=y, minlength=size)
        mb = np.divide(sb, nb, out=np.zeros(size), where=nb > 0)
        dev = y - mb[cell]
        m2b = np.bincount(cell, weights=dev * dev, minlength=size)
        mx = np.zeros(size)
        np.maximum.at(mx, cell, y)
        self._merge_arrays(nb.reshape(self.count_.shape), mb.reshape(self.count_.shape),
                           m2b.reshape(self.count_.shape), mx.reshape(self.count_.shape))
        return self

    def partial_fit_series(self, t0: float, dt: float, values) -> "SlotStatistics":
        """Merge a uniform-grid block: ``values[o, j]`` observed at ``t0 + j*dt``."""
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if np.any(values < 0):
            raise ValueError("observed watts must be >= 0")
        n_out, n = values.shape
        self._grow(n_out)
        if n == 0:
            return self
        slots = slot_of(t0 + dt * np.arange(n) + 1e-9, self.slots_per_day)
        shape = (n_out, self.slots_per_day)
        nb = np.zeros(shape, dtype=np.int64)
        mb = np.zeros(shape)
        m2b = np.zeros(shape)
        mxb = np.zeros(shape)
        # slot indices are non-decreasing inside a day, so split on runs
        cuts = np.flatnonzero(np.diff(slots)) + 1
        for block, s in zip(np.split(values, cuts, axis=1), slots[np.r_[0, cuts]]):
            cnt = block.shape[1]
            mean = block.mean(axis=1)
            m2 = ((block - mean[:, None]) ** 2).sum(axis=1)
            # the same slot can recur (next day); fold it in pairwise
            na = nb[:, s]
            tot = na + cnt
            delta = mean - mb[:, s]
            mb[:, s] = mb[:, s] + delta * cnt / tot
            m2b[:, s] = m2b[:, s] + m2 + delta * delta * na * cnt / tot
            mxb[:, s] = np.maximum(mxb[:, s], block.max(axis=1))
            nb[:, s] = tot
        self._merge_arrays(nb, mb, m2b, mxb)
        return self

    def _merge_arrays(self, nb, mb, m2b, mxb) -> None:
        na = self.count_
        n = na + nb
        nz = n > 0
        delta = mb - self.mean_
        frac = np.divide(nb, n, out=np.zeros(n.shape), where=nz)
        self.mean_ = np.where(nz, self.mean_ + delta * frac, 0.0)
        self.m2_ = self.m2_ + m2b + np.where(nz, delta * delta * na * frac, 0.0)
        self.max_ = np.maximum(self.max_, mxb)
        self.count_ = n

    def record(self, outlet: int, time: float, watts: float) -> "SlotStatistics":
        if watts < 0:
            raise ValueError(f"observed watts must be >= 0, got {watts}")
        self._grow(outlet + 1)
        s = slot_of(time, self.slots_per_day)
        n = self.count_[outlet, s] + 1
        delta = watts - self.mean_[outlet, s]
        self.mean_[outlet, s] += delta / n
        self.m2_[outlet, s] += delta * (watts - self.mean_[outlet, s])
        self.max_[outlet, s] = max(self.max_[outlet, s], watts)
        self.count_[outlet, s] = n
        return self

    def merge(self, other: "SlotStatistics") -> "SlotStatistics":
        if other.slots_per_day != self.slots_per_day:
            raise ValueError("cannot merge statistics on different slot grids")
        check_is_fitted(other, "count_")
        self._grow(other.count_.shape[0])
        pad = self.count_.shape[0] - other.count_.shape[0]
        p = ((0, pad), (0, 0))
        self._merge_arrays(np.pad(other.count_, p), np.pad(other.mean_, p),
                           np.pad(other.m2_, p), np.pad(other.max_, p))
        return self

    @property
    def variance_(self) -> np.ndarray:
        check_is_fitted(self, "count_")
        return np.divide(self.m2_, self.count_, out=np.full(self.m2_.shape, np.nan),
                         where=self.count_ > 0)

    def metric_table(self, kind: str = "variance") -> np.ndarray:
        """Metric per (outlet, slot); NaN marks cells without observations."""
        if kind not in METRICS:
            raise ValueError(f"unknown metric {kind!r}; expected one of {METRICS}")
        var = np.maximum(self.variance_, 0.0)
        if kind == "variance":
            return var
        # a dead outlet (mean 0) is perfectly predictable
        ratio = np.divide(var, self.mean_, out=np.zeros(var.shape), where=self.mean_ > 0)
        return np.where(self.count_ > 0, ratio, np.nan)

    def metric(self, outlet: int, slot: int, kind: str = "variance") -> float:
        check_is_fitted(self, "count_")
        if outlet >= self.count_.shape[0] or self.count_[outlet, slot] == 0:
            raise ColdStart(f"no observations for outlet {outlet}, slot {slot}")
        return float(self.metric_table(kind)[outlet, slot])

    def transform(self, X):
        """Per-row (mean, variance) of the slot each ``(time_s, outlet)`` falls in."""
        check_is_fitted(self, "count_")
        X = check_array(X, dtype=float)
        outlets = X[:, 1].astype(int)
        slots = slot_of(X[:, 0], self.slots_per_day)
        return np.column_stack([self.mean_[outlets, slots], self.variance_[outlets, slots]])

    def write_csv(self, fh: TextIO) -> None:
        check_is_fitted(self, "count_")
        fh.write("outlet,slot,count,mean_w,variance_w2\n")
        var = self.variance_
        for o in range(self.count_.shape[0]):
            for s in range(self.slots_per_day):
                n = int(self.count_[o, s])
                if n:
                    fh.write(f"{o},{s},{n},{self.mean_[o, s]:.6f},{var[o, s]:.6f}\n")
