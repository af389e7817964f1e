"""The five switching logics that turn a production reading and outlet draws into a PV/grid split.

Each policy is a scikit-learn style estimator: ``fit`` learns the per-slot
consumption statistics from historical ``(time_s, outlet) -> watts``
observations, ``decide`` produces one :class:`OutletAssignment`, and
``predict`` chains decisions over a batch of snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .optimizer import build_instance, solve
from .slotstats import SlotStatistics, slot_of

POLICY_NAMES = ("naive", "static_var", "static_var_mean", "adaptive_var", "adaptive_var_mean")


@dataclass(frozen=True)
class OutletAssignment:
    pv_set: FrozenSet[int]
    grid_set: FrozenSet[int]
    effective_margin: float
    decision_time: float

    @classmethod
    def all_grid(cls, outlets: Iterable[int], time: float = 0.0) -> "OutletAssignment":
        return cls(frozenset(), frozenset(outlets), 0.0, time)


def _check_margin(m: float, name: str = "margin") -> None:
    if not 0 <= m < 1:
        raise ValueError(f"{name} must be in [0, 1), got {m}")


class SwitchingPolicy(BaseEstimator):
    """Shared fit/decide machinery; subclasses implement :meth:`eligible`."""

    slots_per_day: int = 48

    def fit(self, X, y):
        self._validate_params()
        self.stats_ = SlotStatistics(slots_per_day=self.slots_per_day).fit(X, y)
        return self

    def partial_fit(self, X, y):
        self._validate_params()
        if not hasattr(self, "stats_"):
            self.stats_ = SlotStatistics(slots_per_day=self.slots_per_day)
        self.stats_.partial_fit(X, y)
        return self

    def set_stats(self, stats: SlotStatistics):
        """Use statistics built elsewhere (e.g. shared warm-up)."""
        self._validate_params()
        self.stats_ = stats
        return self

    def _validate_params(self) -> None:
        pass

    def eligible(self, slot: int, outlets: Sequence[int]) -> Tuple[FrozenSet[int], float]:
        raise NotImplementedError

    def decide(self, production_w: float, readings: Mapping[int, float], now: float,
               previous: Optional[OutletAssignment] = None) -> OutletAssignment:
        outlets = sorted(readings)
        slot = slot_of(now, self.slots_per_day)
        chosen, margin = self.eligible(slot, outlets)
        instance = build_instance(production_w, margin, readings, sorted(chosen))
        keep = previous.pv_set if previous is not None else ()
        pv = solve(instance, keep=keep).selected
        return OutletAssignment(frozenset(pv), frozenset(outlets) - pv, margin, now)

    def predict(self, X):
        """X rows: ``time_s, production_w, w_0 ... w_{n-1}``; returns a PV membership mask."""
        X = check_array(X, dtype=float)
        n = X.shape[1] - 2
        out = np.zeros((X.shape[0], n), dtype=bool)
        prev = None
        for r, row in enumerate(X):
            readings = {o: float(row[2 + o]) for o in range(n)}
            prev = self.decide(float(row[1]), readings, float(row[0]), prev)
            out[r, sorted(prev.pv_set)] = True
        return out


class NaivePolicy(SwitchingPolicy):
    """Every outlet competes for PV; only the fixed margin guards against staleness."""

    def __init__(self, margin: float = 0.0, slots_per_day: int = 48):
        self.margin = margin
        self.slots_per_day = slots_per_day

    def _validate_params(self):
        _check_margin(self.margin)

    def fit(self, X=None, y=None):
        self._validate_params()
        self.stats_ = SlotStatistics(slots_per_day=self.slots_per_day)
        if X is not None:
            self.stats_.fit(X, y)
        return self

    def eligible(self, slot, outlets):
        return frozenset(outlets), self.margin


class _StaticPolicy(SwitchingPolicy):
    metric_kind = "variance"

    def __init__(self, threshold: float, margin: float = 0.2, slots_per_day: int = 48):
        self.threshold = threshold
        self.margin = margin
        self.slots_per_day = slots_per_day

    def _validate_params(self):
        _check_margin(self.margin)
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")

    def eligible(self, slot, outlets):
        check_is_fitted(self, "stats_")
        table = self.stats_.metric_table(self.metric_kind)
        keep = []
        for o in outlets:
            if o >= table.shape[0]:
                continue
            m = table[o, slot]
            # cold start (NaN) is ineligible; a metric equal to the threshold stays in
            if m == m and m <= self.threshold:
                keep.append(o)
        return frozenset(keep), self.margin


class StaticVariancePolicy(_StaticPolicy):
    metric_kind = "variance"


class StaticVarianceMeanRatioPolicy(_StaticPolicy):
    metric_kind = "variance_over_mean"


class _AdaptivePolicy(SwitchingPolicy):
    """Normalizes each outlet's slot metric by the largest value seen in the history.

    Outlets whose normalized metric exceeds ``cut`` are excluded; the margin
    grows linearly from ``margin_min`` to ``margin_max`` with the mean
    normalized metric of the outlets kept.
    """

    metric_kind = "variance"

    def __init__(self, margin_min: float = 0.05, margin_max: float = 0.40, cut: float = 0.5,
                 slots_per_day: int = 48):
        self.margin_min = margin_min
        self.margin_max = margin_max
        self.cut = cut
        self.slots_per_day = slots_per_day

    def _validate_params(self):
        _check_margin(self.margin_min, "margin_min")
        _check_margin(self.margin_max, "margin_max")
        if self.margin_min > self.margin_max:
            raise ValueError("margin_min must be <= margin_max")
        if not 0 < self.cut <= 1:
            raise ValueError("cut must be in (0, 1]")

    def normalized(self, slot: int, outlets: Sequence[int]) -> Dict[int, float]:
        check_is_fitted(self, "stats_")
        table = self.stats_.metric_table(self.metric_kind)
        # one scale for every outlet, so a quiet outlet reads as quiet
        peak = float(np.nanmax(table)) if np.any(table == table) else 0.0
        out = {}
        for o in outlets:
            m = table[o, slot] if o < table.shape[0] else np.nan
            if m != m:
                out[o] = 1.0
                continue
            if peak == 0:
                out[o] = 0.0
            else:
                out[o] = float(m) / peak
        return out

    def eligible(self, slot, outlets):
        norm = self.normalized(slot, outlets)
        keep = [o for o in outlets if norm[o] <= self.cut]
        if not keep:
            return frozenset(), self.margin_min
        spread = self.margin_max - self.margin_min
        margin = self.margin_min + spread * float(np.mean([norm[o] for o in keep]))
        return frozenset(keep), min(max(margin, self.margin_min), self.margin_max)


class AdaptiveVariancePolicy(_AdaptivePolicy):
    metric_kind = "variance"


class AdaptiveVarianceMeanRatioPolicy(_AdaptivePolicy):
    metric_kind = "variance_over_mean"


_REGISTRY = {
    "naive": NaivePolicy,
    "static_var": StaticVariancePolicy,
    "static_var_mean": StaticVarianceMeanRatioPolicy,
    "adaptive_var": AdaptiveVariancePolicy,
    "adaptive_var_mean": AdaptiveVarianceMeanRatioPolicy,
}


def make_policy(name: str, **params) -> SwitchingPolicy:
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}") from None
    policy = cls(**params)
    policy._validate_params()
    return policy


def policy_name(policy: SwitchingPolicy) -> str:
    for name, cls in _REGISTRY.items():
        if type(policy) is cls:
            return name
    return type(policy).__name__


def has_fixed_margin(policy: SwitchingPolicy) -> bool:
    return "margin" in policy.get_params()


def with_margin(policy: SwitchingPolicy, margin: float) -> SwitchingPolicy:
    if not has_fixed_margin(policy):
        raise ValueError(f"{policy_name(policy)} has no fixed margin to sweep")
    return clone(policy).set_params(margin=margin)
