"""0/1 knapsack over outlets: which loads fit under the margin-reduced PV production.

Production is floored and each outlet draw is ceiled to whole watts, so a
selection that fits the integer instance also fits the real-valued one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Collection, FrozenSet, Hashable, Iterable, Mapping, Optional, Tuple

import numpy as np

OutletId = Hashable


@dataclass(frozen=True)
class KnapsackItem:
    outlet: OutletId
    weight: int
    value: int


@dataclass(frozen=True)
class KnapsackInstance:
    capacity: int
    items: Tuple[KnapsackItem, ...] = ()

    def __post_init__(self):
        if self.capacity < 0:
            raise ValueError("capacity must be >= 0")
        seen = set()
        for it in self.items:
            if it.weight < 1:
                raise ValueError(f"item {it.outlet!r} has weight {it.weight} < 1")
            if it.value < 0:
                raise ValueError(f"item {it.outlet!r} has negative value")
            if it.outlet in seen:
                raise ValueError(f"duplicate outlet {it.outlet!r}")
            seen.add(it.outlet)


@dataclass(frozen=True)
class KnapsackSolution:
    selected: FrozenSet[OutletId] = field(default_factory=frozenset)
    total_value: int = 0
    total_weight: int = 0


def build_instance(production_w: float, margin: float, readings: Mapping[OutletId, float],
                   eligible: Optional[Iterable[OutletId]] = None,
                   values: Optional[Mapping[OutletId, int]] = None) -> KnapsackInstance:
    """Integer instance from a production reading and per-outlet draws.

    ``values`` overrides the default value (= rounded weight) per outlet.
    """
    if not 0 <= margin < 1:
        raise ValueError(f"margin must be in [0, 1), got {margin}")
    if production_w < 0:
        raise ValueError("production must be >= 0")
    capacity = math.floor(production_w * (1.0 - margin))
    keys = readings.keys() if eligible is None else eligible
    items = []
    for o in sorted(keys, key=_sort_key):
        w = readings[o]
        if w < 0:
            raise ValueError(f"negative reading for outlet {o!r}")
        if w > 0:
            weight = math.ceil(w)
            value = weight
        else:
            weight, value = 1, 0
        if values is not None and o in values:
            value = int(values[o])
        items.append(KnapsackItem(o, weight, value))
    return KnapsackInstance(capacity, tuple(items))


def _sort_key(o):
    return (0, o, "") if isinstance(o, (int, np.integer)) else (1, 0, str(o))


def solve(instance: KnapsackInstance,
          keep: Collection[OutletId] = ()) -> KnapsackSolution:
    """Exact 0/1 knapsack by dynamic programming over (item, capacity).

    Among optimal subsets the backtrack keeps outlets listed in ``keep``
    (those already on PV) whenever possible, then prefers lower ids, and
    leaves zero-value items out. Zero-value items are
    never kept for churn's sake: a dead outlet left on PV gains nothing and
    trips a lack when it wakes up.
    """
    cap = instance.capacity
    keep = {it.outlet for it in instance.items if it.outlet in set(keep) and it.value > 0}
    # least preferred first: the backtrack visits items in reverse order
    rank = {it.outlet: r for r, it in
            enumerate(sorted(instance.items, key=lambda it: _sort_key(it.outlet)))}
    order = sorted(instance.items, key=lambda it: (it.outlet in keep, -rank[it.outlet]))
    n = len(order)
    if n == 0 or cap == 0:
        return KnapsackSolution()
    table = np.zeros((n + 1, cap + 1), dtype=np.int64)
    for i, it in enumerate(order, start=1):
        prev = table[i - 1]
        row = table[i]
        row[:] = prev
        w = it.weight
        if w <= cap:
            np.maximum(prev[w:], prev[:cap + 1 - w] + it.value, out=row[w:])
    selected = []
    c = cap
    for i in range(n, 0, -1):
        it = order[i - 1]
        best = table[i, c]
        can_skip = table[i - 1, c] == best
        can_take = it.weight <= c and table[i - 1, c - it.weight] + it.value == best
        # most preferred items are visited first, so taking when optimal picks them
        take = can_take and (not can_skip or it.value > 0)
        if take:
            selected.append(it)
            c -= it.weight
    return KnapsackSolution(frozenset(it.outlet for it in selected),
                            int(sum(it.value for it in selected)),
                            int(sum(it.weight for it in selected)))
