"""Micro-metered PV self-consumption switching.

Emulated meters on a shared serial bus, a supervising gateway, a PV
inverter model, per-slot consumption statistics, five switching policies
built on a 0/1 knapsack, a scenario simulator and office energy audits.
"""

from .electrical import DerivedMeasures, MeasureSample, derive_measures, trms
from .optimizer import KnapsackInstance, KnapsackItem, KnapsackSolution, build_instance, solve
from .policy import (
    AdaptiveVarianceMeanRatioPolicy,
    AdaptiveVariancePolicy,
    NaivePolicy,
    OutletAssignment,
    StaticVarianceMeanRatioPolicy,
    StaticVariancePolicy,
    make_policy,
)
from .slotstats import SlotStatistics, slot_of

__version__ = "0.1.0"
