import dataclasses
import itertools

import numpy as np
import pytest

from oswitch.inverter import InverterConfig
from oswitch.policy import make_policy
from oswitch.sim import DelayModel, Scenario, Traces, reference_scenario, warmup_statistics

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def brute_force_knapsack(weights, values, capacity):
    """Exhaustive 0/1 knapsack: (best value, all optimal subsets as index tuples)."""
    best, argbest = 0, [()]
    n = len(weights)
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            w = sum(weights[i] for i in combo)
            if w > capacity:
                continue
            v = sum(values[i] for i in combo)
            if v > best:
                best, argbest = v, [combo]
            elif v == best:
                argbest.append(combo)
    return best, argbest


def make_scenario(loads, pv_ac, policy=None, seconds=None, **kw):
    """Hand-built scenario with a unit-efficiency inverter, so ``pv_ac`` is the AC power."""
    loads = np.atleast_2d(np.asarray(loads, dtype=float))
    n = loads.shape[1] if seconds is None else seconds
    if loads.shape[1] == 1 and n > 1:
        loads = np.repeat(loads, n, axis=1)
    pv = np.broadcast_to(np.asarray(pv_ac, dtype=float), (n,)).copy()
    defaults = dict(
        traces=Traces(loads, pv),
        policy=policy if policy is not None else make_policy("naive", margin=0.0),
        inverter=InverterConfig(conversion_efficiency=1.0, battery_capacity_wh=0.0),
        warmup_days=0,
        duration_s=float(n),
    )
    defaults.update(kw)
    return Scenario(**defaults)


# the five logics compared on the reference scenario
POLICY_GRID = [
    ("naive", dict(margin=0.0)),
    ("static_var", dict(threshold=50.0, margin=0.2)),
    ("static_var_mean", dict(threshold=1.0, margin=0.2)),
    ("adaptive_var", {}),
    ("adaptive_var_mean", {}),
]


@pytest.fixture(scope="session")
def reference():
    return reference_scenario()


@pytest.fixture(scope="session")
def reference_stats(reference):
    return warmup_statistics(reference)


@pytest.fixture(scope="session")
def policy_runs(reference, reference_stats):
    from oswitch.sim import run
    return {name: run(reference, make_policy(name, **params), reference_stats).report
            for name, params in POLICY_GRID}


def epoch_held(scenario, zero_delays=True):
    """Copy of ``scenario`` whose traces only change at decision epochs."""
    tr = scenario.traces
    step = int(round(scenario.decision_period_s / tr.dt))
    idx = (np.arange(tr.n_steps) // step) * step
    held = Traces(tr.outlets[:, idx], tr.pv_dc[idx], tr.dt, tr.t0)
    delays = DelayModel(0.0, 0.0, 0.0) if zero_delays else scenario.delays
    return dataclasses.replace(scenario, traces=held, delays=delays)
