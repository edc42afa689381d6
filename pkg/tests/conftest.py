import numpy as np
import pytest

from hpclease import ScenarioConfig
from hpclease.env import MICROCENTS_PER_CENT
from hpclease.oracle import OfflineInstance


def cents(x: float) -> int:
    return round(x * MICROCENTS_PER_CENT)


def make_instance(levels, full_cents, reduced_cents, n_units, quality_budget=0):
    """Build a small offline instance from price lists given in cents."""
    return OfflineInstance(
        levels=np.asarray(levels, dtype=np.uint8),
        price_full_microcents=np.asarray([cents(c) for c in full_cents]),
        price_reduced_microcents=np.asarray([cents(c) for c in reduced_cents]),
        n_units=n_units,
        quality_budget=quality_budget,
    )


@pytest.fixture
def small_cfg():
    # 4 concentrators, 200 slots: big enough for behavior, fast enough
    # to run dozens of times per test module
    return ScenarioConfig(k_concentrators=4, horizon=200, seed=7)
