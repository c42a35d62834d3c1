"""Tests for the per-pair synthesis coordinators"""
import asyncio

import pytest

from ltl_fsc.bpi import BpiConfig
from ltl_fsc.controller import uniform_sfsc
from ltl_fsc.coordinator import SynthesisManager
from ltl_fsc.exceptions import SynthesisFailed


def test_manager_picks_finished_pair(loop_product):
    config = BpiConfig(n_max=3, n_new=1, max_iterations=2)
    manager = SynthesisManager(loop_product, config)
    best = asyncio.run(manager.async_synthesize())
    assert best.index == 0
    assert best.last_exception is None
    assert best.data.sfsc.n_steady >= 1
    assert 0.0 < best.data.satisfaction_probability <= 1.0 + 1e-9
    assert manager.get_coordinator(0) is best


def test_coordinator_config_follows_pair(corridor_product):
    manager = SynthesisManager(corridor_product, BpiConfig())
    coordinator = manager.get_coordinator(0)
    assert coordinator.config.rabin_index == 0
    assert coordinator.product.rabin_index == 0


def test_manager_fails_when_every_pair_fails(corridor_product):
    seed = uniform_sfsc(corridor_product, 1, 1)
    manager = SynthesisManager(corridor_product, BpiConfig(), seed=seed)
    with pytest.raises(SynthesisFailed):
        asyncio.run(manager.async_synthesize())
    coordinator = manager.get_coordinator(0)
    assert coordinator.data is None
    assert isinstance(coordinator.last_exception, SynthesisFailed)
