"""Shared fixtures"""
from __future__ import annotations

import numpy as np
import pytest

from ltl_fsc.bpi import BpiConfig, seed_controller
from ltl_fsc.const import BUILTIN_CASE1, BUILTIN_CASE2, LABEL_DESTINATION
from ltl_fsc.harness import GridWorldSpec, build_gridworld
from ltl_fsc.model import LabeledPomdp, parse_pomdp
from ltl_fsc.product import build_product
from ltl_fsc.rabin import builtin_dra

TINY_MODEL = """\
states: s0 s1 s2
actions: go stay
observations: near far
ap: a b c
transition:
  s0 go s1 : 0.5
  s0 go s0 : 0.5
  s0 stay s0 : 1.0
  s1 go s2 : 1.0
  s1 stay s1 : 1.0
  s2 go s2 : 1.0
  s2 stay s2 : 1.0
observation_fn:
  s0 near : 0.75
  s0 far : 0.25
  s1 near : 0.5
  s1 far : 0.5
  s2 far : 1.0
initial:
  s0 : 1.0
labeling:
  s0 : a
  s1 :
  s2 : b
"""


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def tiny_text():
    return TINY_MODEL


@pytest.fixture
def tiny_model():
    return parse_pomdp(TINY_MODEL)


@pytest.fixture(scope="session")
def corridor_model():
    """Two-row grid world, the default case-study layout"""
    return build_gridworld(GridWorldSpec(rows=2))


@pytest.fixture(scope="session")
def corridor_product(corridor_model):
    return build_product(
        corridor_model,
        builtin_dra(BUILTIN_CASE1),
        label_convention=LABEL_DESTINATION,
        prune=True,
    )


@pytest.fixture
def small_config():
    return BpiConfig(n_max=3, n_new=1, max_iterations=2)


@pytest.fixture(scope="session")
def corridor_seed(corridor_product):
    return seed_controller(corridor_product, 1, 1)


@pytest.fixture(scope="session")
def loop_product():
    """Alternating a/b states where ``go`` swaps and ``stay`` waits"""
    model = LabeledPomdp(
        states=("s0", "s1"),
        actions=("go", "stay"),
        observations=("o",),
        transition=np.array([[[0.0, 1.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]]]),
        observation_fn=np.ones((2, 1)),
        initial=np.array([1.0, 0.0]),
        atomic_props=("a", "b", "c"),
        labeling=(frozenset({"a"}), frozenset({"b"})),
    )
    return build_product(
        model,
        builtin_dra(BUILTIN_CASE2),
        label_convention=LABEL_DESTINATION,
        prune=True,
    )
