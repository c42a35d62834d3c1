"""Tests for stochastic finite-state controllers"""
from dataclasses import replace

import numpy as np
import pytest

from ltl_fsc.const import BUILTIN_CASE2, EVAL_DIRECT, EVAL_RICHARDSON
from ltl_fsc.controller import (
    Sfsc,
    best_istate,
    dump_sfsc,
    evaluate_discounted,
    induce_controller,
    parse_sfsc,
    uniform_sfsc,
    value_at_belief,
)
from ltl_fsc.exceptions import InvalidConfig, ModelParseError, StructureViolation
from ltl_fsc.product import build_product, ltl_rewards
from ltl_fsc.rabin import builtin_dra

from tests.helpers import random_model, random_sfsc


def test_uniform_sfsc(corridor_product):
    sfsc = uniform_sfsc(corridor_product, 2, 1)
    sfsc.check()
    assert sfsc.structure_violation() == 0.0
    assert sfsc.steady_istates == [2]
    assert sfsc.transient_istates == [0, 1]
    n_a = corridor_product.n_actions
    np.testing.assert_allclose(sfsc.omega[0], 1.0 / (3 * n_a))
    np.testing.assert_allclose(sfsc.omega[2, :, 2, :], 1.0 / n_a)


def test_with_added_istate(corridor_seed):
    grown = corridor_seed.with_added_istate(1, 4, steady=True)
    assert grown.size == corridor_seed.size + 1
    assert grown.istates[-1] == "g2"
    assert grown.steady[-1]
    assert grown.is_deterministic_node(2, 1, 4)
    np.testing.assert_array_equal(grown.omega[:2, :, :2, :], corridor_seed.omega)
    grown.check()


def test_structure_violation_detected(corridor_product):
    sfsc = uniform_sfsc(corridor_product, 1, 1)
    row = np.array(sfsc.omega[1])
    row[:, 0, :] = row[:, 1, :] / 2
    row[:, 1, :] /= 2
    broken = sfsc.with_omega_row(1, row)
    assert broken.structure_violation() > 0
    with pytest.raises(StructureViolation):
        broken.check()


def test_omega_shape_checked(corridor_product):
    with pytest.raises(ValueError):
        Sfsc(
            istates=("g0",),
            steady=(False,),
            omega=np.ones((1, 2, 1, 1)),
            observations=corridor_product.observations,
            actions=corridor_product.actions,
        )


def test_dump_parse(corridor_seed):
    sfsc = corridor_seed.with_initial_istate(1)
    parsed = parse_sfsc(dump_sfsc(sfsc))
    assert parsed.istates == sfsc.istates
    assert parsed.steady == sfsc.steady
    assert parsed.initial_istate == 1
    np.testing.assert_array_equal(parsed.omega, sfsc.omega)


def test_induced_controller_keeps_omega(corridor_seed):
    induced = induce_controller(corridor_seed)
    assert induced.istates == corridor_seed.istates
    assert induced.steady == corridor_seed.steady
    assert induced.initial_istate == corridor_seed.initial_istate
    np.testing.assert_array_equal(induced.omega, corridor_seed.omega)
    assert induced.omega is not corridor_seed.omega


def test_parse_rejects_substochastic(corridor_seed):
    lines = dump_sfsc(corridor_seed).splitlines()
    omega_start = lines.index("omega:")
    with pytest.raises(ModelParseError):
        parse_sfsc("\n".join(lines[: omega_start + 2]) + "\n")


def test_richardson_matches_direct(rng):
    dra = builtin_dra(BUILTIN_CASE2)
    for _ in range(30):
        model = random_model(rng, n_states=4, n_actions=2, n_observations=2)
        product = build_product(model, dra)
        sfsc = random_sfsc(rng, product, 1, 2)
        rewards = ltl_rewards(product, sfsc.steady, 0.95)
        direct = evaluate_discounted(product, sfsc, rewards, EVAL_DIRECT)
        iterated = evaluate_discounted(product, sfsc, rewards, EVAL_RICHARDSON, 1e-9)
        assert np.abs(direct - iterated).max() <= 10 * 1e-9


def test_evaluate_rejects_unknown_method(corridor_product, corridor_seed):
    rewards = ltl_rewards(corridor_product, corridor_seed.steady, 0.95)
    with pytest.raises(InvalidConfig):
        evaluate_discounted(corridor_product, corridor_seed, rewards, "gauss")


def test_best_istate_prefers_lowest_index():
    values = np.array([[1.0, 1.0], [0.0, 0.0]])
    belief = np.array([1.0, 0.0])
    assert best_istate(values, belief) == 0
    assert value_at_belief(values, 1, belief) == 1.0


def test_discounted_values_are_monotone_and_linear_in_rewards(rng):
    dra = builtin_dra(BUILTIN_CASE2)
    for _ in range(20):
        model = random_model(rng, n_states=4, n_actions=2, n_observations=2)
        product = build_product(model, dra)
        sfsc = random_sfsc(rng, product, 1, 2)
        rewards = ltl_rewards(product, sfsc.steady, 0.9)
        values = evaluate_discounted(product, sfsc, rewards)
        assert values.min() >= -1e-12
        assert values.max() <= 1.0 / (1.0 - 0.9) + 1e-9
        bumped = replace(
            rewards, repeat_reward=rewards.repeat_reward + rng.random(product.n_states)
        )
        assert (evaluate_discounted(product, sfsc, bumped) >= values - 1e-12).all()
        scale = float(rng.uniform(0.1, 10.0))
        scaled = replace(rewards, repeat_reward=scale * rewards.repeat_reward)
        np.testing.assert_allclose(
            evaluate_discounted(product, sfsc, scaled), scale * values, atol=1e-9
        )
