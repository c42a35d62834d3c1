"""Tests for global chain analytics"""
import itertools

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from ltl_fsc.chain import (
    GlobalChain,
    absorption_into,
    absorption_probability,
    build_global_chain,
    decompose_classes,
    first_passage_probability,
    limiting_matrix,
    path_probability,
    phi_feasible_sets,
    poisson_solve,
    reach_probabilities,
    restrict,
    solve_scalar_poisson,
)
from ltl_fsc.const import BUILTIN_CASE2, CHAIN_PLAIN, CHAIN_SSD, LABEL_DESTINATION
from ltl_fsc.controller import uniform_sfsc
from ltl_fsc.exceptions import StructureViolation
from ltl_fsc.model import LabeledPomdp
from ltl_fsc.product import build_product
from ltl_fsc.rabin import builtin_dra

from tests.helpers import cesaro_limit, random_chain, random_rows, random_sfsc


def _sample_paths(rng, chain, n_traces, steps):
    cumulative = np.cumsum(chain.transition, axis=1)
    start = np.cumsum(chain.initial)
    last = chain.n_states - 1
    draws = rng.random(n_traces)[:, None]
    states = np.minimum((start[None, :] < draws).sum(axis=1), last)
    for _ in range(steps):
        draws = rng.random(n_traces)[:, None]
        states = np.minimum((cumulative[states] < draws).sum(axis=1), last)
    return states


def test_poisson_solution_on_random_chains(rng):
    for _ in range(50):
        n = int(rng.integers(3, 10))
        matrix, _, _ = random_chain(rng, n, n_sinks=int(rng.integers(0, 2)))
        chain = GlobalChain.from_matrix(matrix)
        charge = rng.random(n)
        solution = poisson_solve(chain, charge)
        np.testing.assert_allclose(solution.limiting, cesaro_limit(matrix), atol=1e-4)
        np.testing.assert_allclose(
            solution.gain, solution.limiting @ charge, atol=1e-12
        )
        np.testing.assert_allclose(solution.gain, matrix @ solution.gain, atol=1e-8)
        np.testing.assert_allclose(
            solution.gain + solution.bias - matrix @ solution.bias, charge, atol=1e-8
        )
        np.testing.assert_allclose(solution.limiting @ solution.bias, 0.0, atol=1e-8)


def test_class_decomposition(rng):
    for _ in range(20):
        matrix, classes, sinks = random_chain(rng, 8, n_sinks=1)
        decomposition = decompose_classes(GlobalChain.from_matrix(matrix))
        expected = sorted(tuple(sorted(c)) for c in classes + [[s] for s in sinks])
        assert sorted(decomposition.recurrent_classes) == expected


def test_absorption_matches_first_passage(rng):
    for _ in range(30):
        n = int(rng.integers(4, 10))
        matrix, _, sinks = random_chain(rng, n, n_sinks=2)
        chain = GlobalChain.from_matrix(matrix)
        target = np.zeros(n)
        target[sinks] = 1.0
        hitting = first_passage_probability(chain, target)
        assert absorption_into(chain, target) == pytest.approx(
            chain.initial @ hitting, abs=1e-8
        )


def test_absorption_matches_simulation(rng):
    for _ in range(10):
        matrix, _, sinks = random_chain(rng, 6, n_sinks=1)
        chain = GlobalChain.from_matrix(matrix)
        target = np.zeros(6)
        target[sinks] = 1.0
        ends = _sample_paths(rng, chain, 40_000, 60)
        observed = np.isin(ends, sinks).mean()
        assert absorption_into(chain, target) == pytest.approx(observed, abs=1e-2)


@pytest.mark.slow
def test_absorption_matches_large_simulation(rng):
    for _ in range(30):
        matrix, _, sinks = random_chain(rng, 6, n_sinks=1)
        chain = GlobalChain.from_matrix(matrix)
        target = np.zeros(6)
        target[sinks] = 1.0
        ends = _sample_paths(rng, chain, 100_000, 80)
        observed = np.isin(ends, sinks).mean()
        assert absorption_into(chain, target) == pytest.approx(observed, abs=6e-3)


def test_cylinder_probabilities(rng):
    matrix, _, _ = random_chain(rng, 3)
    initial = rng.random(3)
    chain = GlobalChain.from_matrix(matrix, initial / initial.sum())
    for k in range(1, 7):
        marginal = np.zeros(3)
        for path in itertools.product(range(3), repeat=k):
            marginal[path[-1]] += path_probability(chain, path)
        expected = chain.initial @ np.linalg.matrix_power(matrix, k - 1)
        np.testing.assert_allclose(marginal, expected, atol=1e-12)
        assert marginal.sum() == pytest.approx(1.0)


def test_reach_probabilities_hand_built():
    matrix = np.zeros((6, 6))
    matrix[0, 1], matrix[0, 3] = 0.4, 0.6
    matrix[1, 2] = matrix[2, 1] = 1.0
    matrix[3, 4] = 1.0
    matrix[4, 5] = 1.0
    matrix[5, 3], matrix[5, 4] = 0.5, 0.5
    chain = GlobalChain.from_matrix(matrix, np.eye(6)[0])
    decomposition = decompose_classes(chain)
    assert decomposition.recurrent_classes == [(1, 2), (3, 4, 5)]
    assert decomposition.transient_states == (0,)
    np.testing.assert_allclose(reach_probabilities(chain, decomposition), [0.4, 0.6])
    limiting = limiting_matrix(chain, decomposition)
    np.testing.assert_allclose(limiting[0, 1:3], [0.2, 0.2])
    np.testing.assert_allclose(limiting[0, 3:].sum(), 0.6)


def test_reach_sums_to_one(rng):
    for _ in range(20):
        matrix, _, _ = random_chain(rng, 7, n_sinks=1)
        chain = GlobalChain.from_matrix(matrix)
        reach = reach_probabilities(chain, decompose_classes(chain))
        assert reach.sum() == pytest.approx(1.0, abs=1e-10)


def test_scalar_poisson_agrees_with_multichain_solution(rng):
    block = rng.random((5, 5)) + 0.1
    matrix = block / block.sum(axis=1, keepdims=True)
    chain = GlobalChain.from_matrix(matrix)
    charge = rng.random(5)
    gain, bias = solve_scalar_poisson(chain, charge)
    assert bias[0] == 0.0
    solution = poisson_solve(chain, charge)
    np.testing.assert_allclose(solution.gain, gain, atol=1e-10)
    shift = solution.bias - bias
    np.testing.assert_allclose(shift, shift[0], atol=1e-10)


def test_restrict_requires_closed_set():
    matrix = np.array([[0.5, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    chain = GlobalChain.from_matrix(matrix)
    assert restrict(chain, [1, 2]).n_states == 2
    with pytest.raises(ValueError):
        restrict(chain, [0, 2])


def test_global_chain_of_product(corridor_product, corridor_seed):
    plain = build_global_chain(corridor_product, corridor_seed)
    size = corridor_seed.size
    assert plain.n_states == corridor_product.n_states * size
    np.testing.assert_allclose(plain.transition.sum(axis=1), 1.0)
    assert plain.initial.sum() == pytest.approx(1.0)
    ssd = build_global_chain(corridor_product, corridor_seed, CHAIN_SSD)
    np.testing.assert_allclose(ssd.transition.sum(axis=1), 1.0)
    for s in np.flatnonzero(corridor_product.avoid_mask):
        index = s * size + corridor_seed.steady_istates[0]
        assert ssd.transition[index, index] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        build_global_chain(corridor_product, corridor_seed, "lazy")


def test_ssd_chain_rejects_structure_violation(corridor_product):
    sfsc = uniform_sfsc(corridor_product, 1, 1)
    row = np.full(sfsc.omega.shape[1:], 1.0 / (2 * corridor_product.n_actions))
    broken = sfsc.with_omega_row(1, row)
    with pytest.raises(StructureViolation):
        build_global_chain(corridor_product, broken, CHAIN_SSD)
    assert build_global_chain(corridor_product, broken, CHAIN_PLAIN).n_states > 0


def test_phi_feasible_sets_of_seed(corridor_product, corridor_seed):
    chain = build_global_chain(corridor_product, corridor_seed)
    decomposition = decompose_classes(chain)
    feasible = phi_feasible_sets(chain, decomposition, corridor_product)
    assert 0.0 < feasible.probability < 1.0
    target = corridor_product.index_of(6, 1) * corridor_seed.size + 1
    for members, flagged in zip(feasible.classes, feasible.flagged):
        assert flagged == (members == (target,))
    assert feasible.probability == pytest.approx(
        feasible.reach[np.array(feasible.flagged)].sum()
    )


def test_absorption_probability_of_seed(corridor_product, corridor_seed):
    ssd = build_global_chain(corridor_product, corridor_seed, CHAIN_SSD)
    size, steady = corridor_seed.size, corridor_seed.steady
    avoid = np.flatnonzero(corridor_product.avoid_mask)[0]
    trapped = np.zeros(ssd.n_states)
    trapped[avoid * size + 1] = 1.0
    assert absorption_probability(
        ssd, trapped, steady, corridor_product
    ) == pytest.approx(1.0)
    settled = np.zeros(ssd.n_states)
    settled[corridor_product.index_of(6, 1) * size + 1] = 1.0
    assert absorption_probability(
        ssd, settled, steady, corridor_product
    ) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        absorption_probability(
            build_global_chain(corridor_product, corridor_seed),
            ssd.initial,
            steady,
            corridor_product,
        )


def _two_basin_product(rng, n_observations=2):
    """Start state drains into a safe pair of states or into a pair holding c"""
    n_actions = 2
    transition = np.zeros((n_actions, 5, 5))
    for a in range(n_actions):
        transition[a, 0] = random_rows(rng, (5,), density=1.0) * 0.9 + 0.02
        transition[a, 0] /= transition[a, 0].sum()
        for basin in ([1, 2], [3, 4]):
            block = rng.random((2, 2)) + 0.1
            transition[a][np.ix_(basin, basin)] = block / block.sum(
                axis=1, keepdims=True
            )
    model = LabeledPomdp(
        states=tuple(f"s{i}" for i in range(5)),
        actions=("u0", "u1"),
        observations=tuple(f"o{i}" for i in range(n_observations)),
        transition=transition,
        observation_fn=random_rows(rng, (5, n_observations), density=1.0),
        initial=np.array([1.0, 0.0, 0.0, 0.0, 0.0]),
        atomic_props=("a", "b", "c"),
        labeling=(
            frozenset({"a"}),
            frozenset({"b"}),
            frozenset(),
            frozenset({"c"}),
            frozenset(),
        ),
    )
    return build_product(
        model,
        builtin_dra(BUILTIN_CASE2),
        label_convention=LABEL_DESTINATION,
        prune=True,
    )


def _first_hits(chain, target, steps):
    """Probability of hitting the target first at step 1..steps"""
    taboo = chain.transition.copy()
    taboo[:, target] = 0.0
    entering = chain.transition[:, target].sum(axis=1)
    mass = chain.initial * ~target
    hits = []
    for _ in range(steps):
        hits.append(float(mass @ entering))
        mass = mass @ taboo
    return np.array(hits)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(1, 2))
def test_plain_avoid_reach_equals_ssd_absorption(seed, n_steady):
    rng = np.random.default_rng(seed)
    product = _two_basin_product(rng)
    sfsc = random_sfsc(rng, product, 0, n_steady)
    plain = build_global_chain(product, sfsc)
    ssd = build_global_chain(product, sfsc, CHAIN_SSD)
    target = np.outer(product.avoid_mask, sfsc.steady).ravel().astype(bool)
    reach = float(plain.initial @ first_passage_probability(plain, target))
    assert 0.0 < reach < 1.0
    assert absorption_probability(
        ssd, ssd.initial, sfsc.steady, product
    ) == pytest.approx(reach, abs=1e-9)

    hits_plain = _first_hits(plain, target, 6)
    np.testing.assert_allclose(_first_hits(ssd, target, 6), hits_plain, atol=1e-14)
    assert hits_plain.sum() <= reach + 1e-12
    cumulative = np.cumsum(plain.transition, axis=1)
    for _ in range(50):
        path = [int(rng.choice(plain.n_states, p=plain.initial))]
        while len(path) < 6 and not target[path[-1]]:
            draw = rng.random() * cumulative[path[-1], -1]
            path.append(int(np.searchsorted(cumulative[path[-1]], draw, side="right")))
        assert path_probability(ssd, path) == pytest.approx(
            path_probability(plain, path), rel=1e-12
        )
