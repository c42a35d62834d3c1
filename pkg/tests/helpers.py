"""Random instance generators shared by the tests"""
from __future__ import annotations

import numpy as np

from ltl_fsc.controller import Sfsc
from ltl_fsc.model import LabeledPomdp
from ltl_fsc.product import ProductPomdp
from ltl_fsc.rabin import Dra, RabinPair, build_dra

PROPS = ("a", "b", "c")


def random_rows(
    rng: np.random.Generator, shape: tuple[int, ...], density: float = 0.6
) -> np.ndarray:
    """Stochastic rows along the last axis with random sparsity"""
    values = rng.random(shape) * (rng.random(shape) < density)
    flat = values.reshape(-1, shape[-1])
    empty = flat.sum(axis=1) == 0
    flat[empty, rng.integers(shape[-1], size=empty.sum())] = 1.0
    return (flat / flat.sum(axis=1, keepdims=True)).reshape(shape)


def random_chain(
    rng: np.random.Generator, n: int, n_sinks: int = 0
) -> tuple[np.ndarray, list[list[int]], list[int]]:
    """Multichain transition matrix.

    Returns the matrix, its recurrent classes and the sink states. Transient
    rows put at least half of their mass on recurrent states or sinks.
    """
    order = rng.permutation(n)
    sinks = [int(s) for s in order[:n_sinks]]
    rest = order[n_sinks:]
    n_recurrent = int(rng.integers(1, len(rest) + 1))
    recurrent, transient = rest[:n_recurrent], rest[n_recurrent:]
    n_classes = int(rng.integers(1, min(3, n_recurrent) + 1))
    cuts = []
    if n_classes > 1:
        cuts = sorted(
            rng.choice(np.arange(1, n_recurrent), n_classes - 1, replace=False)
        )
    classes = [list(map(int, c)) for c in np.split(recurrent, cuts)]
    matrix = np.zeros((n, n))
    for s in sinks:
        matrix[s, s] = 1.0
    for members in classes:
        if len(members) > 1 and rng.random() < 0.2:
            for i, s in enumerate(members):
                matrix[s, members[(i + 1) % len(members)]] = 1.0
        else:
            block = rng.random((len(members), len(members))) + 0.05
            matrix[np.ix_(members, members)] = block / block.sum(axis=1, keepdims=True)
    absorbing = [int(s) for s in recurrent] + sinks
    for s in transient:
        inner = rng.random(len(transient))
        outer = rng.random(len(absorbing)) + 0.01
        matrix[s, transient] = 0.5 * inner / inner.sum()
        matrix[s, absorbing] = 0.5 * outer / outer.sum()
    return matrix, classes, sinks


def cesaro_limit(matrix: np.ndarray, doublings: int = 20) -> np.ndarray:
    """Average of the first 2^doublings powers"""
    total = np.eye(matrix.shape[0])
    power = matrix.copy()
    for _ in range(doublings):
        total = total + power @ total
        power = power @ power
    return total / 2**doublings


def random_model(
    rng: np.random.Generator,
    n_states: int = 5,
    n_actions: int = 2,
    n_observations: int = 3,
) -> LabeledPomdp:
    labeling = [
        frozenset(p for p in PROPS if rng.random() < 0.3) for _ in range(n_states)
    ]
    initial = np.zeros(n_states)
    initial[0] = 1.0
    return LabeledPomdp(
        states=tuple(f"s{i}" for i in range(n_states)),
        actions=tuple(f"u{i}" for i in range(n_actions)),
        observations=tuple(f"o{i}" for i in range(n_observations)),
        transition=random_rows(rng, (n_actions, n_states, n_states)),
        observation_fn=random_rows(rng, (n_states, n_observations), density=0.8),
        initial=initial,
        atomic_props=PROPS,
        labeling=tuple(labeling),
    )


def random_sfsc(
    rng: np.random.Generator, product: ProductPomdp, n_transient: int, n_steady: int
) -> Sfsc:
    size = n_transient + n_steady
    omega = random_rows(
        rng, (size, product.n_observations, size * product.n_actions)
    ).reshape(size, product.n_observations, size, product.n_actions)
    steady = tuple(g >= n_transient for g in range(size))
    if n_steady:
        omega[n_transient:, :, :n_transient, :] = 0.0
        omega[n_transient:, :, n_transient:, :] += 1e-3
        omega[n_transient:] /= omega[n_transient:].sum(axis=(2, 3), keepdims=True)
    return Sfsc(
        istates=tuple(f"g{g}" for g in range(size)),
        steady=steady,
        omega=omega,
        observations=product.observations,
        actions=product.actions,
    )


def trivial_dra() -> Dra:
    """One-state automaton over no propositions whose only state repeats"""
    return build_dra(
        ("q0",), (), lambda q, letter: 0, [RabinPair(frozenset(), frozenset({0}))]
    )


def chain_model(matrix: np.ndarray, initial: np.ndarray) -> LabeledPomdp:
    """Single-action, single-observation model following a fixed chain"""
    n = matrix.shape[0]
    return LabeledPomdp(
        states=tuple(f"s{i}" for i in range(n)),
        actions=("go",),
        observations=("o",),
        transition=matrix[None, :, :],
        observation_fn=np.ones((n, 1)),
        initial=initial,
        atomic_props=(),
        labeling=tuple(frozenset() for _ in range(n)),
    )
