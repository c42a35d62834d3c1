"""Product of a labeled POMDP with a Rabin automaton, and the LTL reward schemes."""
from __future__ import annotations

from dataclasses import dataclass, replace
import logging

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from .const import LABEL_CONVENTIONS, LABEL_DESTINATION, LABEL_SOURCE
from .exceptions import (
    AlphabetMismatch,
    EmptyRepeat,
    EmptySteadyPartition,
    InvalidConfig,
)
from .model import LabeledPomdp, ensure_valid, pomdp_lines
from .rabin import Dra

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProductPomdp:
    """Synchronized POMDP × DRA.

    Product states are (model state, automaton state) pairs in lexicographic
    order, model state major. ``repeat[i]`` and ``avoid[i]`` are the lifted
    sets of Rabin pair ``i`` as boolean masks over product states.
    """

    model: LabeledPomdp
    dra: Dra
    states: tuple[tuple[int, int], ...]
    transition: np.ndarray
    observation_fn: np.ndarray
    initial: np.ndarray
    repeat: np.ndarray
    avoid: np.ndarray
    rabin_index: int = 0
    label_convention: str = LABEL_SOURCE

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return self.model.n_actions

    @property
    def n_observations(self) -> int:
        return self.model.n_observations

    @property
    def actions(self) -> tuple[str, ...]:
        return self.model.actions

    @property
    def observations(self) -> tuple[str, ...]:
        return self.model.observations

    @property
    def n_pairs(self) -> int:
        return len(self.dra.pairs)

    @property
    def repeat_mask(self) -> np.ndarray:
        """Repeat set of the selected pair"""
        return self.repeat[self.rabin_index]

    @property
    def avoid_mask(self) -> np.ndarray:
        """Avoid set of the selected pair"""
        return self.avoid[self.rabin_index]

    @property
    def model_states(self) -> np.ndarray:
        return np.array([s for s, _ in self.states], dtype=int)

    @property
    def dra_states(self) -> np.ndarray:
        return np.array([q for _, q in self.states], dtype=int)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(
            f"{self.model.states[s]}|{self.dra.states[q]}" for s, q in self.states
        )

    def index_of(self, s: int, q: int) -> int:
        """Position of the pair (s, q), which must not have been pruned"""
        return self.states.index((s, q))


def build_product(
    model: LabeledPomdp,
    dra: Dra,
    rabin_index: int = 0,
    label_convention: str = LABEL_SOURCE,
    prune: bool = False,
) -> ProductPomdp:
    """Build the product POMDP.

    With the ``source`` convention the automaton reads the label of the state
    being left; with ``destination`` it reads the label of the state entered.
    Both start from ⟨s, δ(q0, h(s))⟩.
    """
    if set(model.atomic_props) != set(dra.atomic_props):
        raise AlphabetMismatch(
            f"model propositions {sorted(model.atomic_props)} differ from "
            f"automaton propositions {sorted(dra.atomic_props)}"
        )
    if label_convention not in LABEL_CONVENTIONS:
        raise InvalidConfig(f"unknown label convention {label_convention!r}")
    if not 0 <= rabin_index < len(dra.pairs):
        raise InvalidConfig(
            f"rabin index {rabin_index} outside 0..{len(dra.pairs) - 1}"
        )
    ensure_valid(model)

    n_s, n_q, n_a = model.n_states, dra.n_states, model.n_actions
    labels = np.array([dra.letter_mask(label) for label in model.labeling])
    n = n_s * n_q
    transition = np.zeros((n_a, n, n))
    successors = np.arange(n_s) * n_q
    for s in range(n_s):
        for q in range(n_q):
            if label_convention == LABEL_DESTINATION:
                columns = successors + dra.delta[q, labels]
            else:
                columns = successors + dra.delta[q, labels[s]]
            transition[:, s * n_q + q, columns] = model.transition[:, s, :]

    initial = np.zeros(n)
    for s in np.flatnonzero(model.initial):
        initial[s * n_q + dra.delta[dra.initial, labels[s]]] += model.initial[s]

    keep = np.arange(n)
    if prune:
        graph = csr_matrix(transition.sum(axis=0) > 0)
        reached: set[int] = set()
        for start in np.flatnonzero(initial):
            if start not in reached:
                reached.update(
                    breadth_first_order(graph, start, return_predecessors=False)
                )
        keep = np.array(sorted(reached), dtype=int)
        _LOGGER.debug("Pruned product from %s to %s states", n, len(keep))

    states = tuple((int(i // n_q), int(i % n_q)) for i in keep)
    dra_of = np.array([q for _, q in states], dtype=int)
    repeat = np.array([np.isin(dra_of, list(p.repeat)) for p in dra.pairs])
    avoid = np.array([np.isin(dra_of, list(p.avoid)) for p in dra.pairs])
    product = ProductPomdp(
        model=model,
        dra=dra,
        states=states,
        transition=transition[:, keep][:, :, keep],
        observation_fn=np.repeat(model.observation_fn, n_q, axis=0)[keep],
        initial=initial[keep],
        repeat=repeat.reshape(len(dra.pairs), len(keep)),
        avoid=avoid.reshape(len(dra.pairs), len(keep)),
        rabin_index=rabin_index,
        label_convention=label_convention,
    )
    _LOGGER.debug(
        "Built product with %s states, %s pairs (%s labels)",
        product.n_states,
        product.n_pairs,
        label_convention,
    )
    return product


def select_pair(product: ProductPomdp, index: int) -> ProductPomdp:
    """The same product with another Rabin pair selected."""
    if not 0 <= index < product.n_pairs:
        raise InvalidConfig(f"rabin index {index} outside 0..{product.n_pairs - 1}")
    return replace(product, rabin_index=index)


def modified_transition(product: ProductPomdp) -> np.ndarray:
    """T^φ with every Avoid state of the selected pair turned into a sink."""
    transition = product.transition.copy()
    sinks = np.flatnonzero(product.avoid_mask)
    transition[:, sinks, :] = 0.0
    transition[:, sinks, sinks] = 1.0
    return transition


@dataclass(frozen=True, eq=False)
class SteadySeed:
    """Uniform distribution over Repeat × G^ss in global order"""

    distribution: np.ndarray
    repeat: np.ndarray
    steady: tuple[bool, ...]

    def slice(self, g: int) -> np.ndarray:
        """Restriction to I-state g, renormalized over the Repeat states"""
        if not self.steady[g]:
            raise EmptySteadyPartition(f"I-state {g} is not a steady I-state")
        return self.repeat / self.repeat.sum()


def steady_state_seed(product: ProductPomdp, steady: tuple[bool, ...]) -> SteadySeed:
    """ι^ss over the global states (s, g), product state major."""
    repeat = product.repeat_mask.astype(float)
    steady_mask = np.array(steady, dtype=float)
    if not repeat.any():
        raise EmptyRepeat(f"Rabin pair {product.rabin_index} has no Repeat state")
    if not steady_mask.any():
        raise EmptySteadyPartition("the controller has no steady I-state")
    distribution = np.outer(repeat, steady_mask).ravel()
    return SteadySeed(distribution / distribution.sum(), repeat, tuple(steady))


@dataclass(frozen=True, eq=False)
class LtlRewards:
    """Indicator rewards of the selected Rabin pair and the I-state partition"""

    repeat_reward: np.ndarray
    avoid_reward: np.ndarray
    istate_reward: np.ndarray
    discount: float

    def discounted_charge(self) -> np.ndarray:
        """r^β(s)·r^G(g) in global order"""
        return np.outer(self.repeat_reward, self.istate_reward).ravel()

    def avoid_charge(self) -> np.ndarray:
        """r^av(s)·r^G(g) in global order"""
        return np.outer(self.avoid_reward, self.istate_reward).ravel()


def ltl_rewards(
    product: ProductPomdp, steady: tuple[bool, ...], beta: float
) -> LtlRewards:
    """Repeat, avoid and I-state rewards for a partition."""
    if not 0 < beta < 1:
        raise InvalidConfig(f"discount {beta} outside (0, 1)")
    return LtlRewards(
        repeat_reward=product.repeat_mask.astype(float),
        avoid_reward=product.avoid_mask.astype(float),
        istate_reward=np.array(steady, dtype=float),
        discount=beta,
    )


def product_as_pomdp(product: ProductPomdp) -> LabeledPomdp:
    """View the product as a labeled POMDP over its named states"""
    return LabeledPomdp(
        states=product.names,
        actions=product.actions,
        observations=product.observations,
        transition=product.transition,
        observation_fn=product.observation_fn,
        initial=product.initial,
        atomic_props=product.model.atomic_props,
        labeling=tuple(product.model.labeling[s] for s, _ in product.states),
    )


def dump_product(product: ProductPomdp) -> str:
    """Serialize the product in the POMDP grammar plus a pairs section."""
    view = product_as_pomdp(product)
    lines = pomdp_lines(view)
    lines.append(f"# selected pair {product.rabin_index}, {product.label_convention}")
    lines.append("pairs:")
    for i in range(product.n_pairs):
        for kind, mask in (("avoid", product.avoid[i]), ("repeat", product.repeat[i])):
            names = " ".join(view.states[k] for k in np.flatnonzero(mask))
            lines.append(f"  {i} {kind} : {names}".rstrip())
    return "\n".join(lines) + "\n"
