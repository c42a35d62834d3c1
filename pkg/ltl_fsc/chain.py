"""Global Markov chains of a closed loop and their analytics.

Covers class decomposition, the limiting, fundamental and deviation matrices,
the Poisson equation, absorption and reach probabilities, and the
satisfaction probability through φ-feasible recurrent classes.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
import logging
from typing import TYPE_CHECKING

import numpy as np
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .const import CHAIN_PLAIN, CHAIN_SSD, PE_RESIDUAL_TOL, STOCHASTIC_TOL
from .exceptions import ResidualTooLarge, SingularSystem, StructureViolation
from .product import ProductPomdp, modified_transition

if TYPE_CHECKING:
    from .controller import Sfsc

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class GlobalChain:
    """Finite Markov chain over (product state, I-state) pairs, product state major"""

    transition: np.ndarray
    initial: np.ndarray
    kind: str = CHAIN_PLAIN
    n_istates: int = 1

    @classmethod
    def from_matrix(
        cls, transition, initial=None, kind: str = CHAIN_PLAIN
    ) -> GlobalChain:
        """Wrap a bare transition matrix, uniform initial by default"""
        transition = np.asarray(transition, dtype=float)
        n = transition.shape[0]
        if initial is None:
            initial = np.full(n, 1.0 / n)
        return cls(transition, np.asarray(initial, dtype=float), kind)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def product_state(self, index: int) -> int:
        return index // self.n_istates

    def istate(self, index: int) -> int:
        return index % self.n_istates


@dataclass(frozen=True)
class ClassDecomposition:
    """Communicating classes ordered by smallest member"""

    classes: tuple[tuple[int, ...], ...]
    recurrent_flags: tuple[bool, ...]

    @property
    def recurrent_classes(self) -> list[tuple[int, ...]]:
        return [c for c, flag in zip(self.classes, self.recurrent_flags) if flag]

    @property
    def transient_states(self) -> tuple[int, ...]:
        return tuple(
            sorted(
                state
                for c, flag in zip(self.classes, self.recurrent_flags)
                if not flag
                for state in c
            )
        )


@dataclass(frozen=True, eq=False)
class PoissonSolution:
    """Gain and bias of a Poisson equation with the matrices that produced them"""

    gain: np.ndarray
    bias: np.ndarray
    charge: np.ndarray
    limiting: np.ndarray
    fundamental: np.ndarray
    deviation: np.ndarray


@dataclass(frozen=True, eq=False)
class FeasibleSets:
    """Recurrent classes with their φ-feasibility and reach probabilities"""

    classes: list[tuple[int, ...]]
    flagged: list[bool]
    pair_of_class: list[int | None]
    reach: np.ndarray
    probability: float


def build_global_chain(
    product: ProductPomdp, sfsc: Sfsc, kind: str = CHAIN_PLAIN
) -> GlobalChain:
    """Close the loop between a product POMDP and a controller.

    T[(s,g),(s2,g2)] = Σ_o Σ_a O(o|s) ω(g2,a|g,o) T(s2|s,a). The ssd kind uses
    the sink-modified transitions on rows of steady I-states.
    """
    n_s, size = product.n_states, sfsc.size
    weights = np.einsum("so,goha->sgha", product.observation_fn, sfsc.omega)
    if kind == CHAIN_SSD:
        if sfsc.structure_violation() > 0:
            raise StructureViolation(
                "ssd chain requested for a controller leaving the steady partition"
            )
        steady = np.array(sfsc.steady, dtype=bool)
        blocks = np.empty((n_s, size, n_s, size))
        blocks[:, ~steady] = np.einsum(
            "sgha,asx->sgxh", weights[:, ~steady], product.transition, optimize=True
        )
        blocks[:, steady] = np.einsum(
            "sgha,asx->sgxh",
            weights[:, steady],
            modified_transition(product),
            optimize=True,
        )
    elif kind == CHAIN_PLAIN:
        blocks = np.einsum(
            "sgha,asx->sgxh", weights, product.transition, optimize=True
        )
    else:
        raise ValueError(f"unknown chain kind {kind!r}")
    initial = np.zeros(size)
    initial[sfsc.initial_istate] = 1.0
    return GlobalChain(
        transition=blocks.reshape(n_s * size, n_s * size),
        initial=np.outer(product.initial, initial).ravel(),
        kind=kind,
        n_istates=size,
    )


def restrict(chain: GlobalChain, states: Sequence[int]) -> GlobalChain:
    """Sub-chain on a closed set of states."""
    states = np.asarray(states, dtype=int)
    block = chain.transition[np.ix_(states, states)]
    leak = np.abs(block.sum(axis=1) - 1.0).max(initial=0.0)
    if leak > STOCHASTIC_TOL * max(1, chain.n_states):
        raise ValueError(f"state set is not closed (leak {leak:.3g})")
    return GlobalChain(block, chain.initial[states], chain.kind, chain.n_istates)


def decompose_classes(chain: GlobalChain) -> ClassDecomposition:
    """Strongly connected components; bottom components are recurrent."""
    graph = csr_matrix(chain.transition > 0)
    n_components, labels = connected_components(
        graph, directed=True, connection="strong"
    )
    rows, cols = graph.nonzero()
    has_exit = np.zeros(n_components, dtype=bool)
    has_exit[labels[rows[labels[rows] != labels[cols]]]] = True
    members = [
        tuple(int(i) for i in np.flatnonzero(labels == c)) for c in range(n_components)
    ]
    order = sorted(range(n_components), key=lambda c: members[c][0])
    return ClassDecomposition(
        classes=tuple(members[c] for c in order),
        recurrent_flags=tuple(not has_exit[c] for c in order),
    )


def _invariant_measure(block: np.ndarray) -> np.ndarray:
    """Unique ν with ν·P = ν, Σν = 1 on an irreducible block"""
    n = block.shape[0]
    system = (block - np.eye(n)).T
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        return linalg.solve(system, rhs)
    except (linalg.LinAlgError, ValueError) as err:
        raise SingularSystem(f"invariant measure: {err}") from err


def absorption_matrix(
    chain: GlobalChain, decomposition: ClassDecomposition | None = None
) -> np.ndarray:
    """Probability of ending in each recurrent class, one column per class."""
    decomposition = decomposition or decompose_classes(chain)
    transition = chain.transition
    recurrent = decomposition.recurrent_classes
    transient = np.array(decomposition.transient_states, dtype=int)
    absorption = np.zeros((chain.n_states, len(recurrent)))
    for c, members in enumerate(recurrent):
        absorption[list(members), c] = 1.0
    if transient.size:
        entry = np.stack(
            [
                transition[np.ix_(transient, members)].sum(axis=1)
                for members in recurrent
            ],
            axis=1,
        )
        system = np.eye(transient.size) - transition[np.ix_(transient, transient)]
        try:
            absorption[transient] = linalg.solve(system, entry)
        except (linalg.LinAlgError, ValueError) as err:
            raise SingularSystem(f"transient absorption: {err}") from err
    return absorption


def limiting_matrix(
    chain: GlobalChain, decomposition: ClassDecomposition | None = None
) -> np.ndarray:
    """Cesàro limit Π from class invariant measures and absorption probabilities."""
    decomposition = decomposition or decompose_classes(chain)
    absorption = absorption_matrix(chain, decomposition)
    limiting = np.zeros_like(chain.transition)
    for c, members in enumerate(decomposition.recurrent_classes):
        members = list(members)
        measure = _invariant_measure(chain.transition[np.ix_(members, members)])
        limiting[:, members] = np.outer(absorption[:, c], measure)
    return limiting


def poisson_solve(
    chain: GlobalChain,
    charge: np.ndarray,
    decomposition: ClassDecomposition | None = None,
) -> PoissonSolution:
    """Solve (I − T)𝔤 = 0, 𝔤 + (I − T)𝔥 = r with 𝔤 = Π r and 𝔥 = H r."""
    charge = np.asarray(charge, dtype=float)
    if charge.shape != (chain.n_states,):
        raise ValueError(f"charge shape {charge.shape} != {(chain.n_states,)}")
    transition = chain.transition
    identity = np.eye(chain.n_states)
    limiting = limiting_matrix(chain, decomposition)
    try:
        fundamental = linalg.inv(identity - transition + limiting)
    except (linalg.LinAlgError, ValueError) as err:
        raise SingularSystem(f"fundamental matrix: {err}") from err
    deviation = fundamental @ (identity - limiting)
    gain = limiting @ charge
    bias = deviation @ charge
    residual = max(
        np.abs(gain - transition @ gain).max(initial=0.0),
        np.abs(gain + bias - charge - transition @ bias).max(initial=0.0),
    )
    scale = max(1.0, float(np.abs(bias).max(initial=0.0)))
    if residual > PE_RESIDUAL_TOL * scale:
        raise ResidualTooLarge(f"Poisson equation residual {residual:.3g}")
    return PoissonSolution(gain, bias, charge, limiting, fundamental, deviation)


def solve_scalar_poisson(
    chain: GlobalChain, charge: np.ndarray, reference: int = 0
) -> tuple[float, np.ndarray]:
    """Unichain Poisson equation η + h − T h = r with h[reference] = 0."""
    n = chain.n_states
    system = np.zeros((n + 1, n + 1))
    system[:n, 0] = 1.0
    system[:n, 1:] = np.eye(n) - chain.transition
    system[n, 1 + reference] = 1.0
    rhs = np.append(np.asarray(charge, dtype=float), 0.0)
    try:
        solution = linalg.solve(system, rhs)
    except (linalg.LinAlgError, ValueError) as err:
        raise SingularSystem(f"scalar Poisson equation: {err}") from err
    return float(solution[0]), solution[1:]


def absorption_into(
    chain: GlobalChain, target: np.ndarray, initial: np.ndarray | None = None
) -> float:
    """Probability of absorption into a set of sink states, via the gain."""
    initial = chain.initial if initial is None else initial
    solution = poisson_solve(chain, np.asarray(target, dtype=float))
    return float(initial @ solution.gain)


def absorption_probability(
    chain: GlobalChain,
    initial: np.ndarray,
    steady: Sequence[bool],
    product: ProductPomdp,
) -> float:
    """Probability that the ssd chain ends in Avoid × G^ss."""
    if chain.kind != CHAIN_SSD:
        raise ValueError("absorption probability is defined on the ssd chain")
    charge = np.outer(product.avoid_mask, np.asarray(steady, dtype=float)).ravel()
    return absorption_into(chain, charge, initial)


def first_passage_probability(chain: GlobalChain, target: np.ndarray) -> np.ndarray:
    """Probability of ever hitting the target set, from every state."""
    target = np.asarray(target, dtype=bool)
    graph = csr_matrix(chain.transition.T > 0)
    can_reach = np.zeros(chain.n_states, dtype=bool)
    for start in np.flatnonzero(target):
        if not can_reach[start]:
            reached = breadth_first_order(graph, start, return_predecessors=False)
            can_reach[reached] = True
    hitting = target.astype(float)
    unknown = np.flatnonzero(can_reach & ~target)
    if unknown.size:
        system = np.eye(unknown.size) - chain.transition[np.ix_(unknown, unknown)]
        rhs = chain.transition[np.ix_(unknown, np.flatnonzero(target))].sum(axis=1)
        try:
            hitting[unknown] = linalg.solve(system, rhs)
        except (linalg.LinAlgError, ValueError) as err:
            raise SingularSystem(f"first passage: {err}") from err
    return hitting


def reach_probabilities(
    chain: GlobalChain,
    decomposition: ClassDecomposition,
    initial: np.ndarray | None = None,
) -> np.ndarray:
    """Pr[π → R] for every recurrent class R."""
    initial = chain.initial if initial is None else initial
    return initial @ absorption_matrix(chain, decomposition)


def phi_feasible_sets(
    chain: GlobalChain, decomposition: ClassDecomposition, product: ProductPomdp
) -> FeasibleSets:
    """Flag recurrent classes satisfying some Rabin pair and sum their reach mass."""
    classes = decomposition.recurrent_classes
    flagged: list[bool] = []
    pair_of_class: list[int | None] = []
    for members in classes:
        projected = np.unique([chain.product_state(i) for i in members])
        pair = next(
            (
                i
                for i in range(product.n_pairs)
                if product.repeat[i][projected].any()
                and not product.avoid[i][projected].any()
            ),
            None,
        )
        flagged.append(pair is not None)
        pair_of_class.append(pair)
    reach = reach_probabilities(chain, decomposition)
    probability = float(reach[np.array(flagged, dtype=bool)].sum()) if classes else 0.0
    _LOGGER.debug(
        "%s of %s recurrent classes are feasible, probability %.6g",
        sum(flagged),
        len(classes),
        probability,
    )
    return FeasibleSets(list(classes), flagged, pair_of_class, reach, probability)


def path_probability(chain: GlobalChain, path: Sequence[int]) -> float:
    """Probability of the cylinder set of a finite path."""
    probability = float(chain.initial[path[0]])
    for source, target in zip(path, path[1:]):
        probability *= chain.transition[source, target]
    return probability
