"""Stochastic finite-state controllers and their value vectors."""
from __future__ import annotations

from dataclasses import dataclass, replace
import logging

import numpy as np
from scipy import linalg

from .const import (
    CHAIN_PLAIN,
    DEFAULT_EPS_BETA,
    EVAL_DIRECT,
    EVAL_METHODS,
    EVAL_RICHARDSON,
    OMEGA_CLEAN_TOL,
    OMEGA_TOL,
    RICHARDSON_MAX_ITERATIONS,
)
from .chain import build_global_chain
from .exceptions import (
    InvalidConfig,
    IterationLimit,
    ModelParseError,
    SingularSystem,
    StructureViolation,
)
from .model import Belief
from .product import LtlRewards, ProductPomdp
from .textformat import (
    format_float,
    header,
    index_names,
    lookup,
    parse_float,
    parse_sections,
    unique_sections,
)

_LOGGER = logging.getLogger(__name__)

SFSC_SECTIONS = [
    "istates",
    "transient",
    "steady",
    "observations",
    "actions",
    "kappa",
    "omega",
]


@dataclass(frozen=True, eq=False)
class Sfsc:
    """Stochastic finite-state controller.

    ``omega[g, o, g2, a]`` is ω(g2, a | g, o). ``steady[g]`` marks G^ss; κ is
    the argmax rule, stored as the I-state it selected.
    """

    istates: tuple[str, ...]
    steady: tuple[bool, ...]
    omega: np.ndarray
    observations: tuple[str, ...]
    actions: tuple[str, ...]
    initial_istate: int = 0

    def __post_init__(self) -> None:
        omega = np.array(self.omega, dtype=float)
        omega.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "istates", tuple(self.istates))
        object.__setattr__(self, "steady", tuple(bool(x) for x in self.steady))
        shape = (self.size, len(self.observations), self.size, len(self.actions))
        if omega.shape != shape:
            raise ValueError(f"omega shape {omega.shape} != {shape}")
        if len(self.steady) != self.size:
            raise ValueError("partition must cover every I-state")
        if not 0 <= self.initial_istate < self.size:
            raise ValueError(f"initial I-state {self.initial_istate} out of range")

    @property
    def size(self) -> int:
        return len(self.istates)

    @property
    def steady_istates(self) -> list[int]:
        return [g for g, flag in enumerate(self.steady) if flag]

    @property
    def transient_istates(self) -> list[int]:
        return [g for g, flag in enumerate(self.steady) if not flag]

    @property
    def n_steady(self) -> int:
        return sum(self.steady)

    def structure_violation(self) -> float:
        """Largest steady-to-transient probability (0 when the structure holds)"""
        steady = np.array(self.steady)
        if not steady.any() or steady.all():
            return 0.0
        return float(self.omega[steady][:, :, ~steady].max())

    def check(self) -> None:
        """Raise if ω is not stochastic or breaks the structure constraint"""
        sums = self.omega.sum(axis=(2, 3))
        if np.abs(sums - 1.0).max(initial=0.0) > OMEGA_TOL:
            raise ValueError("omega rows must sum to 1")
        if self.omega.min(initial=0.0) < -OMEGA_TOL:
            raise ValueError("omega entries must be nonnegative")
        if self.structure_violation() > 0:
            raise StructureViolation("steady I-state moves to a transient I-state")

    def with_omega_row(self, g: int, row: np.ndarray) -> Sfsc:
        """Copy with the parameters of I-state g replaced"""
        omega = self.omega.copy()
        omega[g] = row
        return replace(self, omega=omega)

    def with_initial_istate(self, g: int) -> Sfsc:
        return replace(self, initial_istate=g)

    def with_added_istate(
        self, successor: int, action: int, steady: bool, name: str | None = None
    ) -> Sfsc:
        """Copy with a deterministic I-state moving to (successor, action)"""
        size = self.size
        n_o, n_a = len(self.observations), len(self.actions)
        omega = np.zeros((size + 1, n_o, size + 1, n_a))
        omega[:size, :, :size, :] = self.omega
        omega[size, :, successor, action] = 1.0
        if name is None:
            name = _fresh_name(self.istates)
        return replace(
            self,
            istates=(*self.istates, name),
            steady=(*self.steady, steady),
            omega=omega,
        )

    def is_deterministic_node(self, g: int, successor: int, action: int) -> bool:
        return bool(np.all(self.omega[g, :, successor, action] == 1.0))


def _fresh_name(names: tuple[str, ...]) -> str:
    index = len(names)
    while f"g{index}" in names:
        index += 1
    return f"g{index}"


def clean_distribution(row: np.ndarray) -> np.ndarray:
    """Clip solver noise from an ω row and renormalize per observation."""
    row = np.where(row < OMEGA_CLEAN_TOL, 0.0, row)
    sums = row.sum(axis=(-2, -1), keepdims=True)
    return row / np.where(sums > 0, sums, 1.0)


def uniform_sfsc(product: ProductPomdp, n_transient: int, n_steady: int) -> Sfsc:
    """Transient I-states uniform over G × Act, steady over G^ss × Act."""
    size = n_transient + n_steady
    steady = tuple(g >= n_transient for g in range(size))
    omega = np.zeros((size, product.n_observations, size, product.n_actions))
    omega[:n_transient] = 1.0 / (size * product.n_actions)
    if n_steady:
        share = 1.0 / (n_steady * product.n_actions)
        omega[n_transient:, :, n_transient:, :] = share
    return Sfsc(
        istates=tuple(f"g{g}" for g in range(size)),
        steady=steady,
        omega=omega,
        observations=product.observations,
        actions=product.actions,
    )


def induce_controller(sfsc: Sfsc) -> Sfsc:
    """Controller for the original POMDP: same I-states, ω and κ."""
    return replace(sfsc, omega=sfsc.omega.copy())


@dataclass(frozen=True, eq=False)
class ValueVectors:
    """Value vectors of one evaluation, each shaped (product state, I-state)"""

    discounted: np.ndarray
    average: np.ndarray | None = None
    gain: np.ndarray | None = None


def evaluate_discounted(
    product: ProductPomdp,
    sfsc: Sfsc,
    rewards: LtlRewards,
    method: str = EVAL_DIRECT,
    tol: float = DEFAULT_EPS_BETA,
) -> np.ndarray:
    """Solve V = r + β·T V on the plain global chain; returns V[s, g]."""
    if method not in EVAL_METHODS:
        raise InvalidConfig(f"unknown evaluation method {method!r}")
    chain = build_global_chain(product, sfsc, CHAIN_PLAIN)
    reward = rewards.discounted_charge()
    beta = rewards.discount
    if method == EVAL_RICHARDSON:
        values = np.zeros_like(reward)
        for iteration in range(RICHARDSON_MAX_ITERATIONS):
            updated = reward + beta * (chain.transition @ values)
            delta = np.abs(updated - values).max(initial=0.0)
            values = updated
            if delta * beta / (1 - beta) < tol:
                _LOGGER.debug("Richardson converged after %s sweeps", iteration + 1)
                break
        else:
            raise IterationLimit("Richardson iteration did not converge")
    else:
        system = np.eye(chain.n_states) - beta * chain.transition
        try:
            values = linalg.solve(system, reward)
        except (linalg.LinAlgError, ValueError) as err:
            raise SingularSystem(f"discounted Bellman system: {err}") from err
    return values.reshape(product.n_states, sfsc.size)


def _distribution(belief: Belief | np.ndarray) -> np.ndarray:
    return belief.distribution if isinstance(belief, Belief) else np.asarray(belief)


def value_at_belief(values: np.ndarray, g: int, belief: Belief | np.ndarray) -> float:
    """Expected value bᵀV_g of starting I-state g at a belief"""
    return float(_distribution(belief) @ values[:, g])


def belief_values(values: np.ndarray, belief: Belief | np.ndarray) -> np.ndarray:
    return _distribution(belief) @ values


def best_istate(values: np.ndarray, belief: Belief | np.ndarray) -> int:
    """I-state with the highest value at a belief, lowest index on ties"""
    return int(np.argmax(belief_values(values, belief)))


def parse_sfsc(text: str) -> Sfsc:
    """Parse the controller text grammar."""
    sections = unique_sections(
        parse_sections(text, SFSC_SECTIONS),
        ["istates", "observations", "actions", "omega"],
    )
    istates = index_names(
        sections["istates"].inline, "I-state", sections["istates"].line
    )
    observations = index_names(
        sections["observations"].inline, "observation", sections["observations"].line
    )
    actions = index_names(
        sections["actions"].inline, "action", sections["actions"].line
    )
    steady_names = sections["steady"].inline if "steady" in sections else []
    transient_names = sections["transient"].inline if "transient" in sections else []
    if set(steady_names) & set(transient_names):
        raise ModelParseError("an I-state is both transient and steady")
    if set(steady_names) | set(transient_names) != set(istates):
        raise ModelParseError("partition must list every I-state exactly once")
    omega = np.zeros((len(istates), len(observations), len(istates), len(actions)))
    for line, entry in sections["omega"].entries:
        lhs, sep, value = entry.rpartition(":")
        source, arrow, target = lhs.partition("->")
        if not sep or not arrow:
            raise ModelParseError("omega entry is 'g,o -> g2,action : p'", line)
        try:
            g, o = (token.strip() for token in source.split(","))
            g2, a = (token.strip() for token in target.split(","))
        except ValueError as err:
            raise ModelParseError(f"malformed omega entry {entry!r}", line) from err
        omega[
            lookup(istates, g, "I-state", line),
            lookup(observations, o, "observation", line),
            lookup(istates, g2, "I-state", line),
            lookup(actions, a, "action", line),
        ] = parse_float(value.strip(), line)
    initial = 0
    if "kappa" in sections:
        kappa = sections["kappa"]
        if len(kappa.inline) != 1:
            raise ModelParseError("kappa names exactly one I-state", kappa.line)
        initial = lookup(istates, kappa.inline[0], "I-state", kappa.line)
    sfsc = Sfsc(
        istates=tuple(istates),
        steady=tuple(name in steady_names for name in istates),
        omega=omega,
        observations=tuple(observations),
        actions=tuple(actions),
        initial_istate=initial,
    )
    try:
        sfsc.check()
    except (ValueError, StructureViolation) as err:
        raise ModelParseError(f"invalid controller: {err}") from err
    return sfsc


def dump_sfsc(sfsc: Sfsc) -> str:
    """Serialize a controller to its text grammar."""
    lines = [
        header("istates", sfsc.istates),
        header("transient", [sfsc.istates[g] for g in sfsc.transient_istates]),
        header("steady", [sfsc.istates[g] for g in sfsc.steady_istates]),
        header("observations", sfsc.observations),
        header("actions", sfsc.actions),
        header("kappa", [sfsc.istates[sfsc.initial_istate]]),
        header("omega"),
    ]
    for g, o, g2, a in zip(*np.nonzero(sfsc.omega)):
        lines.append(
            f"  {sfsc.istates[g]},{sfsc.observations[o]} -> "
            f"{sfsc.istates[g2]},{sfsc.actions[a]} : "
            f"{format_float(sfsc.omega[g, o, g2, a])}"
        )
    return "\n".join(lines) + "\n"
