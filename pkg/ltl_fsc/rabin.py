"""Deterministic Rabin automata: stepping, lasso acceptance and builtin automata."""
from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
import logging
import re

import numpy as np

from .const import BUILTIN_CASE1, BUILTIN_CASE2
from .exceptions import ModelParseError, UnknownLetter, UnknownName, UnknownState
from .textformat import (
    header,
    index_names,
    lookup,
    parse_sections,
    split_entry,
)

_LOGGER = logging.getLogger(__name__)

DRA_SECTIONS = ["ap", "states", "initial", "transitions", "pairs"]
TRANSITION_PATTERN = re.compile(r"^(\S+)\s+--\s+\{([^}]*)\}\s+-->\s+(\S+)$")

Letter = Iterable[str]


@dataclass(frozen=True)
class RabinPair:
    """Accepting pair: visit Repeat infinitely often and Avoid finitely often"""

    avoid: frozenset[int]
    repeat: frozenset[int]


@dataclass(frozen=True, eq=False)
class Dra:
    """Deterministic Rabin automaton over the letters 2^AP.

    ``delta[q, mask]`` is the successor of ``q`` on the letter whose bit ``i``
    is set iff ``atomic_props[i]`` holds.
    """

    states: tuple[str, ...]
    atomic_props: tuple[str, ...]
    delta: np.ndarray
    initial: int
    pairs: tuple[RabinPair, ...]

    def __post_init__(self) -> None:
        delta = np.array(self.delta, dtype=int)
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "atomic_props", tuple(self.atomic_props))
        object.__setattr__(self, "pairs", tuple(self.pairs))
        n_q = len(self.states)
        if delta.shape != (n_q, 2 ** len(self.atomic_props)):
            raise ModelParseError("transition function is not total")
        if delta.size and (delta.min() < 0 or delta.max() >= n_q):
            raise UnknownState("transition target outside the state set")
        if not 0 <= self.initial < n_q:
            raise UnknownState(f"initial state index {self.initial} out of range")
        if not self.pairs:
            raise ModelParseError("a Rabin automaton needs at least one pair")
        for pair in self.pairs:
            if not (pair.avoid | pair.repeat) <= set(range(n_q)):
                raise UnknownState("Rabin pair refers to an unknown state")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def letter_mask(self, letter: Letter) -> int:
        """Bitmask of a letter given as a set of proposition names"""
        mask = 0
        for prop in letter:
            if prop not in self.atomic_props:
                raise UnknownLetter(f"proposition {prop!r} not in {self.atomic_props}")
            mask |= 1 << self.atomic_props.index(prop)
        return mask

    def letter_of(self, mask: int) -> frozenset[str]:
        return frozenset(
            prop for i, prop in enumerate(self.atomic_props) if mask >> i & 1
        )

    def state_index(self, state: str | int) -> int:
        if isinstance(state, (int, np.integer)):
            if not 0 <= state < self.n_states:
                raise UnknownState(f"state index {state} out of range")
            return int(state)
        if state not in self.states:
            raise UnknownState(f"unknown automaton state {state!r}")
        return self.states.index(state)

    def step(self, q: int, mask: int) -> int:
        return int(self.delta[q, mask])

    def accepts_inf(self, inf: set[int]) -> bool:
        """Rabin condition on the set of states visited infinitely often"""
        return any(inf & pair.repeat and not inf & pair.avoid for pair in self.pairs)


def dra_step(dra: Dra, q: str | int, letter: Letter) -> str:
    """Successor state name of q on a letter."""
    return dra.states[dra.step(dra.state_index(q), dra.letter_mask(letter))]


def run_dra(dra: Dra, word: Sequence[Letter], start: int | None = None) -> list[int]:
    """State sequence of the run on a finite word, including the start state."""
    q = dra.initial if start is None else start
    run = [q]
    for letter in word:
        q = dra.step(q, dra.letter_mask(letter))
        run.append(q)
    return run


def accepts_lasso(dra: Dra, prefix: Sequence[Letter], cycle: Sequence[Letter]) -> bool:
    """Rabin acceptance of the ultimately periodic word prefix·cycle^ω."""
    if not cycle:
        raise ValueError("cycle must be nonempty")
    q = run_dra(dra, prefix)[-1]
    masks = [dra.letter_mask(letter) for letter in cycle]
    order: list[int] = []
    seen: dict[tuple[int, int], int] = {}
    position = 0
    while (q, position) not in seen:
        seen[(q, position)] = len(order)
        order.append(q)
        q = dra.step(q, masks[position])
        position = (position + 1) % len(masks)
    return dra.accepts_inf(set(order[seen[(q, position)] :]))


def build_dra(
    states: Sequence[str],
    atomic_props: Sequence[str],
    successor: Callable[[int, frozenset[str]], int],
    pairs: Sequence[RabinPair],
    initial: int = 0,
) -> Dra:
    """Tabulate a transition rule given on (state index, letter)."""
    props = tuple(atomic_props)
    delta = np.zeros((len(states), 2 ** len(props)), dtype=int)
    for q in range(len(states)):
        for mask in range(2 ** len(props)):
            letter = frozenset(p for i, p in enumerate(props) if mask >> i & 1)
            delta[q, mask] = successor(q, letter)
    return Dra(tuple(states), props, delta, initial, tuple(pairs))


def _case1_successor(q: int, letter: frozenset[str]) -> int:
    if q == 2 or "c" in letter:
        return 2
    return 1 if "b" in letter else 0


def _case2_successor(q: int, letter: frozenset[str]) -> int:
    if q == 3 or "c" in letter:
        return 3
    if q == 1:
        return 2 if "b" in letter else 1
    if "a" in letter:
        return 2 if "b" in letter else 1
    return 0


def builtin_dra(name: str) -> Dra:
    """Hand-built automata for the two grid-world formulas.

    case1: eventually always b, never c. q0 = last letter not b, q1 = last
    letter b, q2 = c seen.
    case2: infinitely often a, infinitely often b, never c. q0 waits for a,
    q1 waits for b, q2 marks a completed a-then-b round, q3 = c seen.
    """
    if name == BUILTIN_CASE1:
        return build_dra(
            ("q0", "q1", "q2"),
            ("a", "b", "c"),
            _case1_successor,
            [RabinPair(avoid=frozenset({0, 2}), repeat=frozenset({1}))],
        )
    if name == BUILTIN_CASE2:
        return build_dra(
            ("q0", "q1", "q2", "q3"),
            ("a", "b", "c"),
            _case2_successor,
            [RabinPair(avoid=frozenset({3}), repeat=frozenset({2}))],
        )
    raise UnknownName(f"no builtin automaton named {name!r}")


def parse_dra(text: str) -> Dra:
    """Parse the automaton text grammar."""
    sections = parse_sections(text, DRA_SECTIONS)
    singles = {s.name: s for s in sections if s.name != "pairs"}
    for name in ("states", "initial", "transitions"):
        if name not in singles:
            raise ModelParseError(f"missing section {name!r}")
    props = tuple(singles["ap"].inline) if "ap" in singles else ()
    states = index_names(singles["states"].inline, "state", singles["states"].line)
    init = singles["initial"]
    if len(init.inline) != 1:
        raise ModelParseError("initial names exactly one state", init.line)
    initial = lookup(states, init.inline[0], "state", init.line)

    delta = np.full((len(states), 2 ** len(props)), -1, dtype=int)
    for line, entry in singles["transitions"].entries:
        match = TRANSITION_PATTERN.match(entry)
        if not match:
            raise ModelParseError(f"expected 'q -- {{props}} --> q2': {entry!r}", line)
        source, letter, target = match.groups()
        mask = 0
        for prop in filter(None, (p.strip() for p in letter.split(","))):
            if prop not in props:
                raise ModelParseError(f"undeclared proposition {prop!r}", line)
            mask |= 1 << props.index(prop)
        q = lookup(states, source, "state", line)
        if delta[q, mask] >= 0:
            raise ModelParseError(f"nondeterministic transition {entry!r}", line)
        delta[q, mask] = lookup(states, target, "state", line)
    if (delta < 0).any():
        q, mask = np.argwhere(delta < 0)[0]
        raise ModelParseError(
            f"no transition from {list(states)[q]} on letter {mask:b}"
        )

    pairs = []
    for section in (s for s in sections if s.name == "pairs"):
        sets = {"avoid": frozenset(), "repeat": frozenset()}
        for line, entry in section.entries:
            lhs, rhs = split_entry(entry, line)
            if lhs not in (["avoid"], ["repeat"]):
                raise ModelParseError("pair entries are 'avoid:' and 'repeat:'", line)
            sets[lhs[0]] = frozenset(
                lookup(states, token, "state", line) for token in rhs.split()
            )
        pairs.append(RabinPair(**sets))
    return Dra(tuple(states), props, delta, initial, tuple(pairs))


def dump_dra(dra: Dra) -> str:
    """Serialize an automaton to its text grammar."""
    lines = [
        header("ap", dra.atomic_props),
        header("states", dra.states),
        header("initial", [dra.states[dra.initial]]),
        header("transitions"),
    ]
    for q, source in enumerate(dra.states):
        for mask in range(dra.delta.shape[1]):
            letter = ",".join(
                p for i, p in enumerate(dra.atomic_props) if mask >> i & 1
            )
            target = dra.states[dra.delta[q, mask]]
            lines.append(f"  {source} -- {{{letter}}} --> {target}")
    for pair in dra.pairs:
        lines.append(header("pairs"))
        avoid = " ".join(dra.states[q] for q in sorted(pair.avoid))
        repeat = " ".join(dra.states[q] for q in sorted(pair.repeat))
        lines.append(f"  avoid: {avoid}".rstrip())
        lines.append(f"  repeat: {repeat}".rstrip())
    return "\n".join(lines) + "\n"
