"""Labeled POMDP representation, validation and belief updates."""
from __future__ import annotations

from dataclasses import dataclass
import logging

import numpy as np

from .const import BELIEF_TOL, STOCHASTIC_TOL
from .exceptions import InvalidModel, ModelParseError, ZeroLikelihood
from .textformat import (
    format_float,
    header,
    index_names,
    lookup,
    parse_float,
    parse_sections,
    split_entry,
    unique_sections,
)

_LOGGER = logging.getLogger(__name__)

POMDP_SECTIONS = [
    "states",
    "actions",
    "observations",
    "ap",
    "transition",
    "observation_fn",
    "initial",
    "labeling",
    "rewards",
]
POMDP_REQUIRED = ["states", "actions", "observations", "transition", "initial"]


def _frozen(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


def resolve(names: tuple[str, ...], key: str | int, kind: str) -> int:
    """Accept either a name or an index into an ordered name set."""
    if isinstance(key, (int, np.integer)):
        if not 0 <= key < len(names):
            raise KeyError(f"{kind} index {key} out of range")
        return int(key)
    try:
        return names.index(key)
    except ValueError as err:
        raise KeyError(f"unknown {kind} {key!r}") from err


@dataclass(frozen=True, eq=False)
class LabeledPomdp:
    """POMDP with an atomic-proposition labeling of its states.

    ``transition[a, s, s2]`` is T(s2|s,a), ``observation_fn[s, o]`` is O(o|s).
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    observations: tuple[str, ...]
    transition: np.ndarray
    observation_fn: np.ndarray
    initial: np.ndarray
    atomic_props: tuple[str, ...]
    labeling: tuple[frozenset[str], ...]
    rewards: np.ndarray | None = None

    def __post_init__(self) -> None:
        n_s, n_a, n_o = len(self.states), len(self.actions), len(self.observations)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "atomic_props", tuple(self.atomic_props))
        object.__setattr__(
            self, "labeling", tuple(frozenset(label) for label in self.labeling)
        )
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "observation_fn", _frozen(self.observation_fn))
        object.__setattr__(self, "initial", _frozen(self.initial))
        if self.rewards is not None:
            object.__setattr__(self, "rewards", _frozen(self.rewards))
        if self.transition.shape != (n_a, n_s, n_s):
            raise InvalidModel(
                f"transition shape {self.transition.shape} != {(n_a, n_s, n_s)}"
            )
        if self.observation_fn.shape != (n_s, n_o):
            raise InvalidModel(
                f"observation shape {self.observation_fn.shape} != {(n_s, n_o)}"
            )
        if self.initial.shape != (n_s,):
            raise InvalidModel(f"initial shape {self.initial.shape} != {(n_s,)}")
        if len(self.labeling) != n_s:
            raise InvalidModel("labeling must assign a label set to every state")
        if self.rewards is not None and self.rewards.shape != (n_s,):
            raise InvalidModel(f"rewards shape {self.rewards.shape} != {(n_s,)}")

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    def label_of(self, state: str | int) -> frozenset[str]:
        """Atomic propositions true in a state"""
        return self.labeling[resolve(self.states, state, "state")]


@dataclass(frozen=True, eq=False)
class Belief:
    """Distribution over an ordered state set"""

    distribution: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "distribution", _frozen(self.distribution))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.distribution > 0))

    def is_valid(self) -> bool:
        values = self.distribution
        return bool(
            np.all(values >= -BELIEF_TOL)
            and np.all(values <= 1 + BELIEF_TOL)
            and abs(values.sum() - 1.0) <= BELIEF_TOL
        )


@dataclass(frozen=True)
class Violation:
    """One broken invariant of a model"""

    kind: str
    location: tuple[str, ...]
    deviation: float

    def __str__(self) -> str:
        where = ", ".join(self.location)
        return f"{self.kind}({where}): deviation {self.deviation:.3g}"


def _row_violations(
    kind: str, location: tuple[str, ...], row: np.ndarray
) -> list[Violation]:
    violations = []
    low, high = row.min(initial=0.0), row.max(initial=0.0)
    if low < -STOCHASTIC_TOL:
        violations.append(Violation(f"{kind}_negative", location, float(-low)))
    if high > 1 + STOCHASTIC_TOL:
        violations.append(Violation(f"{kind}_above_one", location, float(high - 1)))
    deviation = abs(float(row.sum()) - 1.0)
    if deviation > STOCHASTIC_TOL:
        violations.append(Violation(kind, location, deviation))
    return violations


def validate_pomdp(model: LabeledPomdp) -> list[Violation]:
    """Report every stochasticity or labeling violation, empty iff valid."""
    report: list[Violation] = []
    for a, action in enumerate(model.actions):
        for s, state in enumerate(model.states):
            report.extend(
                _row_violations("transition", (state, action), model.transition[a, s])
            )
    for s, state in enumerate(model.states):
        report.extend(
            _row_violations("observation", (state,), model.observation_fn[s])
        )
    report.extend(_row_violations("initial", (), model.initial))
    props = set(model.atomic_props)
    for state, label in zip(model.states, model.labeling):
        unknown = label - props
        if unknown:
            report.append(
                Violation("labeling", (state, *sorted(unknown)), float(len(unknown)))
            )
    if report:
        _LOGGER.debug("Model has %s violations", len(report))
    return report


def ensure_valid(model: LabeledPomdp) -> None:
    """Raise InvalidModel listing the violations of an invalid model."""
    report = validate_pomdp(model)
    if report:
        raise InvalidModel("; ".join(str(violation) for violation in report))


def belief_init(model: LabeledPomdp, observation: str | int) -> Belief:
    """Condition the initial distribution on the first observation."""
    o = resolve(model.observations, observation, "observation")
    joint = model.initial * model.observation_fn[:, o]
    total = joint.sum()
    if total <= 0:
        raise ZeroLikelihood(
            f"observation {model.observations[o]} impossible under the initial state"
        )
    return Belief(joint / total)


def belief_update(
    model: LabeledPomdp,
    belief: Belief,
    action: str | int,
    observation: str | int,
) -> Belief:
    """Bayesian update after taking an action and receiving an observation."""
    a = resolve(model.actions, action, "action")
    o = resolve(model.observations, observation, "observation")
    predicted = belief.distribution @ model.transition[a]
    joint = model.observation_fn[:, o] * predicted
    total = joint.sum()
    if total <= 0:
        raise ZeroLikelihood(
            f"observation {model.observations[o]} impossible after "
            f"{model.actions[a]}"
        )
    return Belief(joint / total)


def parse_pomdp(text: str) -> LabeledPomdp:
    """Parse the POMDP text grammar."""
    sections = unique_sections(parse_sections(text, POMDP_SECTIONS), POMDP_REQUIRED)
    states = index_names(sections["states"].inline, "state", sections["states"].line)
    actions = index_names(
        sections["actions"].inline, "action", sections["actions"].line
    )
    observations = index_names(
        sections["observations"].inline,
        "observation",
        sections["observations"].line,
    )
    props = tuple(sections["ap"].inline) if "ap" in sections else ()
    n_s, n_a, n_o = len(states), len(actions), len(observations)

    transition = np.zeros((n_a, n_s, n_s))
    seen: set[tuple[int, ...]] = set()
    for line, entry in sections["transition"].entries:
        lhs, rhs = split_entry(entry, line)
        if len(lhs) != 3:
            raise ModelParseError("transition entry is 'state action state : p'", line)
        key = (
            lookup(actions, lhs[1], "action", line),
            lookup(states, lhs[0], "state", line),
            lookup(states, lhs[2], "state", line),
        )
        if key in seen:
            raise ModelParseError(f"duplicate transition entry {entry!r}", line)
        seen.add(key)
        transition[key] = parse_float(rhs, line)

    observation_fn = np.zeros((n_s, n_o))
    if "observation_fn" in sections:
        for line, entry in sections["observation_fn"].entries:
            lhs, rhs = split_entry(entry, line)
            if len(lhs) != 2:
                raise ModelParseError(
                    "observation entry is 'state observation : p'", line
                )
            s = lookup(states, lhs[0], "state", line)
            o = lookup(observations, lhs[1], "observation", line)
            observation_fn[s, o] = parse_float(rhs, line)
    elif n_s == n_o:
        observation_fn = np.eye(n_s)
    else:
        raise ModelParseError("missing section 'observation_fn'")

    initial = np.zeros(n_s)
    for line, entry in sections["initial"].entries:
        lhs, rhs = split_entry(entry, line)
        if len(lhs) != 1:
            raise ModelParseError("initial entry is 'state : p'", line)
        initial[lookup(states, lhs[0], "state", line)] = parse_float(rhs, line)

    labeling: list[frozenset[str]] = [frozenset()] * n_s
    if "labeling" in sections:
        for line, entry in sections["labeling"].entries:
            lhs, rhs = split_entry(entry, line)
            if len(lhs) != 1:
                raise ModelParseError("labeling entry is 'state : props'", line)
            label = frozenset(rhs.split())
            if not label <= set(props):
                raise ModelParseError(
                    f"undeclared propositions {sorted(label - set(props))}", line
                )
            labeling[lookup(states, lhs[0], "state", line)] = label

    rewards = None
    if "rewards" in sections:
        rewards = np.zeros(n_s)
        for line, entry in sections["rewards"].entries:
            lhs, rhs = split_entry(entry, line)
            rewards[lookup(states, lhs[0], "state", line)] = parse_float(rhs, line)

    return LabeledPomdp(
        states=tuple(states),
        actions=tuple(actions),
        observations=tuple(observations),
        transition=transition,
        observation_fn=observation_fn,
        initial=initial,
        atomic_props=props,
        labeling=tuple(labeling),
        rewards=rewards,
    )


def pomdp_lines(model: LabeledPomdp) -> list[str]:
    """Serialize the POMDP sections line by line."""
    state_names = model.states
    lines = [
        header("states", state_names),
        header("actions", model.actions),
        header("observations", model.observations),
        header("ap", model.atomic_props),
        header("transition"),
    ]
    for s, source in enumerate(state_names):
        for a, action in enumerate(model.actions):
            for s2 in np.flatnonzero(model.transition[a, s]):
                value = format_float(model.transition[a, s, s2])
                lines.append(f"  {source} {action} {state_names[s2]} : {value}")
    lines.append(header("observation_fn"))
    for s, source in enumerate(state_names):
        for o in np.flatnonzero(model.observation_fn[s]):
            value = format_float(model.observation_fn[s, o])
            lines.append(f"  {source} {model.observations[o]} : {value}")
    lines.append(header("initial"))
    for s in np.flatnonzero(model.initial):
        lines.append(f"  {state_names[s]} : {format_float(model.initial[s])}")
    lines.append(header("labeling"))
    for source, label in zip(state_names, model.labeling):
        props = " ".join(p for p in model.atomic_props if p in label)
        lines.append(f"  {source} : {props}".rstrip())
    if model.rewards is not None:
        lines.append(header("rewards"))
        for s in np.flatnonzero(model.rewards):
            lines.append(f"  {state_names[s]} : {format_float(model.rewards[s])}")
    return lines


def dump_pomdp(model: LabeledPomdp) -> str:
    """Serialize a POMDP to its text grammar."""
    return "\n".join(pomdp_lines(model)) + "\n"
