"""Bounded policy iteration under the conservative optimization criterion.

Each sweep improves I-states one at a time through an LP (transient I-states)
or a McCormick-relaxed bilinear program with a Poisson-equation block
(steady I-states). Candidates from the relaxation are only accepted after an
exact Poisson re-solve confirms that the steady partition still never reaches
Avoid. At a local maximum new deterministic I-states are added from the
beliefs forwarded out of the tangent beliefs.
"""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
import logging
import math
import time

import numpy as np

from .chain import (
    build_global_chain,
    decompose_classes,
    phi_feasible_sets,
    poisson_solve,
    restrict,
)
from .const import (
    BACKEND_AUTO,
    BELIEF_DEDUP_TOL,
    CHAIN_SSD,
    DEFAULT_BETA,
    DEFAULT_BIG_M,
    DEFAULT_EPS_BETA,
    DEFAULT_EPS_FEAS,
    DEFAULT_EPS_IMPROVE,
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_N_MAX,
    DEFAULT_N_NEW,
    DEFAULT_RABIN_INDEX,
    DEFAULT_SEARCH_TIME_LIMIT,
    EVAL_DIRECT,
    EVAL_METHODS,
    INDIFFERENCE_TOL,
    LP_BACKENDS,
    MONOTONE_TOL,
    OP_EQ,
    OP_LE,
    SENSE_MAXIMIZE,
)
from .controller import (
    Sfsc,
    best_istate,
    clean_distribution,
    evaluate_discounted,
    uniform_sfsc,
    value_at_belief,
)
from .exceptions import (
    Infeasible,
    InvalidConfig,
    InvariantBreach,
    LpFailure,
    TimeLimitReached,
)
from .optimize import BilinearProgram, LinearProgram, relax_bilinear, solve_lp
from .product import (
    ProductPomdp,
    ltl_rewards,
    modified_transition,
    select_pair,
    steady_state_seed,
)

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class BpiConfig:
    """Parameters of a synthesis run"""

    n_max: int = DEFAULT_N_MAX
    n_new: int = DEFAULT_N_NEW
    beta: float = DEFAULT_BETA
    eps_beta: float = DEFAULT_EPS_BETA
    eps_feas: float = DEFAULT_EPS_FEAS
    eps_improve: float = DEFAULT_EPS_IMPROVE
    big_m1: float = DEFAULT_BIG_M
    big_m2: float = DEFAULT_BIG_M
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    rabin_index: int = DEFAULT_RABIN_INDEX
    eval_method: str = EVAL_DIRECT
    lp_backend: str = BACKEND_AUTO
    time_limit: float | None = None
    search_time_limit: float = DEFAULT_SEARCH_TIME_LIMIT

    def __post_init__(self) -> None:
        if self.n_max < 1 or self.n_new < 1 or self.n_new > self.n_max:
            raise InvalidConfig(
                f"need 1 <= n_new ({self.n_new}) <= n_max ({self.n_max})"
            )
        if not 0 < self.beta < 1:
            raise InvalidConfig(f"beta {self.beta} outside (0, 1)")
        for name in ("eps_beta", "eps_feas", "eps_improve", "big_m1", "big_m2"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.max_iterations < 1:
            raise InvalidConfig("max_iterations must be at least 1")
        if self.eval_method not in EVAL_METHODS:
            raise InvalidConfig(f"unknown evaluation method {self.eval_method!r}")
        if self.lp_backend not in LP_BACKENDS:
            raise InvalidConfig(f"unknown LP backend {self.lp_backend!r}")
        if self.time_limit is not None and not self.time_limit > 0:
            raise InvalidConfig("time_limit must be positive")
        if not self.search_time_limit > 0:
            raise InvalidConfig("search_time_limit must be positive")


@dataclass(frozen=True, eq=False)
class PolicyEvaluation:
    """Values and feasibility measures of one controller"""

    values: np.ndarray
    value: float
    best: int
    residual: float
    repeat_frequency: float


@dataclass(frozen=True, eq=False)
class ImprovementOutcome:
    """Result of trying to improve one I-state"""

    improved: bool
    epsilon: float
    row: np.ndarray | None = None
    tangent_beliefs: tuple[np.ndarray, ...] = ()
    verified: bool = True


@dataclass(frozen=True, eq=False)
class AddOutcome:
    sfsc: Sfsc
    count: int


@dataclass(frozen=True)
class Backup:
    """Best deterministic successor and action at a belief"""

    value: float
    successor: int
    action: int


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration: int
    size: int
    steady_size: int
    value: float
    residual: float
    repeat_frequency: float
    epsilons: tuple[float, ...]
    added: int
    controller: Sfsc


@dataclass(eq=False)
class BpiReport:
    """Per-iteration history and final controller of a run"""

    records: list[IterationRecord] = field(default_factory=list)
    sfsc: Sfsc | None = None
    satisfaction_probability: float = 0.0
    timed_out: bool = False

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    @property
    def values(self) -> list[float]:
        return [record.value for record in self.records]


def _steady_indices(product: ProductPomdp, sfsc: Sfsc) -> np.ndarray:
    steady = np.array(sfsc.steady_istates, dtype=int)
    return (np.arange(product.n_states)[:, None] * sfsc.size + steady[None, :]).ravel()


def _steady_gain(product: ProductPomdp, sfsc: Sfsc, mask: np.ndarray) -> np.ndarray:
    """Gain of an indicator charge on the closed S × G^ss block, shaped (S, G^ss)"""
    indices = _steady_indices(product, sfsc)
    block = restrict(build_global_chain(product, sfsc, CHAIN_SSD), indices)
    charge = np.repeat(np.asarray(mask, dtype=float), sfsc.n_steady)
    return poisson_solve(block, charge).gain.reshape(product.n_states, sfsc.n_steady)


def slice_residuals(
    product: ProductPomdp, sfsc: Sfsc, mask: np.ndarray | None = None
) -> np.ndarray:
    """ι^ss_gᵀ𝔤 for every steady I-state g; the charge defaults to Avoid."""
    if not sfsc.n_steady:
        return np.zeros(0)
    seed = steady_state_seed(product, sfsc.steady)
    mask = product.avoid_mask if mask is None else mask
    return seed.slice(sfsc.steady_istates[0]) @ _steady_gain(product, sfsc, mask)


def feasibility_residual(product: ProductPomdp, sfsc: Sfsc) -> float:
    """ι^ssᵀ𝔤 with the avoid charge, 0 without steady I-states"""
    residuals = slice_residuals(product, sfsc)
    return float(residuals.mean()) if residuals.size else 0.0


def evaluate_policy(
    product: ProductPomdp, sfsc: Sfsc, config: BpiConfig
) -> PolicyEvaluation:
    """Discounted values, κ and the steady-state measures of a controller."""
    rewards = ltl_rewards(product, sfsc.steady, config.beta)
    values = evaluate_discounted(
        product, sfsc, rewards, config.eval_method, config.eps_beta
    )
    best = best_istate(values, product.initial)
    residual = repeat_frequency = 0.0
    if sfsc.n_steady:
        residual = float(slice_residuals(product, sfsc).mean())
        repeat_frequency = float(
            slice_residuals(product, sfsc, product.repeat_mask).mean()
        )
    return PolicyEvaluation(
        values=values,
        value=value_at_belief(values, best, product.initial),
        best=best,
        residual=residual,
        repeat_frequency=repeat_frequency,
    )


def _omega_variables(
    lp: LinearProgram,
    product: ProductPomdp,
    successors: Sequence[int],
    upper: float,
    prefix: str = "w",
) -> dict[tuple[int, int, int], int]:
    variables = {}
    for o in range(product.n_observations):
        for h in successors:
            for a in range(product.n_actions):
                variables[(o, h, a)] = lp.add_variable(
                    f"{prefix}[{o},{h},{a}]", 0.0, upper
                )
        lp.add_constraint(
            [
                (variables[(o, h, a)], 1.0)
                for h in successors
                for a in range(product.n_actions)
            ],
            OP_EQ,
            1.0,
            f"simplex_{prefix}[{o}]",
        )
    return variables


def _improvement_program(
    lp: LinearProgram,
    product: ProductPomdp,
    sfsc: Sfsc,
    values: np.ndarray,
    g: int,
    successors: Sequence[int],
    config: BpiConfig,
    upper: float,
) -> tuple[dict[tuple[int, int, int], int], int, dict[int, int]]:
    """Improvement constraints V(s,g) + ε ≤ r(s,g) + β·backup.

    States whose backed-up value is the same for every (successor, action)
    cannot be improved by any choice of parameters and get no row; the
    returned map sends each remaining state to its constraint index.
    """
    rewards = ltl_rewards(product, sfsc.steady, config.beta)
    reward = rewards.discounted_charge().reshape(product.n_states, sfsc.size)[:, g]
    backed = np.einsum("asx,xh->sah", product.transition, values)
    reachable = backed[:, :, list(successors)]
    spread = reachable.max(axis=(1, 2)) - reachable.min(axis=(1, 2))
    scale = np.maximum(1.0, np.abs(reachable).max(axis=(1, 2)))
    epsilon = lp.add_variable("epsilon", -math.inf, math.inf)
    omega = _omega_variables(lp, product, successors, upper)
    rows = {}
    for s in range(product.n_states):
        if spread[s] <= INDIFFERENCE_TOL * scale[s]:
            continue
        terms = [(epsilon, 1.0)]
        for (o, h, a), var in omega.items():
            coefficient = config.beta * product.observation_fn[s, o] * backed[s, a, h]
            if coefficient:
                terms.append((var, -coefficient))
        rows[s] = lp.add_constraint(
            terms, OP_LE, reward[s] - values[s, g], f"improve[{s}]"
        )
    lp.set_objective({epsilon: 1.0}, SENSE_MAXIMIZE)
    return omega, epsilon, rows


def _omega_row(
    product: ProductPomdp,
    size: int,
    omega: dict[tuple[int, int, int], int],
    assignment: np.ndarray,
) -> np.ndarray:
    row = np.zeros((product.n_observations, size, product.n_actions))
    for (o, h, a), var in omega.items():
        row[o, h, a] = assignment[var]
    return clean_distribution(row)


def _tangent(
    product: ProductPomdp, duals: np.ndarray, rows: dict[int, int]
) -> np.ndarray:
    weights = np.zeros(product.n_states)
    for s, row in rows.items():
        weights[s] = max(float(duals[row]), 0.0)
    total = weights.sum()
    if total <= 1e-12:
        _LOGGER.warning("Degenerate improvement duals, using the initial belief")
        return product.initial.copy()
    return weights / total


def _no_improvement(product: ProductPomdp, g: int) -> ImprovementOutcome:
    _LOGGER.debug("I-state %s has no state its parameters can influence", g)
    return ImprovementOutcome(False, 0.0, tangent_beliefs=(product.initial.copy(),))


def improve_istate_lp(
    product: ProductPomdp,
    sfsc: Sfsc,
    values: np.ndarray,
    g: int,
    config: BpiConfig | None = None,
    time_limit: float | None = None,
) -> ImprovementOutcome:
    """Try to raise the value of I-state g by re-solving its parameters."""
    config = config or BpiConfig()
    lp = LinearProgram()
    omega, epsilon, rows = _improvement_program(
        lp, product, sfsc, values, g, range(sfsc.size), config, math.inf
    )
    if not rows:
        return _no_improvement(product, g)
    result = solve_lp(lp, backend=config.lp_backend, time_limit=time_limit)
    if not result.optimal:
        raise LpFailure(f"improvement LP for I-state {g} is {result.status}")
    gain = float(result.assignment[epsilon])
    _LOGGER.debug("I-state %s improvement epsilon %.3g", g, gain)
    if gain > config.eps_improve:
        row = _omega_row(product, sfsc.size, omega, result.assignment)
        return ImprovementOutcome(True, gain, row)
    return ImprovementOutcome(
        False,
        max(gain, 0.0),
        tangent_beliefs=(_tangent(product, result.duals, rows),),
    )


def _transformed(
    lp: LinearProgram,
    matrix: np.ndarray,
    source: dict[tuple[int, int], int],
    s: int,
    a: int,
    h: int,
    lower: float,
    upper: float,
    name: str,
) -> int:
    """Auxiliary variable z = Σ_s2 T_mod(s2|s,a)·x[s2,h]"""
    z = lp.add_variable(f"{name}[{s},{a},{h}]", lower, upper)
    terms = [(z, 1.0)]
    for s2 in np.flatnonzero(matrix[a, s]):
        terms.append((source[(int(s2), h)], -matrix[a, s, s2]))
    lp.add_constraint(terms, OP_EQ, 0.0, f"def_{name}[{s},{a},{h}]")
    return z


def _poisson_rows(
    bp: BilinearProgram,
    product: ProductPomdp,
    sfsc: Sfsc,
    unknown: dict[int, dict[tuple[int, int, int], int]],
    charge: np.ndarray,
    config: BpiConfig,
    name: str,
) -> dict[tuple[int, int], int]:
    """Poisson equation over S × G^ss; rows of the I-states in ``unknown`` are bilinear.

    A bilinear row couples ω(h2, a | h, o) with the transformed gain and bias
    z = T_mod(·|s,a)·x[·,h2] only for observations with O(o|s) > 0 and steady
    successors h2, so each unknown I-state contributes
    2·nnz(O)·|Act|·|G^ss| products rather than 2·|S|·|O|·|G|·|Act|.
    """
    lp = bp.lp
    steady = sfsc.steady_istates
    gain = {}
    bias = {}
    for s in range(product.n_states):
        for h in steady:
            gain[(s, h)] = lp.add_variable(f"{name}_g[{s},{h}]", 0.0, 1.0)
            bias[(s, h)] = lp.add_variable(
                f"{name}_v[{s},{h}]", -config.big_m1, config.big_m2
            )
    block = build_global_chain(product, sfsc, CHAIN_SSD).transition
    modified = modified_transition(product)
    size = sfsc.size
    for s in range(product.n_states):
        z_gain: dict[tuple[int, int], int] = {}
        z_bias: dict[tuple[int, int], int] = {}
        if unknown:
            for a in range(product.n_actions):
                for h2 in steady:
                    z_gain[(a, h2)] = _transformed(
                        lp, modified, gain, s, a, h2, 0.0, 1.0, f"{name}_zg"
                    )
                    z_bias[(a, h2)] = _transformed(
                        lp, modified, bias, s, a, h2,
                        -config.big_m1, config.big_m2, f"{name}_zv",
                    )
        for h in steady:
            gain_terms = [(gain[(s, h)], 1.0)]
            bias_terms = [(gain[(s, h)], 1.0), (bias[(s, h)], 1.0)]
            if h in unknown:
                omega = unknown[h]
                for o in np.flatnonzero(product.observation_fn[s]):
                    weight = product.observation_fn[s, o]
                    for (a, h2), z in z_gain.items():
                        w = omega[(int(o), h2, a)]
                        gain_terms.append((bp.add_product(w, z), -weight))
                        bias_terms.append((bp.add_product(w, z_bias[(a, h2)]), -weight))
            else:
                row = block[s * size + h]
                for s2 in range(product.n_states):
                    for h2 in steady:
                        p = row[s2 * size + h2]
                        if p:
                            gain_terms.append((gain[(s2, h2)], -p))
                            bias_terms.append((bias[(s2, h2)], -p))
            lp.add_constraint(gain_terms, OP_EQ, 0.0, f"{name}_pe_a[{s},{h}]")
            lp.add_constraint(bias_terms, OP_EQ, charge[s], f"{name}_pe_b[{s},{h}]")
    return gain


def _feasibility_rows(
    lp: LinearProgram,
    product: ProductPomdp,
    sfsc: Sfsc,
    gain: dict[tuple[int, int], int],
    config: BpiConfig,
) -> None:
    seed = steady_state_seed(product, sfsc.steady)
    for h in sfsc.steady_istates:
        weights = seed.slice(h)
        lp.add_constraint(
            [(gain[(int(s), h)], weights[s]) for s in np.flatnonzero(weights)],
            OP_LE,
            config.eps_feas,
            f"feasible[{h}]",
        )


def improve_istate_bilinear(
    product: ProductPomdp,
    sfsc: Sfsc,
    values: np.ndarray,
    g: int,
    config: BpiConfig | None = None,
    time_limit: float | None = None,
) -> ImprovementOutcome:
    """Improve I-state g while keeping the steady partition away from Avoid."""
    config = config or BpiConfig()
    if not sfsc.steady[g]:
        return improve_istate_lp(product, sfsc, values, g, config, time_limit)
    bp = BilinearProgram(LinearProgram())
    omega, epsilon, rows = _improvement_program(
        bp.lp, product, sfsc, values, g, sfsc.steady_istates, config, 1.0
    )
    if not rows:
        return _no_improvement(product, g)
    gain = _poisson_rows(
        bp, product, sfsc, {g: omega}, product.avoid_mask.astype(float), config, "av"
    )
    _feasibility_rows(bp.lp, product, sfsc, gain, config)
    _LOGGER.debug("Bilinear program for I-state %s has %s terms", g, bp.n_terms)
    result = solve_lp(
        relax_bilinear(bp), backend=config.lp_backend, time_limit=time_limit
    )
    if not result.optimal:
        raise LpFailure(f"relaxed bilinear program for I-state {g} is {result.status}")
    improvement = float(result.assignment[epsilon])
    tangent = (_tangent(product, result.duals, rows),)
    if improvement <= config.eps_improve:
        return ImprovementOutcome(False, max(improvement, 0.0), tangent_beliefs=tangent)
    row = _omega_row(product, sfsc.size, omega, result.assignment)
    residual = feasibility_residual(product, sfsc.with_omega_row(g, row))
    if residual > config.eps_feas:
        _LOGGER.warning(
            "Rejected relaxed candidate for I-state %s: residual %.3g", g, residual
        )
        return ImprovementOutcome(
            False, improvement, tangent_beliefs=tangent, verified=False
        )
    return ImprovementOutcome(True, improvement, row)


def forward_beliefs(product: ProductPomdp, belief: np.ndarray) -> list[np.ndarray]:
    """One-step beliefs b_{o,a} for every observation with positive probability."""
    forwarded: list[np.ndarray] = []
    for o in range(product.n_observations):
        weighted = product.observation_fn[:, o] * belief
        likelihood = weighted.sum()
        if likelihood <= 0:
            continue
        for a in range(product.n_actions):
            candidate = weighted @ product.transition[a] / likelihood
            if not any(
                np.abs(candidate - other).max() <= BELIEF_DEDUP_TOL
                for other in forwarded
            ):
                forwarded.append(candidate)
    return forwarded


def dp_backup(
    product: ProductPomdp,
    values: np.ndarray,
    belief: np.ndarray,
    candidates: Sequence[tuple[int, int]],
    steady: bool,
    beta: float,
) -> Backup | None:
    """Best (successor, action) for a new deterministic I-state at a belief."""
    reward = float(belief @ product.repeat_mask) if steady else 0.0
    best = None
    for successor, action in candidates:
        future = float(belief @ product.transition[action] @ values[:, successor])
        value = reward + beta * future
        if best is None or value > best.value:
            best = Backup(value, successor, action)
    return best


def prune_candidates(
    product: ProductPomdp,
    sfsc: Sfsc,
    candidates: Sequence[tuple[int, int]],
    config: BpiConfig | None = None,
) -> list[tuple[int, int]]:
    """Keep steady (successor, action) pairs that a new steady I-state can use safely."""
    config = config or BpiConfig()
    survivors = []
    for successor, action in candidates:
        phantom = sfsc.with_added_istate(successor, action, steady=True, name="phantom")
        residuals = slice_residuals(product, phantom)
        if residuals.max(initial=0.0) > config.eps_feas:
            _LOGGER.debug("Pruned candidate (%s, %s)", successor, action)
            continue
        survivors.append((successor, action))
    return survivors


def add_istates(
    product: ProductPomdp,
    sfsc: Sfsc,
    values: np.ndarray,
    tangents: Sequence[tuple[np.ndarray, int]],
    config: BpiConfig | None = None,
) -> AddOutcome | None:
    """Add deterministic I-states that improve the backup at forwarded beliefs."""
    config = config or BpiConfig()
    budget = min(config.n_new, config.n_max - sfsc.size)
    if budget <= 0 or not tangents:
        return None
    all_candidates = [
        (h, a) for h in range(sfsc.size) for a in range(product.n_actions)
    ]
    steady_candidates: list[tuple[int, int]] | None = None
    current = sfsc
    added = 0
    seen: list[np.ndarray] = []
    for belief, source in tangents:
        steady = sfsc.steady[source]
        if steady:
            if steady_candidates is None:
                steady_candidates = prune_candidates(
                    product,
                    sfsc,
                    [
                        (h, a)
                        for h in sfsc.steady_istates
                        for a in range(product.n_actions)
                    ],
                    config,
                )
            candidates = steady_candidates
        else:
            candidates = all_candidates
        for forwarded in forward_beliefs(product, belief):
            if any(
                np.abs(forwarded - other).max() <= BELIEF_DEDUP_TOL for other in seen
            ):
                continue
            seen.append(forwarded)
            backup = dp_backup(
                product, values, forwarded, candidates, steady, config.beta
            )
            current_value = float((forwarded @ values).max())
            if backup is None or backup.value <= current_value + config.eps_improve:
                continue
            if any(
                current.steady[h] == steady
                and current.is_deterministic_node(h, backup.successor, backup.action)
                for h in range(current.size)
            ):
                continue
            current = current.with_added_istate(backup.successor, backup.action, steady)
            added += 1
            _LOGGER.info(
                "Added %s I-state %s -> (%s, %s), backup %.6g > %.6g",
                "steady" if steady else "transient",
                current.istates[-1],
                current.istates[backup.successor],
                product.actions[backup.action],
                backup.value,
                current_value,
            )
            if added >= budget:
                return AddOutcome(current, added)
    return AddOutcome(current, added) if added else None


@dataclass(frozen=True, eq=False)
class SafeSupport:
    """States that can be kept out of Avoid and the actions allowed per observation"""

    states: np.ndarray
    actions: np.ndarray


def safe_action_support(product: ProductPomdp) -> SafeSupport:
    """Largest observation-based action support that never leaves the safe states.

    Starting from the states outside Avoid, an action is dropped for an
    observation when some safe state emitting it can leave the safe set under
    that action, and a state is dropped when one of its observations has no
    action left. Observations no safe state emits keep every action.
    """
    safe = ~product.avoid_mask
    emits = product.observation_fn > 0
    while True:
        leaves = product.transition[:, :, ~safe].sum(axis=2) > 0
        watched = (emits & safe[:, None]).astype(float)
        allowed = np.einsum("so,as->oa", watched, leaves.astype(float)) == 0
        stuck = safe & (emits & ~allowed.any(axis=1)[None, :]).any(axis=1)
        if not stuck.any():
            return SafeSupport(states=safe, actions=allowed)
        _LOGGER.debug("Dropping %s states without a safe action", int(stuck.sum()))
        safe = safe & ~stuck


def satisfaction_probability(product: ProductPomdp, sfsc: Sfsc) -> float:
    """Mass of the recurrent classes of the plain chain that satisfy a Rabin pair"""
    chain = build_global_chain(product, sfsc)
    return phi_feasible_sets(chain, decompose_classes(chain), product).probability


def _accepts_as_initial(product: ProductPomdp, sfsc: Sfsc, config: BpiConfig) -> bool:
    if feasibility_residual(product, sfsc) > config.eps_feas:
        return False
    return satisfaction_probability(product, sfsc) > config.eps_feas


def seed_controller(
    product: ProductPomdp,
    n_transient: int,
    n_steady: int,
    config: BpiConfig | None = None,
) -> Sfsc:
    """Uniform controller whose steady I-states randomize over safe actions only.

    Transient I-states are uniform over G × Act. Steady I-states spread evenly
    over G^ss and over the actions of ``safe_action_support`` for the observed
    symbol.
    """
    config = config or BpiConfig()
    base = uniform_sfsc(product, n_transient, n_steady)
    if not n_steady:
        return base
    support = safe_action_support(product)
    if not (support.states & product.repeat_mask).any():
        raise Infeasible(
            "no Repeat state can be kept away from Avoid", [(n_transient, n_steady)]
        )
    steady = base.steady_istates
    share = support.actions / support.actions.sum(axis=1, keepdims=True)
    row = np.zeros(base.omega.shape[1:])
    row[:, steady, :] = share[:, None, :] / len(steady)
    seeded = base
    for h in steady:
        seeded = seeded.with_omega_row(h, row)
    residual = feasibility_residual(product, seeded)
    if residual > config.eps_feas:
        raise Infeasible(
            f"safe-support seed has feasibility residual {residual:.3g}",
            [(n_transient, n_steady)],
        )
    _LOGGER.debug(
        "Seed uses %s of %s observation-action pairs in steady I-states",
        int(support.actions.sum()),
        support.actions.size,
    )
    return seeded


def _relaxed_initial(
    product: ProductPomdp,
    n_transient: int,
    n_steady: int,
    config: BpiConfig,
    time_limit: float | None = None,
) -> Sfsc | None:
    """Solve the relaxed dual Poisson program for the steady parameters"""
    base = uniform_sfsc(product, n_transient, n_steady)
    steady = base.steady_istates
    bp = BilinearProgram(LinearProgram())
    unknown = {
        h: _omega_variables(bp.lp, product, steady, 1.0, prefix=f"w{h}") for h in steady
    }
    gain_avoid = _poisson_rows(
        bp, product, base, unknown, product.avoid_mask.astype(float), config, "av"
    )
    gain_repeat = _poisson_rows(
        bp, product, base, unknown, product.repeat_mask.astype(float), config, "feas"
    )
    _feasibility_rows(bp.lp, product, base, gain_avoid, config)
    bp.lp.set_objective(
        [
            (gain_repeat[(s, h)], product.initial[s])
            for s in np.flatnonzero(product.initial)
            for h in steady
        ],
        SENSE_MAXIMIZE,
    )
    _LOGGER.debug("Initial controller program has %s bilinear terms", bp.n_terms)
    result = solve_lp(
        relax_bilinear(bp), backend=config.lp_backend, time_limit=time_limit
    )
    if not result.optimal or result.value <= config.eps_feas:
        return None
    candidate = base
    for h in steady:
        candidate = candidate.with_omega_row(
            h, _omega_row(product, base.size, unknown[h], result.assignment)
        )
    return candidate


def _remaining(deadline: float | None) -> float | None:
    return None if deadline is None else deadline - time.monotonic()


def find_initial_controller(
    product: ProductPomdp,
    n_transient: int,
    n_steady: int,
    config: BpiConfig | None = None,
) -> Sfsc:
    """Search for a feasible seed, growing the steady partition on failure.

    Each size tries the safe-support seed first and the relaxed dual Poisson
    program second. The search gives up once ``search_time_limit`` seconds
    have passed and reports every size it attempted.
    """
    config = config or BpiConfig()
    if n_transient < 1 or n_steady < 1:
        raise InvalidConfig("need at least one transient and one steady I-state")
    deadline = time.monotonic() + config.search_time_limit
    attempted: list[tuple[int, int]] = []
    steady = n_steady
    while n_transient + steady <= config.n_max:
        attempted.append((n_transient, steady))
        _LOGGER.info(
            "Searching initial controller with |G^tr|=%s, |G^ss|=%s",
            n_transient,
            steady,
        )
        candidate = None
        try:
            candidate = seed_controller(product, n_transient, steady, config)
        except Infeasible as err:
            _LOGGER.debug("Safe-support seed unavailable: %s", err)
        if candidate is None or not _accepts_as_initial(product, candidate, config):
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            try:
                candidate = _relaxed_initial(
                    product, n_transient, steady, config, remaining
                )
            except TimeLimitReached:
                _LOGGER.warning(
                    "Relaxed program for %s+%s hit the search time limit",
                    n_transient,
                    steady,
                )
                break
        if candidate is not None and _accepts_as_initial(product, candidate, config):
            evaluation = evaluate_policy(product, candidate, config)
            return candidate.with_initial_istate(evaluation.best)
        if time.monotonic() >= deadline:
            break
        steady += 1
    raise Infeasible(
        f"no feasible controller up to {config.n_max} I-states "
        f"(tried {', '.join(f'{t}+{s}' for t, s in attempted)})",
        attempted,
    )


def _check_step(sfsc: Sfsc, evaluation: PolicyEvaluation, config: BpiConfig) -> None:
    if evaluation.residual > config.eps_feas:
        raise InvariantBreach(
            f"feasibility residual {evaluation.residual:.3g} exceeds {config.eps_feas}"
        )
    if sfsc.structure_violation() > 0:
        raise InvariantBreach("steady I-state moves to a transient I-state")
    if sfsc.size > config.n_max:
        raise InvariantBreach(f"controller grew beyond {config.n_max} I-states")


def _record(
    iteration: int,
    sfsc: Sfsc,
    evaluation: PolicyEvaluation,
    epsilons: Sequence[float],
    added: int,
) -> IterationRecord:
    return IterationRecord(
        iteration=iteration,
        size=sfsc.size,
        steady_size=sfsc.n_steady,
        value=evaluation.value,
        residual=evaluation.residual,
        repeat_frequency=evaluation.repeat_frequency,
        epsilons=tuple(epsilons),
        added=added,
        controller=sfsc,
    )


def _regression(candidate: PolicyEvaluation, current: PolicyEvaluation) -> str | None:
    if candidate.value < current.value - MONOTONE_TOL:
        return f"value {candidate.value:.9g} < {current.value:.9g}"
    if candidate.repeat_frequency < current.repeat_frequency - MONOTONE_TOL:
        return (
            f"Repeat frequency {candidate.repeat_frequency:.9g}"
            f" < {current.repeat_frequency:.9g}"
        )
    return None


def run_bpi(
    product: ProductPomdp, seed: Sfsc, config: BpiConfig | None = None
) -> BpiReport:
    """Bounded policy iteration from a feasible seed.

    Accepted changes never lower the initial-belief value nor the Repeat
    frequency of the steady partition. With ``time_limit`` set the run stops
    after the last completed step once the budget is spent.
    """
    config = config or BpiConfig()
    if product.rabin_index != config.rabin_index:
        product = select_pair(product, config.rabin_index)
    seed.check()
    deadline = (
        None if config.time_limit is None else time.monotonic() + config.time_limit
    )
    evaluation = evaluate_policy(product, seed, config)
    if evaluation.residual > config.eps_feas:
        raise InvariantBreach(
            f"seed is not feasible: residual {evaluation.residual:.3g}"
            f" > {config.eps_feas}"
        )
    sfsc = seed.with_initial_istate(evaluation.best)
    report = BpiReport(records=[_record(0, sfsc, evaluation, (), 0)])
    for iteration in range(1, config.max_iterations + 1):
        improved = False
        epsilons = []
        tangents: list[tuple[np.ndarray, int]] = []
        for g in range(sfsc.size):
            remaining = _remaining(deadline)
            if remaining is not None and remaining <= 0:
                report.timed_out = True
                break
            try:
                outcome = improve_istate_bilinear(
                    product, sfsc, evaluation.values, g, config, remaining
                )
            except TimeLimitReached:
                report.timed_out = True
                break
            epsilons.append(outcome.epsilon)
            if not outcome.improved:
                tangents.extend((belief, g) for belief in outcome.tangent_beliefs)
                continue
            candidate = sfsc.with_omega_row(g, outcome.row)
            candidate_eval = evaluate_policy(product, candidate, config)
            regression = _regression(candidate_eval, evaluation)
            if regression:
                _LOGGER.warning("Skipped update of I-state %s: %s", g, regression)
                continue
            _check_step(candidate, candidate_eval, config)
            sfsc = candidate.with_initial_istate(candidate_eval.best)
            evaluation = candidate_eval
            improved = True
        added = 0
        if not improved and not report.timed_out and sfsc.size < config.n_max:
            outcome = add_istates(product, sfsc, evaluation.values, tangents, config)
            if outcome is not None:
                candidate_eval = evaluate_policy(product, outcome.sfsc, config)
                regression = _regression(candidate_eval, evaluation)
                if regression:
                    _LOGGER.warning(
                        "Discarded %s new I-states: %s", outcome.count, regression
                    )
                else:
                    _check_step(outcome.sfsc, candidate_eval, config)
                    sfsc = outcome.sfsc.with_initial_istate(candidate_eval.best)
                    evaluation = candidate_eval
                    added = outcome.count
                    improved = True
        report.records.append(_record(iteration, sfsc, evaluation, epsilons, added))
        _LOGGER.info(
            "Iteration %s: |G|=%s |G^ss|=%s value=%.6g residual=%.3g",
            iteration,
            sfsc.size,
            sfsc.n_steady,
            evaluation.value,
            evaluation.residual,
        )
        if report.timed_out:
            _LOGGER.warning("Time limit reached after iteration %s", iteration)
            break
        if not improved:
            break
    report.sfsc = sfsc
    report.satisfaction_probability = satisfaction_probability(product, sfsc)
    return report
