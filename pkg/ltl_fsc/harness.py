"""Grid-world benchmark, closed-loop simulator and the case-study drivers."""
from __future__ import annotations

from collections.abc import Sequence
import csv
from dataclasses import dataclass, field
import logging
import math
from pathlib import Path

import numpy as np

from .bpi import (
    BpiConfig,
    BpiReport,
    find_initial_controller,
    run_bpi,
    seed_controller,
)
from .const import (
    BUILTIN_CASE1,
    BUILTIN_CASE2,
    CASE1_REACH_HORIZON,
    CASE1_ROWS,
    CASE2_ROWS,
    CASE2_STEADY,
    CASE2_TRANSIENT,
    CSV_COLUMNS,
    DEFAULT_GRID_ROWS,
    DEFAULT_OBS_NOISE,
    DEFAULT_P_FORWARD,
    DEFAULT_P_LATERAL,
    DEFAULT_SIM_HORIZON,
    DEFAULT_SIM_SEED,
    DEFAULT_SIM_TRACES,
    DEFAULT_START_CELL,
    GOAL_PROP,
    GRID_ACTIONS,
    GRID_COLUMNS,
    GRID_LABEL_CELLS,
    GRID_MOVES,
    HAZARD_PROP,
    LABEL_DESTINATION,
    LABEL_SOURCE,
)
from .controller import Sfsc, uniform_sfsc
from .exceptions import InvalidConfig, InvalidSpec
from .model import LabeledPomdp
from .product import ProductPomdp, build_product
from .rabin import Dra, builtin_dra

_LOGGER = logging.getLogger(__name__)

CASE_STUDIES = {1: BUILTIN_CASE1, 2: BUILTIN_CASE2}


@dataclass(frozen=True)
class GridWorldSpec:
    """M×N grid with slip and noisy position sensing; cell i = x + M·y"""

    rows: int = DEFAULT_GRID_ROWS
    p_forward: float = DEFAULT_P_FORWARD
    p_lateral: float = DEFAULT_P_LATERAL
    obs_noise: float = DEFAULT_OBS_NOISE
    start_cell: int = DEFAULT_START_CELL
    columns: int = GRID_COLUMNS

    def __post_init__(self) -> None:
        if self.columns != GRID_COLUMNS:
            raise InvalidSpec(f"the grid has {GRID_COLUMNS} columns")
        if self.rows < 1:
            raise InvalidSpec("the grid needs at least one row")
        if self.p_forward < 0 or self.p_lateral < 0:
            raise InvalidSpec("slip probabilities must be nonnegative")
        if self.p_forward + 2 * self.p_lateral > 1 + 1e-12:
            raise InvalidSpec("p_forward + 2·p_lateral exceeds 1")
        if not 0 < self.obs_noise <= 1:
            raise InvalidSpec("obs_noise must lie in (0, 1]")
        if not 0 <= self.start_cell < self.n_cells:
            raise InvalidSpec(f"start cell {self.start_cell} outside the grid")

    @property
    def n_cells(self) -> int:
        return self.columns * self.rows

    def cell(self, x: int, y: int) -> int | None:
        if 0 <= x < self.columns and 0 <= y < self.rows:
            return x + self.columns * y
        return None

    def coordinates(self, cell: int) -> tuple[int, int]:
        return cell % self.columns, cell // self.columns


def _lateral(move: tuple[int, int]) -> list[tuple[int, int]]:
    dx, dy = move
    return [(dy, dx), (-dy, -dx)]


def build_gridworld(spec: GridWorldSpec | None = None) -> LabeledPomdp:
    """Labeled grid-world POMDP.

    Movement goes forward with ``p_forward`` and to each side with
    ``p_lateral``; the remaining mass and every move into a wall keep the robot
    in place. Stop is deterministic. The sensor reports the true cell with
    weight ``obs_noise`` and each existing 4-neighbour with (1 − obs_noise)/4,
    renormalized.
    """
    spec = spec or GridWorldSpec()
    n = spec.n_cells
    transition = np.zeros((len(GRID_ACTIONS), n, n))
    observation_fn = np.zeros((n, n))
    for cell in range(n):
        x, y = spec.coordinates(cell)
        for a, action in enumerate(GRID_ACTIONS):
            move = GRID_MOVES[action]
            if move == (0, 0):
                transition[a, cell, cell] = 1.0
                continue
            outcomes = [(move, spec.p_forward)] + [
                (side, spec.p_lateral) for side in _lateral(move)
            ]
            stay = 1.0 - spec.p_forward - 2 * spec.p_lateral
            for (dx, dy), p in outcomes:
                target = spec.cell(x + dx, y + dy)
                if target is None:
                    stay += p
                else:
                    transition[a, cell, target] += p
            transition[a, cell, cell] += stay
        observation_fn[cell, cell] = spec.obs_noise
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            neighbour = spec.cell(x + dx, y + dy)
            if neighbour is not None:
                observation_fn[cell, neighbour] = (1.0 - spec.obs_noise) / 4
        observation_fn[cell] /= observation_fn[cell].sum()
    initial = np.zeros(n)
    initial[spec.start_cell] = 1.0
    labeling = [
        frozenset(prop for prop, where in GRID_LABEL_CELLS.items() if where == cell)
        for cell in range(n)
    ]
    return LabeledPomdp(
        states=tuple(f"s{i}" for i in range(n)),
        actions=tuple(GRID_ACTIONS),
        observations=tuple(f"o{i}" for i in range(n)),
        transition=transition,
        observation_fn=observation_fn,
        initial=initial,
        atomic_props=tuple(GRID_LABEL_CELLS),
        labeling=tuple(labeling),
    )


@dataclass(frozen=True)
class SimTrace:
    states: tuple[int, ...]
    observations: tuple[int, ...]
    istates: tuple[int, ...]
    actions: tuple[int, ...]
    dra_states: tuple[int, ...]
    hit_hazard: bool
    goal_step: int | None
    repeat_visits: tuple[bool, ...]


@dataclass(eq=False)
class SimulationStats:
    """Empirical statistics of a batch of closed-loop runs"""

    n_traces: int
    horizon: int
    reach_probability: float
    hazard_probability: float
    repeat_frequency: float
    avoid_frequency: float
    prefix_frequencies: dict[tuple[int, ...], float] = field(default_factory=dict)
    traces: list[SimTrace] = field(default_factory=list)

    @property
    def reach_stderr(self) -> float:
        p = self.reach_probability
        return math.sqrt(p * (1 - p) / self.n_traces)


def _sample(rng: np.random.Generator, rows: np.ndarray) -> np.ndarray:
    """One categorical draw per row of a stack of distributions"""
    cumulative = rows.cumsum(axis=1)
    draws = rng.random(rows.shape[0]) * cumulative[:, -1]
    choice = (cumulative <= draws[:, None]).sum(axis=1)
    return np.minimum(choice, rows.shape[1] - 1)


def _first_true(flags: np.ndarray) -> np.ndarray:
    """Index of the first True per row, row length where there is none"""
    return np.where(flags.any(axis=1), flags.argmax(axis=1), flags.shape[1])


def simulate(
    model: LabeledPomdp,
    dra: Dra,
    sfsc: Sfsc,
    horizon: int = DEFAULT_SIM_HORIZON,
    n_traces: int = DEFAULT_SIM_TRACES,
    rng_seed: int = DEFAULT_SIM_SEED,
    *,
    label_convention: str = LABEL_SOURCE,
    rabin_index: int = 0,
    reach_horizon: int = CASE1_REACH_HORIZON,
    goal_prop: str = GOAL_PROP,
    hazard_prop: str = HAZARD_PROP,
    prefixes: Sequence[Sequence[int]] = (),
    keep_traces: int = 0,
) -> SimulationStats:
    """Run the POMDP under the controller and the automaton on its labels.

    Each step draws o ~ O(s), (g', a) ~ ω(g, o), s' ~ T(s, a); the automaton
    reads the label of s (source) or s' (destination). The reach metric asks
    for a ``goal_prop`` state by ``reach_horizon`` before any ``hazard_prop``
    state; repeat and avoid frequencies are taken over the second half of the
    run.
    """
    if horizon < 1 or n_traces < 1:
        raise InvalidConfig("horizon and n_traces must be at least 1")
    if (
        tuple(sfsc.observations) != model.observations
        or tuple(sfsc.actions) != model.actions
    ):
        raise InvalidConfig("controller alphabets differ from the model")
    rng = np.random.default_rng(rng_seed)
    labels = np.array([dra.letter_mask(label) for label in model.labeling])
    pair = dra.pairs[rabin_index]
    repeat = np.isin(np.arange(dra.n_states), list(pair.repeat))
    avoid = np.isin(np.arange(dra.n_states), list(pair.avoid))
    goal = np.array([goal_prop in label for label in model.labeling])
    hazard = np.array([hazard_prop in label for label in model.labeling])
    n_g, n_a = sfsc.size, model.n_actions
    choices = sfsc.omega.reshape(n_g, model.n_observations, n_g * n_a)

    states = np.empty((n_traces, horizon + 1), dtype=int)
    dra_states = np.empty((n_traces, horizon + 1), dtype=int)
    istates = np.empty((n_traces, horizon + 1), dtype=int)
    observations = np.empty((n_traces, horizon), dtype=int)
    actions = np.empty((n_traces, horizon), dtype=int)
    states[:, 0] = _sample(
        rng, np.broadcast_to(model.initial, (n_traces, model.n_states))
    )
    dra_states[:, 0] = dra.delta[dra.initial, labels[states[:, 0]]]
    istates[:, 0] = sfsc.initial_istate
    for t in range(horizon):
        s, g, q = states[:, t], istates[:, t], dra_states[:, t]
        o = _sample(rng, model.observation_fn[s])
        joint = _sample(rng, choices[g, o])
        a = joint % n_a
        s_next = _sample(rng, model.transition[a, s])
        observations[:, t] = o
        actions[:, t] = a
        istates[:, t + 1] = joint // n_a
        states[:, t + 1] = s_next
        read = s_next if label_convention == LABEL_DESTINATION else s
        dra_states[:, t + 1] = dra.delta[q, labels[read]]

    window = min(reach_horizon, horizon) + 1
    first_goal = _first_true(goal[states[:, :window]])
    first_hazard = _first_true(hazard[states[:, :window]])
    reached = (first_goal < window) & (first_hazard > first_goal)
    tail = slice(horizon // 2, horizon + 1)
    repeat_hits = repeat[dra_states]
    stats = SimulationStats(
        n_traces=n_traces,
        horizon=horizon,
        reach_probability=float(reached.mean()),
        hazard_probability=float(hazard[states].any(axis=1).mean()),
        repeat_frequency=float(repeat_hits[:, tail].mean()),
        avoid_frequency=float(avoid[dra_states][:, tail].mean()),
    )
    for prefix in prefixes:
        prefix = tuple(int(s) for s in prefix)
        if len(prefix) > horizon + 1:
            raise InvalidConfig(f"prefix {prefix} longer than the horizon")
        matches = np.all(states[:, : len(prefix)] == np.array(prefix), axis=1)
        stats.prefix_frequencies[prefix] = float(matches.mean())
    for i in range(min(keep_traces, n_traces)):
        stats.traces.append(
            SimTrace(
                states=tuple(states[i].tolist()),
                observations=tuple(observations[i].tolist()),
                istates=tuple(istates[i].tolist()),
                actions=tuple(actions[i].tolist()),
                dra_states=tuple(dra_states[i].tolist()),
                hit_hazard=bool(hazard[states[i]].any()),
                goal_step=int(first_goal[i]) if reached[i] else None,
                repeat_visits=tuple(repeat_hits[i].tolist()),
            )
        )
    _LOGGER.debug(
        "Simulated %s traces: reach %.4f, repeat %.4f",
        n_traces,
        stats.reach_probability,
        stats.repeat_frequency,
    )
    return stats


@dataclass(eq=False)
class CaseStudyResult:
    """Synthesis report and simulations of one case study.

    ``baseline_stats`` simulates the all-uniform controller with one transient
    and one steady I-state; the seed and final statistics are measured on the
    first and last controllers of the report.
    """

    case: int
    model: LabeledPomdp
    product: ProductPomdp
    report: BpiReport
    seed_stats: SimulationStats
    final_stats: SimulationStats
    baseline_stats: SimulationStats
    reach_series: list[float]

    def rows(self) -> list[dict[str, float | int]]:
        return report_rows(self.report, self.reach_series)


def report_rows(
    report: BpiReport, reach_series: Sequence[float] | None = None
) -> list[dict[str, float | int]]:
    """CSV rows, one per iteration record; reach is left blank when not simulated"""
    rows = []
    for i, record in enumerate(report.records):
        row = {
            "iteration": record.iteration,
            "size": record.size,
            "steady_size": record.steady_size,
            "value": record.value,
            "residual": record.residual,
            "repeat_frequency": record.repeat_frequency,
        }
        if reach_series is not None:
            row["reach_probability"] = reach_series[i]
        rows.append(row)
    return rows


def write_csv(rows: Sequence[dict[str, float | int]], path: Path | str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def run_case_study(
    case: int,
    config: BpiConfig | None = None,
    *,
    rows: int | None = None,
    n_traces: int = DEFAULT_SIM_TRACES,
    horizon: int = DEFAULT_SIM_HORIZON,
    rng_seed: int = DEFAULT_SIM_SEED,
    csv_path: Path | str | None = None,
) -> CaseStudyResult:
    """Build, seed, synthesize and simulate one of the grid-world case studies."""
    if case not in CASE_STUDIES:
        raise InvalidConfig(f"unknown case study {case}")
    config = config or BpiConfig()
    if rows is None:
        rows = CASE1_ROWS if case == 1 else CASE2_ROWS
    model = build_gridworld(GridWorldSpec(rows=rows))
    dra = builtin_dra(CASE_STUDIES[case])
    product = build_product(
        model, dra, config.rabin_index, label_convention=LABEL_DESTINATION, prune=True
    )
    _LOGGER.info(
        "Case study %s: %s×%s grid, product with %s states",
        case,
        GRID_COLUMNS,
        rows,
        product.n_states,
    )
    if case == 1:
        seed = seed_controller(product, 1, 1, config)
    else:
        seed = find_initial_controller(product, CASE2_TRANSIENT, CASE2_STEADY, config)
    report = run_bpi(product, seed, config)

    def run(sfsc: Sfsc, steps: int) -> SimulationStats:
        return simulate(
            model,
            dra,
            sfsc,
            steps,
            n_traces,
            rng_seed,
            label_convention=LABEL_DESTINATION,
            rabin_index=config.rabin_index,
        )

    reach_horizon = min(CASE1_REACH_HORIZON, horizon)
    reach_series = [
        run(record.controller, reach_horizon).reach_probability
        for record in report.records
    ]
    result = CaseStudyResult(
        case=case,
        model=model,
        product=product,
        report=report,
        seed_stats=run(report.records[0].controller, horizon),
        final_stats=run(report.sfsc, horizon),
        baseline_stats=run(uniform_sfsc(product, 1, 1), horizon),
        reach_series=reach_series,
    )
    if csv_path is not None:
        write_csv(result.rows(), csv_path)
        _LOGGER.info("Wrote %s iterations to %s", len(report.records), csv_path)
    return result
