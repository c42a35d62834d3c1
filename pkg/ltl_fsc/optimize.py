"""Linear programming core and McCormick relaxation of bilinear programs."""
from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from .const import (
    BACKEND_AUTO,
    BACKEND_HIGHS,
    BACKEND_SIMPLEX,
    CONSTRAINT_OPS,
    LP_DENSE_LIMIT,
    LP_INFEASIBLE,
    LP_MAX_PIVOTS,
    LP_OPTIMAL,
    LP_PIVOT_TOL,
    LP_TOL,
    LP_UNBOUNDED,
    OP_EQ,
    OP_GE,
    OP_LE,
    SENSE_MAXIMIZE,
)
from .exceptions import (
    IterationLimit,
    NumericalBreakdown,
    TimeLimitReached,
    UnboundedBilinearVariable,
)
from .textformat import format_float

_LOGGER = logging.getLogger(__name__)

Coefficients = Mapping[int, float] | Iterable[tuple[int, float]]


@dataclass
class Constraint:
    """Linear constraint ``coefficients · x  op  rhs``"""

    coefficients: dict[int, float]
    op: str
    rhs: float
    name: str


class LinearProgram:
    """Linear program over named, bounded variables."""

    names: list[str]
    lower: list[float]
    upper: list[float]
    objective: dict[int, float]
    sense: str
    constraints: list[Constraint]

    def __init__(self, sense: str = SENSE_MAXIMIZE) -> None:
        self.names = []
        self.lower = []
        self.upper = []
        self.objective = {}
        self.sense = sense
        self.constraints = []
        self._index: dict[str, int] = {}

    @property
    def n_variables(self) -> int:
        return len(self.names)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def add_variable(
        self, name: str, lower: float = 0.0, upper: float = math.inf
    ) -> int:
        """Declare a variable and return its index"""
        if name in self._index:
            raise ValueError(f"variable {name!r} already declared")
        if lower > upper:
            raise ValueError(f"variable {name!r} has lower bound above upper bound")
        self._index[name] = len(self.names)
        self.names.append(name)
        self.lower.append(float(lower))
        self.upper.append(float(upper))
        return len(self.names) - 1

    def variable(self, name: str) -> int:
        return self._index[name]

    def _collect(self, coefficients: Coefficients) -> dict[int, float]:
        items = (
            coefficients.items() if isinstance(coefficients, Mapping) else coefficients
        )
        merged: dict[int, float] = {}
        for index, value in items:
            if not 0 <= index < self.n_variables:
                raise ValueError(f"undeclared variable index {index}")
            merged[index] = merged.get(index, 0.0) + float(value)
        return merged

    def add_constraint(
        self,
        coefficients: Coefficients,
        op: str,
        rhs: float,
        name: str | None = None,
    ) -> int:
        """Append a constraint and return its index"""
        if op not in CONSTRAINT_OPS:
            raise ValueError(f"unknown constraint operator {op!r}")
        if name is None:
            name = f"c{len(self.constraints)}"
        self.constraints.append(
            Constraint(self._collect(coefficients), op, float(rhs), name)
        )
        return len(self.constraints) - 1

    def set_objective(
        self, coefficients: Coefficients, sense: str | None = None
    ) -> None:
        self.objective = self._collect(coefficients)
        if sense is not None:
            self.sense = sense

    def copy(self) -> LinearProgram:
        clone = LinearProgram(self.sense)
        clone.names = list(self.names)
        clone.lower = list(self.lower)
        clone.upper = list(self.upper)
        clone.objective = dict(self.objective)
        clone.constraints = [
            Constraint(dict(c.coefficients), c.op, c.rhs, c.name)
            for c in self.constraints
        ]
        clone._index = dict(self._index)
        return clone

    def objective_vector(self) -> np.ndarray:
        vector = np.zeros(self.n_variables)
        for index, value in self.objective.items():
            vector[index] = value
        return vector

    def constraint_matrix(self) -> coo_matrix:
        rows, cols, data = [], [], []
        for i, constraint in enumerate(self.constraints):
            for j, value in constraint.coefficients.items():
                rows.append(i)
                cols.append(j)
                data.append(value)
        return coo_matrix(
            (data, (rows, cols)), shape=(self.n_constraints, self.n_variables)
        )


@dataclass
class BilinearProgram:
    """Linear program whose product variables stand for x_i·x_j"""

    lp: LinearProgram
    products: list[tuple[int, int, int]] = field(default_factory=list)

    def add_product(self, x: int, y: int, name: str | None = None) -> int:
        """Declare the term x·y and return the variable that carries it"""
        if name is None:
            name = f"{self.lp.names[x]}*{self.lp.names[y]}"
        product = self.lp.add_variable(name, -math.inf, math.inf)
        self.products.append((x, y, product))
        return product

    @property
    def n_terms(self) -> int:
        return len(self.products)


@dataclass
class LpResult:
    """Outcome of an LP solve; duals are ∂(optimal value)/∂(rhs)"""

    status: str
    value: float = math.nan
    assignment: np.ndarray | None = None
    duals: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == LP_OPTIMAL


def _bounds(lp: LinearProgram, index: int) -> tuple[float, float]:
    lower, upper = lp.lower[index], lp.upper[index]
    if not (math.isfinite(lower) and math.isfinite(upper)):
        raise UnboundedBilinearVariable(
            f"variable {lp.names[index]!r} has bounds [{lower}, {upper}]"
        )
    return lower, upper


def mccormick_envelope(
    x: float, y: float, x_bounds: tuple[float, float], y_bounds: tuple[float, float]
) -> tuple[float, float]:
    """Lower and upper McCormick envelope of x·y at a point of the box."""
    xl, xu = x_bounds
    yl, yu = y_bounds
    lower = max(xl * y + yl * x - xl * yl, xu * y + yu * x - xu * yu)
    upper = min(xu * y + yl * x - xu * yl, xl * y + yu * x - xl * yu)
    return lower, upper


def relax_bilinear(bp: BilinearProgram) -> LinearProgram:
    """Replace each product by its four McCormick inequalities."""
    lp = bp.lp.copy()
    for x, y, product in bp.products:
        xl, xu = _bounds(lp, x)
        yl, yu = _bounds(lp, y)
        name = lp.names[product]
        corners = [
            ("lo1", OP_GE, xl, yl),
            ("lo2", OP_GE, xu, yu),
            ("up1", OP_LE, xu, yl),
            ("up2", OP_LE, xl, yu),
        ]
        for suffix, op, xa, yb in corners:
            lp.add_constraint(
                [(product, 1.0), (x, -yb), (y, -xa)], op, -xa * yb, f"{name}_{suffix}"
            )
    _LOGGER.debug(
        "Relaxed %s bilinear terms into %s constraints", bp.n_terms, lp.n_constraints
    )
    return lp


def solve_lp(
    lp: LinearProgram,
    tol: float = LP_TOL,
    backend: str = BACKEND_AUTO,
    time_limit: float | None = None,
) -> LpResult:
    """Solve an LP with the dense Bland simplex or, for large programs, HiGHS.

    In auto mode a simplex answer that fails verification, or a simplex run
    that exhausts its pivot budget, is re-solved with HiGHS. ``time_limit``
    bounds HiGHS runs in seconds.
    """
    if backend not in (BACKEND_AUTO, BACKEND_SIMPLEX, BACKEND_HIGHS):
        raise ValueError(f"unknown LP backend {backend!r}")
    chosen = backend
    if backend == BACKEND_AUTO:
        bounded = sum(
            math.isfinite(lo) and math.isfinite(up)
            for lo, up in zip(lp.lower, lp.upper)
        )
        rows = lp.n_constraints + bounded
        chosen = (
            BACKEND_SIMPLEX
            if rows * (lp.n_variables + rows) <= LP_DENSE_LIMIT
            else BACKEND_HIGHS
        )
    _LOGGER.debug(
        "Solving LP with %s variables, %s constraints (%s)",
        lp.n_variables,
        lp.n_constraints,
        chosen,
    )
    if chosen == BACKEND_HIGHS:
        return _verified(lp, _solve_highs(lp, time_limit))
    try:
        return _verified(lp, _solve_simplex(lp, tol))
    except (NumericalBreakdown, IterationLimit) as err:
        if backend != BACKEND_AUTO:
            raise
        _LOGGER.warning("Simplex failed (%s), re-solving with HiGHS", err)
        return _verified(lp, _solve_highs(lp, time_limit))


def _verified(lp: LinearProgram, result: LpResult) -> LpResult:
    if result.optimal:
        _check_solution(lp, result.assignment)
    return result


def _check_solution(lp: LinearProgram, x: np.ndarray) -> None:
    slack = 1e-6 * max(1.0, float(np.abs(x).max(initial=0.0)))
    lower, upper = np.array(lp.lower), np.array(lp.upper)
    if (x < lower - slack).any() or (x > upper + slack).any():
        raise NumericalBreakdown("LP solution violates variable bounds")
    for constraint in lp.constraints:
        lhs = sum(v * x[j] for j, v in constraint.coefficients.items())
        gap = lhs - constraint.rhs
        if (
            (constraint.op == OP_LE and gap > slack)
            or (constraint.op == OP_GE and gap < -slack)
            or (constraint.op == OP_EQ and abs(gap) > slack)
        ):
            raise NumericalBreakdown(
                f"LP solution violates {constraint.name} by {abs(gap):.3g}"
            )


def _solve_highs(lp: LinearProgram, time_limit: float | None = None) -> LpResult:
    sense_sign = -1.0 if lp.sense == SENSE_MAXIMIZE else 1.0
    cost = lp.objective_vector() * (-1.0 if lp.sense == SENSE_MAXIMIZE else 1.0)
    matrix = lp.constraint_matrix().tocsr()
    ops = np.array([c.op for c in lp.constraints])
    rhs = np.array([c.rhs for c in lp.constraints])
    upper_rows = np.flatnonzero(ops != OP_EQ)
    equal_rows = np.flatnonzero(ops == OP_EQ)
    row_sign = np.where(ops == OP_GE, -1.0, 1.0)
    a_ub = matrix[upper_rows].multiply(row_sign[upper_rows][:, None]).tocsr()
    b_ub = rhs[upper_rows] * row_sign[upper_rows]
    bounds = [
        (lo if math.isfinite(lo) else None, up if math.isfinite(up) else None)
        for lo, up in zip(lp.lower, lp.upper)
    ]
    result = linprog(
        cost,
        A_ub=a_ub if upper_rows.size else None,
        b_ub=b_ub if upper_rows.size else None,
        A_eq=matrix[equal_rows] if equal_rows.size else None,
        b_eq=rhs[equal_rows] if equal_rows.size else None,
        bounds=bounds,
        method="highs",
        options={} if time_limit is None else {"time_limit": max(time_limit, 1e-3)},
    )
    if result.status == 2:
        return LpResult(LP_INFEASIBLE)
    if result.status == 3:
        return LpResult(LP_UNBOUNDED)
    if result.status == 1:
        if time_limit is not None:
            raise TimeLimitReached(f"HiGHS stopped after {time_limit:.1f}s")
        raise IterationLimit(f"HiGHS: {result.message}")
    if result.status != 0:
        raise NumericalBreakdown(f"HiGHS: {result.message}")
    duals = np.zeros(lp.n_constraints)
    if upper_rows.size:
        duals[upper_rows] = (
            sense_sign * row_sign[upper_rows] * result.ineqlin.marginals
        )
    if equal_rows.size:
        duals[equal_rows] = sense_sign * result.eqlin.marginals
    value = float(lp.objective_vector() @ result.x)
    return LpResult(LP_OPTIMAL, value, np.asarray(result.x), duals)


class _Tableau:
    """Dense simplex tableau with Bland's rule"""

    def __init__(self, matrix: np.ndarray, rhs: np.ndarray, basis: list[int]) -> None:
        self.matrix = matrix
        self.rhs = rhs
        self.basis = basis
        self.pivots = 0

    def pivot(self, row: int, col: int) -> None:
        pivot = self.matrix[row, col]
        self.matrix[row] /= pivot
        self.rhs[row] /= pivot
        factors = self.matrix[:, col].copy()
        factors[row] = 0.0
        self.matrix -= np.outer(factors, self.matrix[row])
        self.rhs -= factors * self.rhs[row]
        self.rhs[np.abs(self.rhs) < LP_PIVOT_TOL] = 0.0
        self.basis[row] = col
        self.pivots += 1

    def optimize(self, cost: np.ndarray, allowed: np.ndarray, tol: float) -> bool:
        """Maximize cost·x from the current basis; False when unbounded"""
        while True:
            if self.pivots >= LP_MAX_PIVOTS:
                raise IterationLimit(f"simplex exceeded {LP_MAX_PIVOTS} pivots")
            reduced = cost - cost[self.basis] @ self.matrix
            entering = np.flatnonzero(allowed & (reduced > tol))
            if not entering.size:
                return True
            col = int(entering[0])
            column = self.matrix[:, col]
            rows = np.flatnonzero(column > LP_PIVOT_TOL)
            if not rows.size:
                return False
            ratios = np.maximum(self.rhs[rows], 0.0) / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + LP_PIVOT_TOL * max(1.0, best)]
            row = int(min(ties, key=lambda r: self.basis[r]))
            self.pivot(row, col)


def _solve_simplex(lp: LinearProgram, tol: float) -> LpResult:
    # x = offset + embed @ z with z >= 0; finite upper bounds become rows
    n = lp.n_variables
    offset = np.zeros(n)
    mapping: list[tuple[int, float]] = []
    upper_rows: list[tuple[int, float]] = []
    for j in range(n):
        lower, upper = lp.lower[j], lp.upper[j]
        if math.isfinite(lower):
            offset[j] = lower
            if math.isfinite(upper):
                upper_rows.append((len(mapping), upper - lower))
            mapping.append((j, 1.0))
        elif math.isfinite(upper):
            offset[j] = upper
            mapping.append((j, -1.0))
        else:
            mapping.append((j, 1.0))
            mapping.append((j, -1.0))
    n_z = len(mapping)
    embed = np.zeros((n, n_z))
    for k, (j, sign) in enumerate(mapping):
        embed[j, k] = sign

    original = lp.constraint_matrix().toarray()
    bound_block = np.zeros((len(upper_rows), n_z))
    for i, (k, _) in enumerate(upper_rows):
        bound_block[i, k] = 1.0
    structural = np.vstack([original @ embed, bound_block])
    ops = [c.op for c in lp.constraints] + [OP_LE] * len(upper_rows)
    rhs = np.concatenate(
        [
            np.array([c.rhs for c in lp.constraints]) - original @ offset,
            np.array([bound for _, bound in upper_rows]),
        ]
    )
    m = structural.shape[0]

    slack_rows = [i for i, op in enumerate(ops) if op != OP_EQ]
    slacks = np.zeros((m, len(slack_rows)))
    for k, i in enumerate(slack_rows):
        slacks[i, k] = 1.0 if ops[i] == OP_LE else -1.0
    flip = np.where(rhs < 0, -1.0, 1.0)
    structural *= flip[:, None]
    slacks *= flip[:, None]
    rhs = rhs * flip

    basis: list[int] = [-1] * m
    for k, i in enumerate(slack_rows):
        if slacks[i, k] > 0:
            basis[i] = n_z + k
    needs_artificial = [i for i in range(m) if basis[i] < 0]
    artificial = np.zeros((m, len(needs_artificial)))
    first_artificial = n_z + len(slack_rows)
    for k, i in enumerate(needs_artificial):
        artificial[i, k] = 1.0
        basis[i] = first_artificial + k
    initial_matrix = np.hstack([structural, slacks, artificial])
    width = initial_matrix.shape[1]
    is_artificial = np.arange(width) >= first_artificial
    tableau = _Tableau(initial_matrix.copy(), rhs.copy(), basis)

    if needs_artificial:
        phase_one = np.where(is_artificial, -1.0, 0.0)
        tableau.optimize(phase_one, np.ones(width, dtype=bool), tol)
        shortfall = -float(phase_one[tableau.basis] @ tableau.rhs)
        if shortfall > 1e-7 * max(1.0, float(np.abs(rhs).max(initial=0.0))):
            return LpResult(LP_INFEASIBLE)
        for row, column in enumerate(tableau.basis):
            if is_artificial[column]:
                options = np.flatnonzero(
                    ~is_artificial & (np.abs(tableau.matrix[row]) > LP_PIVOT_TOL)
                )
                if options.size:
                    tableau.pivot(row, int(options[0]))

    sense = 1.0 if lp.sense == SENSE_MAXIMIZE else -1.0
    cost = np.zeros(width)
    cost[:n_z] = sense * (lp.objective_vector() @ embed)
    if not tableau.optimize(cost, ~is_artificial, tol):
        return LpResult(LP_UNBOUNDED)

    z = np.zeros(width)
    z[tableau.basis] = tableau.rhs
    assignment = offset + embed @ z[:n_z]
    basis_matrix = initial_matrix[:, tableau.basis]
    try:
        duals = np.linalg.solve(basis_matrix.T, cost[tableau.basis])
    except np.linalg.LinAlgError:
        duals = np.linalg.lstsq(basis_matrix.T, cost[tableau.basis], rcond=None)[0]
    duals = sense * duals * flip
    _LOGGER.debug("Simplex finished after %s pivots", tableau.pivots)
    return LpResult(
        LP_OPTIMAL,
        float(lp.objective_vector() @ assignment),
        assignment,
        duals[: lp.n_constraints],
    )


def dump_lp(lp: LinearProgram) -> str:
    """Serialize an LP in CPLEX LP text form."""

    def linear(coefficients: Mapping[int, float]) -> str:
        terms = []
        for index, value in sorted(coefficients.items()):
            sign = "-" if value < 0 else "+"
            terms.append(f"{sign} {format_float(abs(value))} {lp.names[index]}")
        return " ".join(terms) if terms else "0"

    lines = [
        "\\ ltl_fsc linear program",
        "Maximize" if lp.sense == SENSE_MAXIMIZE else "Minimize",
        f" obj: {linear(lp.objective)}",
        "Subject To",
    ]
    symbols = {OP_LE: "<=", OP_GE: ">=", OP_EQ: "="}
    for constraint in lp.constraints:
        lines.append(
            f" {constraint.name}: {linear(constraint.coefficients)} "
            f"{symbols[constraint.op]} {format_float(constraint.rhs)}"
        )
    lines.append("Bounds")
    for name, lower, upper in zip(lp.names, lp.lower, lp.upper):
        if math.isinf(lower) and math.isinf(upper):
            lines.append(f" {name} free")
        else:
            low = format_float(lower) if math.isfinite(lower) else "-inf"
            high = format_float(upper) if math.isfinite(upper) else "+inf"
            lines.append(f" {low} <= {name} <= {high}")
    lines.append("End")
    return "\n".join(lines) + "\n"
