"""Constants for the LTL controller synthesis toolkit."""
from __future__ import annotations

# Numerical tolerances
STOCHASTIC_TOL = 1e-12
BELIEF_TOL = 1e-10
OMEGA_TOL = 1e-10
PE_RESIDUAL_TOL = 1e-8
BELIEF_DEDUP_TOL = 1e-9
MONOTONE_TOL = 1e-9
INDIFFERENCE_TOL = 1e-12
OMEGA_CLEAN_TOL = 1e-12
LP_TOL = 1e-9
LP_PIVOT_TOL = 1e-11
LP_MAX_PIVOTS = 50000
LP_DENSE_LIMIT = 400_000

# BPI defaults
DEFAULT_BETA = 0.95
DEFAULT_EPS_BETA = 1e-9
DEFAULT_EPS_FEAS = 1e-6
DEFAULT_EPS_IMPROVE = 1e-7
DEFAULT_BIG_M = 1e3
DEFAULT_N_MAX = 15
DEFAULT_N_NEW = 3
DEFAULT_MAX_ITERATIONS = 100
DEFAULT_RABIN_INDEX = 0
DEFAULT_SEARCH_TIME_LIMIT = 300.0
RICHARDSON_MAX_ITERATIONS = 1_000_000

EVAL_DIRECT = "direct"
EVAL_RICHARDSON = "richardson"
EVAL_METHODS = [EVAL_DIRECT, EVAL_RICHARDSON]

CHAIN_PLAIN = "plain"
CHAIN_SSD = "ssd"

LABEL_SOURCE = "source"
LABEL_DESTINATION = "destination"
LABEL_CONVENTIONS = [LABEL_SOURCE, LABEL_DESTINATION]

SENSE_MAXIMIZE = "max"
SENSE_MINIMIZE = "min"

OP_LE = "<="
OP_GE = ">="
OP_EQ = "=="
CONSTRAINT_OPS = [OP_LE, OP_GE, OP_EQ]

LP_OPTIMAL = "optimal"
LP_INFEASIBLE = "infeasible"
LP_UNBOUNDED = "unbounded"

BACKEND_AUTO = "auto"
BACKEND_SIMPLEX = "simplex"
BACKEND_HIGHS = "highs"
LP_BACKENDS = [BACKEND_AUTO, BACKEND_SIMPLEX, BACKEND_HIGHS]

# Config keys
CONF_N_MAX = "n_max"
CONF_N_NEW = "n_new"
CONF_BETA = "beta"
CONF_EPS_BETA = "eps_beta"
CONF_EPS_FEAS = "eps_feas"
CONF_EPS_IMPROVE = "eps_improve"
CONF_BIG_M1 = "big_m1"
CONF_BIG_M2 = "big_m2"
CONF_MAX_ITERATIONS = "max_iterations"
CONF_RABIN_INDEX = "rabin_index"
CONF_EVAL_METHOD = "eval_method"
CONF_LP_BACKEND = "lp_backend"
CONF_TIME_LIMIT = "time_limit"
CONF_SEARCH_TIME_LIMIT = "search_time_limit"

# Grid world
GRID_COLUMNS = 7
DEFAULT_GRID_ROWS = 1
DEFAULT_P_FORWARD = 0.8
DEFAULT_P_LATERAL = 0.1
DEFAULT_OBS_NOISE = 0.6
DEFAULT_START_CELL = 1
GRID_GOAL_CELL = 6
GRID_HAZARD_CELL = 3
GOAL_PROP = "b"
HAZARD_PROP = "c"
GRID_LABEL_CELLS = dict(
    {"a": 0, GOAL_PROP: GRID_GOAL_CELL, HAZARD_PROP: GRID_HAZARD_CELL}
)

ACTION_RIGHT = "Right"
ACTION_LEFT = "Left"
ACTION_UP = "Up"
ACTION_DOWN = "Down"
ACTION_STOP = "Stop"
GRID_ACTIONS = [ACTION_RIGHT, ACTION_LEFT, ACTION_UP, ACTION_DOWN, ACTION_STOP]
GRID_MOVES = dict(
    {
        ACTION_RIGHT: (1, 0),
        ACTION_LEFT: (-1, 0),
        ACTION_UP: (0, -1),
        ACTION_DOWN: (0, 1),
        ACTION_STOP: (0, 0),
    }
)

# Builtin automata
BUILTIN_CASE1 = "case1"
BUILTIN_CASE2 = "case2"
BUILTIN_DRAS = [BUILTIN_CASE1, BUILTIN_CASE2]

# Case studies
CASE1_ROWS = 2
CASE1_REACH_HORIZON = 20
CASE2_ROWS = 3
CASE2_TRANSIENT = 1
CASE2_STEADY = 2
DEFAULT_SIM_TRACES = 10_000
DEFAULT_SIM_HORIZON = 200
DEFAULT_SIM_SEED = 0

CSV_COLUMNS = [
    "iteration",
    "size",
    "steady_size",
    "value",
    "residual",
    "reach_probability",
    "repeat_frequency",
]
