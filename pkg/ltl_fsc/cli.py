"""Command line entry point."""
from __future__ import annotations

import argparse
import asyncio
from collections.abc import Sequence
import json
import logging
from pathlib import Path
import sys

import colorlog

from .bpi import (
    BpiConfig,
    BpiReport,
    feasibility_residual,
    find_initial_controller,
    run_bpi,
    seed_controller,
)
from .chain import build_global_chain, decompose_classes, phi_feasible_sets
from .config import build_config, load_config
from .const import (
    BUILTIN_DRAS,
    CONF_BETA,
    CONF_BIG_M1,
    CONF_BIG_M2,
    CONF_EPS_BETA,
    CONF_EPS_FEAS,
    CONF_EPS_IMPROVE,
    CONF_EVAL_METHOD,
    CONF_LP_BACKEND,
    CONF_MAX_ITERATIONS,
    CONF_N_MAX,
    CONF_N_NEW,
    CONF_RABIN_INDEX,
    CONF_SEARCH_TIME_LIMIT,
    CONF_TIME_LIMIT,
    DEFAULT_GRID_ROWS,
    DEFAULT_SIM_HORIZON,
    DEFAULT_SIM_SEED,
    DEFAULT_SIM_TRACES,
    EVAL_METHODS,
    LABEL_CONVENTIONS,
    LABEL_SOURCE,
    LP_BACKENDS,
)
from .controller import dump_sfsc, parse_sfsc
from .coordinator import SynthesisManager
from .exceptions import InvalidSpec, SynthesisError
from .harness import (
    CASE_STUDIES,
    GridWorldSpec,
    build_gridworld,
    report_rows,
    run_case_study,
    simulate,
    write_csv,
)
from .model import LabeledPomdp, parse_pomdp, validate_pomdp
from .product import ProductPomdp, build_product, dump_product
from .rabin import Dra, builtin_dra, parse_dra

_LOGGER = logging.getLogger(__name__)

MANIFEST = json.loads((Path(__file__).parent / "manifest.json").read_text())
CONFIG_FLAGS = [
    (CONF_N_MAX, int),
    (CONF_N_NEW, int),
    (CONF_BETA, float),
    (CONF_EPS_BETA, float),
    (CONF_EPS_FEAS, float),
    (CONF_EPS_IMPROVE, float),
    (CONF_BIG_M1, float),
    (CONF_BIG_M2, float),
    (CONF_MAX_ITERATIONS, int),
    (CONF_RABIN_INDEX, int),
    (CONF_TIME_LIMIT, float),
    (CONF_SEARCH_TIME_LIMIT, float),
]


def setup_logging(verbose: bool) -> None:
    root = logging.getLogger()
    if not root.handlers:
        handler = colorlog.StreamHandler()
        handler.setFormatter(
            colorlog.ColoredFormatter(
                "%(log_color)s%(asctime)s %(levelname)s (%(name)s) %(message)s",
                datefmt="%H:%M:%S",
            )
        )
        root.addHandler(handler)
        root.setLevel(logging.INFO)
    for name in MANIFEST["loggers"]:
        logging.getLogger(name).setLevel(logging.DEBUG if verbose else logging.INFO)


def load_model(source: str) -> LabeledPomdp:
    """A model file, or ``grid`` / ``grid:N`` for the N-row grid world"""
    if source == "grid" or source.startswith("grid:"):
        _, _, rows = source.partition(":")
        if rows and not rows.isdigit():
            raise InvalidSpec(f"grid rows must be a number, got {rows!r}")
        return build_gridworld(GridWorldSpec(rows=int(rows or DEFAULT_GRID_ROWS)))
    return parse_pomdp(Path(source).read_text(encoding="utf-8"))


def load_dra(source: str) -> Dra:
    """A builtin automaton name or an automaton file"""
    if source in BUILTIN_DRAS:
        return builtin_dra(source)
    return parse_dra(Path(source).read_text(encoding="utf-8"))


def load_product(args: argparse.Namespace, rabin_index: int = 0) -> ProductPomdp:
    return build_product(
        load_model(args.model),
        load_dra(args.dra),
        rabin_index,
        label_convention=args.label_convention,
        prune=args.prune,
    )


def options_from_args(args: argparse.Namespace) -> BpiConfig:
    options = load_config(args.config) if args.config else {}
    overrides = {key: getattr(args, key) for key, _ in CONFIG_FLAGS}
    overrides[CONF_EVAL_METHOD] = args.eval_method
    overrides[CONF_LP_BACKEND] = args.lp_backend
    return build_config(options, overrides)


def emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
        _LOGGER.info("Wrote %s", output)
    else:
        sys.stdout.write(text)


def format_report(report: BpiReport) -> str:
    lines = [
        f"iterations: {report.iterations}",
        f"size: {report.sfsc.size} ({report.sfsc.n_steady} steady)",
        f"satisfaction probability: {report.satisfaction_probability:.6g}",
        "iteration size steady value residual repeat_frequency added",
    ]
    for record in report.records:
        lines.append(
            f"{record.iteration} {record.size} {record.steady_size} "
            f"{record.value:.9g} {record.residual:.3g} "
            f"{record.repeat_frequency:.6g} {record.added}"
        )
    return "\n".join(lines) + "\n"


def cmd_validate(args: argparse.Namespace) -> int:
    violations = validate_pomdp(load_model(args.model))
    for violation in violations:
        print(
            f"{violation.kind} {' '.join(violation.location)}: "
            f"deviation {violation.deviation:.3g}"
        )
    if not violations:
        print("valid")
    return 1 if violations else 0


def cmd_product(args: argparse.Namespace) -> int:
    emit(dump_product(load_product(args, args.rabin_index)), args.output)
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    product = load_product(args, args.rabin_index)
    sfsc = parse_sfsc(Path(args.sfsc).read_text(encoding="utf-8"))
    chain = build_global_chain(product, sfsc)
    decomposition = decompose_classes(chain)
    feasible = phi_feasible_sets(chain, decomposition, product)
    print(f"global states: {chain.n_states}")
    print(f"recurrent classes: {len(feasible.classes)}")
    for members, flagged, pair, reach in zip(
        feasible.classes, feasible.flagged, feasible.pair_of_class, feasible.reach
    ):
        status = f"feasible (pair {pair})" if flagged else "infeasible"
        print(f"  {len(members)} states, reach {reach:.6g}, {status}")
    print(f"satisfaction probability: {feasible.probability:.6g}")
    if sfsc.n_steady:
        print(f"feasibility residual: {feasibility_residual(product, sfsc):.3g}")
    return 0


def cmd_seed_controller(args: argparse.Namespace) -> int:
    config = options_from_args(args)
    product = load_product(args, config.rabin_index)
    if args.search:
        sfsc = find_initial_controller(product, args.transient, args.steady, config)
    else:
        sfsc = seed_controller(product, args.transient, args.steady, config)
    emit(dump_sfsc(sfsc), args.output)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    config = options_from_args(args)
    product = load_product(args, config.rabin_index)
    seed = None
    if args.seed:
        seed = parse_sfsc(Path(args.seed).read_text(encoding="utf-8"))
    if args.all_pairs:
        manager = SynthesisManager(product, config, args.transient, args.steady, seed)
        report = asyncio.run(manager.async_synthesize()).data
    else:
        if seed is None:
            seed = find_initial_controller(product, args.transient, args.steady, config)
        report = run_bpi(product, seed, config)
    sys.stdout.write(format_report(report))
    if args.csv:
        write_csv(report_rows(report), args.csv)
    if args.output:
        emit(dump_sfsc(report.sfsc), args.output)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    sfsc = parse_sfsc(Path(args.sfsc).read_text(encoding="utf-8"))
    stats = simulate(
        load_model(args.model),
        load_dra(args.dra),
        sfsc,
        args.horizon,
        args.traces,
        args.rng_seed,
        label_convention=args.label_convention,
        rabin_index=args.rabin_index,
    )
    print(f"traces: {stats.n_traces}, horizon: {stats.horizon}")
    print(
        f"reach probability: {stats.reach_probability:.4f}"
        f" ± {stats.reach_stderr:.4f}"
    )
    print(f"hazard probability: {stats.hazard_probability:.4f}")
    print(f"repeat frequency: {stats.repeat_frequency:.4f}")
    print(f"avoid frequency: {stats.avoid_frequency:.4f}")
    return 0


def cmd_case_study(args: argparse.Namespace) -> int:
    result = run_case_study(
        args.case,
        options_from_args(args),
        rows=args.rows,
        n_traces=args.traces,
        horizon=args.horizon,
        rng_seed=args.rng_seed,
        csv_path=args.csv,
    )
    sys.stdout.write(format_report(result.report))
    print(
        f"reach probability: uniform {result.baseline_stats.reach_probability:.4f}, "
        f"seed {result.seed_stats.reach_probability:.4f}, "
        f"final {result.final_stats.reach_probability:.4f}"
    )
    print(f"repeat frequency (simulated): {result.final_stats.repeat_frequency:.4f}")
    if args.output:
        emit(dump_sfsc(result.report.sfsc), args.output)
    return 0


def _product_arguments(parser: argparse.ArgumentParser, rabin: bool = True) -> None:
    parser.add_argument("model", help="model file, or grid / grid:N")
    parser.add_argument(
        "dra", help=f"automaton file or one of {', '.join(BUILTIN_DRAS)}"
    )
    parser.add_argument(
        "--label-convention", choices=LABEL_CONVENTIONS, default=LABEL_SOURCE
    )
    parser.add_argument(
        "--prune", action="store_true", help="drop unreachable product states"
    )
    if rabin:
        parser.add_argument("--rabin-index", type=int, default=0)


def _config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value options file")
    for key, kind in CONFIG_FLAGS:
        parser.add_argument(f"--{key.replace('_', '-')}", dest=key, type=kind)
    parser.add_argument("--eval-method", choices=EVAL_METHODS)
    parser.add_argument("--lp-backend", choices=LP_BACKENDS)


def _simulation_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--traces", type=int, default=DEFAULT_SIM_TRACES)
    parser.add_argument("--horizon", type=int, default=DEFAULT_SIM_HORIZON)
    parser.add_argument("--rng-seed", type=int, default=DEFAULT_SIM_SEED)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltl_fsc",
        description="Finite-state controller synthesis for LTL on POMDPs",
    )
    parser.add_argument("--version", action="version", version=MANIFEST["version"])
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", help="check a model for stochasticity")
    validate.add_argument("model")
    validate.set_defaults(func=cmd_validate)

    product = commands.add_parser("product", help="build and print the product POMDP")
    _product_arguments(product)
    product.add_argument("-o", "--output")
    product.set_defaults(func=cmd_product)

    analyze = commands.add_parser("analyze", help="analyze the chain of a controller")
    _product_arguments(analyze)
    analyze.add_argument("sfsc")
    analyze.set_defaults(func=cmd_analyze)

    seed = commands.add_parser(
        "seed-controller", help="build a feasible seed controller"
    )
    _product_arguments(seed, rabin=False)
    _config_arguments(seed)
    seed.add_argument("--transient", type=int, default=1)
    seed.add_argument("--steady", type=int, default=1)
    seed.add_argument(
        "--search", action="store_true", help="grow the steady partition on failure"
    )
    seed.add_argument("-o", "--output")
    seed.set_defaults(func=cmd_seed_controller)

    synth = commands.add_parser("synth", help="run bounded policy iteration")
    _product_arguments(synth, rabin=False)
    _config_arguments(synth)
    synth.add_argument("--seed", help="seed controller file")
    synth.add_argument("--transient", type=int, default=1)
    synth.add_argument("--steady", type=int, default=1)
    synth.add_argument("--all-pairs", action="store_true")
    synth.add_argument("--csv")
    synth.add_argument("-o", "--output")
    synth.set_defaults(func=cmd_synth)

    sim = commands.add_parser("simulate", help="Monte Carlo run of a controller")
    _product_arguments(sim)
    sim.add_argument("sfsc")
    _simulation_arguments(sim)
    sim.set_defaults(func=cmd_simulate)

    case = commands.add_parser("case-study", help="run a grid-world case study")
    case.add_argument("case", type=int, choices=sorted(CASE_STUDIES))
    case.add_argument("--rows", type=int)
    _config_arguments(case)
    _simulation_arguments(case)
    case.add_argument("--csv")
    case.add_argument("-o", "--output")
    case.set_defaults(func=cmd_case_study)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        return args.func(args)
    except SynthesisError as err:
        _LOGGER.error("%s", err)
        return 1
    except OSError as err:
        _LOGGER.error("Cannot access file: %s", err)
        return 1
