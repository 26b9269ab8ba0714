"""
Command line front end.

    fixed-point-toolkit certify --config run.yaml [--out DIR] [--seed N] [--threads K] [--quiet]
    fixed-point-toolkit solve --config run.yaml [--out DIR] [--seed N] [--quiet]
    fixed-point-toolkit counterfactual --config run.yaml --shock shock.yaml [--out DIR] [--seed N] [--quiet]
    fixed-point-toolkit report report.txt

Exit codes: 0 success, 2 input or evaluation error, 3 certification failed, 4 solver budget exhausted.
Diagnostics go to stderr; stdout only carries a one-line summary.
"""

import argparse
import importlib
import os
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .pydantic_models import RunConfig
from .util.app_utilities import file_defaults
from .util.certify import certify
from .util.errors import BudgetExceededError, FixedPointToolkitError, ModelEvaluationError, ParameterError
from .util.logging_utilities import log_as_json, set_quiet
from .util.parameter_files import load_parameters, load_run_config, load_shocks
from .util.reports import delta_to_text, equilibrium_to_text, format_report, parse_report_text, report_to_text
from .util.solve import iterate, random_start, trace_to_text
from .util.system import PositiveSystem
from .util.trade import build_system, counterfactual, recover_outcomes

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_CERTIFICATION_FAILED = 3
EXIT_BUDGET_EXHAUSTED = 4


def load_factory(reference: str) -> PositiveSystem:
    """Build a custom system from a ``package.module:function`` reference."""
    module_name, _, attribute = reference.partition(":")
    try:
        factory: Callable[[], PositiveSystem] = getattr(importlib.import_module(module_name), attribute)
    except (ImportError, AttributeError, ValueError) as e:
        raise ParameterError(f"cannot load system factory {reference!r}: {e}", field="model.factory") from e
    if not callable(factory):
        raise ParameterError(f"{reference} is not callable", field="model.factory")
    try:
        system = factory()
    except Exception as e:
        raise ParameterError(f"system factory {reference} raised {e!r}", field="model.factory") from e
    if not isinstance(system, PositiveSystem):
        raise ParameterError(f"{reference} did not return a PositiveSystem", field="model.factory")
    return system


def output_directory(config: RunConfig, out: Optional[str]) -> str:
    if out:
        return out
    return os.path.join(config.base_dir, config.output)


def _write(directory: str, files: Dict[str, str]) -> None:
    """Stage every file under a hidden temporary name, then rename them into place together."""
    os.makedirs(directory, exist_ok=True)
    staged: List[Tuple[str, str]] = []
    try:
        for name, text in files.items():
            temporary = os.path.join(directory, f".{name}.tmp")
            with open(temporary, "w") as f:
                f.write(text)
            staged.append((temporary, os.path.join(directory, name)))
    except OSError:
        for temporary, _ in staged:
            os.remove(temporary)
        raise
    for temporary, target in staged:
        os.replace(temporary, target)


def _summary(message: str) -> None:
    print(message)


def run_certify(config: RunConfig, out_dir: str, seed: Optional[int] = None, threads: int = 1) -> int:
    if config.model.kind == "custom":
        system = load_factory(config.model.factory or "")
    else:
        # disconnected economies are certified (and fail) rather than rejected
        system = build_system(load_parameters(config, require_connected=False))
    report = certify(
        system,
        sample_count=config.certify.samples,
        seed=config.certify.seed if seed is None else seed,
        threads=threads,
    )
    _write(out_dir, {file_defaults["report"]: report_to_text(report)})
    verdicts = " ".join(
        f"{name}={getattr(report, name).verdict}" for name in ("connectedness", "self_interaction", "scaling", "monotonicity")
    )
    _summary(f"certify {system.name} mode={report.mode} {verdicts}")
    return EXIT_OK if report.all_passed else EXIT_CERTIFICATION_FAILED


def run_solve(config: RunConfig, out_dir: str, seed: Optional[int] = None) -> int:
    params = None
    if config.model.kind == "custom":
        system = load_factory(config.model.factory or "")
    else:
        params = load_parameters(config)
        system = build_system(params)
    start = None if seed is None else random_start(system, np.random.default_rng(seed))
    result = iterate(system, start, system.scaling_hint, config.solve.options())
    if result.status == "evaluation-failed":
        raise ModelEvaluationError(result.message)

    outcomes = None
    if params is not None and result.converged:
        outcomes = recover_outcomes(params, result.x_star, system)
    _write(
        out_dir,
        {
            file_defaults["trace"]: trace_to_text(result),
            file_defaults["equilibrium"]: equilibrium_to_text(result, outcomes),
        },
    )
    _summary(f"solve {system.name} status={result.status} iterations={result.iterations}")
    return EXIT_OK if result.converged else EXIT_BUDGET_EXHAUSTED


def run_counterfactual(config: RunConfig, shock_path: str, out_dir: str, seed: Optional[int] = None) -> int:
    params = load_parameters(config)
    shocks = load_shocks(shock_path)
    result = counterfactual(params, shocks, config.solve.options(), seed=seed)
    _write(out_dir, {file_defaults["delta"]: delta_to_text(result)})
    _summary(f"counterfactual {config.model.kind} shocks={len(shocks)}")
    return EXIT_OK


def run_report(path: str) -> int:
    try:
        with open(path, "r") as f:
            parsed = parse_report_text(f.read())
    except ValueError as e:
        raise ParameterError(f"{path}: {e}") from e
    print(format_report(parsed), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fixed-point-toolkit", description="Certify and solve positive fixed-point systems.")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", required=True, help="YAML run configuration")
        sub.add_argument("--out", help="output directory (defaults to the configuration's output entry)")
        sub.add_argument("--quiet", action="store_true", help="only log warnings and errors")
        sub.add_argument(
            "--seed", type=int, help="certification sample seed (overrides certify.seed) or seed of a random start vector"
        )

    certify_parser = commands.add_parser("certify", help="check the uniqueness and convergence conditions")
    add_common(certify_parser)
    certify_parser.add_argument("--threads", type=int, default=1, help="worker threads for per-sample work")

    solve_parser = commands.add_parser("solve", help="iterate to the normalised equilibrium")
    add_common(solve_parser)

    counterfactual_parser = commands.add_parser("counterfactual", help="solve before and after a parameter shock")
    add_common(counterfactual_parser)
    counterfactual_parser.add_argument("--shock", required=True, help="YAML list of parameter shocks")

    report_parser = commands.add_parser("report", help="pretty-print an existing certification report")
    report_parser.add_argument("path")
    report_parser.add_argument("--quiet", action="store_true")
    return parser


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "report":
        return run_report(args.path)
    config = load_run_config(args.config)
    out_dir = output_directory(config, args.out)
    if args.command == "certify":
        return run_certify(config, out_dir, seed=args.seed, threads=args.threads)
    if args.command == "solve":
        return run_solve(config, out_dir, seed=args.seed)
    return run_counterfactual(config, args.shock, out_dir, seed=args.seed)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(None if argv is None else list(argv))
    set_quiet(args.quiet)
    try:
        return _dispatch(args)
    except BudgetExceededError as e:
        log_as_json({"event": "error", "level": "error", "command": args.command, "message": str(e)})
        return EXIT_BUDGET_EXHAUSTED
    except (FixedPointToolkitError, OSError) as e:
        details: Dict[str, object] = {"event": "error", "level": "error", "command": args.command, "message": str(e)}
        location: List[object] = list(getattr(e, "location", None) or [])
        if location:
            details["location"] = location
        log_as_json(details)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
