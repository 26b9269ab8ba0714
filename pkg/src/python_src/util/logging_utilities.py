import json
import logging
import sys
from datetime import datetime, timezone
from functools import wraps
from typing import TYPE_CHECKING, Any, Callable, Dict, TypeVar, cast

if TYPE_CHECKING:
    from ..pydantic_models import CertificationReport
    from .solve import SolveResult

# stdout is reserved for the one-line command summary
logging.basicConfig(format="%(message)s", level=logging.INFO, datefmt="%Y-%m-%dT%H:%M:%S%z", stream=sys.stderr, force=True)


def log_as_json(log: Dict[str, Any]) -> None:
    """
    Logs the dictionary as a single JSON line so runs can be grepped and parsed downstream
    """
    log.setdefault("date", datetime.now(tz=timezone.utc).isoformat())
    log.setdefault("level", "info")
    logging.log(logging.ERROR if log["level"] == "error" else logging.INFO, json.dumps(log))


def set_quiet(quiet: bool) -> None:
    """Raise the root log level to WARNING when quiet output was requested."""
    logging.getLogger().setLevel(logging.WARNING if quiet else logging.INFO)


def log_solve_stats(system_name: str, dimension: int, result: "SolveResult") -> None:
    """
    Logs stats about a finished fixed-point iteration: how it ended, how many steps it took and
    how fast the steps were shrinking at the end
    """
    final_gauge = result.step_gauge[-1] if result.step_gauge else None
    final_quotient = result.step_quotient[-1] if result.step_quotient else None
    log_as_json(
        {
            "event": "solve",
            "system": normalize_log(system_name),
            "dimension": dimension,
            "status": result.status,
            "iterations": result.iterations,
            "final_step_gauge": final_gauge,
            "final_step_quotient": final_quotient,
            "decay_rate": result.decay_rate,
            "normalization_scalar": result.normalization_scalar,
        }
    )


def log_certification_stats(report: "CertificationReport") -> None:
    """
    Logs the verdict of every checked condition together with the certification mode
    """
    log_as_json(
        {
            "event": "certify",
            "system": normalize_log(report.system_name),
            "dimension": report.dimension,
            "mode": report.mode,
            "connectedness": report.connectedness.verdict,
            "self_interaction": report.self_interaction.verdict,
            "scaling": report.scaling.verdict,
            "monotonicity": report.monotonicity.verdict,
            "samples": len(report.samples),
            "theorem_applicable": report.main_theorem_applicable,
        }
    )


F = TypeVar("F", bound=Callable[..., Any])


def log_solve_stats_decorator(func: F) -> F:
    """Logs the SolveResult of the wrapped call; the system is the first positional argument."""

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        result = func(*args, **kwargs)

        system = args[0] if args else kwargs.get("sys")
        if system is not None:
            log_solve_stats(system.name, system.dimension, result)

        return result

    return cast(F, wrapper)


def log_certification_decorator(func: F) -> F:
    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        report = func(*args, **kwargs)
        log_certification_stats(report)
        return report

    return cast(F, wrapper)


def normalize_log(text: str) -> str:
    """Strips newlines and carriage returns from system and coordinate names taken from user input."""
    return text.replace("\r", "").replace("\n", "")
