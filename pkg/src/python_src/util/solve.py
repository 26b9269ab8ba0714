"""
Log-space fixed-point iteration z <- (1 - d) z + d G(z), stopping on a quotient-norm step criterion,
followed by normalisation along the scaling direction.
"""

import os
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from ..pydantic_models import NumeraireRule, SolveOptions, SolveStatus
from .app_utilities import certify_defaults, file_defaults
from .errors import ImpossibleNormalizationError, InvalidInputError, ModelEvaluationError
from .logging_utilities import log_solve_stats_decorator
from .pf_core import gauge_norm, quotient_norm
from .system import PositiveSystem, StateVector, log_transform, scale_state

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class SolveResult:
    x_star: StateVector
    status: SolveStatus
    iterations: int
    step_gauge: Tuple[float, ...]
    step_quotient: Tuple[float, ...]
    residual: float
    normalization_scalar: float
    decay_rate: Optional[float] = None
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _gauge(u: Optional[FloatArray], size: int) -> FloatArray:
    if u is None:
        return np.ones(size)
    weights = np.abs(u)
    if np.any(weights == 0):
        raise InvalidInputError("the gauge |u| needs every scaling exponent to be non-zero")
    return weights


def decay_rate(steps: List[float]) -> Optional[float]:
    """Median ratio of consecutive gauge steps over the second half of the run."""
    tail = np.asarray(steps[len(steps) // 2 :], dtype=float)
    if tail.size < 2:
        return None
    previous, current = tail[:-1], tail[1:]
    valid = previous > 0
    if not np.any(valid):
        return None
    return float(np.median(current[valid] / previous[valid]))


@log_solve_stats_decorator
def iterate(
    sys: PositiveSystem,
    x0: Optional[Union[StateVector, ArrayLike]] = None,
    u: Optional[ArrayLike] = None,
    opts: Optional[SolveOptions] = None,
) -> SolveResult:
    """
    Iterate until both the quotient step and the relative fixed-point residual are within opts.tol,
    then rescale along u with opts.numeraire_rule. Without u the gauge is the all-ones vector, the
    quotient step equals the gauge step and no normalisation happens.

    An evaluation failure stops the run with status "evaluation-failed" and the last good iterate.
    """
    opts = SolveOptions() if opts is None else opts
    if x0 is None:
        start = sys.ones()
    elif isinstance(x0, StateVector):
        start = x0
    else:
        start = sys.state(x0)
    direction = None if u is None else np.asarray(u, dtype=float)
    if direction is not None and direction.shape != (sys.dimension,):
        raise InvalidInputError(f"u has shape {direction.shape}, expected ({sys.dimension},)")
    weights = _gauge(direction, sys.dimension)

    z = start.log
    steps_gauge: List[float] = []
    steps_quotient: List[float] = []
    status: SolveStatus = "budget-exhausted"
    residual = np.nan
    message = ""
    for _ in range(opts.max_iter):
        try:
            image = log_transform(z, sys)
        except ModelEvaluationError as e:
            status, message = "evaluation-failed", str(e)
            break
        displacement = image - z
        step = opts.damping * displacement
        steps_gauge.append(gauge_norm(step, weights))
        steps_quotient.append(steps_gauge[-1] if direction is None else quotient_norm(step, direction, weights))
        residual = float(np.max(np.abs(np.expm1(displacement))))
        if steps_quotient[-1] <= opts.tol and residual <= opts.tol:
            status = "converged"
            break
        z = z + step

    x = StateVector.from_log(z, sys.labels)
    scalar = 1.0
    if direction is not None and status != "evaluation-failed":
        x, scalar = normalize(x, direction, opts.numeraire_rule)
    if status == "budget-exhausted":
        message = f"no convergence within {opts.max_iter} iterations"

    return SolveResult(
        x_star=x,
        status=status,
        iterations=len(steps_gauge),
        step_gauge=tuple(steps_gauge),
        step_quotient=tuple(steps_quotient),
        residual=residual,
        normalization_scalar=scalar,
        decay_rate=decay_rate(steps_gauge),
        message=message,
    )


def _normalization_indices(x: StateVector, rule: NumeraireRule) -> List[int]:
    if rule.kind == "first-coordinate-one":
        return [0]
    if rule.kind == "named-coordinate":
        if rule.label not in x.labels:
            raise InvalidInputError(f"numeraire coordinate {rule.label} is not a label of the system")
        return [x.labels.index(rule.label)]
    if rule.block:
        indices = [k for k, label in enumerate(x.labels) if label.startswith(rule.block)]
        if not indices:
            raise InvalidInputError(f"no coordinate label starts with {rule.block}")
        return indices
    return list(range(len(x.labels)))


def normalize(x: StateVector, u: ArrayLike, rule: NumeraireRule) -> Tuple[StateVector, float]:
    """
    Rescale x to c^u x so the numeraire rule holds; returns the rescaled state and c.

    Raises:
        ImpossibleNormalizationError: the rule pins a coordinate (or block) the scaling does not move.
    """
    direction = np.asarray(u, dtype=float)
    indices = _normalization_indices(x, rule)
    weight = float(np.sum(direction[indices]))
    if weight == 0 or (len(indices) == 1 and direction[indices[0]] == 0):
        raise ImpossibleNormalizationError(f"{rule.kind} cannot be met: the scaling exponent vanishes on it")
    log_c = -float(np.sum(x.log[indices])) / weight
    c = float(np.exp(log_c))
    return scale_state(x, direction, c), c


def up_to_scale_distance(x: StateVector, y: StateVector, u: ArrayLike) -> float:
    """Quotient distance between log x and log y modulo the scaling direction, gauged by |u|."""
    if x.labels != y.labels:
        raise InvalidInputError("states belong to different systems")
    direction = np.asarray(u, dtype=float)
    return quotient_norm(x.log - y.log, direction, _gauge(direction, len(x.labels)))


def random_start(sys: PositiveSystem, rng: np.random.Generator, log_domain: Optional[float] = None) -> StateVector:
    d = certify_defaults["log_domain"] if log_domain is None else log_domain
    return StateVector.from_log(rng.uniform(-d, d, sys.dimension), sys.labels)


def trace_table(result: SolveResult) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "iteration": np.arange(1, result.iterations + 1),
            "step_gauge": result.step_gauge,
            "step_quotient": result.step_quotient,
        }
    )


def trace_to_text(result: SolveResult) -> str:
    fmt = file_defaults["number_format"]
    table = trace_table(result)
    for column in ("step_gauge", "step_quotient"):
        table[column] = [format(value, fmt) for value in table[column]]
    return table.to_csv(index=False, lineterminator="\n")


def write_trace(result: SolveResult, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        f.write(trace_to_text(result))
