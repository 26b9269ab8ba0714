"""
Positive systems x = F(x) on the positive orthant and their log-transformed view G = log o F o exp.

A PositiveSystem bundles labelled coordinates with an evaluation callable and, optionally, an
analytic elasticity, an exact exponent structure (used by certification in exact mode) and a
closed-form scaling exponent (used by the solver to measure steps modulo scale).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .app_utilities import system_defaults
from .errors import DifferentiationError, FixedPointToolkitError, InvalidInputError, ModelEvaluationError

FloatArray = NDArray[np.float64]
Evaluator = Callable[[FloatArray], FloatArray]


@dataclass(frozen=True)
class StateVector:
    values: FloatArray
    labels: Tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.shape[0] != len(self.labels):
            raise InvalidInputError(f"state has shape {values.shape} but {len(self.labels)} labels")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidInputError("state vector must be finite and strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_log(cls, z: ArrayLike, labels: Sequence[str]) -> "StateVector":
        with np.errstate(over="ignore", under="ignore"):
            values = np.exp(np.asarray(z, dtype=float))
        return cls(values, tuple(labels))

    @property
    def log(self) -> FloatArray:
        return np.log(self.values)

    def as_dict(self) -> Dict[str, float]:
        return {label: float(value) for label, value in zip(self.labels, self.values)}


@dataclass(frozen=True)
class ElasticityMatrix:
    """DG at `point`; row j holds the elasticities of F_j with respect to every coordinate"""

    entries: FloatArray
    point: StateVector
    method: str  # "analytic" or "numeric"

    @property
    def modulus(self) -> FloatArray:
        return np.abs(self.entries)


@dataclass(frozen=True)
class ExponentStructure:
    """
    Closed-form sign pattern of DG (entries in {-1, 0, 1}) valid at every point, plus the exact
    scaling exponent. Systems built from power-law terms with fixed exponents carry one.
    """

    sign_table: NDArray[np.int8]
    scaling_exponent: FloatArray


@dataclass
class PositiveSystem:
    labels: Tuple[str, ...]
    evaluate: Evaluator
    elasticity: Optional[Evaluator] = None
    name: str = "custom"
    structure: Optional[ExponentStructure] = None
    scaling_hint: Optional[FloatArray] = field(default=None)

    def __post_init__(self) -> None:
        self.labels = tuple(self.labels)
        if not self.labels:
            raise InvalidInputError("a system needs at least one coordinate")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidInputError("coordinate labels must be unique")
        if self.structure is not None and self.scaling_hint is None:
            self.scaling_hint = self.structure.scaling_exponent

    @property
    def dimension(self) -> int:
        return len(self.labels)

    def state(self, values: ArrayLike) -> StateVector:
        return StateVector(np.asarray(values, dtype=float), self.labels)

    def ones(self) -> StateVector:
        return self.state(np.ones(self.dimension))


def _values(sys: PositiveSystem, x: Union[StateVector, ArrayLike]) -> FloatArray:
    if isinstance(x, StateVector):
        if x.labels != sys.labels:
            raise InvalidInputError("state labels do not match the system")
        return x.values
    values = np.asarray(x, dtype=float)
    if values.shape != (sys.dimension,):
        raise InvalidInputError(f"state has shape {values.shape}, expected ({sys.dimension},)")
    return values


def evaluate_checked(sys: PositiveSystem, x: Union[StateVector, ArrayLike]) -> FloatArray:
    """
    F(x), raising ModelEvaluationError naming the first coordinate that is not finite and positive.
    Exceptions raised inside a user-supplied F are reported the same way.
    """
    values = _values(sys, x)
    try:
        with np.errstate(all="ignore"):
            image = np.asarray(sys.evaluate(values), dtype=float)
    except FixedPointToolkitError:
        raise
    except Exception as e:
        raise ModelEvaluationError(f"{sys.name}: F raised {e!r}") from e
    if image.shape != (sys.dimension,):
        raise ModelEvaluationError(f"{sys.name}: F returned shape {image.shape}, expected ({sys.dimension},)")
    bad = np.flatnonzero(~np.isfinite(image) | (image <= 0))
    if bad.size:
        label = sys.labels[int(bad[0])]
        raise ModelEvaluationError(f"{sys.name}: F[{label}] = {image[bad[0]]} is not finite and positive", label=label)
    return image


def log_transform(z: ArrayLike, sys: PositiveSystem) -> FloatArray:
    """G(z) = log F(exp z)"""
    point = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(point)):
        raise InvalidInputError("log state must be finite")
    with np.errstate(over="ignore", under="ignore"):
        x = np.exp(point)
    bad = np.flatnonzero(~np.isfinite(x) | (x <= 0))
    if bad.size:
        label = sys.labels[int(bad[0])]
        raise ModelEvaluationError(f"{sys.name}: exp(z[{label}]) leaves floating point range", label=label)
    return np.log(evaluate_checked(sys, x))


def elasticity_at(
    sys: PositiveSystem,
    x: Union[StateVector, ArrayLike],
    threads: int = 1,
    step: Optional[float] = None,
    numeric: bool = False,
) -> ElasticityMatrix:
    """
    DG at log x: the analytic elasticity when the system provides one (and `numeric` is False),
    otherwise central differences in log coordinates, one column per coordinate
    """
    values = _values(sys, x)
    point = x if isinstance(x, StateVector) else sys.state(values)
    if sys.elasticity is not None and not numeric:
        try:
            entries = np.asarray(sys.elasticity(point.values), dtype=float)
        except FixedPointToolkitError:
            raise
        except Exception as e:
            raise DifferentiationError(f"{sys.name}: analytic elasticity raised {e!r}") from e
        if entries.shape != (sys.dimension, sys.dimension) or not np.all(np.isfinite(entries)):
            raise DifferentiationError(f"{sys.name}: analytic elasticity is malformed at the requested point")
        return ElasticityMatrix(entries, point, "analytic")

    h = system_defaults["log_step"] if step is None else step
    z = point.log

    def shifted(k: int, offset: float) -> FloatArray:
        point = z.copy()
        point[k] += offset
        return log_transform(point, sys)

    def column(k: int) -> FloatArray:
        derivative = (shifted(k, h) - shifted(k, -h)) / (2 * h)
        if np.any(np.isnan(derivative)):
            label = sys.labels[k]
            raise DifferentiationError(f"{sys.name}: finite difference with respect to {label} is NaN", label=label)
        return derivative

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            columns = list(pool.map(column, range(sys.dimension)))
    else:
        columns = [column(k) for k in range(sys.dimension)]
    return ElasticityMatrix(np.column_stack(columns), point, "numeric")


def scale_state(x: StateVector, u: ArrayLike, c: float) -> StateVector:
    """c^u x, coordinate by coordinate"""
    if not c > 0:
        raise InvalidInputError("scale constant must be positive")
    return StateVector.from_log(x.log + np.asarray(u, dtype=float) * np.log(c), x.labels)


def fixed_point_residual(sys: PositiveSystem, x: Union[StateVector, ArrayLike]) -> float:
    """max_j |F(x)_j - x_j| / x_j"""
    values = _values(sys, x)
    return float(np.max(np.abs(evaluate_checked(sys, values) - values) / values))
