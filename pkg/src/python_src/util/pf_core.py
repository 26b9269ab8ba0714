"""
Perron-Frobenius primitives for nonnegative square matrices: irreducibility and primitivity tests,
power iteration for the spectral radius with Collatz-Wielandt bounds, the weighted gauge norm and
the quotient norm that measures distances modulo the scaling direction.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .app_utilities import pf_core_defaults
from .errors import BudgetExceededError, InvalidInputError, ReducibleMatrixError

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class SpectralResult:
    rho: float
    eigvec: FloatArray  # positive, max entry 1
    lower_bound: float
    upper_bound: float
    iterations: int
    shifted: bool


@dataclass(frozen=True)
class DominationResult:
    holds: bool
    rho: float
    eigvec_residual: float
    modulus_equal: bool
    zeta_plus: Tuple[int, ...]
    zeta_minus: Tuple[int, ...]


def as_nonnegative_matrix(M: ArrayLike) -> FloatArray:
    matrix = np.asarray(M, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.shape[0] == 0:
        raise InvalidInputError(f"expected a non-empty square matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError("matrix has non-finite entries")
    if np.any(matrix < 0):
        raise InvalidInputError("matrix has negative entries")
    return matrix


def _as_vector(values: ArrayLike, size: int, name: str) -> FloatArray:
    vector = np.asarray(values, dtype=float)
    if vector.shape != (size,):
        raise InvalidInputError(f"{name} has shape {vector.shape}, expected ({size},)")
    if not np.all(np.isfinite(vector)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return vector


def _weights(v: ArrayLike, size: int) -> FloatArray:
    weights = _as_vector(v, size, "gauge vector")
    if np.any(weights <= 0):
        raise InvalidInputError("gauge vector must be strictly positive")
    return weights


def _graph(M: FloatArray) -> csr_matrix:
    # edge k -> j whenever M[j, k] > 0
    return csr_matrix((M.T > 0).astype(float))


def strongly_connected_blocs(M: ArrayLike) -> List[List[int]]:
    """
    Strongly connected components of the directed graph of M, each as a sorted index list,
    ordered by smallest member
    """
    matrix = as_nonnegative_matrix(M)
    _, labels = connected_components(_graph(matrix), directed=True, connection="strong")
    blocs: dict[int, List[int]] = {}
    for index, label in enumerate(labels):
        blocs.setdefault(int(label), []).append(index)
    return sorted(blocs.values(), key=lambda bloc: bloc[0])


def unreachable_from(M: ArrayLike, start: int = 0) -> List[int]:
    """Indices that no directed path reaches from `start`."""
    matrix = as_nonnegative_matrix(M)
    reached = breadth_first_order(_graph(matrix), start, directed=True, return_predecessors=False)
    return sorted(set(range(matrix.shape[0])) - {int(k) for k in reached})


def is_irreducible(M: ArrayLike) -> bool:
    matrix = as_nonnegative_matrix(M)
    if matrix.shape[0] == 1:
        return bool(matrix[0, 0] > 0)
    return len(strongly_connected_blocs(matrix)) == 1


def is_primitive(M: ArrayLike) -> bool:
    """Irreducible with at least one positive diagonal entry."""
    matrix = as_nonnegative_matrix(M)
    return is_irreducible(matrix) and bool(np.any(np.diag(matrix) > 0))


def collatz_wielandt_bounds(M: ArrayLike, v: ArrayLike) -> Tuple[float, float]:
    """min and max of (Mv)_j / v_j for a positive v; they bracket the spectral radius of an irreducible M"""
    matrix = as_nonnegative_matrix(M)
    weights = _weights(v, matrix.shape[0])
    ratios = (matrix @ weights) / weights
    return float(ratios.min()), float(ratios.max())


def spectral_radius(M: ArrayLike, tol: Optional[float] = None, max_iter: Optional[int] = None) -> SpectralResult:
    """
    Power iteration from the all-ones vector.

    If the Collatz-Wielandt bounds have not closed after half of the budget the iteration switches
    to M + sI with s the largest entry of M, which is primitive and shares the Perron vector. Bounds
    are always evaluated on M itself, so lower_bound <= rho <= upper_bound holds on every exit.

    Raises:
        ReducibleMatrixError: M is reducible; `blocs` lists its strongly connected components.
        BudgetExceededError: the bounds did not close within max_iter; `bounds` holds the best pair.
    """
    matrix = as_nonnegative_matrix(M)
    size = matrix.shape[0]
    if not is_irreducible(matrix):
        raise ReducibleMatrixError("spectral_radius needs an irreducible matrix", blocs=strongly_connected_blocs(matrix))
    tol = pf_core_defaults["tol"] if tol is None else tol
    max_iter = pf_core_defaults["iteration_factor"] * size if max_iter is None else max_iter

    v = np.ones(size)
    best_lower, best_upper = -np.inf, np.inf
    shift = 0.0
    for iteration in range(1, max_iter + 1):
        if iteration == max_iter // 2 + 1 and shift == 0.0:
            shift = float(matrix.max())
        image = matrix @ v
        ratios = image / v
        best_lower = max(best_lower, float(ratios.min()))
        best_upper = min(best_upper, float(ratios.max()))
        if best_upper - best_lower <= tol * max(1.0, best_upper):
            return SpectralResult(
                rho=0.5 * (best_lower + best_upper),
                eigvec=v / v.max(),
                lower_bound=best_lower,
                upper_bound=best_upper,
                iterations=iteration,
                shifted=shift > 0,
            )
        v = image + shift * v
        v = v / v.max()

    raise BudgetExceededError(
        f"power iteration did not converge within {max_iter} iterations",
        iterations=max_iter,
        bounds=(best_lower, best_upper),
    )


def gauge_norm(z: ArrayLike, v: ArrayLike) -> float:
    """max_j |z_j| / v_j"""
    vector = np.asarray(z, dtype=float)
    if vector.ndim != 1 or vector.size == 0:
        raise InvalidInputError(f"expected a non-empty vector, got shape {vector.shape}")
    weights = _weights(v, vector.shape[0])
    return float(np.max(np.abs(vector) / weights))


def quotient_minimizer(z: ArrayLike, u: ArrayLike, v: ArrayLike) -> Tuple[float, float]:
    """
    Returns (min over lambda of gauge_norm(z - lambda u, v), minimising lambda).

    The objective is a maximum of V-shaped functions w_j |lambda - t_j| with w_j = |u_j| / v_j and
    t_j = z_j / u_j, so its minimum sits at a crossing of two opposite slopes or at a vertex. All
    such candidates are evaluated up to `pairwise_quotient_limit` coordinates; above that a bounded
    scalar minimisation is used.
    """
    vector = np.asarray(z, dtype=float)
    if vector.ndim != 1 or vector.size == 0:
        raise InvalidInputError(f"expected a non-empty vector, got shape {vector.shape}")
    size = vector.shape[0]
    direction = _as_vector(u, size, "u")
    weights = _weights(v, size)
    if not np.any(direction != 0):
        raise InvalidInputError("u must be non-zero")

    moving = direction != 0
    floor = float(np.max(np.abs(vector[~moving]) / weights[~moving])) if np.any(~moving) else 0.0
    w = np.abs(direction[moving]) / weights[moving]
    t = vector[moving] / direction[moving]

    def objective(lam: float) -> float:
        return float(np.max(w * np.abs(lam - t)))

    if t.size <= pf_core_defaults["pairwise_quotient_limit"]:
        a, b = np.triu_indices(t.size, k=1)
        candidates = np.concatenate([t, (w[a] * t[a] + w[b] * t[b]) / (w[a] + w[b])])
        values = np.max(w[None, :] * np.abs(candidates[:, None] - t[None, :]), axis=1)
        best = int(np.argmin(values))
        lam, value = float(candidates[best]), float(values[best])
    else:
        low, high = float(t.min()), float(t.max())
        if high - low == 0:
            lam, value = low, 0.0
        else:
            found = minimize_scalar(objective, bounds=(low, high), method="bounded", options={"xatol": 1e-14 * max(1.0, high - low)})
            lam, value = float(found.x), float(found.fun)
    return max(floor, value), lam


def quotient_norm(z: ArrayLike, u: ArrayLike, v: ArrayLike) -> float:
    """min over lambda of gauge_norm(z - lambda u, v)"""
    return quotient_minimizer(z, u, v)[0]


def check_domination(A: ArrayLike, B: ArrayLike, u: ArrayLike, tol: Optional[float] = None) -> DominationResult:
    """
    For a real A with |A| <= B entrywise, B irreducible and Au = u, report whether rho(B) = 1 together
    with the sign partition of u, the residual of B|u| = |u| and whether |A| = B.
    """
    tol = pf_core_defaults["tol"] if tol is None else tol
    bound = as_nonnegative_matrix(B)
    size = bound.shape[0]
    matrix = np.asarray(A, dtype=float)
    if matrix.shape != bound.shape:
        raise InvalidInputError(f"A has shape {matrix.shape}, B has shape {bound.shape}")
    direction = _as_vector(u, size, "u")
    if np.any(np.abs(matrix) > bound + tol):
        raise InvalidInputError("|A| <= B does not hold entrywise")
    if not is_irreducible(bound):
        raise ReducibleMatrixError("B must be irreducible", blocs=strongly_connected_blocs(bound))
    scale = max(1.0, float(np.max(np.abs(direction))))
    if np.max(np.abs(matrix @ direction - direction)) > tol * scale * size:
        raise InvalidInputError("u is not a fixed vector of A")

    spectrum = spectral_radius(bound, tol=tol, max_iter=max(1000, pf_core_defaults["iteration_factor"] * size))
    modulus = np.abs(direction)
    return DominationResult(
        holds=abs(spectrum.rho - 1) <= max(tol * size, spectrum.upper_bound - spectrum.lower_bound),
        rho=spectrum.rho,
        eigvec_residual=float(np.max(np.abs(bound @ modulus - modulus))),
        modulus_equal=bool(np.allclose(np.abs(matrix), bound, rtol=0, atol=tol)),
        zeta_plus=tuple(int(k) for k in np.flatnonzero(direction > 0)),
        zeta_minus=tuple(int(k) for k in np.flatnonzero(direction < 0)),
    )
