"""
Eaton-Kortum style trade models expressed as positive systems.

Three builders share the coordinate layout OMEGA[i](...), P[i](...), W[i] (country-major,
sector-minor):

build_one_sector
    J countries, one sector, labor share gamma_i; unknowns are the outward and inward resistances.
build_multi_sector
    S sectors with labor as the only factor; the wage enters through W_i = w_i^(1 + Theta).
build_general
    Labor plus sectoral intermediates combined Cobb-Douglas; collapses to build_multi_sector when
    every labor share is one.

The first two carry an ExponentStructure (sign table and closed-form scaling exponent) and an
analytic elasticity, so they certify in exact mode. The general framework is certified from samples.
"""

from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import gamma as gamma_function

from ..pydantic_models import (
    CounterfactualResult,
    GeneralParams,
    MultiSectorParams,
    OneSectorParams,
    Outcomes,
    ParameterShock,
    SolveOptions,
    TradeParams,
    parse_bundle,
)
from .app_utilities import solve_defaults
from .errors import BudgetExceededError, ConnectivityError, ModelEvaluationError, ParameterError, StaleStateError
from .pf_core import strongly_connected_blocs
from .solve import SolveResult, iterate, random_start
from .system import ExponentStructure, PositiveSystem, StateVector, elasticity_at, fixed_point_residual

FloatArray = NDArray[np.float64]
OUTCOME_NAMES = ("w", "R", "E", "P", "pi", "U")
DEFAULT_BOUND_EPSILON = 1e-3


def gamma_constant(theta: float, sigma: float) -> float:
    """
    Gamma((theta + 1 - sigma) / theta) ** (-theta / (1 - sigma)), the constant of the CES price index
    under Frechet productivity draws
    """
    argument = (theta + 1 - sigma) / theta
    if not theta > 0 or not sigma > 1 or argument <= 0:
        raise ParameterError(f"gamma_constant needs theta > sigma - 1 > 0, got theta={theta}, sigma={sigma}", field="theta")
    return float(gamma_function(argument) ** (-theta / (1 - sigma)))


def _tau_power(tau: FloatArray, theta: Union[float, FloatArray]) -> FloatArray:
    """tau ** -theta with prohibitive (infinite) costs mapped to zero"""
    finite = np.isfinite(tau)
    return np.where(finite, np.where(finite, tau, 1.0) ** (-np.asarray(theta)), 0.0)


def one_sector_labels(params: OneSectorParams) -> List[str]:
    return [f"OMEGA[{c}]" for c in params.countries] + [f"P[{c}]" for c in params.countries]


def multi_sector_labels(params: MultiSectorParams) -> List[str]:
    omega = [f"OMEGA[{c}][{s}]" for c in params.countries for s in params.sectors]
    price = [f"P[{c}][{s}]" for c in params.countries for s in params.sectors]
    return omega + price + [f"W[{c}]" for c in params.countries]


def _coordinate_countries(params: TradeParams) -> List[str]:
    if isinstance(params, OneSectorParams):
        return list(params.countries) * 2
    per_sector = [c for c in params.countries for _ in params.sectors]
    return per_sector * 2 + list(params.countries)


class _OneSectorTerms:
    """Exponents and coefficient matrices of the one-sector system."""

    def __init__(self, params: OneSectorParams) -> None:
        self.J = params.J
        self.theta = params.theta
        gamma = np.asarray(params.gamma, dtype=float)
        L = np.asarray(params.L, dtype=float)
        A = np.asarray(params.A, dtype=float)
        denom = 1 + self.theta * gamma
        self.omega_in_omega = 1 / denom
        self.price_in_omega = (1 - gamma) / denom - 1
        self.omega_in_price = 1 / denom - 1
        self.price_in_price = (1 - gamma) / denom
        with np.errstate(divide="ignore"):
            self.labor = np.power(gamma / L, -self.theta * gamma / denom)
        constant = gamma_constant(self.theta, params.sigma)
        self.tau_power = _tau_power(np.asarray(params.tau, dtype=float), self.theta)
        # outward: sum over destinations j; inward: sum over origins j
        self.outward = constant * A[:, None] * self.tau_power * self.labor[None, :]
        self.inward = (constant * (A * self.labor)[:, None] * self.tau_power).T

    def term_bases(self, x: FloatArray) -> Tuple[FloatArray, FloatArray]:
        omega, price = x[: self.J], x[self.J :]
        return (
            omega**self.omega_in_omega * price**self.price_in_omega,
            omega**self.omega_in_price * price**self.price_in_price,
        )

    def evaluate(self, x: FloatArray) -> FloatArray:
        outward, inward = self.term_bases(x)
        return np.concatenate([self.outward @ outward, self.inward @ inward])

    def _assemble(self, outward_weights: FloatArray, inward_weights: FloatArray) -> FloatArray:
        return np.block(
            [
                [outward_weights * self.omega_in_omega[None, :], outward_weights * self.price_in_omega[None, :]],
                [inward_weights * self.omega_in_price[None, :], inward_weights * self.price_in_price[None, :]],
            ]
        )

    def elasticity(self, x: FloatArray) -> FloatArray:
        outward, inward = self.term_bases(x)
        outward_shares = self.outward * outward[None, :]
        inward_shares = self.inward * inward[None, :]
        outward_shares /= outward_shares.sum(axis=1, keepdims=True)
        inward_shares /= inward_shares.sum(axis=1, keepdims=True)
        return self._assemble(outward_shares, inward_shares)

    def sign_table(self) -> NDArray[np.int8]:
        return np.sign(self._assemble((self.outward > 0).astype(float), (self.inward > 0).astype(float))).astype(np.int8)

    def scaling_exponent(self) -> FloatArray:
        return np.concatenate([np.full(self.J, -(1 + self.theta) / self.theta), np.ones(self.J)])


def build_one_sector(params: OneSectorParams) -> PositiveSystem:
    """
    OMEGA_i = sum_j C A_i tau_ij^-theta (gamma_j/L_j)^(-theta gamma_j/(1+theta gamma_j))
                  OMEGA_j^(1/(1+theta gamma_j)) P_j^((1-gamma_j)/(1+theta gamma_j) - 1)
    P_i     = sum_j C A_j tau_ji^-theta (gamma_j/L_j)^(-theta gamma_j/(1+theta gamma_j))
                  OMEGA_j^(1/(1+theta gamma_j) - 1) P_j^((1-gamma_j)/(1+theta gamma_j))
    """
    terms = _OneSectorTerms(params)
    return PositiveSystem(
        labels=tuple(one_sector_labels(params)),
        evaluate=terms.evaluate,
        elasticity=terms.elasticity,
        name="one-sector",
        structure=ExponentStructure(sign_table=terms.sign_table(), scaling_exponent=terms.scaling_exponent()),
    )


class _MultiSectorLayout:
    """Array views and index arithmetic shared by the multi-sector and general systems."""

    def __init__(self, params: MultiSectorParams) -> None:
        self.J, self.S = params.J, params.S
        self.N = 2 * self.J * self.S + self.J
        self.theta = np.asarray(params.theta, dtype=float)
        self.Theta = params.Theta
        self.A = np.asarray(params.A, dtype=float)
        self.alpha = np.asarray(params.alpha, dtype=float)
        self.L = np.asarray(params.L, dtype=float)
        self.constant = np.array([gamma_constant(t, s) for t, s in zip(params.theta, params.sigma)])
        self.tau_power = _tau_power(np.asarray(params.tau, dtype=float), self.theta[:, None, None])
        # [s, i, j]: C_s A_is tau_ijs^-theta_s, and C_s A_js tau_jis^-theta_s
        self.outward = self.constant[:, None, None] * self.A.T[:, :, None] * self.tau_power
        self.inward = np.transpose(self.constant[:, None, None] * self.A.T[:, :, None] * self.tau_power, (0, 2, 1))
        self.wage_exponent = (self.Theta - self.theta) / (1 + self.Theta)
        sector, origin, destination = np.meshgrid(np.arange(self.S), np.arange(self.J), np.arange(self.J), indexing="ij")
        self.sector, self.origin, self.destination = sector, origin, destination

    def omega(self, i: NDArray[np.int_], s: NDArray[np.int_]) -> NDArray[np.int_]:
        return i * self.S + s

    def price(self, i: NDArray[np.int_], s: NDArray[np.int_]) -> NDArray[np.int_]:
        return self.J * self.S + i * self.S + s

    def wage(self, i: NDArray[np.int_]) -> NDArray[np.int_]:
        return 2 * self.J * self.S + i

    def split(self, x: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
        JS = self.J * self.S
        return x[:JS].reshape(self.J, self.S), x[JS : 2 * JS].reshape(self.J, self.S), x[2 * JS :]

    def scaling_exponent(self) -> FloatArray:
        omega = np.tile((1 + self.theta) / (1 + self.Theta), self.J)
        price = np.tile(-self.theta / (1 + self.Theta), self.J)
        return np.concatenate([omega, price, np.ones(self.J)])


class _MultiSectorTerms(_MultiSectorLayout):
    def __init__(self, params: MultiSectorParams) -> None:
        super().__init__(params)
        self.demand = self.outward * (self.alpha.T * self.L[None, :])[:, None, :]

    def bases(self, x: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray, FloatArray]:
        omega, price, W = self.split(x)
        outward = W[None, :] ** (1 / (1 + self.Theta)) / price.T
        inward = W[None, :] ** (-self.theta[:, None] / (1 + self.Theta))
        wage_terms = omega * W[:, None] ** self.wage_exponent[None, :] / self.L[:, None]
        return outward, inward, wage_terms, W

    def evaluate(self, x: FloatArray) -> FloatArray:
        outward, inward, wage_terms, _ = self.bases(x)
        F_omega = np.einsum("sij,sj->is", self.demand, outward)
        F_price = np.einsum("sij,sj->is", self.inward, inward)
        return np.concatenate([F_omega.ravel(), F_price.ravel(), wage_terms.sum(axis=1)])

    def _assemble(self, outward: FloatArray, inward: FloatArray, wage: FloatArray) -> FloatArray:
        D = np.zeros((self.N, self.N))
        s, i, j = self.sector, self.origin, self.destination
        rows = self.omega(i, s)
        np.add.at(D, (rows, self.price(j, s)), -outward)
        np.add.at(D, (rows, self.wage(j)), outward / (1 + self.Theta))
        np.add.at(D, (self.price(i, s), self.wage(j)), -(self.theta[:, None, None] / (1 + self.Theta)) * inward)
        country, sector = np.meshgrid(np.arange(self.J), np.arange(self.S), indexing="ij")
        D[self.wage(country), self.omega(country, sector)] = wage
        D[self.wage(np.arange(self.J)), self.wage(np.arange(self.J))] = wage @ self.wage_exponent
        return D

    def elasticity(self, x: FloatArray) -> FloatArray:
        outward, inward, wage_terms, _ = self.bases(x)
        outward_shares = self.demand * outward[:, None, :]
        outward_shares /= outward_shares.sum(axis=2, keepdims=True)
        inward_shares = self.inward * inward[:, None, :]
        inward_shares /= inward_shares.sum(axis=2, keepdims=True)
        return self._assemble(outward_shares, inward_shares, wage_terms / wage_terms.sum(axis=1, keepdims=True))

    def sign_table(self) -> NDArray[np.int8]:
        table = self._assemble((self.demand > 0).astype(float), (self.inward > 0).astype(float), np.ones((self.J, self.S)))
        return np.sign(table).astype(np.int8)


def build_multi_sector(params: MultiSectorParams) -> PositiveSystem:
    """
    OMEGA_is = sum_j C_s A_is tau_ijs^-theta_s alpha_js L_j P_js^-1 W_j^(1/(1+Theta))
    P_is     = sum_j C_s A_js tau_jis^-theta_s W_j^(-theta_s/(1+Theta))
    W_i      = sum_r OMEGA_ir W_i^((Theta - theta_r)/(1+Theta)) / L_i
    """
    terms = _MultiSectorTerms(params)
    return PositiveSystem(
        labels=tuple(multi_sector_labels(params)),
        evaluate=terms.evaluate,
        elasticity=terms.elasticity,
        name="multi-sector",
        structure=ExponentStructure(sign_table=terms.sign_table(), scaling_exponent=terms.scaling_exponent()),
    )


class _GeneralTerms(_MultiSectorLayout):
    def __init__(self, params: GeneralParams) -> None:
        super().__init__(params)
        self.labor_share = np.asarray(params.gamma_labor, dtype=float)
        self.input_share = np.asarray(params.gamma_io, dtype=float)  # [s, i, r]

    def prices(self, x: FloatArray) -> Dict[str, FloatArray]:
        """Wages, unit costs, revenues and expenditures implied by a state."""
        omega, price, W = self.split(x)
        w = W ** (1 / (1 + self.Theta))
        log_cost = self.labor_share * np.log(w)[:, None] - np.einsum(
            "sir,ir->is", self.input_share, np.log(price) / self.theta[None, :]
        )
        cost = np.exp(log_cost)
        revenue = omega * cost ** (-self.theta[None, :])
        expenditure = self.alpha * (w * self.L)[:, None] + np.einsum("ris,ir->is", self.input_share, revenue)
        return {"omega": omega, "price": price, "w": w, "cost": cost, "R": revenue, "E": expenditure}

    def evaluate(self, x: FloatArray) -> FloatArray:
        state = self.prices(x)
        F_omega = np.einsum("sij,sj->is", self.outward, (state["E"] / state["price"]).T)
        F_price = np.einsum("sij,sj->is", self.inward, (state["cost"] ** (-self.theta[None, :])).T)
        F_wage = np.sum(self.labor_share * state["R"], axis=1) * state["w"] ** self.Theta / self.L
        return np.concatenate([F_omega.ravel(), F_price.ravel(), F_wage])


def build_general(params: GeneralParams) -> PositiveSystem:
    """
    General framework with intermediates. Unit costs c_is = w_i^gamma_is prod_r P_ir^gamma_irs,
    revenues R_is = OMEGA_is c_is^-theta_s and expenditures E_is = alpha_is w_i L_i + sum_r gamma_isr R_ir:

    OMEGA_is = sum_j C_s A_is tau_ijs^-theta_s E_js / P_js
    P_is     = sum_j C_s A_js tau_jis^-theta_s c_js^-theta_s
    W_i      = sum_s (gamma_is / L_i) R_is w_i^Theta
    """
    terms = _GeneralTerms(params)
    return PositiveSystem(
        labels=tuple(multi_sector_labels(params)),
        evaluate=terms.evaluate,
        name="general",
        scaling_hint=terms.scaling_exponent(),
    )


def build_system(params: TradeParams) -> PositiveSystem:
    if isinstance(params, GeneralParams):
        return build_general(params)
    if isinstance(params, MultiSectorParams):
        return build_multi_sector(params)
    return build_one_sector(params)


def ensure_connected(params: TradeParams) -> None:
    """
    Raises ConnectivityError when the elasticity graph of the built system splits into strongly
    connected blocs; each bloc is reported as the countries it contains.
    """
    sys = build_system(params)
    if sys.structure is not None:
        pattern = np.abs(sys.structure.sign_table).astype(float)
    else:
        pattern = (np.abs(elasticity_at(sys, sys.ones()).entries) > 0).astype(float)
    blocs = strongly_connected_blocs(pattern)
    if len(blocs) == 1:
        return
    countries = _coordinate_countries(params)
    grouped = [list(dict.fromkeys(countries[k] for k in bloc)) for bloc in blocs]
    raise ConnectivityError(f"the trade network splits into {len(blocs)} blocs: {grouped}", blocs=grouped)


def _import_shares(A: FloatArray, cost: FloatArray, tau_power: FloatArray, theta: FloatArray) -> FloatArray:
    """[s, i, j] share of destination j's sector s spending on origin i"""
    numerator = (A * cost ** (-theta[None, :])).T[:, :, None] * tau_power
    return numerator / numerator.sum(axis=1, keepdims=True)


def _outcomes(
    params: TradeParams, w: FloatArray, R: FloatArray, E: FloatArray, P: FloatArray, pi: FloatArray
) -> Outcomes:
    alpha = np.ones((params.J, 1)) if isinstance(params, OneSectorParams) else np.asarray(params.alpha, dtype=float)
    welfare = w / np.prod(P**alpha, axis=1)
    sectors = ["s1"] if isinstance(params, OneSectorParams) else list(params.sectors)
    return Outcomes(
        countries=list(params.countries),
        sectors=sectors,
        w=w.tolist(),
        R=R.tolist(),
        E=E.tolist(),
        P=P.tolist(),
        pi=pi.tolist(),
        U=welfare.tolist(),
    )


def recover_outcomes(
    params: TradeParams,
    x_star: StateVector,
    sys: Optional[PositiveSystem] = None,
    tol: Optional[float] = None,
) -> Outcomes:
    """
    Wages, revenues, expenditures, price indices, import shares and welfare implied by an equilibrium.

    Raises:
        StaleStateError: x_star is not a fixed point of the model within tol.
    """
    sys = build_system(params) if sys is None else sys
    tol = solve_defaults["residual_check_tol"] if tol is None else tol
    residual = fixed_point_residual(sys, x_star)
    if residual > tol:
        raise StaleStateError(f"state is not an equilibrium: relative residual {residual:.3g} exceeds {tol:.3g}", residual)
    x = x_star.values

    if isinstance(params, OneSectorParams):
        terms = _OneSectorTerms(params)
        omega, resistance = x[: terms.J], x[terms.J :]
        gamma = np.asarray(params.gamma, dtype=float)
        R = terms.labor * omega**terms.omega_in_omega * resistance**terms.price_in_price
        w = gamma * R / np.asarray(params.L, dtype=float)
        P = resistance ** (-1 / params.theta)
        cost = w**gamma * P ** (1 - gamma)
        theta = np.array([params.theta])
        pi = _import_shares(np.asarray(params.A, dtype=float)[:, None], cost[:, None], terms.tau_power[None], theta)
        return _outcomes(params, w, R[:, None], R[:, None], P[:, None], pi)

    if isinstance(params, GeneralParams):
        general = _GeneralTerms(params)
        state = general.prices(x)
        pi = _import_shares(general.A, state["cost"], general.tau_power, general.theta)
        P = state["price"] ** (-1 / general.theta[None, :])
        return _outcomes(params, state["w"], state["R"], state["E"], P, pi)

    layout = _MultiSectorLayout(params)
    omega, resistance, W = layout.split(x)
    w = W ** (1 / (1 + layout.Theta))
    R = omega * w[:, None] ** (-layout.theta[None, :])
    E = layout.alpha * (w * layout.L)[:, None]
    P = resistance ** (-1 / layout.theta[None, :])
    cost = np.repeat(w[:, None], layout.S, axis=1)
    pi = _import_shares(layout.A, cost, layout.tau_power, layout.theta)
    return _outcomes(params, w, R, E, P, pi)


def outcome_arrays(outcomes: Outcomes) -> Dict[str, FloatArray]:
    return {name: np.asarray(getattr(outcomes, name), dtype=float) for name in OUTCOME_NAMES}


def solve_equilibrium(
    params: TradeParams, opts: Optional[SolveOptions] = None, rng: Optional[np.random.Generator] = None
) -> Tuple[SolveResult, Outcomes]:
    """
    Iterate the model from the all-ones state (or a log-uniform start drawn from rng), normalise along
    the closed-form scaling exponent and recover outcomes.

    Raises:
        ModelEvaluationError: the iteration left the positive orthant.
        BudgetExceededError: no convergence within opts.max_iter.
    """
    sys = build_system(params)
    start = None if rng is None else random_start(sys, rng)
    result = iterate(sys, start, sys.scaling_hint, opts)
    if result.status == "evaluation-failed":
        raise ModelEvaluationError(result.message)
    if result.status == "budget-exhausted":
        raise BudgetExceededError(result.message, iterations=result.iterations)
    return result, recover_outcomes(params, result.x_star, sys)


def apply_shock(params: TradeParams, shocks: Sequence[ParameterShock]) -> TradeParams:
    """Apply shocks in order and re-validate; unknown fields or indices raise ParameterError."""
    data = params.model_dump()
    for shock in shocks:
        if shock.field not in data or shock.field in ("countries", "sectors"):
            raise ParameterError(f"cannot shock unknown parameter {shock.field}", field=shock.field)
        values = np.array(data[shock.field], dtype=float)
        target = tuple(shock.index) if shock.index else ...
        try:
            if shock.op == "multiply":
                values[target] = values[target] * shock.value
            elif shock.op == "add":
                values[target] = values[target] + shock.value
            else:
                values[target] = shock.value
        except IndexError as e:
            raise ParameterError(f"index {shock.index} is out of range for {shock.field}", field=shock.field) from e
        data[shock.field] = values.tolist() if values.ndim else float(values)
    return parse_bundle(type(params), data)


def relative_change(base: ArrayLike, shocked: ArrayLike) -> FloatArray:
    """shocked / base - 1, zero where both vanish and inf where only the base does"""
    before = np.asarray(base, dtype=float)
    after = np.asarray(shocked, dtype=float)
    change = np.zeros_like(before)
    moved = before != 0
    change[moved] = after[moved] / before[moved] - 1
    change[~moved & (after != 0)] = np.inf
    return change


def counterfactual(
    base: TradeParams,
    shocks: Sequence[ParameterShock],
    opts: Optional[SolveOptions] = None,
    seed: Optional[int] = None,
) -> CounterfactualResult:
    """
    Solve the base and the shocked economy under the same options and numeraire. With a seed both
    solves start from log-uniform random states drawn from one generator.
    """
    opts = SolveOptions() if opts is None else opts
    shocked = apply_shock(base, shocks)
    ensure_connected(shocked)
    rng = None if seed is None else np.random.default_rng(seed)
    _, before = solve_equilibrium(base, opts, rng)
    _, after = solve_equilibrium(shocked, opts, rng)
    changes = {
        name: relative_change(getattr(before, name), getattr(after, name)).tolist() for name in OUTCOME_NAMES
    }
    return CounterfactualResult(base=before, shocked=after, relative_changes=changes, numeraire_rule=opts.numeraire_rule)


def exponent_bound_matrices(
    params: Union[OneSectorParams, MultiSectorParams], epsilon: float = DEFAULT_BOUND_EPSILON
) -> Tuple[List[FloatArray], FloatArray]:
    """
    Matrices of absolute exponents, one per country (one-sector, 2x2 over OMEGA and P) or per sector
    (multi-sector, 3x3 over OMEGA, P and W). Each has spectral radius one. The second element is
    their entrywise maximum plus epsilon, whose spectral radius exceeds one.
    """
    if isinstance(params, OneSectorParams):
        terms = _OneSectorTerms(params)
        blocks = [
            np.abs(
                np.array(
                    [
                        [terms.omega_in_omega[j], terms.price_in_omega[j]],
                        [terms.omega_in_price[j], terms.price_in_price[j]],
                    ]
                )
            )
            for j in range(params.J)
        ]
    else:
        Theta = params.Theta
        blocks = [
            np.array(
                [
                    [0.0, 1.0, 1 / (1 + Theta)],
                    [0.0, 0.0, theta / (1 + Theta)],
                    [1.0, 0.0, (Theta - theta) / (1 + Theta)],
                ]
            )
            for theta in params.theta
        ]
    return blocks, np.max(np.stack(blocks), axis=0) + epsilon
