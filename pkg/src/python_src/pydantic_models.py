import math
from typing import Annotated, Any, Dict, List, Literal, Optional, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .util.app_utilities import certify_defaults, solve_defaults
from .util.errors import ParameterError

ALPHA_SUM_TOL = 1e-12
SHARE_SUM_TOL = 1e-12

NumeraireKind = Literal["first-coordinate-one", "geometric-mean-one", "named-coordinate"]
Verdict = Literal["pass", "fail", "evidence-only", "absent"]
SolveStatus = Literal["converged", "budget-exhausted", "evaluation-failed"]
CertificationMode = Literal["exact", "sampled"]
ModelKind = Literal["one-sector", "multi-sector", "general", "custom"]


def _default_labels(prefix: str, count: int) -> List[str]:
    return [f"{prefix}{k + 1}" for k in range(count)]


def _check_trade_costs(tau: List[List[float]], field: str) -> None:
    size = len(tau)
    for i, row in enumerate(tau):
        if len(row) != size:
            raise ParameterError(f"{field}: row {i} has {len(row)} entries, expected {size}", field=field)
        for j, value in enumerate(row):
            if math.isnan(value) or value < 1:
                raise ParameterError(f"{field}[{i}][{j}] = {value} must be >= 1 or inf", field=field)
        if not math.isfinite(row[i]):
            raise ParameterError(f"{field}[{i}][{i}]: domestic trade cost must be finite", field=field)


def _check_positive(values: List[float], field: str) -> None:
    for i, value in enumerate(values):
        if not (math.isfinite(value) and value > 0):
            raise ParameterError(f"{field}[{i}] = {value} must be positive and finite", field=field)


def _check_elasticities(theta: float, sigma: float, field_suffix: str = "") -> None:
    if not (math.isfinite(theta) and theta > 0):
        raise ParameterError(f"theta{field_suffix} = {theta} must be positive", field="theta")
    if not sigma > 1:
        raise ParameterError(f"sigma{field_suffix} = {sigma} must exceed 1", field="sigma")
    if not theta > sigma - 1:
        raise ParameterError(
            f"theta{field_suffix} = {theta} must exceed sigma - 1 = {sigma - 1} for the price index to exist",
            field="theta",
        )


class NumeraireRule(BaseModel):
    """How the free scale of an up-to-scale unique equilibrium is pinned down"""

    model_config = ConfigDict(frozen=True)

    kind: NumeraireKind = "first-coordinate-one"
    label: Optional[str] = None  # only used by named-coordinate
    block: Optional[str] = None  # label prefix for geometric-mean-one; all coordinates when omitted

    @model_validator(mode="before")
    @classmethod
    def accept_plain_kind(cls, values: Any) -> Any:
        if isinstance(values, str):
            return {"kind": values}
        return values

    @model_validator(mode="after")
    def check_label(self) -> "NumeraireRule":
        if self.kind == "named-coordinate" and not self.label:
            raise ValueError("named-coordinate numeraire needs a label")
        return self


class SolveOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    tol: Annotated[float, Field(gt=0)] = solve_defaults["tol"]
    max_iter: Annotated[int, Field(ge=1)] = solve_defaults["max_iter"]
    numeraire_rule: NumeraireRule = NumeraireRule(kind=solve_defaults["numeraire_rule"])
    damping: Annotated[float, Field(gt=0, le=1)] = solve_defaults["damping"]


class OneSectorParams(BaseModel):
    """J countries, one sector, country-specific labor shares"""

    model_config = ConfigDict(frozen=True)

    countries: List[str] = []
    A: List[float]
    tau: List[List[float]]  # tau[i][j]: origin i, destination j
    gamma: List[float]
    L: List[float]
    theta: float
    sigma: float

    @model_validator(mode="before")
    @classmethod
    def fill_country_labels(cls, values: Any) -> Any:
        if isinstance(values, dict) and not values.get("countries") and values.get("A") is not None:
            values = dict(values)
            values["countries"] = _default_labels("c", len(values["A"]))
        return values

    @model_validator(mode="after")
    def check_invariants(self) -> "OneSectorParams":
        J = len(self.A)
        if J < 1:
            raise ParameterError("A: at least one country is required", field="A")
        for field in ("countries", "tau", "gamma", "L"):
            if len(getattr(self, field)) != J:
                raise ParameterError(f"{field}: expected {J} entries, got {len(getattr(self, field))}", field=field)
        _check_positive(self.A, "A")
        _check_positive(self.L, "L")
        _check_trade_costs(self.tau, "tau")
        for i, share in enumerate(self.gamma):
            if not 0 <= share <= 1:
                raise ParameterError(f"gamma[{i}] = {share} must lie in [0, 1]", field="gamma")
        _check_elasticities(self.theta, self.sigma)
        return self

    @property
    def J(self) -> int:
        return len(self.A)


class MultiSectorParams(BaseModel):
    """J countries, S sectors, labor as the only factor of production"""

    model_config = ConfigDict(frozen=True)

    countries: List[str] = []
    sectors: List[str] = []
    A: List[List[float]]  # A[i][s]
    tau: List[List[List[float]]]  # tau[s][i][j]: sector s, origin i, destination j
    alpha: List[List[float]]  # alpha[i][s], rows sum to one
    L: List[float]
    theta: List[float]
    sigma: List[float]

    @model_validator(mode="before")
    @classmethod
    def fill_labels(cls, values: Any) -> Any:
        if isinstance(values, dict) and values.get("A"):
            values = dict(values)
            if not values.get("countries"):
                values["countries"] = _default_labels("c", len(values["A"]))
            if not values.get("sectors"):
                values["sectors"] = _default_labels("s", len(values["A"][0]))
        return values

    @model_validator(mode="after")
    def check_invariants(self) -> "MultiSectorParams":
        J, S = len(self.A), len(self.theta)
        if J < 1 or S < 1:
            raise ParameterError("at least one country and one sector are required", field="A")
        if len(self.countries) != J or len(self.L) != J or len(self.alpha) != J:
            raise ParameterError(f"countries, L and alpha must have {J} rows", field="alpha")
        if len(self.sectors) != S or len(self.sigma) != S or len(self.tau) != S:
            raise ParameterError(f"sectors, sigma and tau must have {S} entries", field="tau")
        for i, row in enumerate(self.A):
            if len(row) != S:
                raise ParameterError(f"A: row {i} has {len(row)} entries, expected {S}", field="A")
            _check_positive(row, f"A[{i}]")
        _check_positive(self.L, "L")
        for s, matrix in enumerate(self.tau):
            if len(matrix) != J:
                raise ParameterError(f"tau[{s}]: expected {J} rows", field="tau")
            _check_trade_costs(matrix, f"tau[{s}]")
        for i, row in enumerate(self.alpha):
            if len(row) != S:
                raise ParameterError(f"alpha: row {i} has {len(row)} entries, expected {S}", field="alpha")
            if any(not 0 <= a <= 1 for a in row):
                raise ParameterError(f"alpha row for country {self.countries[i]}: shares must lie in [0, 1]", field="alpha")
            if abs(sum(row) - 1) > ALPHA_SUM_TOL:
                raise ParameterError(
                    f"alpha row for country {self.countries[i]} sums to {sum(row)}, expected 1", field="alpha"
                )
        for s in range(S):
            _check_elasticities(self.theta[s], self.sigma[s], f"[{s}]")
        return self

    @property
    def J(self) -> int:
        return len(self.A)

    @property
    def S(self) -> int:
        return len(self.theta)

    @property
    def Theta(self) -> float:
        return float(sum(self.theta))


class GeneralParams(MultiSectorParams):
    """Multi-sector economy with labor and sectoral intermediates combined Cobb-Douglas"""

    gamma_labor: List[List[float]]  # gamma_labor[i][s]
    gamma_io: List[List[List[float]]]  # gamma_io[s][i][r]: share of sector r inputs in sector s production

    @model_validator(mode="after")
    def check_cost_shares(self) -> "GeneralParams":
        J, S = self.J, self.S
        if len(self.gamma_labor) != J or any(len(row) != S for row in self.gamma_labor):
            raise ParameterError(f"gamma_labor must be {J}x{S}", field="gamma_labor")
        if len(self.gamma_io) != S or any(len(m) != J or any(len(row) != S for row in m) for m in self.gamma_io):
            raise ParameterError(f"gamma_io must be {S} matrices of shape {J}x{S}", field="gamma_io")
        for i in range(J):
            for s in range(S):
                shares = [self.gamma_labor[i][s], *self.gamma_io[s][i]]
                if any(not 0 <= g <= 1 for g in shares):
                    raise ParameterError(
                        f"cost shares of country {self.countries[i]}, sector {self.sectors[s]} must lie in [0, 1]",
                        field="gamma_io",
                    )
                if abs(sum(shares) - 1) > SHARE_SUM_TOL:
                    raise ParameterError(
                        f"cost shares of country {self.countries[i]}, sector {self.sectors[s]} sum to {sum(shares)}",
                        field="gamma_labor",
                    )
            if not any(share > 0 for share in self.gamma_labor[i]):
                raise ParameterError(f"country {self.countries[i]} employs no labor in any sector", field="gamma_labor")
        return self


TradeParams = Union[OneSectorParams, MultiSectorParams, GeneralParams]
B = TypeVar("B", bound=BaseModel)


def parse_bundle(model: Type[B], data: Dict[str, Any]) -> B:
    """
    Validate a parameter bundle, surfacing the first invariant violation as a ParameterError
    that names the offending field instead of a pydantic ValidationError
    """
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        original = first.get("ctx", {}).get("error")
        if isinstance(original, ParameterError):
            raise original from e
        field = ".".join(str(part) for part in first.get("loc", ())) or None
        raise ParameterError(f"{field}: {first.get('msg')}", field=field) from e


class ParameterShock(BaseModel):
    """One change to a parameter bundle; `index` addresses positions in the field's array"""

    model_config = ConfigDict(frozen=True)

    field: str
    op: Literal["multiply", "set", "add"] = "multiply"
    value: float
    index: Optional[List[int]] = None


class Outcomes(BaseModel):
    """Equilibrium outcomes; matrices are [country][sector], import shares [sector][origin][destination]"""

    countries: List[str]
    sectors: List[str]
    w: List[float]
    R: List[List[float]]
    E: List[List[float]]
    P: List[List[float]]
    pi: List[List[List[float]]]
    U: List[float]


class CounterfactualResult(BaseModel):
    base: Outcomes
    shocked: Outcomes
    relative_changes: Dict[str, Any]
    numeraire_rule: NumeraireRule


class CheckResult(BaseModel):
    verdict: Verdict
    detail: str = ""
    failing_sample: Optional[int] = None
    witness: List[str] = []


class SignPartition(BaseModel):
    zeta_plus: List[str]
    zeta_minus: List[str]

    @model_validator(mode="after")
    def check_disjoint(self) -> "SignPartition":
        if set(self.zeta_plus) & set(self.zeta_minus):
            raise ValueError("zeta_plus and zeta_minus must be disjoint")
        return self


class ScalingCertificate(BaseModel):
    labels: List[str]
    u: List[float]  # normalised so that max |u_j| = 1
    residual_fixed_eq: float
    residual_direct: float
    passed: bool
    detail: str = ""

    @field_validator("u")
    @classmethod
    def check_nonzero(cls, u: List[float]) -> List[float]:
        if not any(value != 0 for value in u):
            raise ValueError("scaling exponent must be non-zero")
        return u


class SampleSpectralEvidence(BaseModel):
    sample: int
    rho: float
    rho_lower: float
    rho_upper: float
    primitive: bool
    eigvec_residual: Optional[float] = None
    similarity_residual: Optional[float] = None
    unit_eigenvalue_unique: Optional[bool] = None
    spectral_gap: Optional[float] = None


class CertificationReport(BaseModel):
    system_name: str
    dimension: int
    labels: List[str]
    mode: CertificationMode
    banner: str
    seed: int
    samples: List[List[float]]
    differentiation: str
    connectedness: CheckResult
    self_interaction: CheckResult
    scaling: CheckResult
    monotonicity: CheckResult
    scaling_certificate: Optional[ScalingCertificate] = None
    sign_partition: Optional[SignPartition] = None
    spectral: List[SampleSpectralEvidence] = []
    main_theorem_applicable: bool = False
    convergence_guaranteed: bool = False
    regime_flags: List[str] = []
    errors: Dict[str, str] = {}

    @property
    def all_passed(self) -> bool:
        return all(
            check.verdict == "pass"
            for check in (self.connectedness, self.self_interaction, self.scaling, self.monotonicity)
        )


class ModelSection(BaseModel):
    kind: ModelKind
    theta: Optional[Union[float, List[float]]] = None
    sigma: Optional[Union[float, List[float]]] = None
    files: Dict[str, str] = {}
    factory: Optional[str] = None  # "package.module:function" returning a PositiveSystem

    @model_validator(mode="after")
    def check_kind_fields(self) -> "ModelSection":
        if self.kind == "custom":
            if not self.factory:
                raise ValueError("custom models need a factory")
            return self
        if self.theta is None or self.sigma is None:
            raise ValueError(f"{self.kind} models need theta and sigma")
        scalar = self.kind == "one-sector"
        for name in ("theta", "sigma"):
            if isinstance(getattr(self, name), list) == scalar:
                expected = "a scalar" if scalar else "a list with one entry per sector"
                raise ValueError(f"{name} must be {expected} for {self.kind} models")
        return self


class SolveSection(BaseModel):
    tol: Annotated[float, Field(gt=0)] = solve_defaults["tol"]
    max_iter: Annotated[int, Field(ge=1)] = solve_defaults["max_iter"]
    numeraire: NumeraireRule = NumeraireRule(kind=solve_defaults["numeraire_rule"])
    damping: Annotated[float, Field(gt=0, le=1)] = solve_defaults["damping"]

    def options(self) -> SolveOptions:
        return SolveOptions(tol=self.tol, max_iter=self.max_iter, numeraire_rule=self.numeraire, damping=self.damping)


class CertifySection(BaseModel):
    samples: Annotated[int, Field(ge=1)] = certify_defaults["samples"]
    seed: int = certify_defaults["seed"]


class RunConfig(BaseModel):
    model: ModelSection
    solve: SolveSection = SolveSection()
    certify: CertifySection = CertifySection()
    output: str = "out"
    base_dir: str = "."  # directory the configuration was read from; relative paths resolve against it
