"""
Certification of the conditions under which a positive system has an up-to-scale unique fixed point
and the log-space iteration converges to it: strong connectedness, self-interaction, an exact scaling
exponent and monotonicity with respect to the sign partition the exponent induces.

Checks run on the elasticity matrix DG at sampled points. Systems carrying an ExponentStructure are
additionally decided from their closed-form sign table ("exact" mode); everything else is reported
as sampled evidence.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import linear_sum_assignment

from ..pydantic_models import (
    CertificationReport,
    CheckResult,
    SampleSpectralEvidence,
    ScalingCertificate,
    SignPartition,
)
from .app_utilities import certify_defaults, pf_core_defaults
from .errors import (
    BudgetExceededError,
    EigenspaceAmbiguityError,
    FixedPointToolkitError,
    InvalidInputError,
)
from .logging_utilities import log_certification_decorator
from .pf_core import is_irreducible, is_primitive, spectral_radius, strongly_connected_blocs, unreachable_from
from .system import ElasticityMatrix, PositiveSystem, StateVector, elasticity_at, evaluate_checked, scale_state

FloatArray = NDArray[np.float64]

PROOF_BANNER = "proof: conditions follow from the exponent sign table and the closed-form scaling exponent"
EVIDENCE_BANNER = "evidence-only: conditions were checked at sampled points and are not proven"


def draw_samples(sys: PositiveSystem, count: int, seed: int, log_domain: Optional[float] = None) -> List[StateVector]:
    """Points drawn log-uniformly from [exp(-d), exp(d)]^N with a seeded generator."""
    d = certify_defaults["log_domain"] if log_domain is None else log_domain
    rng = np.random.default_rng(seed)
    return [StateVector.from_log(rng.uniform(-d, d, sys.dimension), sys.labels) for _ in range(count)]


def _elasticities(
    sys: PositiveSystem,
    samples: Sequence[StateVector],
    elasticities: Optional[Sequence[ElasticityMatrix]],
) -> Sequence[ElasticityMatrix]:
    if elasticities is not None:
        return elasticities
    return [elasticity_at(sys, x) for x in samples]


def _pattern(entries: FloatArray) -> FloatArray:
    modulus = np.abs(entries)
    return np.where(modulus > certify_defaults["tol_sign"], modulus, 0.0)


def normalize_exponent(u: ArrayLike) -> FloatArray:
    """Scale u so that max |u_j| = 1 with its largest-magnitude entry positive."""
    direction = np.asarray(u, dtype=float)
    pivot = int(np.argmax(np.abs(direction)))
    if direction[pivot] == 0:
        raise InvalidInputError("scaling exponent must be non-zero")
    return direction / direction[pivot]


def check_connectedness(
    sys: PositiveSystem,
    samples: Sequence[StateVector],
    elasticities: Optional[Sequence[ElasticityMatrix]] = None,
) -> CheckResult:
    for index, matrix in enumerate(_elasticities(sys, samples, elasticities)):
        pattern = _pattern(matrix.entries)
        if is_irreducible(pattern):
            continue
        blocs = [[sys.labels[k] for k in bloc] for bloc in strongly_connected_blocs(pattern)]
        missing = [sys.labels[k] for k in unreachable_from(pattern, 0)]
        detail = f"sample {index}: |DG| splits into blocs {blocs}"
        if missing:
            detail += f"; not reachable from {sys.labels[0]}: {missing}"
        return CheckResult(verdict="fail", detail=detail, failing_sample=index, witness=missing or blocs[0])
    return CheckResult(verdict="pass", detail="|DG| irreducible at every sample")


def check_self_interaction(
    sys: PositiveSystem,
    samples: Sequence[StateVector],
    elasticities: Optional[Sequence[ElasticityMatrix]] = None,
) -> CheckResult:
    threshold = certify_defaults["diagonal_rel_threshold"]
    for index, matrix in enumerate(_elasticities(sys, samples, elasticities)):
        modulus = np.abs(matrix.entries)
        row_scale = modulus.max(axis=1)
        diagonal = np.diag(modulus)
        if not np.any((row_scale > 0) & (diagonal > threshold * row_scale)):
            return CheckResult(verdict="fail", detail=f"sample {index}: DG has no non-zero diagonal entry", failing_sample=index)
    return CheckResult(verdict="pass", detail="non-zero diagonal elasticity at every sample")


def direct_scaling_residual(sys: PositiveSystem, u: ArrayLike, samples: Sequence[StateVector]) -> float:
    """max over samples and test constants c of |F(c^u x) / (c^u F(x)) - 1|"""
    direction = np.asarray(u, dtype=float)
    worst = 0.0
    for x in samples:
        base = evaluate_checked(sys, x)
        for c in certify_defaults["scaling_test_constants"]:
            scaled = evaluate_checked(sys, scale_state(x, direction, c))
            worst = max(worst, float(np.max(np.abs(scaled / (base * c**direction) - 1))))
    return worst


def _certificate(
    sys: PositiveSystem,
    u: FloatArray,
    samples: Sequence[StateVector],
    matrices: Sequence[ElasticityMatrix],
) -> ScalingCertificate:
    tol = certify_defaults["scaling_tol"]
    residual_fixed_eq = max(float(np.max(np.abs(m.entries @ u - u))) for m in matrices)
    residual_direct = direct_scaling_residual(sys, u, samples)
    zero_entries = [sys.labels[k] for k in np.flatnonzero(np.abs(u) <= certify_defaults["tol_sign"])]
    passed = residual_fixed_eq <= tol and residual_direct <= tol and not zero_entries
    detail = f"zero exponents at {zero_entries}" if zero_entries else ""
    return ScalingCertificate(
        labels=list(sys.labels),
        u=u.tolist(),
        residual_fixed_eq=residual_fixed_eq,
        residual_direct=residual_direct,
        passed=passed,
        detail=detail,
    )


def find_scaling_exponent(
    sys: PositiveSystem,
    samples: Sequence[StateVector],
    elasticities: Optional[Sequence[ElasticityMatrix]] = None,
) -> Optional[ScalingCertificate]:
    """
    Null vector of I - DG at the first sample, verified at every sample both through DG u = u and
    through F(c^u x) = c^u F(x). Returns None when DG has no eigenvalue near 1.

    Raises:
        EigenspaceAmbiguityError: the eigenvalue 1 has a null space of dimension two or more.
    """
    matrices = _elasticities(sys, samples, elasticities)
    first = matrices[0].entries
    near_one = np.abs(np.linalg.eigvals(first) - 1) <= certify_defaults["eigen_one_window"]
    _, singular, right = np.linalg.svd(np.eye(sys.dimension) - first)
    nullity = int(np.sum(singular <= certify_defaults["nullspace_threshold"]))
    if nullity >= 2:
        raise EigenspaceAmbiguityError(f"eigenvalue 1 of DG has a {nullity}-dimensional null space", dimension=nullity)
    if nullity == 0 and not np.any(near_one):
        return None
    return _certificate(sys, normalize_exponent(right[-1]), samples, matrices)


def sign_partition(sys: PositiveSystem, u: ArrayLike) -> SignPartition:
    direction = np.asarray(u, dtype=float)
    return SignPartition(
        zeta_plus=[label for label, value in zip(sys.labels, direction) if value > 0],
        zeta_minus=[label for label, value in zip(sys.labels, direction) if value < 0],
    )


def _block_signs(sys: PositiveSystem, u: ArrayLike) -> FloatArray:
    direction = np.asarray(u, dtype=float)
    if direction.shape != (sys.dimension,):
        raise InvalidInputError(f"u has shape {direction.shape}, expected ({sys.dimension},)")
    zero = np.flatnonzero(np.abs(direction) <= certify_defaults["tol_sign"])
    if zero.size:
        raise InvalidInputError(f"u has a zero entry at {sys.labels[int(zero[0])]}; monotonicity is undefined")
    signs = np.sign(direction)
    return np.outer(signs, signs)


def check_monotonicity(
    sys: PositiveSystem,
    u: ArrayLike,
    samples: Sequence[StateVector],
    elasticities: Optional[Sequence[ElasticityMatrix]] = None,
) -> Tuple[CheckResult, SignPartition]:
    """
    DG entries within a block of the sign partition must be >= 0 and across blocks <= 0 at every sample.
    The first violation is reported as the witness (row label, column label).
    """
    blocks = _block_signs(sys, u)
    tol = certify_defaults["tol_sign"]
    partition = sign_partition(sys, u)
    for index, matrix in enumerate(_elasticities(sys, samples, elasticities)):
        violations = np.argwhere(((blocks > 0) & (matrix.entries < -tol)) | ((blocks < 0) & (matrix.entries > tol)))
        if violations.size:
            j, k = (int(i) for i in violations[0])
            detail = f"sample {index}: dlogF[{sys.labels[j]}]/dlog x[{sys.labels[k]}] = {matrix.entries[j, k]:.6g} has the wrong sign"
            return CheckResult(verdict="fail", detail=detail, failing_sample=index, witness=[sys.labels[j], sys.labels[k]]), partition
    return CheckResult(verdict="pass", detail="DG sign pattern respects the partition at every sample"), partition


def _radius(pattern: FloatArray) -> Tuple[float, float, float]:
    size = pattern.shape[0]
    if not is_irreducible(pattern):
        rho = float(np.max(np.abs(np.linalg.eigvals(pattern))))
        return rho, rho, rho
    try:
        result = spectral_radius(
            pattern,
            tol=certify_defaults["spectral_tol"] * 1e-2,
            max_iter=max(1000, pf_core_defaults["iteration_factor"] * size),
        )
        return result.rho, result.lower_bound, result.upper_bound
    except BudgetExceededError as e:
        lower, upper = e.bounds or (np.nan, np.nan)
        return 0.5 * (lower + upper), lower, upper


def match_spectra(first: ArrayLike, second: ArrayLike) -> float:
    """Largest distance between two eigenvalue multisets under the optimal one-to-one matching."""
    a = np.asarray(first, dtype=complex)
    b = np.asarray(second, dtype=complex)
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def check_spectral(
    sys: PositiveSystem,
    u: Optional[ArrayLike],
    samples: Sequence[StateVector],
    elasticities: Optional[Sequence[ElasticityMatrix]] = None,
    self_interaction: bool = True,
) -> List[SampleSpectralEvidence]:
    """
    Spectral evidence at every sample: rho(|DG|) with its bounds, the residual of |DG||u| = |u|, and,
    when self-interaction holds, the spectral match between DG and |DG| and the gap below the unit
    eigenvalue of DG. Out-of-tolerance values are recorded, never raised.
    """
    modulus_u = None if u is None else np.abs(normalize_exponent(u))
    evidence = []
    for index, matrix in enumerate(_elasticities(sys, samples, elasticities)):
        pattern = _pattern(matrix.entries)
        rho, lower, upper = _radius(pattern)
        record = SampleSpectralEvidence(
            sample=index,
            rho=rho,
            rho_lower=lower,
            rho_upper=upper,
            primitive=is_primitive(pattern),
        )
        if modulus_u is not None:
            record.eigvec_residual = float(np.max(np.abs(pattern @ modulus_u - modulus_u)))
        if self_interaction:
            signed = np.linalg.eigvals(matrix.entries)
            record.similarity_residual = match_spectra(signed, np.linalg.eigvals(pattern))
            if signed.size > 1:
                nearest = int(np.argmin(np.abs(signed - 1)))
                others = np.delete(signed, nearest)
                gap = 1 - float(np.max(np.abs(others)))
                record.spectral_gap = gap
                record.unit_eigenvalue_unique = bool(
                    np.min(np.abs(others - 1)) > certify_defaults["similarity_tol"] and gap > certify_defaults["similarity_tol"]
                )
            else:
                record.spectral_gap = 1.0
                record.unit_eigenvalue_unique = True
        evidence.append(record)
    return evidence


def _exact_checks(sys: PositiveSystem, matrices: Sequence[ElasticityMatrix]) -> Optional[Dict[str, CheckResult]]:
    """
    Verdicts read off the closed-form sign table. Returns None (fall back to sampled mode) when the
    numeric elasticities disagree with the table at some sample.
    """
    structure = sys.structure
    if structure is None:
        return None
    table = np.asarray(structure.sign_table)
    for matrix in matrices:
        observed = np.where(np.abs(matrix.entries) > certify_defaults["tol_sign"], np.sign(matrix.entries), 0)
        if np.any((observed != 0) & (observed != table)):
            return None

    modulus = np.abs(table).astype(float)
    if is_irreducible(modulus):
        connectedness = CheckResult(verdict="pass", detail="sign table is irreducible")
    else:
        blocs = [[sys.labels[k] for k in bloc] for bloc in strongly_connected_blocs(modulus)]
        connectedness = CheckResult(verdict="fail", detail=f"sign table splits into blocs {blocs}", witness=blocs[0])
    if np.any(np.diag(table) != 0):
        self_interaction = CheckResult(verdict="pass", detail="sign table has a non-zero diagonal entry")
    else:
        self_interaction = CheckResult(verdict="fail", detail="sign table has an all-zero diagonal")

    blocks = _block_signs(sys, structure.scaling_exponent)
    wrong = np.argwhere(((blocks > 0) & (table < 0)) | ((blocks < 0) & (table > 0)))
    if wrong.size:
        j, k = (int(i) for i in wrong[0])
        monotonicity = CheckResult(
            verdict="fail",
            detail=f"sign table entry ({sys.labels[j]}, {sys.labels[k]}) contradicts the partition",
            witness=[sys.labels[j], sys.labels[k]],
        )
    else:
        monotonicity = CheckResult(verdict="pass", detail="sign table respects the partition induced by the exponent")
    return {"connectedness": connectedness, "self_interaction": self_interaction, "monotonicity": monotonicity}


def _guard(errors: Dict[str, str], key: str, default: CheckResult, check, *args, **kwargs):  # type: ignore[no-untyped-def]
    try:
        return check(*args, **kwargs)
    except FixedPointToolkitError as e:
        errors[key] = str(e)
        return default


def regime_flags(report: CertificationReport) -> List[str]:
    flags = []
    if report.scaling.verdict == "absent" and any(abs(e.rho - 1) <= certify_defaults["spectral_tol"] for e in report.spectral):
        flags.append("scaling-absent-rho-one")
    if report.main_theorem_applicable and report.self_interaction.verdict != "pass":
        flags.append("unique-but-iteration-may-cycle")
    if report.monotonicity.verdict == "fail" and report.scaling.verdict == "pass":
        flags.append("mixed-sign-elasticities")
    return flags


def _failed_report(
    sys: PositiveSystem, seed: int, samples: Sequence[StateVector], errors: Dict[str, str]
) -> CertificationReport:
    detail = f"elasticity could not be evaluated: {errors['elasticity']}"
    failed = CheckResult(verdict="fail", detail=detail)
    return CertificationReport(
        system_name=sys.name,
        dimension=sys.dimension,
        labels=list(sys.labels),
        mode="sampled",
        banner=EVIDENCE_BANNER,
        seed=seed,
        samples=[x.values.tolist() for x in samples],
        differentiation="none",
        connectedness=failed,
        self_interaction=failed,
        scaling=failed,
        monotonicity=failed,
        errors=errors,
    )


@log_certification_decorator
def certify(
    sys: PositiveSystem,
    sample_count: Optional[int] = None,
    seed: Optional[int] = None,
    threads: int = 1,
) -> CertificationReport:
    """
    Run every check on `sample_count` seeded samples and assemble the report. Identical inputs
    give identical reports.
    """
    sample_count = certify_defaults["samples"] if sample_count is None else sample_count
    seed = certify_defaults["seed"] if seed is None else seed
    if sample_count < 1:
        raise InvalidInputError("at least one sample is required")
    samples = draw_samples(sys, sample_count, seed)

    errors: Dict[str, str] = {}
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                matrices = list(pool.map(lambda x: elasticity_at(sys, x), samples))
        else:
            matrices = [elasticity_at(sys, x) for x in samples]
    except FixedPointToolkitError as e:
        errors["elasticity"] = str(e)
        return _failed_report(sys, seed, samples, errors)

    failed = CheckResult(verdict="fail", detail="check raised an error")
    connectedness = _guard(errors, "connectedness", failed, check_connectedness, sys, samples, matrices)
    self_interaction = _guard(errors, "self_interaction", failed, check_self_interaction, sys, samples, matrices)

    certificate: Optional[ScalingCertificate] = None
    try:
        if sys.structure is not None:
            certificate = _certificate(sys, normalize_exponent(sys.structure.scaling_exponent), samples, matrices)
        else:
            certificate = find_scaling_exponent(sys, samples, matrices)
        if certificate is None:
            scaling = CheckResult(verdict="absent", detail="DG has no eigenvalue within the window around 1")
        elif certificate.passed:
            scaling = CheckResult(verdict="pass", detail="DG u = u and F(c^u x) = c^u F(x) verified at every sample")
        else:
            scaling = CheckResult(
                verdict="fail",
                detail=certificate.detail
                or f"scaling residuals {certificate.residual_fixed_eq:.3g}, {certificate.residual_direct:.3g} exceed tolerance",
            )
    except FixedPointToolkitError as e:
        errors["scaling"] = str(e)
        scaling = CheckResult(verdict="fail", detail=str(e))

    partition: Optional[SignPartition] = None
    if certificate is not None:
        try:
            monotonicity, partition = check_monotonicity(sys, certificate.u, samples, matrices)
        except FixedPointToolkitError as e:
            errors["monotonicity"] = str(e)
            monotonicity = CheckResult(verdict="fail", detail=str(e))
    else:
        monotonicity = CheckResult(verdict="fail", detail="no scaling exponent to induce a sign partition")

    mode = "sampled"
    exact = _guard(errors, "exact", None, _exact_checks, sys, matrices)
    if exact is not None:
        mode = "exact"
        connectedness = exact["connectedness"]
        self_interaction = exact["self_interaction"]
        monotonicity = exact["monotonicity"]
    elif sys.structure is not None:
        errors.setdefault("exact", "elasticities disagree with the sign table; falling back to sampled evidence")

    spectral = _guard(
        errors,
        "spectral",
        [],
        check_spectral,
        sys,
        None if certificate is None else certificate.u,
        samples,
        matrices,
        self_interaction.verdict == "pass",
    )

    applicable = connectedness.verdict == "pass" and scaling.verdict == "pass" and monotonicity.verdict == "pass"
    report = CertificationReport(
        system_name=sys.name,
        dimension=sys.dimension,
        labels=list(sys.labels),
        mode=mode,
        banner=PROOF_BANNER if mode == "exact" else EVIDENCE_BANNER,
        seed=seed,
        samples=[x.values.tolist() for x in samples],
        differentiation=matrices[0].method,
        connectedness=connectedness,
        self_interaction=self_interaction,
        scaling=scaling,
        monotonicity=monotonicity,
        scaling_certificate=certificate,
        sign_partition=partition,
        spectral=spectral,
        main_theorem_applicable=applicable,
        convergence_guaranteed=applicable and self_interaction.verdict == "pass",
        errors=errors,
    )
    report.regime_flags = regime_flags(report)
    return report
