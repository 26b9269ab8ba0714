"""
Plain-text report formats. Every file is a list of ``key: value`` lines in a fixed order so runs can
be diffed; numbers are written with enough digits to round-trip.
"""

from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..pydantic_models import CertificationReport, CounterfactualResult, Outcomes
from .app_utilities import file_defaults
from .solve import SolveResult
from .trade import OUTCOME_NAMES

NOT_AVAILABLE = "n/a"
CHECKS = ("connectedness", "self_interaction", "scaling", "monotonicity")


def _number(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and np.isnan(value)):
        return NOT_AVAILABLE
    return format(float(value), file_defaults["number_format"])


def _labels(values: Sequence[str]) -> str:
    return ",".join(values)


def _spectral_lines(report: CertificationReport) -> List[Tuple[str, str]]:
    evidence = report.spectral

    def collect(name: str) -> List[float]:
        return [getattr(e, name) for e in evidence if getattr(e, name) is not None]

    deviations = [abs(e.rho - 1) for e in evidence]
    residuals = collect("eigvec_residual")
    similarity = collect("similarity_residual")
    gaps = collect("spectral_gap")
    unique = collect("unit_eigenvalue_unique")
    return [
        ("spectral.rho.max_deviation", _number(max(deviations)) if deviations else NOT_AVAILABLE),
        ("spectral.eigvec_residual.max", _number(max(residuals)) if residuals else NOT_AVAILABLE),
        ("spectral.similarity.max_residual", _number(max(similarity)) if similarity else NOT_AVAILABLE),
        ("spectral.gap.min", _number(min(gaps)) if gaps else NOT_AVAILABLE),
        ("spectral.unique_unit_eigenvalue", str(all(unique)).lower() if unique else NOT_AVAILABLE),
    ]


def report_items(report: CertificationReport) -> List[Tuple[str, str]]:
    items = [
        ("mode", report.mode),
        ("banner", report.banner),
        ("system.name", report.system_name),
        ("system.dimension", str(report.dimension)),
        ("samples.count", str(len(report.samples))),
        ("samples.seed", str(report.seed)),
        ("connectedness.verdict", report.connectedness.verdict),
        ("connectedness.detail", report.connectedness.detail),
        ("self_interaction.verdict", report.self_interaction.verdict),
        ("self_interaction.detail", report.self_interaction.detail),
        ("scaling.verdict", report.scaling.verdict),
    ]
    certificate = report.scaling_certificate
    if certificate is not None:
        items += [(f"scaling.u.{label}", _number(value)) for label, value in zip(certificate.labels, certificate.u)]
        items += [
            ("scaling.residual_fixed_eq", _number(certificate.residual_fixed_eq)),
            ("scaling.residual_direct", _number(certificate.residual_direct)),
        ]
    partition = report.sign_partition
    items += [
        ("monotonicity.verdict", report.monotonicity.verdict),
        ("monotonicity.zeta_plus", _labels(partition.zeta_plus) if partition else NOT_AVAILABLE),
        ("monotonicity.zeta_minus", _labels(partition.zeta_minus) if partition else NOT_AVAILABLE),
        ("monotonicity.witness", _labels(report.monotonicity.witness) if report.monotonicity.witness else NOT_AVAILABLE),
    ]
    items += _spectral_lines(report)
    items += [
        ("theorem.applicable", str(report.main_theorem_applicable).lower()),
        ("theorem.convergence_guaranteed", str(report.convergence_guaranteed).lower()),
        ("regime.flags", _labels(report.regime_flags) if report.regime_flags else NOT_AVAILABLE),
    ]
    items += [(f"errors.{check}", message) for check, message in sorted(report.errors.items())]
    return items


def _line(key: str, value: str) -> str:
    return f"{key}: {' '.join(str(value).split())}"


def report_to_text(report: CertificationReport) -> str:
    return "\n".join(_line(key, value) for key, value in report_items(report)) + "\n"


def parse_report_text(text: str) -> Dict[str, str]:
    """Inverse of report_to_text up to whitespace; blank lines are skipped and key order is kept."""
    parsed: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, separator, value = line.partition(":")
        if not separator or not key.strip():
            raise ValueError(f"line {number} is not a 'key: value' pair")
        parsed[key.strip()] = value.strip()
    return parsed


def format_report(parsed: Dict[str, str]) -> str:
    """Human-readable rendering of a parsed report, grouped by check."""
    groups: Dict[str, List[Tuple[str, str]]] = {}
    for key, value in parsed.items():
        group, _, rest = key.partition(".")
        groups.setdefault(group, []).append((rest or group, value))
    lines = []
    for group, entries in groups.items():
        verdict = dict(entries).get("verdict")
        lines.append(f"[{group}]" + (f" {verdict.upper()}" if verdict else ""))
        lines.extend(f"  {name}: {value}" for name, value in entries if name != "verdict")
    return "\n".join(lines) + "\n"


def _outcome_entries(prefix: str, outcomes: Outcomes, values: Dict[str, np.ndarray]) -> Iterator[Tuple[str, float]]:
    countries, sectors = outcomes.countries, outcomes.sectors
    for name in OUTCOME_NAMES:
        array = np.asarray(values[name], dtype=float)
        if name in ("w", "U"):
            for i, c in enumerate(countries):
                yield f"{prefix}{name}.{c}", array[i]
        elif name == "pi":
            for s, sector in enumerate(sectors):
                for i, origin in enumerate(countries):
                    for j, destination in enumerate(countries):
                        yield f"{prefix}{name}.{sector}.{origin}.{destination}", array[s, i, j]
        else:
            for i, c in enumerate(countries):
                for s, sector in enumerate(sectors):
                    yield f"{prefix}{name}.{c}.{sector}", array[i, s]


def equilibrium_to_text(result: SolveResult, outcomes: Optional[Outcomes] = None) -> str:
    lines = [f"{label}: {_number(value)}" for label, value in zip(result.x_star.labels, result.x_star.values)]
    lines += [
        f"status: {result.status}",
        f"iterations: {result.iterations}",
        f"residual: {_number(result.residual)}",
        f"normalization_scalar: {_number(result.normalization_scalar)}",
    ]
    if outcomes is not None:
        values = {name: np.asarray(getattr(outcomes, name), dtype=float) for name in OUTCOME_NAMES}
        lines += [f"{key}: {_number(value)}" for key, value in _outcome_entries("outcomes.", outcomes, values)]
    return "\n".join(lines) + "\n"


def delta_to_text(result: CounterfactualResult) -> str:
    values = {name: np.asarray(result.relative_changes[name], dtype=float) for name in OUTCOME_NAMES}
    lines = [f"numeraire: {result.numeraire_rule.kind}"]
    lines += [f"{key}: {_number(value)}" for key, value in _outcome_entries("", result.base, values)]
    return "\n".join(lines) + "\n"
