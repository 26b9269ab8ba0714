"""
Reading and writing model parameters.

A run is described by a YAML configuration (see RunConfig) whose model.files section points at
comma-separated tables, each with one header row of labels:

vectors (A, gamma, L for one country each)
    header ``c1,c2,...`` and a single data row
J x J matrices (tau)
    header ``origin,c1,c2,...`` and one row per origin country
J x S matrices (A, alpha, gamma_labor in sectoral models)
    header ``country,s1,s2,...`` and one row per country

Per-sector matrices (tau and gamma_io in sectoral models) are stored one file per sector with
``.s<k>`` inserted before the extension. Infinite trade costs are written as ``inf``.
"""

import os
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError

from ..pydantic_models import (
    GeneralParams,
    MultiSectorParams,
    OneSectorParams,
    ParameterShock,
    RunConfig,
    TradeParams,
    parse_bundle,
)
from .app_utilities import file_defaults
from .errors import ParameterError, ParseError
from .trade import ensure_connected

CONFIG_FILE = "config.yaml"


def format_number(value: float) -> str:
    if np.isinf(value) and value > 0:
        return str(file_defaults["infinity_token"])
    return format(float(value), file_defaults["number_format"])


def sector_path(path: str, k: int) -> str:
    """tau.csv -> tau.s1.csv for k = 1"""
    stem, extension = os.path.splitext(path)
    return stem + file_defaults["sector_suffix"].format(k=k) + extension


def _read_table(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror or e}", location=(path, None, None)) from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError(f"cannot parse {path}: {e}", location=(path, None, None)) from e


def _parse_cells(table: pd.DataFrame, columns: Sequence[str], path: str) -> np.ndarray:
    values = np.empty((len(table), len(columns)))
    for r in range(len(table)):
        for c, column in enumerate(columns):
            cell = str(table.iloc[r][column]).strip()
            try:
                values[r, c] = float(cell)
            except ValueError as e:
                # header is line 1
                raise ParseError(
                    f"{path}: line {r + 2}, column {column}: cannot parse {cell!r} as a number",
                    location=(path, r + 2, column),
                ) from e
    return values


def read_vector(path: str) -> Tuple[List[str], List[float]]:
    table = _read_table(path)
    if len(table) != 1:
        raise ParseError(f"{path}: expected one data row, found {len(table)}", location=(path, None, None))
    labels = [str(column).strip() for column in table.columns]
    return labels, _parse_cells(table, list(table.columns), path)[0].tolist()


def read_matrix(path: str, index_header: str) -> Tuple[List[str], List[str], List[List[float]]]:
    """Returns (row labels, column labels, values) of a table whose first column holds row labels."""
    table = _read_table(path)
    if len(table.columns) < 2 or str(table.columns[0]).strip() != index_header:
        raise ParseError(f"{path}: first header cell must be {index_header!r}", location=(path, 1, None))
    rows = [str(label).strip() for label in table.iloc[:, 0]]
    columns = list(table.columns[1:])
    return rows, [str(c).strip() for c in columns], _parse_cells(table, columns, path).tolist()


def _frame(header: Sequence[str], rows: Sequence[Sequence[str]]) -> pd.DataFrame:
    return pd.DataFrame([list(row) for row in rows], columns=list(header))


def write_vector(path: str, labels: Sequence[str], values: Sequence[float]) -> None:
    _frame(labels, [[format_number(v) for v in values]]).to_csv(path, index=False, lineterminator="\n")


def write_matrix(
    path: str, index_header: str, row_labels: Sequence[str], column_labels: Sequence[str], values: Sequence[Sequence[float]]
) -> None:
    rows = [[label, *(format_number(v) for v in row)] for label, row in zip(row_labels, values)]
    _frame([index_header, *column_labels], rows).to_csv(path, index=False, lineterminator="\n")


class _Reader:
    """Resolves model.files entries and checks that every table uses the same labels."""

    def __init__(self, config: RunConfig) -> None:
        self.files = config.model.files
        self.base_dir = config.base_dir
        self.countries: Optional[List[str]] = None
        self.sectors: Optional[List[str]] = None

    def path(self, key: str) -> str:
        if key not in self.files:
            raise ParameterError(f"model.files.{key} is required for {key}", field=key)
        return os.path.join(self.base_dir, self.files[key])

    def _agree(self, labels: List[str], attribute: str, path: str) -> None:
        known = getattr(self, attribute)
        if known is None:
            setattr(self, attribute, labels)
        elif labels != known:
            raise ParseError(f"{path}: labels {labels} do not match {known}", location=(path, 1, None))

    def vector(self, key: str) -> List[float]:
        path = self.path(key)
        labels, values = read_vector(path)
        self._agree(labels, "countries", path)
        return values

    def country_matrix(self, key: str, path: Optional[str] = None) -> List[List[float]]:
        path = path or self.path(key)
        rows, columns, values = read_matrix(path, "origin")
        self._agree(rows, "countries", path)
        self._agree(columns, "countries", path)
        return values

    def sector_matrix(self, key: str, path: Optional[str] = None) -> List[List[float]]:
        path = path or self.path(key)
        rows, columns, values = read_matrix(path, "country")
        self._agree(rows, "countries", path)
        self._agree(columns, "sectors", path)
        return values

    def per_sector(self, key: str, count: int, read: Any) -> List[List[List[float]]]:
        base = self.path(key)
        return [read(key, sector_path(base, k)) for k in range(1, count + 1)]


def _bundle(config: RunConfig) -> TradeParams:
    model = config.model
    reader = _Reader(config)
    if model.kind == "one-sector":
        data: Dict[str, Any] = {
            "L": reader.vector("L"),
            "A": reader.vector("A"),
            "gamma": reader.vector("gamma"),
            "tau": reader.country_matrix("tau"),
            "theta": model.theta,
            "sigma": model.sigma,
        }
        data["countries"] = reader.countries
        return parse_bundle(OneSectorParams, data)

    theta = list(model.theta) if isinstance(model.theta, list) else [model.theta]
    S = len(theta)
    data = {
        "L": reader.vector("L"),
        "alpha": reader.sector_matrix("alpha"),
        "A": reader.sector_matrix("A"),
        "tau": reader.per_sector("tau", S, reader.country_matrix),
        "theta": theta,
        "sigma": model.sigma,
    }
    if model.kind == "general":
        data["gamma_labor"] = reader.sector_matrix("gamma_labor")
        data["gamma_io"] = reader.per_sector("gamma_io", S, reader.sector_matrix)
    data["countries"] = reader.countries
    data["sectors"] = reader.sectors
    if reader.sectors is not None and len(reader.sectors) != S:
        raise ParameterError(f"theta has {S} entries but the tables list {len(reader.sectors)} sectors", field="theta")
    return parse_bundle(GeneralParams if model.kind == "general" else MultiSectorParams, data)


def load_parameters(config: RunConfig, require_connected: bool = True) -> TradeParams:
    """
    Read and validate the parameter bundle a configuration points at.

    Raises:
        ParseError: a file is missing or unreadable, or a cell is not a number (with file, line, column).
        ParameterError: a parameter invariant is violated; the offending file is attached when known.
        ConnectivityError: require_connected is set and the trade network splits into blocs.
    """
    if config.model.kind == "custom":
        raise ParameterError("custom models have no parameter files", field="model.kind")
    try:
        params = _bundle(config)
    except ParameterError as e:
        if e.location is None and e.field:
            key = e.field.split("[")[0]
            if key in config.model.files:
                e.location = (os.path.join(config.base_dir, config.model.files[key]), None, None)
        raise
    if require_connected:
        ensure_connected(params)
    return params


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror or e}", location=(path, None, None)) from e
    except yaml.YAMLError as e:
        raise ParseError(f"cannot parse {path}: {e}", location=(path, None, None)) from e
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: expected a mapping with a model section", location=(path, None, None))
    raw.setdefault("base_dir", os.path.dirname(os.path.abspath(path)))
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ()))
        raise ParseError(f"{path}: {field}: {first.get('msg')}", field=field, location=(path, None, field)) from e


def load_shocks(path: str) -> List[ParameterShock]:
    """A YAML list of shocks, or a mapping with a `shocks` list; an empty file is the null shock."""
    try:
        with open(path, "r") as f:
            raw = yaml.safe_load(f)
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror or e}", location=(path, None, None)) from e
    except yaml.YAMLError as e:
        raise ParseError(f"cannot parse {path}: {e}", location=(path, None, None)) from e
    if raw is None:
        return []
    entries = raw.get("shocks", []) if isinstance(raw, dict) else raw
    if not isinstance(entries, list):
        raise ParseError(f"{path}: expected a list of shocks", location=(path, None, None))
    try:
        return [ParameterShock.model_validate(entry) for entry in entries]
    except ValidationError as e:
        raise ParseError(f"{path}: invalid shock: {e.errors()[0].get('msg')}", location=(path, None, None)) from e


def write_parameters(params: TradeParams, directory: str) -> RunConfig:
    """
    Write a bundle as tables plus config.yaml in `directory`; load_parameters on the returned
    configuration reproduces the bundle exactly.
    """
    os.makedirs(directory, exist_ok=True)
    countries = list(params.countries)

    def target(name: str) -> str:
        return os.path.join(directory, name)

    if isinstance(params, OneSectorParams):
        kind = "one-sector"
        files = {"A": "A.csv", "tau": "tau.csv", "gamma": "gamma.csv", "L": "L.csv"}
        write_vector(target("A.csv"), countries, params.A)
        write_vector(target("gamma.csv"), countries, params.gamma)
        write_vector(target("L.csv"), countries, params.L)
        write_matrix(target("tau.csv"), "origin", countries, countries, params.tau)
        theta: Any = params.theta
        sigma: Any = params.sigma
    else:
        sectors = list(params.sectors)
        kind = "general" if isinstance(params, GeneralParams) else "multi-sector"
        files = {"A": "A.csv", "tau": "tau.csv", "alpha": "alpha.csv", "L": "L.csv"}
        write_vector(target("L.csv"), countries, params.L)
        write_matrix(target("A.csv"), "country", countries, sectors, params.A)
        write_matrix(target("alpha.csv"), "country", countries, sectors, params.alpha)
        for k, matrix in enumerate(params.tau, start=1):
            write_matrix(sector_path(target("tau.csv"), k), "origin", countries, countries, matrix)
        if isinstance(params, GeneralParams):
            files.update({"gamma_labor": "gamma_labor.csv", "gamma_io": "gamma_io.csv"})
            write_matrix(target("gamma_labor.csv"), "country", countries, sectors, params.gamma_labor)
            for k, matrix in enumerate(params.gamma_io, start=1):
                write_matrix(sector_path(target("gamma_io.csv"), k), "country", countries, sectors, matrix)
        theta, sigma = list(params.theta), list(params.sigma)

    raw = {"model": {"kind": kind, "theta": theta, "sigma": sigma, "files": files}}
    with open(target(CONFIG_FILE), "w") as f:
        yaml.safe_dump(raw, f, sort_keys=False)
    return RunConfig.model_validate({**raw, "base_dir": os.path.abspath(directory)})
