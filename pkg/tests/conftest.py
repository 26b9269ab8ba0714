"""Common test configuration and fixtures."""

import math
from typing import Any, Dict

import pytest

from src.python_src.pydantic_models import GeneralParams, MultiSectorParams, OneSectorParams

INF = math.inf

ASYMMETRIC_TAU = [[1.0, 1.2, 1.5], [1.3, 1.0, 1.1], [1.4, 1.25, 1.0]]
SECOND_SECTOR_TAU = [[1.0, 1.4, 1.2], [1.1, 1.0, 1.3], [1.2, 1.5, 1.0]]


def one_sector_data(**overrides: Any) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "A": [1.0, 1.4, 0.8],
        "tau": [row[:] for row in ASYMMETRIC_TAU],
        "gamma": [0.5, 0.7, 0.9],
        "L": [1.0, 2.0, 0.5],
        "theta": 4.0,
        "sigma": 2.0,
    }
    data.update(overrides)
    return data


def multi_sector_data(**overrides: Any) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "A": [[1.0, 1.2], [0.9, 1.0], [1.1, 0.8]],
        "tau": [[row[:] for row in ASYMMETRIC_TAU], [row[:] for row in SECOND_SECTOR_TAU]],
        "alpha": [[0.4, 0.6], [0.5, 0.5], [0.3, 0.7]],
        "L": [1.0, 2.0, 0.5],
        "theta": [4.0, 6.0],
        "sigma": [2.0, 3.0],
    }
    data.update(overrides)
    return data


def general_data(**overrides: Any) -> Dict[str, Any]:
    data = multi_sector_data()
    data.update(
        {
            "gamma_labor": [[0.6, 0.5], [0.7, 0.6], [0.5, 0.8]],
            "gamma_io": [
                [[0.25, 0.15], [0.2, 0.1], [0.3, 0.2]],
                [[0.2, 0.3], [0.1, 0.3], [0.1, 0.1]],
            ],
        }
    )
    data.update(overrides)
    return data


@pytest.fixture(scope="session")
def one_sector() -> OneSectorParams:
    """Three countries with different labor shares, productivities and sizes."""
    return OneSectorParams(**one_sector_data())


@pytest.fixture(scope="session")
def symmetric_one_sector() -> OneSectorParams:
    return OneSectorParams(
        A=[1.0, 1.0, 1.0],
        tau=[[1.0, 1.3, 1.3], [1.3, 1.0, 1.3], [1.3, 1.3, 1.0]],
        gamma=[0.6, 0.6, 0.6],
        L=[1.0, 1.0, 1.0],
        theta=4.0,
        sigma=2.0,
    )


@pytest.fixture(scope="session")
def two_bloc_one_sector() -> OneSectorParams:
    """c3 trades with nobody."""
    tau = [[1.0, 1.2, INF], [1.3, 1.0, INF], [INF, INF, 1.0]]
    return OneSectorParams(**one_sector_data(tau=tau))


@pytest.fixture(scope="session")
def multi_sector() -> MultiSectorParams:
    return MultiSectorParams(**multi_sector_data())


@pytest.fixture(scope="session")
def general() -> GeneralParams:
    """Multi-sector economy with intermediate inputs."""
    return GeneralParams(**general_data())


@pytest.fixture(scope="session")
def general_labor_only() -> GeneralParams:
    """General framework with every labor share equal to one; coincides with the multi-sector model."""
    return GeneralParams(**general_data(gamma_labor=[[1.0, 1.0]] * 3, gamma_io=[[[0.0, 0.0]] * 3] * 2))
