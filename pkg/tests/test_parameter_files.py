import math
import os

import pytest
import yaml

from src.python_src.pydantic_models import GeneralParams, OneSectorParams, RunConfig
from src.python_src.util.errors import ConnectivityError, ParameterError, ParseError
from src.python_src.util.parameter_files import (
    format_number,
    load_parameters,
    load_run_config,
    load_shocks,
    read_matrix,
    read_vector,
    sector_path,
    write_parameters,
)

TAU_TABLE = "origin,c1,c2,c3\nc1,1,1.2,1.5\nc2,1.3,1,1.1\nc3,1.4,1.25,1\n"


def write(path: str, text: str) -> str:
    with open(path, "w") as f:
        f.write(text)
    return path


def one_sector_files(directory: str, tau: str = TAU_TABLE) -> str:
    write(os.path.join(directory, "A.csv"), "c1,c2,c3\n1,1.4,0.8\n")
    write(os.path.join(directory, "gamma.csv"), "c1,c2,c3\n0.5,0.7,0.9\n")
    write(os.path.join(directory, "L.csv"), "c1,c2,c3\n1,2,0.5\n")
    write(os.path.join(directory, "tau.csv"), tau)
    config = {
        "model": {
            "kind": "one-sector",
            "theta": 4.0,
            "sigma": 2.0,
            "files": {"A": "A.csv", "tau": "tau.csv", "gamma": "gamma.csv", "L": "L.csv"},
        }
    }
    return write(os.path.join(directory, "config.yaml"), yaml.safe_dump(config))


def test_number_formatting() -> None:
    assert format_number(math.inf) == "inf"
    assert format_number(0.1) == "0.10000000000000001"
    assert float(format_number(1 / 3)) == 1 / 3
    assert sector_path(os.path.join("data", "tau.csv"), 2) == os.path.join("data", "tau.s2.csv")


def test_load_well_formed_one_sector(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = load_run_config(one_sector_files(str(tmp_path)))
    assert config.base_dir == str(tmp_path)
    params = load_parameters(config)
    assert isinstance(params, OneSectorParams)
    assert params.J == 3
    assert params == one_sector


def test_infinity_token_is_accepted(tmp_path: str) -> None:
    tau = "origin,c1,c2,c3\nc1,1,1.2,inf\nc2,1.3,1,1.1\nc3,1.4,1.25,1\n"
    params = load_parameters(load_run_config(one_sector_files(str(tmp_path), tau)))
    assert params.tau[0][2] == math.inf


def test_bad_cell_is_located(tmp_path: str) -> None:
    tau = "origin,c1,c2,c3\nc1,1,1.2,1.5\nc2,1.3,x,1.1\nc3,1.4,1.25,1\n"
    config = load_run_config(one_sector_files(str(tmp_path), tau))
    with pytest.raises(ParseError) as e:
        load_parameters(config)
    assert e.value.location == (os.path.join(str(tmp_path), "tau.csv"), 3, "c2")


def test_labels_must_agree(tmp_path: str) -> None:
    tau = "origin,c1,c2,c4\nc1,1,1.2,1.5\nc2,1.3,1,1.1\nc4,1.4,1.25,1\n"
    with pytest.raises(ParseError):
        load_parameters(load_run_config(one_sector_files(str(tmp_path), tau)))


def test_invariant_violation_names_the_file(tmp_path: str) -> None:
    tau = "origin,c1,c2,c3\nc1,1,0.5,1.5\nc2,1.3,1,1.1\nc3,1.4,1.25,1\n"
    with pytest.raises(ParameterError) as e:
        load_parameters(load_run_config(one_sector_files(str(tmp_path), tau)))
    assert e.value.field == "tau"
    assert e.value.location[0] == os.path.join(str(tmp_path), "tau.csv")


def test_disconnected_network_is_rejected(tmp_path: str) -> None:
    tau = "origin,c1,c2,c3\nc1,1,1.2,inf\nc2,1.3,1,inf\nc3,inf,inf,1\n"
    config = load_run_config(one_sector_files(str(tmp_path), tau))
    with pytest.raises(ConnectivityError) as e:
        load_parameters(config)
    assert e.value.blocs == [["c1", "c2"], ["c3"]]
    assert load_parameters(config, require_connected=False).tau[2][0] == math.inf


def test_missing_table(tmp_path: str) -> None:
    config = load_run_config(one_sector_files(str(tmp_path)))
    os.remove(os.path.join(str(tmp_path), "gamma.csv"))
    with pytest.raises(ParseError):
        load_parameters(config)


def test_vector_needs_one_row(tmp_path: str) -> None:
    path = write(os.path.join(str(tmp_path), "L.csv"), "c1,c2\n1,2\n3,4\n")
    with pytest.raises(ParseError):
        read_vector(path)


def test_matrix_needs_its_index_header(tmp_path: str) -> None:
    path = write(os.path.join(str(tmp_path), "alpha.csv"), "origin,s1\nc1,1\n")
    with pytest.raises(ParseError):
        read_matrix(path, "country")
    assert read_matrix(path, "origin") == (["c1"], ["s1"], [[1.0]])


def test_alpha_error_names_the_country(tmp_path: str, general: GeneralParams) -> None:
    config = write_parameters(general, str(tmp_path))
    write(os.path.join(str(tmp_path), "alpha.csv"), "country,s1,s2\nc1,0.4,0.6\nc2,0.5,0.4\nc3,0.3,0.7\n")
    with pytest.raises(ParameterError) as e:
        load_parameters(config)
    assert "c2" in str(e.value)
    assert e.value.location[0] == os.path.join(str(tmp_path), "alpha.csv")


def test_written_bundles_read_back(tmp_path: str, general: GeneralParams) -> None:
    config = write_parameters(general, str(tmp_path))
    assert os.path.exists(os.path.join(str(tmp_path), "tau.s2.csv"))
    assert os.path.exists(os.path.join(str(tmp_path), "gamma_io.s1.csv"))
    assert load_parameters(config) == general
    assert load_parameters(load_run_config(os.path.join(str(tmp_path), "config.yaml"))) == general


def test_written_infinite_costs_read_back(tmp_path: str, two_bloc_one_sector: OneSectorParams) -> None:
    config = write_parameters(two_bloc_one_sector, str(tmp_path))
    with open(os.path.join(str(tmp_path), "tau.csv")) as f:
        assert "inf" in f.read()
    assert load_parameters(config, require_connected=False) == two_bloc_one_sector


def test_custom_models_have_no_files() -> None:
    config = RunConfig.model_validate({"model": {"kind": "custom", "factory": "tests.example_systems:swap_system"}})
    with pytest.raises(ParameterError):
        load_parameters(config)


@pytest.mark.parametrize(
    "text",
    [
        "model: [unclosed",
        "- just\n- a list\n",
        "model:\n  kind: one-sector\n  sigma: 2.0\n",
        "model:\n  kind: one-sector\n  theta: [4.0]\n  sigma: 2.0\n",
        "model:\n  kind: custom\n",
        "model:\n  kind: multi-sector\n  theta: [4.0]\n  sigma: [2.0]\nsolve:\n  damping: 1.5\n",
    ],
)
def test_invalid_configurations(tmp_path: str, text: str) -> None:
    path = write(os.path.join(str(tmp_path), "config.yaml"), text)
    with pytest.raises(ParseError):
        load_run_config(path)


def test_missing_configuration(tmp_path: str) -> None:
    with pytest.raises(ParseError):
        load_run_config(os.path.join(str(tmp_path), "absent.yaml"))


def test_configuration_sections(tmp_path: str) -> None:
    text = (
        "model:\n  kind: multi-sector\n  theta: [4.0, 6.0]\n  sigma: [2.0, 3.0]\n"
        "solve:\n  tol: 1.0e-9\n  numeraire: geometric-mean-one\n"
        "certify:\n  samples: 3\n  seed: 11\n"
    )
    config = load_run_config(write(os.path.join(str(tmp_path), "config.yaml"), text))
    options = config.solve.options()
    assert options.tol == 1e-9
    assert options.numeraire_rule.kind == "geometric-mean-one"
    assert options.damping == 1.0
    assert (config.certify.samples, config.certify.seed) == (3, 11)


def test_shock_files(tmp_path: str) -> None:
    listed = write(
        os.path.join(str(tmp_path), "listed.yaml"),
        "- field: tau\n  op: multiply\n  value: 1.5\n  index: [0, 1]\n",
    )
    mapped = write(os.path.join(str(tmp_path), "mapped.yaml"), "shocks:\n  - field: A\n    value: 2.0\n")
    empty = write(os.path.join(str(tmp_path), "empty.yaml"), "")
    assert load_shocks(listed)[0].index == [0, 1]
    assert load_shocks(mapped)[0].op == "multiply"
    assert load_shocks(empty) == []


def test_invalid_shock_file(tmp_path: str) -> None:
    path = write(os.path.join(str(tmp_path), "shock.yaml"), "- field: A\n  op: divide\n  value: 2.0\n")
    with pytest.raises(ParseError):
        load_shocks(path)
