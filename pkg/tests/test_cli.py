import logging
import os
from typing import Any, Dict
from unittest.mock import Mock, patch

import pandas as pd
import pytest
import yaml

from src.python_src.cli import (
    EXIT_BUDGET_EXHAUSTED,
    EXIT_CERTIFICATION_FAILED,
    EXIT_INPUT_ERROR,
    EXIT_OK,
    load_factory,
    main,
)
from src.python_src.pydantic_models import GeneralParams, OneSectorParams
from src.python_src.util.errors import ParameterError
from src.python_src.util.parameter_files import write_parameters
from src.python_src.util.reports import parse_report_text
from src.python_src.util.system import PositiveSystem


def configure(directory: str, params: Any = None, **sections: Any) -> str:
    """Write params (or only a config) to directory and return the path of config.yaml."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "config.yaml")
    raw: Dict[str, Any] = {}
    if params is not None:
        write_parameters(params, directory)
        with open(path) as f:
            raw = yaml.safe_load(f)
    raw.update(sections)
    with open(path, "w") as f:
        yaml.safe_dump(raw, f)
    return path


def read_keyed(path: str) -> Dict[str, str]:
    with open(path) as f:
        return parse_report_text(f.read())


def custom(factory: str) -> Dict[str, Any]:
    return {"kind": "custom", "factory": f"tests.example_systems:{factory}"}


def test_certify_one_sector(tmp_path: str, one_sector: OneSectorParams, capsys: pytest.CaptureFixture) -> None:
    config = configure(str(tmp_path), one_sector)
    out = os.path.join(str(tmp_path), "out")
    assert main(["certify", "--config", config, "--out", out]) == EXIT_OK
    report = read_keyed(os.path.join(out, "report.txt"))
    assert report["mode"] == "exact"
    assert report["theorem.applicable"] == "true"
    summary = capsys.readouterr().out.splitlines()
    assert len(summary) == 1
    assert summary[0].startswith("certify one-sector mode=exact")


def test_certify_defaults_to_configured_output(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector, output="results")
    assert main(["certify", "--config", config]) == EXIT_OK
    assert os.path.exists(os.path.join(str(tmp_path), "results", "report.txt"))


def test_certify_is_deterministic(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector, certify={"samples": 3, "seed": 9})
    first, second = os.path.join(str(tmp_path), "first"), os.path.join(str(tmp_path), "second")
    main(["certify", "--config", config, "--out", first])
    main(["certify", "--config", config, "--out", second, "--threads", "2"])
    with open(os.path.join(first, "report.txt")) as a, open(os.path.join(second, "report.txt")) as b:
        assert a.read() == b.read()


def test_certify_two_blocs(tmp_path: str, two_bloc_one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), two_bloc_one_sector)
    out = os.path.join(str(tmp_path), "out")
    assert main(["certify", "--config", config, "--out", out]) == EXIT_CERTIFICATION_FAILED
    assert read_keyed(os.path.join(out, "report.txt"))["connectedness.verdict"] == "fail"


def test_certify_general_framework(tmp_path: str, general_labor_only: GeneralParams) -> None:
    config = configure(str(tmp_path), general_labor_only, certify={"samples": 4, "seed": 0})
    out = os.path.join(str(tmp_path), "out")
    assert main(["certify", "--config", config, "--out", out]) == EXIT_OK
    report = read_keyed(os.path.join(out, "report.txt"))
    assert report["mode"] == "sampled"
    assert report["banner"].startswith("evidence-only")


@pytest.mark.parametrize(
    "factory, code",
    [
        ("markov_system", EXIT_OK),
        ("swap_system", EXIT_CERTIFICATION_FAILED),
        ("mixed_sign_system", EXIT_CERTIFICATION_FAILED),
    ],
)
def test_certify_custom_systems(tmp_path: str, factory: str, code: int) -> None:
    config = configure(str(tmp_path), model=custom(factory), certify={"samples": 4})
    assert main(["certify", "--config", config, "--out", os.path.join(str(tmp_path), "out")]) == code


def test_solve_symmetric_economy(tmp_path: str, symmetric_one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), symmetric_one_sector)
    out = os.path.join(str(tmp_path), "out")
    assert main(["solve", "--config", config, "--out", out]) == EXIT_OK
    values = read_keyed(os.path.join(out, "equilibrium.txt"))
    assert values["status"] == "converged"
    assert float(values["OMEGA[c1]"]) == pytest.approx(1.0)
    for name in ("OMEGA", "P"):
        assert float(values[f"{name}[c2]"]) == pytest.approx(float(values[f"{name}[c1]"]), rel=1e-9)
        assert float(values[f"{name}[c3]"]) == pytest.approx(float(values[f"{name}[c1]"]), rel=1e-9)
    assert float(values["outcomes.U.c3"]) == pytest.approx(float(values["outcomes.U.c1"]), rel=1e-9)
    trace = pd.read_csv(os.path.join(out, "trace.csv"))
    assert len(trace) == int(values["iterations"])


def test_solve_from_different_seeds(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector)
    runs = []
    for seed in ("1", "2"):
        out = os.path.join(str(tmp_path), f"seed{seed}")
        assert main(["solve", "--config", config, "--out", out, "--seed", seed]) == EXIT_OK
        runs.append(read_keyed(os.path.join(out, "equilibrium.txt")))
    labels = [key for key in runs[0] if key.startswith(("OMEGA[", "P["))]
    assert len(labels) == 6
    for label in labels:
        assert float(runs[1][label]) == pytest.approx(float(runs[0][label]), rel=1e-8)


def test_solve_budget_exhausted(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector, solve={"max_iter": 1})
    out = os.path.join(str(tmp_path), "out")
    assert main(["solve", "--config", config, "--out", out]) == EXIT_BUDGET_EXHAUSTED
    assert len(pd.read_csv(os.path.join(out, "trace.csv"))) == 1
    values = read_keyed(os.path.join(out, "equilibrium.txt"))
    assert values["status"] == "budget-exhausted"
    assert not any(key.startswith("outcomes.") for key in values)


def test_solve_evaluation_failure(tmp_path: str) -> None:
    config = configure(str(tmp_path), model=custom("square_system"))
    out = os.path.join(str(tmp_path), "out")
    assert main(["solve", "--config", config, "--out", out, "--seed", "3"]) == EXIT_INPUT_ERROR
    assert not os.path.exists(os.path.join(out, "equilibrium.txt"))


def test_solve_user_function_error(tmp_path: str) -> None:
    config = configure(str(tmp_path), model=custom("domain_error_system"))
    out = os.path.join(str(tmp_path), "out")
    assert main(["solve", "--config", config, "--out", out]) == EXIT_INPUT_ERROR
    assert not os.path.exists(os.path.join(out, "equilibrium.txt"))
    assert not os.path.exists(os.path.join(out, "trace.csv"))


def test_certify_user_function_error(tmp_path: str) -> None:
    config = configure(str(tmp_path), model=custom("domain_error_system"), certify={"samples": 2})
    out = os.path.join(str(tmp_path), "out")
    assert main(["certify", "--config", config, "--out", out]) == EXIT_CERTIFICATION_FAILED
    report = read_keyed(os.path.join(out, "report.txt"))
    assert report["connectedness.verdict"] == "fail"
    assert "ValueError" in report["errors.elasticity"]


@patch("src.python_src.cli.log_as_json")
@pytest.mark.parametrize("command", ["certify", "solve"])
def test_failing_factory(mocked_func: Mock, tmp_path: str, command: str) -> None:
    config = configure(str(tmp_path), model=custom("failing_factory"))
    assert main([command, "--config", config, "--out", os.path.join(str(tmp_path), "out")]) == EXIT_INPUT_ERROR
    logged = mocked_func.call_args[0][0]
    assert logged["command"] == command
    assert "ZeroDivisionError" in logged["message"]


def test_solve_leaves_no_partial_output(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector)
    out = os.path.join(str(tmp_path), "out")
    # a directory in the way of the staged equilibrium file makes the second write fail
    os.makedirs(os.path.join(out, ".equilibrium.txt.tmp"))
    assert main(["solve", "--config", config, "--out", out]) == EXIT_INPUT_ERROR
    assert not os.path.exists(os.path.join(out, "trace.csv"))
    assert not os.path.exists(os.path.join(out, ".trace.csv.tmp"))
    assert not os.path.exists(os.path.join(out, "equilibrium.txt"))


def test_counterfactual_null_shock(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector)
    shock = os.path.join(str(tmp_path), "shock.yaml")
    with open(shock, "w") as f:
        f.write("[]\n")
    out = os.path.join(str(tmp_path), "out")
    assert main(["counterfactual", "--config", config, "--shock", shock, "--out", out]) == EXIT_OK
    delta = read_keyed(os.path.join(out, "delta.txt"))
    assert delta.pop("numeraire") == "first-coordinate-one"
    assert set(delta.values()) == {"0"}


def test_counterfactual_trade_cost_increase(tmp_path: str, symmetric_one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), symmetric_one_sector)
    shock = os.path.join(str(tmp_path), "shock.yaml")
    with open(shock, "w") as f:
        yaml.safe_dump([{"field": "tau", "op": "multiply", "value": 1.2, "index": [0, 1]}], f)
    out = os.path.join(str(tmp_path), "out")
    assert main(["counterfactual", "--config", config, "--shock", shock, "--out", out]) == EXIT_OK
    assert float(read_keyed(os.path.join(out, "delta.txt"))["pi.s1.c1.c2"]) < 0


def test_counterfactual_invalid_shock(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector)
    shock = os.path.join(str(tmp_path), "shock.yaml")
    with open(shock, "w") as f:
        yaml.safe_dump([{"field": "tau", "op": "set", "value": 0.5, "index": [0, 1]}], f)
    out = os.path.join(str(tmp_path), "out")
    assert main(["counterfactual", "--config", config, "--shock", shock, "--out", out]) == EXIT_INPUT_ERROR
    assert not os.path.exists(os.path.join(out, "delta.txt"))


def test_report_command(tmp_path: str, one_sector: OneSectorParams, capsys: pytest.CaptureFixture) -> None:
    config = configure(str(tmp_path), one_sector)
    out = os.path.join(str(tmp_path), "out")
    main(["certify", "--config", config, "--out", out])
    capsys.readouterr()
    assert main(["report", os.path.join(out, "report.txt")]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "[connectedness] PASS" in printed
    assert "[theorem]" in printed


def test_report_command_rejects_other_files(tmp_path: str) -> None:
    path = os.path.join(str(tmp_path), "notes.txt")
    with open(path, "w") as f:
        f.write("not a report\n")
    assert main(["report", path]) == EXIT_INPUT_ERROR


@patch("src.python_src.cli.log_as_json")
def test_input_errors_are_logged_with_location(mocked_func: Mock, tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector)
    with open(os.path.join(str(tmp_path), "gamma.csv"), "w") as f:
        f.write("c1,c2,c3\n0.5,half,0.9\n")
    assert main(["solve", "--config", config, "--out", os.path.join(str(tmp_path), "out")]) == EXIT_INPUT_ERROR
    logged = mocked_func.call_args[0][0]
    assert logged["level"] == "error"
    assert logged["command"] == "solve"
    assert logged["location"] == [os.path.join(str(tmp_path), "gamma.csv"), 2, "c2"]


def test_missing_configuration(tmp_path: str) -> None:
    assert main(["certify", "--config", os.path.join(str(tmp_path), "absent.yaml")]) == EXIT_INPUT_ERROR


def test_usage_errors_exit_with_two() -> None:
    with pytest.raises(SystemExit) as e:
        main([])
    assert e.value.code == EXIT_INPUT_ERROR
    with pytest.raises(SystemExit) as e:
        main(["certify"])
    assert e.value.code == EXIT_INPUT_ERROR


def test_quiet_raises_the_log_level(tmp_path: str) -> None:
    config = configure(str(tmp_path), model=custom("markov_system"), certify={"samples": 2})
    try:
        main(["certify", "--config", config, "--out", os.path.join(str(tmp_path), "out"), "--quiet"])
        assert logging.getLogger().level == logging.WARNING
    finally:
        logging.getLogger().setLevel(logging.INFO)


def test_load_factory() -> None:
    assert isinstance(load_factory("tests.example_systems:swap_system"), PositiveSystem)
    with pytest.raises(ParameterError):
        load_factory("tests.example_systems:no_such_system")
    with pytest.raises(ParameterError):
        load_factory("tests.no_such_module:system")
    with pytest.raises(ParameterError):
        load_factory("tests.example_systems:MARKOV")
    with pytest.raises(ParameterError):
        load_factory("tests.example_systems:failing_factory")


def test_counterfactual_from_a_seeded_start(tmp_path: str, one_sector: OneSectorParams) -> None:
    config = configure(str(tmp_path), one_sector)
    shock = os.path.join(str(tmp_path), "shock.yaml")
    with open(shock, "w") as f:
        yaml.safe_dump([{"field": "A", "op": "multiply", "value": 1.5, "index": [1]}], f)
    deltas = []
    for extra in ([], ["--seed", "5"]):
        out = os.path.join(str(tmp_path), f"out{len(extra)}")
        assert main(["counterfactual", "--config", config, "--shock", shock, "--out", out, *extra]) == EXIT_OK
        deltas.append(read_keyed(os.path.join(out, "delta.txt")))
    assert deltas[0].keys() == deltas[1].keys()
    for key, value in deltas[0].items():
        if key != "numeraire":
            assert float(deltas[1][key]) == pytest.approx(float(value), rel=1e-6, abs=1e-9)
