import logging
from pathlib import Path

import pytest

from cogflow.config import (
    EXPERIMENTS,
    decode_override_value,
    load_config,
    parse_config,
    render_config,
    resolve_log_level,
    resolve_thread_cap,
)
from cogflow.errors import ConfigError, ConfigParseError


def test_empty_document_gives_defaults() -> None:
    config = parse_config("")
    assert config.experiment == "all"
    assert config.experiments() == EXPERIMENTS
    assert config.epsilons == (0.1, 0.05, 0.025, 0.0125)
    assert config.integrator.dt == 0.01
    assert config.integrator.t_end == 20.0
    assert config.initial_state == (1.5, -1.0)
    assert config.potential.name == "cubic-benchmark"
    assert config.decision.epsilon == 0.15
    assert config.reduction.epsilons == (0.4, 0.3, 0.2, 0.15, 0.1)


def test_epsilon_outside_unit_interval_is_rejected() -> None:
    with pytest.raises(ConfigError, match=r"epsilon must lie in \(0,1\)") as excinfo:
        parse_config("epsilon = 1.5\n")
    assert excinfo.value.key is not None and "epsilon" in excinfo.value.key


def test_repeated_epsilons_are_rejected() -> None:
    with pytest.raises(ConfigError, match="repeats") as excinfo:
        parse_config("epsilons = [0.1, 0.05, 0.1]\n")
    assert excinfo.value.key == "epsilons"
    with pytest.raises(ConfigError) as excinfo:
        parse_config("[reduction]\nepsilons = [0.2, 0.2]\n")
    assert excinfo.value.key == "reduction.epsilons"


def test_shared_epsilon_fills_single_run_experiments() -> None:
    config = parse_config("epsilon = 0.3\n\n[decision]\nepsilon = 0.1\n")
    assert config.recovery.epsilon == 0.3
    assert config.decision.epsilon == 0.1


def test_duplicate_key_names_both_lines() -> None:
    text = "[integrator]\ndt = 0.01\ndt = 0.02\n"
    with pytest.raises(ConfigParseError, match="lines 2 and 3") as excinfo:
        parse_config(text)
    assert excinfo.value.line == 3


def test_same_key_in_different_sections_is_allowed() -> None:
    config = parse_config("[recovery]\nt_end = 30.0\n\n[decision]\nt_end = 300.0\n")
    assert config.recovery.t_end == 30.0
    assert config.decision.t_end == 300.0


def test_malformed_document_reports_line() -> None:
    with pytest.raises(ConfigParseError) as excinfo:
        parse_config("[integrator]\ndt = = 0.01\n")
    assert excinfo.value.line == 2
    assert "line 2" in str(excinfo.value)


def test_unknown_key_is_rejected() -> None:
    with pytest.raises(ConfigError, match="unknown key") as excinfo:
        parse_config("[integrator]\nstep = 0.01\n")
    assert excinfo.value.key == "integrator.step"


@pytest.mark.parametrize(
    "text",
    [
        "epsilons = [0.1, 0.05]\n",
        "[integrator]\ndt = -0.01\n",
        "[integrator]\ndt = 30.0\n",
        "[recovery]\ntarget = \"full\"\ndelta = [1.0]\n",
        "[recovery]\nt_kick = 30.0\n",
        "[manifold]\nc_min = 1.0\nc_max = -1.0\n",
        "initial_state = [1.0]\n",
        "experiment = \"everything\"\n",
    ],
)
def test_constraint_violations_are_config_errors(text: str) -> None:
    with pytest.raises(ConfigError):
        parse_config(text)


def test_overrides_are_decoded_as_values() -> None:
    config = parse_config(
        "[integrator]\ndt = 0.01\n",
        ["integrator.dt=0.005", "potential.name=decision", "epsilons=[0.2, 0.1, 0.05]", "plots=false"],
    )
    assert config.integrator.dt == 0.005
    assert config.potential.name == "decision"
    assert config.epsilons == (0.2, 0.1, 0.05)
    assert config.plots is False


def test_override_value_decoding() -> None:
    assert decode_override_value("10") == 10
    assert decode_override_value("1e-30") == 1e-30
    assert decode_override_value("true") is True
    assert decode_override_value("scaling") == "scaling"


def test_malformed_override() -> None:
    with pytest.raises(ConfigError):
        parse_config("", ["integrator.dt"])
    with pytest.raises(ConfigError):
        parse_config("", ["plots.dt=1"])


def test_forced_values_win() -> None:
    config = parse_config('experiment = "decision"\n', forced={"experiment": "scaling", "output_dir": None})
    assert config.experiment == "scaling"
    assert config.output_dir == "cogflow_out"


def test_render_round_trips() -> None:
    config = parse_config(
        "epsilon = 0.3\n",
        ["integrator.record_stride=5", "reduction.epsilons=[0.2, 0.1]", 'output_dir="out dir"'],
    )
    rendered = render_config(config)
    assert parse_config(rendered) == config
    assert render_config(parse_config(rendered)) == rendered


def test_load_config_from_file(tmp_path: Path) -> None:
    path = tmp_path / "run.toml"
    path.write_text('experiment = "recovery"\n[recovery]\nt_kick = 6.0\n', encoding="utf-8")
    config = load_config(path, ["recovery.t_end=20.0"])
    assert config.recovery.t_kick == 6.0
    assert config.recovery.t_end == 20.0
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_thread_cap_from_environment() -> None:
    assert resolve_thread_cap({"COGFLOW_THREADS": "3"}) == 3
    assert resolve_thread_cap({}) >= 1
    for raw in ("0", "-2", "many"):
        with pytest.raises(ConfigError):
            resolve_thread_cap({"COGFLOW_THREADS": raw})


def test_log_level_from_environment() -> None:
    assert resolve_log_level({"COGFLOW_LOG_LEVEL": "debug"}) == logging.DEBUG
    assert resolve_log_level({}) == logging.WARNING
    with pytest.warns(RuntimeWarning):
        assert resolve_log_level({"COGFLOW_LOG_LEVEL": "chatty"}) == logging.WARNING
