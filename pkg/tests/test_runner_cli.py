from pathlib import Path

import pytest

from cogflow.config import EFFECTIVE_CONFIG_NAME, EXPERIMENTS, parse_config
from cogflow.logger import LEDGER_NAME
from cogflow.sim import cli, runner
from cogflow.sim.reporting import FAILED_MARKER, read_verdict_csv, reverify_verdict_csv
from cogflow.utils.chain_verifier import read_entries, verify_chain_file

QUICK_ALL = (
    "gradcheck.samples=5",
    "gradcheck.times=2",
    "manifold.points=11",
    "manifold.landscape_points=5",
    "integrator.t_end=5.0",
    "reduction.epsilons=[0.2, 0.1]",
    "decision.t_end=60.0",
)


def test_scaling_run_passes_and_writes_artifacts(quick_config) -> None:
    config = quick_config("scaling")
    result = runner.run_experiments(config, max_workers=2)
    assert result.exit_code == runner.EXIT_OK, result.failed
    out = result.output_dir
    assert out is not None
    for name in ("scaling_data.csv", "scaling_verdict.csv", "scaling.svg", "scaling_portrait.csv"):
        assert (out / name).is_file(), name
    assert not (out / FAILED_MARKER).exists()
    lines = (out / "scaling_data.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "epsilon,mean_fast_speed,mean_slow_speed"
    assert len(lines) == 5
    assert all(criterion.passed for criterion in reverify_verdict_csv(out / "scaling_verdict.csv"))


def test_failing_criterion_exits_one_with_marker(quick_config) -> None:
    config = quick_config("gradcheck", "gradcheck.samples=5", "gradcheck.tolerance=1e-30")
    result = runner.run_experiments(config)
    assert result.exit_code == runner.EXIT_FAIL
    assert "gradcheck.cubic-benchmark_gradient_rel_error" in result.failed
    marker = result.output_dir / FAILED_MARKER
    assert "failing criteria" in marker.read_text(encoding="utf-8")
    records = read_verdict_csv(result.output_dir / "gradcheck_verdict.csv")
    assert not all(recorded for _, recorded in records)


def test_divergence_exits_three(quick_config) -> None:
    config = quick_config("scaling", "integrator.dt=10.0")
    result = runner.run_experiments(config)
    assert result.exit_code == runner.EXIT_DIVERGENCE
    assert result.error is not None and result.error.startswith("scaling:")
    assert (result.output_dir / FAILED_MARKER).is_file()
    entries = read_entries(result.output_dir / LEDGER_NAME)
    assert entries[-1]["event"] == "run_finished"
    assert entries[-1]["payload"]["exit_code"] == runner.EXIT_DIVERGENCE


def test_unwritable_output_dir_exits_two(tmp_path: Path) -> None:
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory", encoding="utf-8")
    config = parse_config("", forced={"experiment": "manifold", "output_dir": str(blocker / "out")})
    result = runner.run_experiments(config)
    assert result.exit_code == runner.EXIT_CONFIG
    assert result.output_dir is None
    assert "output_dir" in (result.error or "")


def test_thread_cap_env_is_validated(quick_config, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("COGFLOW_THREADS", "0")
    assert runner.run(quick_config("manifold")) == runner.EXIT_CONFIG


def test_stale_failed_marker_is_cleared(quick_config) -> None:
    config = quick_config("manifold", "manifold.landscape_points=5")
    out = Path(config.output_dir)
    out.mkdir(parents=True)
    (out / FAILED_MARKER).write_text("old\n", encoding="utf-8")
    assert runner.run(config) == runner.EXIT_OK
    assert not (out / FAILED_MARKER).exists()


@pytest.mark.parametrize(
    ("experiment", "overrides"),
    [
        ("manifold", ("manifold.landscape_points=5",)),
        ("scaling", ()),
        ("recovery", ()),
    ],
)
def test_identical_configs_write_identical_artifacts(quick_config, experiment: str, overrides) -> None:
    first = runner.run_experiments(quick_config(experiment, *overrides, out="a"))
    second = runner.run_experiments(quick_config(experiment, *overrides, out="b"), max_workers=4)
    assert first.exit_code == second.exit_code == runner.EXIT_OK
    names = sorted(path.name for path in first.output_dir.iterdir())
    assert names == sorted(path.name for path in second.output_dir.iterdir())
    for name in names:
        if name in (EFFECTIVE_CONFIG_NAME, LEDGER_NAME):
            continue
        assert (first.output_dir / name).read_bytes() == (second.output_dir / name).read_bytes(), name


def test_effective_config_and_ledger(quick_config) -> None:
    config = quick_config("manifold", "manifold.points=11")
    result = runner.run_experiments(config)
    out = result.output_dir
    recorded = parse_config((out / EFFECTIVE_CONFIG_NAME).read_text(encoding="utf-8"))
    assert recorded == config
    assert verify_chain_file(out / LEDGER_NAME) == 3
    events = [entry["event"] for entry in read_entries(out / LEDGER_NAME)]
    assert events == ["run_started", "experiment_completed", "run_finished"]
    completed = read_entries(out / LEDGER_NAME)[1]["payload"]
    assert "manifold_data.csv" in completed["artifacts"]
    assert len(completed["artifacts"]["manifold_data.csv"]) == 64


def test_all_runs_every_experiment(quick_config) -> None:
    result = runner.run_experiments(quick_config("all", *QUICK_ALL), max_workers=2)
    assert [outcome.name for outcome in result.outcomes] == list(EXPERIMENTS)
    for name in EXPERIMENTS:
        assert (result.output_dir / f"{name}_verdict.csv").is_file()
    assert result.exit_code == runner.EXIT_FAIL
    assert "decision.switch_count" in result.failed
    events = [entry["event"] for entry in read_entries(result.output_dir / LEDGER_NAME)]
    assert events.count("experiment_completed") == len(EXPERIMENTS)


def test_cli_runs_manifold(tmp_path: Path) -> None:
    out = tmp_path / "cli"
    code = cli.run(["manifold", "--out", str(out), "--set", "manifold.landscape_points=5"])
    assert code == 0
    assert (out / "manifold_data.csv").is_file()


def test_cli_reports_malformed_config(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_path / "bad.toml"
    path.write_text("[integrator]\ndt = = 0.01\n", encoding="utf-8")
    code = cli.run(["scaling", "--config", str(path), "--out", str(tmp_path / "out")])
    assert code == runner.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_reports_bad_override(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    code = cli.run(["recovery", "--out", str(tmp_path / "out"), "--set", "recovery.epsilon=2.0"])
    assert code == runner.EXIT_CONFIG
    assert "epsilon" in capsys.readouterr().err


def test_cli_rejects_unknown_experiment() -> None:
    with pytest.raises(SystemExit) as excinfo:
        cli.run(["everything"])
    assert excinfo.value.code == 2
