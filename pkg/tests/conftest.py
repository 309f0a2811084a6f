from pathlib import Path

import pytest

from cogflow.config import RunConfig, parse_config
from cogflow.core.potentials import CubicBenchmark


@pytest.fixture
def benchmark() -> CubicBenchmark:
    return CubicBenchmark()


@pytest.fixture
def quick_config(tmp_path: Path):
    """Config factory with short windows, for harness tests that only check plumbing."""

    def _build(experiment: str, *overrides: str, out: str = "out") -> RunConfig:
        return parse_config(
            "",
            overrides,
            forced={"experiment": experiment, "output_dir": str(tmp_path / out)},
        )

    return _build
