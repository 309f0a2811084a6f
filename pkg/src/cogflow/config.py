from __future__ import annotations

import copy
import json
import logging
import os
import re
import warnings
from pathlib import Path
from typing import Annotated, Any, Dict, Iterable, List, Literal, Mapping, Tuple

from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, model_validator

from cogflow.errors import ConfigError, ConfigParseError

try:
    import tomllib  # py>=3.11
except ModuleNotFoundError:  # pragma: no cover - fallback for older runtimes
    import tomli as tomllib

THREADS_ENV = "COGFLOW_THREADS"
LOG_LEVEL_ENV = "COGFLOW_LOG_LEVEL"
EFFECTIVE_CONFIG_NAME = "effective_config"

EXPERIMENTS: Tuple[str, ...] = ("gradcheck", "manifold", "scaling", "recovery", "reduction", "decision")
ExperimentName = Literal["gradcheck", "manifold", "scaling", "recovery", "reduction", "decision", "all"]
PotentialName = Literal["cubic-benchmark", "decision", "composite"]

_SECTION_LINE = re.compile(r"^\s*\[\s*([A-Za-z0-9_\-\.]+)\s*\]\s*(#.*)?$")
_KEY_LINE = re.compile(r"^\s*([A-Za-z0-9_\-\.]+)\s*=")
_DECODE_LINE = re.compile(r"line (\d+)")


def _check_epsilon(value: float) -> float:
    if not 0.0 < value < 1.0:
        raise ValueError("epsilon must lie in (0,1)")
    return value


Epsilon = Annotated[float, AfterValidator(_check_epsilon)]


def _check_distinct(values: Tuple[float, ...]) -> Tuple[float, ...]:
    repeated = sorted({value for value in values if values.count(value) > 1})
    if repeated:
        raise ValueError(f"epsilon grid repeats {repeated}; log-log fits need distinct values")
    return values


EpsilonGrid = Annotated[Tuple[Epsilon, ...], AfterValidator(_check_distinct)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class IntegratorSection(_Section):
    dt: float = Field(default=0.01, gt=0)
    t_end: float = Field(default=20.0, gt=0)
    record_stride: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _dt_within_window(self) -> "IntegratorSection":
        if self.dt > self.t_end:
            raise ValueError(f"dt={self.dt} must not exceed t_end={self.t_end}")
        return self


class PotentialSection(_Section):
    name: PotentialName = "cubic-benchmark"
    beta: float = Field(default=2.0, gt=0)
    ramp_start: float = Field(default=0.0, ge=0)
    ramp_end: float = Field(default=40.0, ge=0)
    ramp_level: float = 0.5
    prediction_weight: float = Field(default=1.0, gt=0)
    complexity_weight: float = Field(default=1.0, ge=0)

    @model_validator(mode="after")
    def _ramp_ordered(self) -> "PotentialSection":
        if self.ramp_end < self.ramp_start:
            raise ValueError("ramp_end must not precede ramp_start")
        return self


class ScalingSection(_Section):
    slow_slope_min: float = 1.8
    slow_slope_max: float = 2.2
    fast_slope_min: float = -0.2
    fast_slope_max: float = 0.2
    min_r_squared: float = Field(default=0.99, ge=0, le=1)
    portrait_radius: float = Field(default=1.5, gt=0)
    portrait_starts: int = Field(default=6, ge=1)
    portrait_epsilon: Epsilon = 0.2


class RecoverySection(_Section):
    epsilon: Epsilon = 0.2
    t_kick: float = Field(default=8.0, ge=0)
    delta: Tuple[float, ...] = Field(default=(1.0,), min_length=1)
    target: Literal["fast", "slow", "full"] = "fast"
    t_end: float = Field(default=25.0, gt=0)
    rate_tolerance: float = Field(default=0.1, gt=0)
    residual_fraction: float = Field(default=0.01, gt=0)
    pre_window_start: float = Field(default=1.0, ge=0)
    post_window_offset: float = Field(default=0.5, ge=0)
    post_window_length: float = Field(default=5.0, gt=0)

    @model_validator(mode="after")
    def _kick_inside_run(self) -> "RecoverySection":
        if self.t_kick >= self.t_end:
            raise ValueError(f"t_kick={self.t_kick} must precede t_end={self.t_end}")
        if self.t_kick + self.post_window_length > self.t_end:
            raise ValueError("post-kick window extends past t_end")
        if self.post_window_offset >= self.post_window_length:
            raise ValueError("post_window_offset must be shorter than post_window_length")
        return self


class ReductionSection(_Section):
    epsilons: EpsilonGrid = Field(default=(0.4, 0.3, 0.2, 0.15, 0.1), min_length=1)
    c0: Tuple[float, ...] = Field(default=(1.0,), min_length=1)
    offset: float = 0.5
    t_end_scaled: bool = True
    horizon: float = Field(default=10.0, gt=0)
    t_end: float = Field(default=50.0, gt=0)
    transient_cutoff: float = Field(default=5.0, ge=0)
    dt: float = Field(default=0.1, gt=0)
    reduced_dt: float = Field(default=0.5, gt=0)
    slope_min: float = 1.7
    slope_max: float = 2.3


class DecisionSection(_Section):
    epsilon: Epsilon = 0.15
    t_end: float = Field(default=320.0, gt=0)
    dt: float = Field(default=0.02, gt=0)
    c0: float = 1.0
    capped_level: float = Field(default=0.2, ge=0)
    min_switch_bias: float = 0.335
    tracking_tolerance: float = Field(default=0.05, gt=0)
    window_before: float = Field(default=1.0, ge=0)
    window_after: float = Field(default=3.0, ge=0)

    @model_validator(mode="after")
    def _dt_within_window(self) -> "DecisionSection":
        if self.dt > self.t_end:
            raise ValueError(f"dt={self.dt} must not exceed t_end={self.t_end}")
        return self


class GradcheckSection(_Section):
    samples: int = Field(default=200, ge=1)
    times: int = Field(default=10, ge=1)
    step: float = Field(default=1e-5, gt=0)
    tolerance: float = Field(default=1e-6, gt=0)
    box: float = Field(default=2.0, gt=0)
    t_max: float = Field(default=60.0, gt=0)


class ManifoldSection(_Section):
    c_min: float = -2.0
    c_max: float = 2.0
    points: int = Field(default=41, ge=2)
    tolerance: float = Field(default=1e-9, gt=0)
    landscape_points: int = Field(default=41, ge=2)

    @model_validator(mode="after")
    def _grid_ordered(self) -> "ManifoldSection":
        if self.c_max <= self.c_min:
            raise ValueError("c_max must exceed c_min")
        return self


class RunConfig(_Section):
    experiment: ExperimentName = "all"
    output_dir: str = Field(default="cogflow_out", min_length=1)
    seed: int = 1729
    epsilon: Epsilon | None = None
    epsilons: EpsilonGrid = Field(default=(0.1, 0.05, 0.025, 0.0125), min_length=3)
    initial_state: Tuple[float, ...] = (1.5, -1.0)
    plots: bool = True
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    potential: PotentialSection = Field(default_factory=PotentialSection)
    scaling: ScalingSection = Field(default_factory=ScalingSection)
    recovery: RecoverySection = Field(default_factory=RecoverySection)
    reduction: ReductionSection = Field(default_factory=ReductionSection)
    decision: DecisionSection = Field(default_factory=DecisionSection)
    gradcheck: GradcheckSection = Field(default_factory=GradcheckSection)
    manifold: ManifoldSection = Field(default_factory=ManifoldSection)

    @model_validator(mode="after")
    def _dimensions(self) -> "RunConfig":
        if len(self.initial_state) != 2:
            raise ValueError(
                f"initial_state needs 2 coordinates (h, c), got {len(self.initial_state)}"
            )
        expected = 2 if self.recovery.target == "full" else 1
        if len(self.recovery.delta) != expected:
            raise ValueError(
                f"recovery.delta needs {expected} entr{'y' if expected == 1 else 'ies'} "
                f"for target {self.recovery.target!r}, got {len(self.recovery.delta)}"
            )
        if len(self.reduction.c0) != 1:
            raise ValueError("reduction.c0 needs 1 slow coordinate")
        return self

    def experiments(self) -> Tuple[str, ...]:
        return EXPERIMENTS if self.experiment == "all" else (self.experiment,)


def _scan_duplicate_keys(text: str) -> None:
    seen: Dict[str, int] = {}
    section = ""
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        header = _SECTION_LINE.match(line)
        if header:
            section = header.group(1)
            continue
        key = _KEY_LINE.match(line)
        if key is None:
            continue
        full = f"{section}.{key.group(1)}" if section else key.group(1)
        if full in seen:
            raise ConfigParseError(
                f"duplicate key {full!r} at lines {seen[full]} and {line_number}", line=line_number
            )
        seen[full] = line_number


def _decode(text: str) -> Dict[str, Any]:
    _scan_duplicate_keys(text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            match = _DECODE_LINE.search(str(exc))
            line = int(match.group(1)) if match else None
        where = f"line {line}: " if line is not None else ""
        raise ConfigParseError(f"{where}{exc}", line=line) from exc


def decode_override_value(raw: str) -> Any:
    """TOML value syntax (numbers, booleans, arrays, quoted strings); bare words stay strings."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw.strip()


def _apply_override(document: Dict[str, Any], assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {assignment!r} must look like key=value", key=key or None)
    parts = key.split(".")
    node = document
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key}: {part!r} is not a section", key=key)
        node = child
    node[parts[-1]] = decode_override_value(raw)


def _format_location(location: Iterable[Any]) -> str:
    return ".".join(str(part) for part in location)


def _format_validation_error(exc: ValidationError) -> Tuple[str, str | None]:
    messages: List[str] = []
    first_key: str | None = None
    for error in exc.errors():
        where = _format_location(error.get("loc", ()))
        if error.get("type") == "extra_forbidden":
            message = "unknown key"
        else:
            message = str(error.get("msg", "invalid value")).removeprefix("Value error, ")
        messages.append(f"{where}: {message}" if where else message)
        if first_key is None and where:
            first_key = where
    return "; ".join(messages), first_key


def _promote_shared_epsilon(document: Dict[str, Any]) -> None:
    shared = document.get("epsilon")
    if not isinstance(shared, (int, float)) or isinstance(shared, bool):
        return
    for section in ("recovery", "decision"):
        block = document.setdefault(section, {})
        if isinstance(block, dict):
            block.setdefault("epsilon", shared)


def build_config(document: Mapping[str, Any]) -> RunConfig:
    payload = copy.deepcopy(dict(document))
    _promote_shared_epsilon(payload)
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as exc:
        message, key = _format_validation_error(exc)
        raise ConfigError(message, key=key) from exc


def parse_config(
    text: str,
    overrides: Iterable[str] = (),
    *,
    forced: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Decode and validate a config document; absent keys take their defaults.

    ``overrides`` are ``section.key=value`` assignments applied on top of the document and
    ``forced`` holds values fixed by the caller (CLI experiment and output directory).
    """
    document = _decode(text)
    for assignment in overrides:
        _apply_override(document, assignment)
    for key, value in (forced or {}).items():
        if value is not None:
            document[key] = value
    return build_config(document)


def load_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    *,
    forced: Mapping[str, Any] | None = None,
) -> RunConfig:
    if path is None:
        return parse_config("", overrides, forced=forced)
    config_path = Path(path)
    try:
        text = config_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {config_path}: {exc.strerror or exc}") from exc
    return parse_config(text, overrides, forced=forced)


def _render_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_render_value(item) for item in value) + "]"
    raise ConfigError(f"cannot render config value {value!r}")


def render_config(config: RunConfig) -> str:
    """Effective configuration as a document that parses back to an equal RunConfig."""
    lines: List[str] = []
    sections: List[Tuple[str, BaseModel]] = []
    for name in RunConfig.model_fields:
        value = getattr(config, name)
        if isinstance(value, BaseModel):
            sections.append((name, value))
        elif value is not None:
            lines.append(f"{name} = {_render_value(value)}")
    for name, section in sections:
        lines.append("")
        lines.append(f"[{name}]")
        for key in type(section).model_fields:
            lines.append(f"{key} = {_render_value(getattr(section, key))}")
    return "\n".join(lines) + "\n"


def resolve_thread_cap(environ: Mapping[str, str] | None = None) -> int:
    """Sweep parallelism from COGFLOW_THREADS, defaulting to the available cores."""
    env = os.environ if environ is None else environ
    raw = env.get(THREADS_ENV, "").strip()
    if not raw:
        return max(1, os.cpu_count() or 1)
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}", key=THREADS_ENV)
    return value


def resolve_log_level(environ: Mapping[str, str] | None = None) -> int:
    env = os.environ if environ is None else environ
    raw = env.get(LOG_LEVEL_ENV, "").strip().upper()
    if not raw:
        return logging.WARNING
    level = logging.getLevelName(raw)
    if isinstance(level, int):
        return level
    warnings.warn(f"{LOG_LEVEL_ENV}={raw!r} is not a logging level; using WARNING.", RuntimeWarning)
    return logging.WARNING
