"""
core/models.py
~~~~~~~~~~~~~~
Pydantic configuration models and shared enums.

Includes:
- SystemConfig: spin-system block (Hz units, converted on build)
- StateTaskConfig / GateTaskConfig: named or explicit control targets
- PulseConfig / RfiConfig / CpmgConfig: sequence discretization and ensemble
- OptimizerConfig: GRAPE / SAGRAPE / RSAGRAPE parameters and stopping rules
- BenchmarkConfig / NoiseSpecConfig / RobustnessConfig: simulation harnesses
- RunConfig: the whole run file, loaded from JSON

Unknown keys are rejected everywhere; validation failures surface as
``ConfigError`` naming the dotted key path.
"""

from __future__ import annotations

import json
import math
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    ValidationError,
    ValidationInfo,
    field_validator,
    model_validator,
)

from core.errors import ConfigError
from core.spinsys import MAX_SPINS, SpinSystem, coupling_matrix


# ──────────────────────────────────────────────
#  Enums
# ──────────────────────────────────────────────

class TaskKind(str, Enum):
    """Kind of control objective."""
    STATE = "state"
    GATE = "gate"


class Algorithm(str, Enum):
    """Optimization algorithm."""
    GRAPE = "grape"
    SAGRAPE = "sagrape"
    RSAGRAPE = "rsagrape"


class GradientMode(str, Enum):
    """How segment-propagator derivatives are computed."""
    EXACT = "exact"
    FIRST_ORDER = "first_order"


class StopReason(str, Enum):
    """Why an optimization ended."""
    TARGET_REACHED = "target reached"
    ITERATION_CAP = "iteration cap"
    EVALUATION_CAP = "evaluation cap"
    TIME_BUDGET = "time budget"
    INTERRUPTED = "interrupted"


class PulseInit(str, Enum):
    """Initial guess for the control amplitudes."""
    RANDOM = "random"
    ZERO = "zero"
    FILE = "file"


class NoiseKind(str, Enum):
    """Dephasing noise model of the test bench."""
    UNIFORM = "uniform"
    ORNSTEIN_UHLENBECK = "ou"


# Complex matrix entries are written either as a number or as [re, im].
MatrixEntry = Union[float, tuple[float, float]]
Matrix = list[list[MatrixEntry]]


class StrictModel(BaseModel):
    """Base for every config block: unknown keys are errors."""
    model_config = ConfigDict(extra="forbid")


# ──────────────────────────────────────────────
#  Physical system and task
# ──────────────────────────────────────────────

class SystemConfig(StrictModel):
    """Spin system in spectrometer units."""
    n: int = Field(..., ge=1, le=MAX_SPINS, description="Spin count")
    offsets_hz: list[float] = Field(..., description="Resonance offsets Ω_k/2π in Hz")
    couplings_hz: list[float] | list[list[float]] = Field(
        default_factory=list,
        description="Scalar couplings J_kl in Hz: upper triangle (12, 13, …, 23, …) or full matrix",
    )
    label: str = Field(default="", description="Display name, e.g. 'TCP'")
    surrogate: bool = Field(
        default=False,
        description="True when the values are placeholders rather than measured parameters",
    )

    @field_validator("couplings_hz")
    @classmethod
    def check_couplings(cls, v: list[float] | list[list[float]], info: ValidationInfo) -> list[float] | list[list[float]]:
        n = info.data.get("n")
        if n is not None:
            coupling_matrix(n, v)
        return v

    @model_validator(mode="after")
    def check_shape(self) -> "SystemConfig":
        if len(self.offsets_hz) != self.n:
            raise ValueError(f"offsets_hz needs {self.n} entries, got: {len(self.offsets_hz)}")
        coupling_matrix(self.n, self.couplings_hz)
        return self

    def build(self) -> SpinSystem:
        return SpinSystem.from_hz(self.offsets_hz, self.couplings_hz, label=self.label)


class StateTaskConfig(StrictModel):
    """State transfer ρ₀ → ρ_F; named states: thermal_z, lls."""
    kind: Literal["state"] = "state"
    initial: str | Matrix = Field(default="thermal_z", description="Named state or explicit matrix")
    target: str | Matrix = Field(default="lls", description="Named state or explicit matrix")


class GateTaskConfig(StrictModel):
    """Gate synthesis U_F; named gates: cnot, selective_pi."""
    kind: Literal["gate"] = "gate"
    target: str | Matrix = Field(default="cnot", description="Named gate or explicit unitary")
    spin: int = Field(default=1, ge=1, description="Spin addressed by selective_pi")
    axis: Literal["x", "y"] = Field(default="x", description="Rotation axis for selective_pi")


TaskConfig = Annotated[Union[StateTaskConfig, GateTaskConfig], Field(discriminator="kind")]


# ──────────────────────────────────────────────
#  Sequence and ensemble
# ──────────────────────────────────────────────

class PulseConfig(StrictModel):
    """Discretization and initial guess of the control sequence."""
    duration_s: float = Field(..., gt=0, description="Total duration T in seconds")
    segments: int = Field(..., ge=1, description="Segment count N")
    initial: PulseInit = Field(default=PulseInit.RANDOM, description="random | zero | file")
    file: str | None = Field(default=None, description="Shape file for initial=file")
    init_scale_hz: float = Field(
        default=50.0,
        gt=0,
        description="Random initial amplitudes are uniform in ±2π·init_scale_hz rad/s",
    )
    amp_max_rad_s: float | None = Field(
        default=None,
        gt=0,
        description="Optional symmetric clamp applied after every update",
    )

    @model_validator(mode="after")
    def check_file(self) -> "PulseConfig":
        if self.initial == PulseInit.FILE and not self.file:
            raise ValueError("initial=file requires 'file'")
        return self

    @property
    def tau(self) -> float:
        return self.duration_s / self.segments


class RfiConfig(StrictModel):
    """RF-inhomogeneity ensemble."""
    scales: list[float] = Field(default_factory=lambda: [1.0], min_length=1, description="Scale factors r_m")
    probs: list[float] = Field(default_factory=lambda: [1.0], min_length=1, description="Probabilities p_m")

    @field_validator("probs")
    @classmethod
    def validate_probs(cls, v: list[float], info: ValidationInfo) -> list[float]:
        scales = info.data.get("scales")
        if scales is not None and len(scales) != len(v):
            raise ValueError(f"probs needs {len(scales)} entries to match scales, got: {len(v)}")
        if any(p < 0 for p in v):
            raise ValueError("probabilities must be non-negative")
        total = math.fsum(v)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"probabilities must sum to 1, got: {total!r}")
        return v


class CpmgConfig(StrictModel):
    """Frozen CPMG π blocks embedded in the optimized sequence."""
    n_pulses: int = Field(default=6, ge=1, description="Number of π pulses")
    pi_amplitude_rad_s: float = Field(default=9941.0, gt=0, description="π-pulse amplitude on x")


# ──────────────────────────────────────────────
#  Optimizer
# ──────────────────────────────────────────────

class OptimizerConfig(StrictModel):
    """GRAPE / SAGRAPE / RSAGRAPE parameters and stopping rules."""
    algorithm: Algorithm = Field(default=Algorithm.GRAPE, description="grape | sagrape | rsagrape")
    label: str | None = Field(default=None, description="Display label, default derived from algorithm")
    epsilon: float | None = Field(
        default=None,
        ge=0,
        description="GRAPE step size; null selects one by a short sweep over epsilon_candidates",
    )
    epsilon_candidates: list[float] = Field(
        default_factory=lambda: [1e2, 1e3, 1e4],
        min_length=1,
        description="Step sizes tried by the sweep",
    )
    kappa: int = Field(default=10, ge=0, description="SA iterations per hybrid iteration")
    t0: float = Field(default=1.0, gt=0, description="Initial annealing temperature")
    gamma: float = Field(default=0.99, gt=0, lt=1, description="Cooling factor per SA iteration")
    neighbor_scale_hz: float = Field(
        default=50.0,
        gt=0,
        description="SA neighbor box half-width, 2π·neighbor_scale_hz rad/s",
    )
    zeta_hz: float = Field(default=0.0, ge=0, description="Dephasing noise range ζ in Hz (rsagrape)")
    noise_ensemble: int = Field(default=10, ge=1, description="Noise trajectories K per evaluation (rsagrape)")
    max_iters: int = Field(default=1000, ge=0, description="Outer iteration cap")
    max_evals: int | None = Field(default=None, ge=1, description="Evaluation cap (objective + gradient)")
    target_fidelity: float = Field(default=0.99, gt=0, le=1, description="Stop once reached")
    budget_s: float | None = Field(default=None, gt=0, description="Evaluation wall-clock budget")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Random seed")
    gradient: GradientMode = Field(default=GradientMode.EXACT, description="exact | first_order")
    cpmg: CpmgConfig | None = Field(default=None, description="Embed frozen CPMG π pulses")

    @model_validator(mode="after")
    def check_noise(self) -> "OptimizerConfig":
        if self.algorithm == Algorithm.RSAGRAPE and self.zeta_hz <= 0:
            raise ValueError("rsagrape requires zeta_hz > 0")
        return self

    @property
    def display_label(self) -> str:
        if self.label:
            return self.label
        name = self.algorithm.value.upper()
        if self.algorithm == Algorithm.SAGRAPE:
            return f"{name}-{self.kappa}"
        if self.algorithm == Algorithm.RSAGRAPE:
            return f"{name}-{self.zeta_hz:g}"
        return name


# ──────────────────────────────────────────────
#  Simulation harnesses
# ──────────────────────────────────────────────

class BenchmarkConfig(StrictModel):
    """Convergence comparison of several optimizers from shared random starts."""
    algorithms: list[OptimizerConfig] = Field(..., min_length=1)
    trials: int = Field(default=5, ge=1, description="Random initial guesses per algorithm")
    budget_s: float | None = Field(default=None, gt=0, description="Per-trial evaluation wall-clock budget")


class NoiseModelConfig(StrictModel):
    """Dephasing noise injected by the test bench."""
    kind: NoiseKind = Field(default=NoiseKind.ORNSTEIN_UHLENBECK, description="uniform | ou")
    zeta_hz: float = Field(default=0.0, ge=0, description="Uniform range (uniform)")
    sigma_hz: float = Field(default=0.0, ge=0, description="RMS amplitude (ou)")
    tau_c_s: float = Field(default=1e-3, gt=0, description="Correlation time (ou)")
    dt_s: float = Field(default=1e-4, gt=0, description="Free-evolution discretization step")


class NoiseSpecConfig(StrictModel):
    """CPMG noise spectroscopy."""
    deltas_s: list[float] = Field(..., min_length=1, description="Inter-π-pulse delays δ")
    noise: NoiseModelConfig = Field(default_factory=NoiseModelConfig)
    trials: int = Field(default=200, ge=10)
    max_echoes: int = Field(default=200, ge=2)
    pi_amplitude_rad_s: float = Field(default=2 * math.pi * 50e3, gt=0, description="Hard π-pulse amplitude")
    pi_segments: int = Field(default=1, ge=1, description="Segments of the hard π pulse")
    pi_pulse_file: str | None = Field(default=None, description="Shape file of a designed π pulse instead")

    @field_validator("deltas_s")
    @classmethod
    def validate_deltas(cls, v: list[float]) -> list[float]:
        if any(d <= 0 for d in v):
            raise ValueError("delays must be strictly positive")
        return v


class RobustnessConfig(StrictModel):
    """Singlet-order bench for several pulses across noise strengths."""
    pulses: dict[str, str] = Field(..., min_length=1, description="label → shape file")
    strengths_hz: list[float] = Field(..., min_length=1, description="Noise ranges tested")
    trials: int = Field(default=100, ge=1)

    @field_validator("strengths_hz")
    @classmethod
    def validate_strengths(cls, v: list[float]) -> list[float]:
        if any(s < 0 for s in v):
            raise ValueError("noise strengths must be non-negative")
        return v


# ──────────────────────────────────────────────
#  Run file
# ──────────────────────────────────────────────

class RunConfig(StrictModel):
    """A complete run description."""
    log_level: str = Field(default="INFO", description="DEBUG/INFO/WARNING/ERROR")
    output_dir: str = Field(default="runs/latest", description="Artifact directory")
    system: SystemConfig
    task: TaskConfig | None = None
    pulse: PulseConfig | None = None
    rfi: RfiConfig = Field(default_factory=RfiConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    benchmark: BenchmarkConfig | None = None
    noisespec: NoiseSpecConfig | None = None
    robustness: RobustnessConfig | None = None

    _base_dir: Path = PrivateAttr(default_factory=Path.cwd)

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        v = v.upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Invalid log level: {v}")
        return v

    @property
    def base_dir(self) -> Path:
        """Directory relative paths in the config resolve against."""
        return self._base_dir

    def resolve_path(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self._base_dir / path

    def require(self, *blocks: str) -> None:
        """Fail unless every named top-level block is present."""
        for block in blocks:
            if getattr(self, block) is None:
                raise ConfigError(f"{block}: block is required for this command", key=block)

    @classmethod
    def from_dict(cls, raw: dict[str, Any], base_dir: Path | None = None) -> "RunConfig":
        try:
            config = cls.model_validate(raw)
        except ValidationError as exc:
            raise _config_error(exc) from None
        if base_dir is not None:
            config._base_dir = base_dir
        return config

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        """Load configuration from a JSON file."""
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"Config file not found: {config_path}")
        try:
            raw = json.loads(config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{config_path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
            ) from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{config_path}: top level must be an object")
        return cls.from_dict(raw, base_dir=config_path.resolve().parent)

    def save(self, path: str | Path) -> None:
        """Persist configuration (all defaults resolved) to a JSON file."""
        Path(path).write_text(
            json.dumps(self.model_dump(mode="json"), indent=2, ensure_ascii=False),
            encoding="utf-8",
        )


def _config_error(exc: ValidationError) -> ConfigError:
    """Flatten pydantic errors into one message keyed by dotted paths."""
    lines: list[str] = []
    first_key: str | None = None
    for err in exc.errors():
        # Drop the union-member tags pydantic inserts for discriminated unions
        key = ".".join(str(part) for part in err["loc"] if part not in ("state", "gate"))
        first_key = first_key or key
        lines.append(f"{key}: {err['msg']}")
    return ConfigError("Invalid config: " + "; ".join(lines), key=first_key)
