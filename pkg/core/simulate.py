"""
core/simulate.py
~~~~~~~~~~~~~~~~
Monte-Carlo dephasing bench.

Responsibilities:
- Noise models: i.i.d. uniform per step, or Ornstein-Uhlenbeck (exact update)
- Singlet-order robustness of preparation pulses under global z noise
- CPMG echo trains, single-exponential T2 fits, and the S = π²/(4T2) spectrum
- Convergence benchmark of several optimizers from shared random starts
- CSV writers for every harness
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from core.errors import FitError, PulseError
from core.hybrid import OptimizationResult, choose_step_size, optimize
from core.models import NoiseKind, NoiseModelConfig, OptimizerConfig, PulseConfig
from core.objective import ControlTask, fidelity
from core.propagate import NoiseTrajectory, PulseSequence, RfiDistribution, diagonalize
from core.spinsys import SpinSystem
from core.tasks import lls, thermal_z

logger = logging.getLogger("sagrape.simulate")

FIT_FLOOR = 0.05
# Decay slower than this is reported as "no decay"
T2_CAP_S = 1e6


# ──────────────────────────────────────────────
#  Noise models
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class NoiseModel:
    """
    Global dephasing field η(t) in Hz, piecewise constant over simulation steps.

    uniform: η ~ U[−ζ/2, ζ/2], independent per step
    ou:      stationary Ornstein-Uhlenbeck, rms σ, correlation time τ_c
    """

    kind: NoiseKind = NoiseKind.ORNSTEIN_UHLENBECK
    zeta_hz: float = 0.0
    sigma_hz: float = 0.0
    tau_c_s: float = 1e-3
    dt_s: float = 1e-4

    def __post_init__(self) -> None:
        if self.zeta_hz < 0 or self.sigma_hz < 0:
            raise ValueError("Noise amplitudes must be non-negative")
        if not (self.tau_c_s > 0 and self.dt_s > 0):
            raise ValueError("Correlation time and step must be positive")

    @classmethod
    def from_config(cls, config: NoiseModelConfig) -> "NoiseModel":
        return cls(
            kind=config.kind,
            zeta_hz=config.zeta_hz,
            sigma_hz=config.sigma_hz,
            tau_c_s=config.tau_c_s,
            dt_s=config.dt_s,
        )

    def initial(self, trials: int, rng: np.random.Generator) -> NDArray[np.float64]:
        if self.kind == NoiseKind.UNIFORM:
            return rng.uniform(-self.zeta_hz / 2, self.zeta_hz / 2, size=trials)
        return self.sigma_hz * rng.standard_normal(trials)

    def advance(self, values: NDArray[np.float64], step_s: float, rng: np.random.Generator) -> NDArray[np.float64]:
        """Field values one step of length ``step_s`` later."""
        if self.kind == NoiseKind.UNIFORM:
            return rng.uniform(-self.zeta_hz / 2, self.zeta_hz / 2, size=values.shape)
        decay = math.exp(-step_s / self.tau_c_s)
        kick = self.sigma_hz * math.sqrt(1.0 - decay * decay)
        return values * decay + kick * rng.standard_normal(values.shape)

    def sample(self, n_steps: int, step_s: float, trials: int, rng: np.random.Generator) -> NDArray[np.float64]:
        """(trials, n_steps) array of field values on an equidistant grid."""
        out = np.empty((trials, n_steps))
        values = self.initial(trials, rng)
        for k in range(n_steps):
            out[:, k] = values
            values = self.advance(values, step_s, rng)
        return out


def lorentzian_spectrum(sigma_hz: float, tau_c_s: float, nu_hz: float | NDArray) -> float | NDArray:
    """
    S(2πν) of the frequency noise 2πη(t) for an OU field η.

    Convention S(ω) = ∫⟨δω(0)δω(t)⟩ e^{−iωt} dt, in s⁻¹.
    """
    omega = 2 * np.pi * np.asarray(nu_hz, dtype=float)
    s = (2 * np.pi) ** 2 * 2 * sigma_hz**2 * tau_c_s / (1 + (omega * tau_c_s) ** 2)
    return float(s) if np.ndim(s) == 0 else s


# ──────────────────────────────────────────────
#  Singlet-order robustness bench
# ──────────────────────────────────────────────

def singlet_task(n: int) -> ControlTask:
    """Σ I_z → −I_1·I_2, the observable of the robustness bench."""
    return ControlTask.state_transfer(thermal_z(n), lls(n), label="thermal_z → lls")


def _order_for_trial(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    strength_hz: float,
    unit_noise: NDArray,
) -> float:
    noise = [NoiseTrajectory(etas=unit_noise * strength_hz, zeta=strength_hz)]
    return fidelity(sys, pulse, task, rfi, noise)


def singlet_order_samples(
    sys: SpinSystem,
    pulse: PulseSequence,
    strength_hz: float,
    trials: int,
    rng: np.random.Generator,
    rfi: RfiDistribution | None = None,
    task: ControlTask | None = None,
    executor: Executor | None = None,
) -> NDArray[np.float64]:
    """
    Normalized singlet order of each trial.

    Each trial draws a fresh per-segment field η(j) = strength·u(j), u ~ U[−½, ½].
    Only the preparation is simulated: a global z field commutes with I_1·I_2,
    so noise during storage leaves the overlap unchanged.
    """
    if trials < 1:
        raise ValueError(f"trials must be ≥ 1, got: {trials}")
    if strength_hz < 0:
        raise ValueError(f"Noise strength must be non-negative, got: {strength_hz}")
    rfi = rfi or RfiDistribution()
    task = task or singlet_task(sys.n)

    if strength_hz == 0:
        value = fidelity(sys, pulse, task, rfi)
        return np.full(trials, value)

    unit = rng.uniform(-0.5, 0.5, size=(trials, pulse.n_segments))
    kernel = partial(_order_for_trial, sys, pulse, task, rfi, strength_hz)
    values = list(executor.map(kernel, unit)) if executor else [kernel(u) for u in unit]
    return np.asarray(values)


def singlet_order(
    sys: SpinSystem,
    pulse: PulseSequence,
    strength_hz: float,
    trials: int,
    seed: int,
    rfi: RfiDistribution | None = None,
    executor: Executor | None = None,
) -> float:
    """Mean singlet order over ``trials`` noise realizations."""
    rng = np.random.default_rng(seed)
    return float(np.mean(singlet_order_samples(sys, pulse, strength_hz, trials, rng, rfi, executor=executor)))


@dataclass(frozen=True)
class RobustnessRow:
    pulse_label: str
    noise_strength: float
    mean_order: float
    stderr: float
    trials: int


def _stderr(values: NDArray) -> float:
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def robustness_sweep(
    sys: SpinSystem,
    pulses: dict[str, PulseSequence],
    strengths_hz: Sequence[float],
    trials: int,
    seed: int,
    rfi: RfiDistribution | None = None,
    executor: Executor | None = None,
) -> list[RobustnessRow]:
    """
    Singlet order of every pulse at every strength.

    All pulses at one strength see the same unit noise draws when their
    segment counts match.
    """
    seeds = np.random.SeedSequence(seed).spawn(len(strengths_hz))
    rows: list[RobustnessRow] = []
    for strength, child in zip(strengths_hz, seeds):
        for label, pulse in pulses.items():
            rng = np.random.default_rng(child)
            values = singlet_order_samples(sys, pulse, strength, trials, rng, rfi, executor=executor)
            row = RobustnessRow(label, float(strength), float(np.mean(values)), _stderr(values), trials)
            logger.info(
                "Robustness %-16s ζ=%8.3g Hz: order %.5f ± %.5f", label, strength, row.mean_order, row.stderr
            )
            rows.append(row)
    return rows


# ──────────────────────────────────────────────
#  CPMG spectroscopy
# ──────────────────────────────────────────────

def hard_pi_pulse(amplitude: float, segments: int = 1) -> PulseSequence:
    """x-phase rectangular π pulse of the given amplitude, split into ``segments``."""
    if not amplitude > 0:
        raise PulseError(f"π-pulse amplitude must be positive, got: {amplitude}")
    tau = math.pi / (amplitude * segments)
    return PulseSequence(tau=tau, amps_x=np.full(segments, amplitude), amps_y=np.zeros(segments))


def _free_steps(gap_s: float, dt_s: float) -> tuple[int, float]:
    count = max(1, math.ceil(gap_s / dt_s - 1e-9))
    return count, gap_s / count


def cpmg_decay(
    sys: SpinSystem,
    pi_pulse: PulseSequence,
    delta_s: float,
    noise: NoiseModel,
    trials: int,
    max_echoes: int,
    rng: np.random.Generator,
    floor: float = FIT_FLOOR,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Transverse magnetization after each echo of a CPMG train.

    Each echo is free(g) · π · free(g) with g = (δ − t_π)/2, so echoes are δ
    apart centre to centre. The state starts as H_x and is read out along H_x,
    averaged over trials. The train stops early once the envelope drops below
    half the fit floor.

    Returns:
        (times, envelope), both starting with the t = 0 point.
    """
    t_pi = pi_pulse.duration
    if not delta_s > t_pi:
        raise PulseError(f"Delay {delta_s:g}s must exceed the π-pulse duration {t_pi:g}s")
    if trials < 10:
        raise ValueError(f"trials must be ≥ 10, got: {trials}")

    hx, _ = sys.controls
    hz = sys.dephasing
    drift_diag = np.real(np.diag(sys.drift))
    hz_diag = np.real(np.diag(hz))
    norm = float(np.real(np.vdot(hx, hx)))

    n_free, free_step = _free_steps((delta_s - t_pi) / 2, noise.dt_s)
    rho = np.broadcast_to(hx, (trials,) + hx.shape).astype(complex)
    field_hz = noise.initial(trials, rng)

    def free(rho: NDArray, field_hz: NDArray) -> tuple[NDArray, NDArray]:
        for _ in range(n_free):
            energies = drift_diag[None, :] + 2 * math.pi * field_hz[:, None] * hz_diag[None, :]
            phases = np.exp(-1j * free_step * energies)
            rho = rho * (phases[:, :, None] * phases.conj()[:, None, :])
            field_hz = noise.advance(field_hz, free_step, rng)
        return rho, field_hz

    def refocus(rho: NDArray, field_hz: NDArray) -> tuple[NDArray, NDArray]:
        for j in range(pi_pulse.n_segments):
            h = sys.drift + pi_pulse.amps_x[j] * hx + pi_pulse.amps_y[j] * sys.controls[1]
            stack = h[None] + (2 * math.pi * field_hz)[:, None, None] * hz[None]
            u = diagonalize(stack, pi_pulse.tau).propagators
            rho = u @ rho @ np.swapaxes(u, -1, -2).conj()
            field_hz = noise.advance(field_hz, pi_pulse.tau, rng)
        return rho, field_hz

    times = [0.0]
    envelope = [1.0]
    for echo in range(1, max_echoes + 1):
        rho, field_hz = free(rho, field_hz)
        rho, field_hz = refocus(rho, field_hz)
        rho, field_hz = free(rho, field_hz)
        signal = float(np.mean(np.real(np.einsum("kl,tlk->t", hx, rho)))) / norm
        times.append(echo * delta_s)
        envelope.append(signal)
        if signal < floor / 2:
            break

    logger.debug("CPMG δ=%gs: %d echoes, last envelope %.4f", delta_s, len(times) - 1, envelope[-1])
    return np.asarray(times), np.asarray(envelope)


@dataclass(frozen=True)
class DecayFit:
    t2_s: float
    amplitude: float
    fit_ok: bool
    points: int


def fit_t2(times: NDArray, envelope: NDArray, floor: float = FIT_FLOOR) -> DecayFit:
    """
    Fit A·exp(−t/T2) by linear least squares on the log-envelope.

    The envelope is normalized to its first point; points below ``floor`` are
    dropped. A flat or rising envelope yields T2 = inf with ``fit_ok`` False.
    """
    times = np.asarray(times, dtype=float)
    envelope = np.asarray(envelope, dtype=float)
    if times.shape != envelope.shape or times.size == 0:
        raise FitError("times and envelope must be non-empty and equally long")
    if not envelope[0] > 0:
        raise FitError(f"First envelope point must be positive, got: {envelope[0]}")

    normalized = envelope / envelope[0]
    keep = normalized >= floor
    if int(keep.sum()) < 2:
        raise FitError(f"Fewer than 2 points above the {floor:.0%} floor")

    slope, intercept = np.polyfit(times[keep], np.log(normalized[keep]), 1)
    amplitude = float(math.exp(intercept))
    if slope >= -1.0 / T2_CAP_S:
        return DecayFit(t2_s=math.inf, amplitude=amplitude, fit_ok=False, points=int(keep.sum()))
    return DecayFit(t2_s=float(-1.0 / slope), amplitude=amplitude, fit_ok=True, points=int(keep.sum()))


def cpmg_t2(
    sys: SpinSystem,
    pi_pulse: PulseSequence,
    delta_s: float,
    noise: NoiseModel,
    trials: int,
    max_echoes: int,
    seed: int,
) -> float:
    """Fitted T2 (s) of one CPMG train; inf when the envelope does not decay."""
    rng = np.random.default_rng(seed)
    times, envelope = cpmg_decay(sys, pi_pulse, delta_s, noise, trials, max_echoes, rng)
    return fit_t2(times, envelope).t2_s


@dataclass(frozen=True)
class SpectroscopyRow:
    delta_s: float
    nu_hz: float
    t2_s: float
    s_per_s: float
    fit_ok: bool
    echoes: int

    @classmethod
    def from_t2(cls, delta_s: float, t2_s: float, fit_ok: bool, echoes: int) -> "SpectroscopyRow":
        s = math.pi**2 / (4 * t2_s) if t2_s > 0 else math.nan
        return cls(delta_s=delta_s, nu_hz=1 / (2 * delta_s), t2_s=t2_s, s_per_s=s, fit_ok=fit_ok, echoes=echoes)


@dataclass
class SpectroscopyResult:
    rows: list[SpectroscopyRow]
    trials: int
    max_echoes: int
    noise: NoiseModel


def _spectroscopy_row(
    sys: SpinSystem,
    pi_pulse: PulseSequence,
    noise: NoiseModel,
    trials: int,
    max_echoes: int,
    item: tuple[float, np.random.SeedSequence],
) -> SpectroscopyRow:
    delta_s, child = item
    rng = np.random.default_rng(child)
    times, envelope = cpmg_decay(sys, pi_pulse, delta_s, noise, trials, max_echoes, rng)
    try:
        fit = fit_t2(times, envelope)
    except FitError as exc:
        logger.warning("T2 fit failed at δ=%gs: %s", delta_s, exc)
        return SpectroscopyRow.from_t2(delta_s, math.nan, False, times.size - 1)
    return SpectroscopyRow.from_t2(delta_s, fit.t2_s, fit.fit_ok, times.size - 1)


def noise_spectrum(
    sys: SpinSystem,
    pi_pulse: PulseSequence,
    deltas_s: Sequence[float],
    noise: NoiseModel,
    trials: int,
    max_echoes: int,
    seed: int,
    executor: Executor | None = None,
) -> SpectroscopyResult:
    """One CPMG train per δ; failed fits become flagged rows."""
    if not deltas_s:
        raise ValueError("At least one delay is required")
    if any(d <= 0 for d in deltas_s):
        raise ValueError("Delays must be strictly positive")
    items = list(zip(deltas_s, np.random.SeedSequence(seed).spawn(len(deltas_s))))
    kernel = partial(_spectroscopy_row, sys, pi_pulse, noise, trials, max_echoes)
    rows = list(executor.map(kernel, items)) if executor else [kernel(item) for item in items]
    for row in rows:
        logger.info(
            "CPMG δ=%8.3g s  ν=%8.3g Hz  T2=%10.4g s  S=%10.4g s⁻¹%s",
            row.delta_s, row.nu_hz, row.t2_s, row.s_per_s, "" if row.fit_ok else "  (flagged)",
        )
    return SpectroscopyResult(rows=rows, trials=trials, max_echoes=max_echoes, noise=noise)


# ──────────────────────────────────────────────
#  Convergence benchmark
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class CurvePoint:
    algorithm: str
    iteration: int
    mean_infidelity: float
    stderr: float
    mean_wallclock_s: float
    mean_evals: float


@dataclass
class BenchmarkResult:
    runs: dict[str, list[OptimizationResult]] = field(default_factory=dict)
    curves: dict[str, list[CurvePoint]] = field(default_factory=dict)


def _trial_seed(child: np.random.SeedSequence) -> int:
    return int(child.generate_state(1, dtype=np.uint64)[0])


def convergence_curve(label: str, results: Sequence[OptimizationResult]) -> list[CurvePoint]:
    """
    Iteration-indexed mean infidelity 1 − Φ/Φ_max across trials.

    Trials that stopped early hold their last value.
    """
    length = max(len(r.trace) for r in results)
    curve = []
    for i in range(length):
        points = [r.trace[min(i, len(r.trace) - 1)] for r in results]
        infid = np.array([1.0 - p.fidelity / r.attainable for p, r in zip(points, results)])
        curve.append(
            CurvePoint(
                algorithm=label,
                iteration=i,
                mean_infidelity=float(np.mean(infid)),
                stderr=_stderr(infid),
                mean_wallclock_s=float(np.mean([p.wallclock_s for p in points])),
                mean_evals=float(np.mean([p.evaluations for p in points])),
            )
        )
    return curve


def benchmark_convergence(
    sys: SpinSystem,
    task: ControlTask,
    rfi: RfiDistribution,
    pulse_config: PulseConfig,
    algorithms: Sequence[OptimizerConfig],
    trials: int,
    budget_s: float | None,
    seed: int,
    executor: Executor | None = None,
    stop_check: Callable[[], bool] | None = None,
) -> BenchmarkResult:
    """
    Run every algorithm from the same ``trials`` random initial pulses.

    Trials run one after another so evaluation timings stay comparable; the
    executor only fans out ensemble members. A step size left open is chosen
    once per algorithm on the first initial pulse.
    """
    if trials < 1:
        raise ValueError(f"trials must be ≥ 1, got: {trials}")
    pulse_seeds, run_seeds = np.random.SeedSequence(seed).spawn(2)
    scale = 2 * math.pi * pulse_config.init_scale_hz
    starts = [
        PulseSequence.random(pulse_config.segments, pulse_config.tau, scale, np.random.default_rng(child))
        for child in pulse_seeds.spawn(trials)
    ]
    trial_seeds = [_trial_seed(child) for child in run_seeds.spawn(trials)]

    result = BenchmarkResult()
    for algo in algorithms:
        label = algo.display_label
        if label in result.runs:
            raise ValueError(f"Duplicate algorithm label: {label}")
        if algo.epsilon is None:
            eps = choose_step_size(
                sys, task, rfi, starts[0], algo.epsilon_candidates,
                amp_max=pulse_config.amp_max_rad_s, executor=executor, mode=algo.gradient,
            )
            algo = algo.model_copy(update={"epsilon": eps})

        runs = []
        for trial, (pulse0, trial_seed) in enumerate(zip(starts, trial_seeds)):
            logger.info("Benchmark %s trial %d/%d", label, trial + 1, trials)
            run = optimize(
                sys, task, rfi, pulse0, algo.model_copy(update={"seed": trial_seed}),
                amp_max=pulse_config.amp_max_rad_s, executor=executor,
                stop_check=stop_check, budget_s=budget_s,
            )
            runs.append(run)
        result.runs[label] = runs
        result.curves[label] = convergence_curve(label, runs)
    return result


# ──────────────────────────────────────────────
#  CSV output
# ──────────────────────────────────────────────

def _fmt(value: float) -> str:
    return repr(float(value))


def _write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return out


CONVERGENCE_HEADER = ("algorithm", "trial", "iteration", "evals", "wallclock_s", "fidelity")


def write_convergence_csv(path: str | Path, result: BenchmarkResult) -> Path:
    rows = (
        (label, trial, p.iteration, p.evaluations, _fmt(p.wallclock_s), _fmt(p.fidelity))
        for label, runs in result.runs.items()
        for trial, run in enumerate(runs)
        for p in run.trace
    )
    return _write_csv(path, CONVERGENCE_HEADER, rows)


def write_curve_csv(path: str | Path, result: BenchmarkResult) -> Path:
    rows = (
        (c.algorithm, c.iteration, _fmt(c.mean_infidelity), _fmt(c.stderr), _fmt(c.mean_evals), _fmt(c.mean_wallclock_s))
        for curve in result.curves.values()
        for c in curve
    )
    return _write_csv(
        path, ("algorithm", "iteration", "mean_infidelity", "stderr", "mean_evals", "mean_wallclock_s"), rows
    )


def write_spectroscopy_csv(path: str | Path, result: SpectroscopyResult) -> Path:
    rows = (
        (_fmt(r.delta_s), _fmt(r.nu_hz), _fmt(r.t2_s), _fmt(r.s_per_s), str(r.fit_ok).lower(), r.echoes)
        for r in result.rows
    )
    return _write_csv(path, ("delta_s", "nu_hz", "t2_s", "s_per_s", "fit_ok", "echoes"), rows)


def write_robustness_csv(path: str | Path, rows: Sequence[RobustnessRow]) -> Path:
    data = (
        (r.pulse_label, _fmt(r.noise_strength), _fmt(r.mean_order), _fmt(r.stderr), r.trials) for r in rows
    )
    return _write_csv(path, ("pulse_label", "noise_strength", "mean_order", "stderr", "trials"), data)

