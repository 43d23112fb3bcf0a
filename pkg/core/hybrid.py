"""
core/hybrid.py
~~~~~~~~~~~~~~
Full optimization runs: GRAPE, SAGRAPE and RSAGRAPE.

One outer iteration:
- GRAPE:    gradient at the current pulse, one ascent step
- SAGRAPE:  κ annealing iterations, gradient at the annealed pulse, one step
- RSAGRAPE: SAGRAPE where every evaluation averages over K fresh dephasing
            trajectories η(j) ~ U[−ζ/2, ζ/2]

Also places frozen CPMG π blocks inside a sequence. Wall-clock figures count
evaluation time only, so algorithms are compared on equal terms.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from core.anneal import AnnealState, sa_sweep
from core.errors import NumericalError, PulseError
from core.models import Algorithm, GradientMode, OptimizerConfig, StopReason, TaskKind
from core.objective import ControlTask, GradientField, fidelity, fidelity_and_gradient, grape_step
from core.propagate import NoiseTrajectory, PulseSequence, RfiDistribution
from core.spinsys import SpinSystem

logger = logging.getLogger("sagrape.hybrid")

STEP_SWEEP_ITERATIONS = 5


# ──────────────────────────────────────────────
#  Random streams
# ──────────────────────────────────────────────

class SeedStreams(NamedTuple):
    pulse: np.random.Generator
    anneal: np.random.Generator
    noise: np.random.Generator


def seed_streams(seed: int) -> SeedStreams:
    """Independent generators for the initial guess, SA proposals and noise."""
    children = np.random.SeedSequence(seed).spawn(3)
    return SeedStreams(*(np.random.default_rng(child) for child in children))


# ──────────────────────────────────────────────
#  CPMG blocks
# ──────────────────────────────────────────────

def cpmg_block_starts(n_segments: int, n_pulses: int, block: int) -> list[int]:
    """0-based first segment of each π block, centred at odd multiples of N/(2n)."""
    starts = []
    for k in range(1, n_pulses + 1):
        centre = (2 * k - 1) / (2 * n_pulses) * n_segments
        starts.append(math.floor(centre - block / 2 + 0.5))
    return starts


def freeze_cpmg(pulse: PulseSequence, n_pulses: int, pi_amplitude: float) -> PulseSequence:
    """
    Overwrite and freeze ``n_pulses`` blocks of (ω_x = pi_amplitude, ω_y = 0).

    Each block spans round(π / (pi_amplitude·τ)) segments.
    """
    if n_pulses < 1:
        raise PulseError(f"CPMG needs at least one π pulse, got: {n_pulses}")
    if not pi_amplitude > 0:
        raise PulseError(f"π-pulse amplitude must be positive, got: {pi_amplitude}")
    block = round(math.pi / (pi_amplitude * pulse.tau))
    if block < 1:
        raise PulseError(
            f"π pulse at {pi_amplitude:g} rad/s lasts {math.pi / pi_amplitude:.3g}s, "
            f"shorter than half a segment ({pulse.tau:.3g}s)"
        )

    n = pulse.n_segments
    indices: list[int] = []
    prev_end = 0
    for k, start in enumerate(cpmg_block_starts(n, n_pulses, block), start=1):
        end = start + block
        if start < 0 or end > n:
            raise PulseError(f"CPMG block {k} spans segments {start + 1}-{end}, outside 1-{n}")
        if start < prev_end:
            raise PulseError(f"CPMG block {k} overlaps block {k - 1}")
        indices.extend(range(start, end))
        prev_end = end

    angle_error = pi_amplitude * block * pulse.tau - math.pi
    logger.info(
        "Froze %d CPMG π blocks of %d segment(s); rotation error %.3e rad", n_pulses, block, angle_error
    )
    return pulse.with_segments(indices, pi_amplitude, 0.0, freeze=True)


# ──────────────────────────────────────────────
#  Objective with bookkeeping
# ──────────────────────────────────────────────

class ObjectiveEvaluator:
    """
    Counts and times fidelity / gradient evaluations.

    With ``zeta > 0`` every call draws ``ensemble`` fresh noise trajectories.
    """

    def __init__(
        self,
        sys: SpinSystem,
        task: ControlTask,
        rfi: RfiDistribution,
        zeta: float = 0.0,
        ensemble: int = 1,
        rng: np.random.Generator | None = None,
        executor: Executor | None = None,
        mode: GradientMode = GradientMode.EXACT,
    ):
        if zeta > 0 and rng is None:
            raise ValueError("A noise generator is required when zeta > 0")
        self.sys = sys
        self.task = task
        self.rfi = rfi
        self.zeta = zeta
        self.ensemble = ensemble
        self.rng = rng
        self.executor = executor
        self.mode = mode
        self.evaluations = 0
        self.elapsed = 0.0

    def _noise(self, n_segments: int) -> list[NoiseTrajectory] | None:
        if self.zeta <= 0:
            return None
        return [NoiseTrajectory.sample(n_segments, self.zeta, self.rng) for _ in range(self.ensemble)]  # type: ignore[arg-type]

    def fidelity(self, pulse: PulseSequence) -> float:
        start = time.perf_counter()
        try:
            return fidelity(self.sys, pulse, self.task, self.rfi, self._noise(pulse.n_segments), self.executor)
        finally:
            self.evaluations += 1
            self.elapsed += time.perf_counter() - start

    def fidelity_and_gradient(self, pulse: PulseSequence) -> tuple[float, GradientField]:
        start = time.perf_counter()
        try:
            return fidelity_and_gradient(
                self.sys, pulse, self.task, self.rfi, self._noise(pulse.n_segments), self.executor, self.mode
            )
        finally:
            self.evaluations += 1
            self.elapsed += time.perf_counter() - start


# ──────────────────────────────────────────────
#  Results
# ──────────────────────────────────────────────

@dataclass(frozen=True)
class TracePoint:
    iteration: int
    evaluations: int
    wallclock_s: float
    fidelity: float


@dataclass
class OptimizationResult:
    label: str
    algorithm: Algorithm
    best_pulse: PulseSequence
    trace: list[TracePoint]
    final_fidelity: float
    attainable: float
    stop_reason: StopReason
    epsilon: float
    seed: int
    config: OptimizerConfig
    iterations: int = 0
    evaluations: int = 0
    elapsed_s: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def relative_fidelity(self) -> float:
        """Final fidelity as a fraction of the attainable maximum."""
        return self.final_fidelity / self.attainable

    def summary(self) -> dict:
        return {
            "label": self.label,
            "algorithm": self.algorithm.value,
            "final_fidelity": self.final_fidelity,
            "attainability_bound": self.attainable,
            "relative_fidelity": self.relative_fidelity,
            "stop_reason": self.stop_reason.value,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "evaluation_time_s": self.elapsed_s,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "optimizer": self.config.model_dump(mode="json"),
            **self.extras,
        }


# ──────────────────────────────────────────────
#  Step size
# ──────────────────────────────────────────────

def _grape_trial(
    evaluator: ObjectiveEvaluator,
    pulse: PulseSequence,
    epsilon: float,
    iterations: int,
    amp_max: float | None,
) -> float:
    phi, grad = evaluator.fidelity_and_gradient(pulse)
    for _ in range(iterations):
        pulse = grape_step(pulse, grad, epsilon, amp_max)
        phi, grad = evaluator.fidelity_and_gradient(pulse)
    return phi


def choose_step_size(
    sys: SpinSystem,
    task: ControlTask,
    rfi: RfiDistribution,
    pulse0: PulseSequence,
    candidates: list[float],
    iterations: int = STEP_SWEEP_ITERATIONS,
    amp_max: float | None = None,
    executor: Executor | None = None,
    mode: GradientMode = GradientMode.EXACT,
) -> float:
    """Short noiseless GRAPE trial run per candidate ε; the highest fidelity wins, ties go to the first."""
    if not candidates:
        raise ValueError("No step-size candidates given")
    best_eps, best_phi = candidates[0], -math.inf
    for eps in candidates:
        evaluator = ObjectiveEvaluator(sys, task, rfi, executor=executor, mode=mode)
        try:
            phi = _grape_trial(evaluator, pulse0, eps, iterations, amp_max)
        except NumericalError as exc:
            logger.warning("Step size %g diverged during the sweep: %s", eps, exc)
            continue
        logger.debug("Step size %g: Φ=%.6f after %d iterations", eps, phi, iterations)
        if phi > best_phi:
            best_eps, best_phi = eps, phi
    logger.info("Selected step size ε=%g (Φ=%.6f after %d trial iterations)", best_eps, best_phi, iterations)
    return best_eps


# ──────────────────────────────────────────────
#  Optimization loop
# ──────────────────────────────────────────────

def _stop_reason(
    config: OptimizerConfig,
    phi: float,
    goal: float,
    iteration: int,
    evaluator: ObjectiveEvaluator,
    budget_s: float | None,
    stop_check: Callable[[], bool] | None,
) -> StopReason | None:
    if phi >= goal:
        return StopReason.TARGET_REACHED
    if stop_check is not None and stop_check():
        return StopReason.INTERRUPTED
    if iteration >= config.max_iters:
        return StopReason.ITERATION_CAP
    if config.max_evals is not None and evaluator.evaluations >= config.max_evals:
        return StopReason.EVALUATION_CAP
    if budget_s is not None and evaluator.elapsed >= budget_s:
        return StopReason.TIME_BUDGET
    return None


def optimize(
    sys: SpinSystem,
    task: ControlTask,
    rfi: RfiDistribution,
    pulse0: PulseSequence,
    config: OptimizerConfig,
    *,
    amp_max: float | None = None,
    executor: Executor | None = None,
    stop_check: Callable[[], bool] | None = None,
    on_record: Callable[[TracePoint], None] | None = None,
    budget_s: float | None = None,
) -> OptimizationResult:
    """
    Run the configured algorithm from ``pulse0``.

    Args:
        amp_max: optional per-quadrature clamp applied after every step
        executor: fans ensemble members out; None evaluates inline
        stop_check: polled once per outer iteration; True stops as "interrupted"
        on_record: receives every trace point as soon as it is recorded
        budget_s: overrides ``config.budget_s``
    """
    streams = seed_streams(config.seed)
    budget = budget_s if budget_s is not None else config.budget_s
    label = config.display_label

    pulse = freeze_cpmg(pulse0, config.cpmg.n_pulses, config.cpmg.pi_amplitude_rad_s) if config.cpmg else pulse0
    if config.epsilon is None:
        epsilon = choose_step_size(
            sys, task, rfi, pulse, config.epsilon_candidates, amp_max=amp_max, executor=executor, mode=config.gradient
        )
    else:
        epsilon = config.epsilon

    noisy = config.algorithm == Algorithm.RSAGRAPE
    evaluator = ObjectiveEvaluator(
        sys,
        task,
        rfi,
        zeta=config.zeta_hz if noisy else 0.0,
        ensemble=config.noise_ensemble,
        rng=streams.noise,
        executor=executor,
        mode=config.gradient,
    )
    kappa = 0 if config.algorithm == Algorithm.GRAPE else config.kappa
    anneal = AnnealState(
        t0=config.t0,
        gamma=config.gamma,
        step_scale=2 * math.pi * config.neighbor_scale_hz,
        rng=streams.anneal,
    )
    bound = task.attainable()
    goal = config.target_fidelity * bound if task.kind == TaskKind.STATE else config.target_fidelity

    logger.info(
        "%s start: N=%d, ε=%g, κ=%d, ζ=%g Hz, seed=%d, goal Φ≥%.6f",
        label, pulse.n_segments, epsilon, kappa, config.zeta_hz if noisy else 0.0, config.seed, goal,
    )

    trace: list[TracePoint] = []

    def record(iteration: int, phi: float) -> None:
        point = TracePoint(iteration, evaluator.evaluations, evaluator.elapsed, phi)
        trace.append(point)
        if on_record is not None:
            on_record(point)

    grad: GradientField | None = None
    if kappa == 0:
        phi, grad = evaluator.fidelity_and_gradient(pulse)
    else:
        phi = evaluator.fidelity(pulse)
    best_phi, best_pulse = phi, pulse
    record(0, phi)

    iteration = 0
    while (reason := _stop_reason(config, phi, goal, iteration, evaluator, budget, stop_check)) is None:
        iteration += 1
        if kappa > 0:
            sweep = sa_sweep(pulse, evaluator.fidelity, kappa, anneal, current_fidelity=phi)
            pulse, anneal = sweep.pulse, sweep.state
            _, grad = evaluator.fidelity_and_gradient(pulse)

        pulse = grape_step(pulse, grad, epsilon, amp_max)  # type: ignore[arg-type]
        if kappa == 0:
            phi, grad = evaluator.fidelity_and_gradient(pulse)
        else:
            phi = evaluator.fidelity(pulse)
        if phi > best_phi:
            best_phi, best_pulse = phi, pulse
        record(iteration, phi)

        if iteration % 50 == 0:
            logger.debug("%s iteration %d: Φ=%.6f (best %.6f)", label, iteration, phi, best_phi)

    final = fidelity(sys, best_pulse, task, rfi, executor=executor)
    logger.info(
        "%s stop: %s after %d iterations / %d evaluations (%.2fs); final Φ=%.6f of %.6f attainable",
        label, reason.value, iteration, evaluator.evaluations, evaluator.elapsed, final, bound,
    )
    return OptimizationResult(
        label=label,
        algorithm=config.algorithm,
        best_pulse=best_pulse,
        trace=trace,
        final_fidelity=final,
        attainable=bound,
        stop_reason=reason,
        epsilon=epsilon,
        seed=config.seed,
        config=config,
        iterations=iteration,
        evaluations=evaluator.evaluations,
        elapsed_s=evaluator.elapsed,
    )


def _require_algorithm(config: OptimizerConfig, algorithm: Algorithm) -> None:
    if config.algorithm != algorithm:
        raise ValueError(f"Expected algorithm {algorithm.value}, got: {config.algorithm.value}")


def optimize_grape(sys, task, rfi, pulse0, config: OptimizerConfig, **kwargs) -> OptimizationResult:
    _require_algorithm(config, Algorithm.GRAPE)
    return optimize(sys, task, rfi, pulse0, config, **kwargs)


def optimize_sagrape(sys, task, rfi, pulse0, config: OptimizerConfig, **kwargs) -> OptimizationResult:
    _require_algorithm(config, Algorithm.SAGRAPE)
    return optimize(sys, task, rfi, pulse0, config, **kwargs)


def optimize_rsagrape(sys, task, rfi, pulse0, config: OptimizerConfig, **kwargs) -> OptimizationResult:
    _require_algorithm(config, Algorithm.RSAGRAPE)
    return optimize(sys, task, rfi, pulse0, config, **kwargs)
