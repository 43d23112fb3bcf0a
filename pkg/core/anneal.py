"""
core/anneal.py
~~~~~~~~~~~~~~
Simulated-annealing kernel used between GRAPE steps.

Responsibilities:
- Deterministic threshold Δ = −min[1, T·exp(δΦ/T)]; a move is kept when δΦ ≥ Δ
- Uniform box neighbors around the current pulse (frozen segments untouched)
- Geometric cooling T ← γT applied after every iteration, accepted or not
"""

from __future__ import annotations

import logging
import math
import sys
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from core.errors import AnnealError
from core.propagate import PulseSequence

logger = logging.getLogger("sagrape.anneal")

# Temperatures never reach zero; γ^i underflow is floored here
MIN_TEMPERATURE = sys.float_info.min

FidelityFn = Callable[[PulseSequence], float]


@dataclass(frozen=True)
class AnnealState:
    """
    Annealing schedule position.

    The temperature is derived as t0·γ^iteration rather than accumulated, so
    after κ cooling steps it equals T⁰γ^κ exactly.
    """

    t0: float
    gamma: float
    step_scale: float
    rng: np.random.Generator
    iteration: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t0) and self.t0 > 0):
            raise AnnealError(f"Initial temperature must be positive, got: {self.t0}")
        if not 0 < self.gamma < 1:
            raise AnnealError(f"Cooling factor must lie in (0, 1), got: {self.gamma}")
        if not self.step_scale > 0:
            raise AnnealError(f"Neighbor scale must be positive, got: {self.step_scale}")
        if self.iteration < 0:
            raise AnnealError(f"Iteration must be non-negative, got: {self.iteration}")

    @property
    def temperature(self) -> float:
        return max(self.t0 * self.gamma**self.iteration, MIN_TEMPERATURE)

    def cooled(self) -> "AnnealState":
        return replace(self, iteration=self.iteration + 1)


def threshold(delta_phi: float, temperature: float) -> float:
    """Δ = −min[1, T·exp(δΦ/T)], always within [−1, 0]."""
    if not temperature > 0:
        raise AnnealError(f"Temperature must be positive, got: {temperature}")
    x = delta_phi / temperature
    # T·e^x ≥ 1  ⇔  x ≥ −ln T; checked first so large x cannot overflow
    if x >= -math.log(temperature):
        return -1.0
    return -temperature * math.exp(x)


def accepts(delta_phi: float, temperature: float) -> bool:
    return delta_phi >= threshold(delta_phi, temperature)


def propose_neighbor(pulse: PulseSequence, scale: float, rng: np.random.Generator) -> PulseSequence:
    """Perturb every unfrozen amplitude by an independent Uniform[−scale, scale] draw."""
    if not scale > 0:
        raise AnnealError(f"Neighbor scale must be positive, got: {scale}")
    # Draws cover all segments so the stream does not depend on the freeze mask
    kicks = rng.uniform(-scale, scale, size=(2, pulse.n_segments))
    return pulse.with_amplitudes(pulse.amps_x + kicks[0], pulse.amps_y + kicks[1])


@dataclass(frozen=True, eq=False)
class SweepResult:
    pulse: PulseSequence
    state: AnnealState
    fidelity: float
    accepted: int


def sa_sweep(
    pulse: PulseSequence,
    fidelity_fn: FidelityFn,
    kappa: int,
    state: AnnealState,
    current_fidelity: float | None = None,
) -> SweepResult:
    """
    Run κ propose / evaluate / accept iterations from ``pulse``.

    Args:
        pulse: starting solution
        fidelity_fn: objective, called once per proposal
        kappa: iteration count
        state: schedule position and random stream
        current_fidelity: Φ(pulse) when already known, saves one evaluation

    Returns:
        SweepResult whose ``fidelity`` is fidelity_fn of the returned pulse
        (as measured when that pulse was accepted).
    """
    if kappa < 0:
        raise AnnealError(f"Iteration count must be non-negative, got: {kappa}")
    if kappa == 0:
        phi = fidelity_fn(pulse) if current_fidelity is None else current_fidelity
        return SweepResult(pulse=pulse, state=state, fidelity=phi, accepted=0)

    current = pulse
    phi = fidelity_fn(current) if current_fidelity is None else current_fidelity
    accepted = 0
    for _ in range(kappa):
        candidate = propose_neighbor(current, state.step_scale, state.rng)
        phi_candidate = fidelity_fn(candidate)
        if accepts(phi_candidate - phi, state.temperature):
            current, phi = candidate, phi_candidate
            accepted += 1
        state = state.cooled()

    logger.debug(
        "SA sweep: %d/%d accepted, T=%.3e, Φ=%.6f", accepted, kappa, state.temperature, phi
    )
    return SweepResult(pulse=current, state=state, fidelity=phi, accepted=accepted)
