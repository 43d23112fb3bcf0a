"""
core/tasks.py
~~~~~~~~~~~~~
Named control targets, reference spin systems, and builders that turn config
blocks into engine objects.

Named states:  thermal_z (Σ_k I_kz), lls (−I_1·I_2)
Named gates:   cnot (control spin 1, target spin 2), selective_pi (π about x/y on one spin)
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Callable

import numpy as np

from core.errors import ConfigError, OperatorError
from core.models import GateTaskConfig, Matrix, PulseConfig, PulseInit, StateTaskConfig
from core.objective import ControlTask
from core.propagate import PulseSequence
from core.shapes import import_pulse
from core.spinsys import Operator, SpinSystem, dephasing_generator, spin_dot, spin_operator

logger = logging.getLogger("sagrape.tasks")


# ──────────────────────────────────────────────
#  Named operators
# ──────────────────────────────────────────────

def thermal_z(n: int) -> Operator:
    """High-temperature longitudinal magnetization Σ_k I_kz."""
    return dephasing_generator(n)


def lls(n: int) -> Operator:
    """Singlet order −I_1·I_2 on the first two spins."""
    if n < 2:
        raise OperatorError("The singlet target needs at least 2 spins")
    return -spin_dot(n, 1, 2)


def cnot(n: int) -> Operator:
    """|0⟩⟨0|⊗1 + |1⟩⟨1|⊗σ_x on spins 1 and 2, identity elsewhere."""
    if n < 2:
        raise OperatorError("CNOT needs at least 2 spins")
    p0 = np.array([[1, 0], [0, 0]], dtype=complex)
    p1 = np.array([[0, 0], [0, 1]], dtype=complex)
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    gate = np.kron(p0, np.eye(2)) + np.kron(p1, sx)
    return np.kron(gate, np.eye(2 ** (n - 2), dtype=complex))


def selective_pi(n: int, spin: int = 1, axis: str = "x") -> Operator:
    """exp(−iπ I_kα) = −2i I_kα: a π rotation of one spin, identity on the rest."""
    if axis not in ("x", "y"):
        raise OperatorError(f"Rotation axis must be x or y, got: {axis!r}")
    return -2j * spin_operator(n, spin, axis)


_NAMED_STATES: dict[str, Callable[[int], Operator]] = {
    "thermal_z": thermal_z,
    "lls": lls,
}


# ──────────────────────────────────────────────
#  Reference systems
# ──────────────────────────────────────────────

def tcp_system() -> SpinSystem:
    """Two-spin system with a 127.4 Hz offset difference and J = 8.8 Hz."""
    return SpinSystem.from_hz([0.0, 127.4], [8.8], label="TCP")


def btfbz_surrogate() -> SpinSystem:
    """
    Three-spin stand-in for a fluorinated benzene.

    The values are placeholders, not measured parameters; edit them in the
    run config for a real sample.
    """
    return SpinSystem.from_hz([-2000.0, 0.0, 2500.0], [50.0, 30.0, 10.0], label="BTFBz (surrogate)")


# ──────────────────────────────────────────────
#  Config → engine objects
# ──────────────────────────────────────────────

def parse_matrix(rows: Matrix, dim: int, key: str) -> Operator:
    """Explicit matrix from config; entries are numbers or [re, im] pairs."""
    if len(rows) != dim or any(len(row) != dim for row in rows):
        raise ConfigError(f"{key}: matrix must be {dim}x{dim}", key=key)
    out = np.empty((dim, dim), dtype=complex)
    for i, row in enumerate(rows):
        for j, entry in enumerate(row):
            out[i, j] = complex(*entry) if isinstance(entry, (tuple, list)) else complex(entry)
    return out


def _named_state(name: str, n: int, key: str) -> Operator:
    builder = _NAMED_STATES.get(name)
    if builder is None:
        raise ConfigError(f"{key}: unknown state {name!r}, expected one of {sorted(_NAMED_STATES)}", key=key)
    try:
        return builder(n)
    except OperatorError as exc:
        raise ConfigError(f"{key}: {exc}", key=key) from None


def build_task(task: StateTaskConfig | GateTaskConfig, n: int) -> ControlTask:
    """Resolve named or explicit targets for an n-spin system."""
    dim = 2**n
    if isinstance(task, StateTaskConfig):
        rho0 = (
            _named_state(task.initial, n, "task.initial")
            if isinstance(task.initial, str)
            else parse_matrix(task.initial, dim, "task.initial")
        )
        rhoF = (
            _named_state(task.target, n, "task.target")
            if isinstance(task.target, str)
            else parse_matrix(task.target, dim, "task.target")
        )
        label = f"{task.initial} → {task.target}" if isinstance(task.initial, str) and isinstance(task.target, str) else "state"
        try:
            return ControlTask.state_transfer(rho0, rhoF, label=label)
        except ValueError as exc:
            raise ConfigError(f"task: {exc}", key="task") from None

    if not isinstance(task.target, str):
        uf = parse_matrix(task.target, dim, "task.target")
        label = "gate"
    elif task.target == "cnot":
        if n < 2:
            raise ConfigError("task.target: cnot needs at least 2 spins", key="task.target")
        uf, label = cnot(n), "cnot"
    elif task.target == "selective_pi":
        if task.spin > n:
            raise ConfigError(f"task.spin: must be between 1-{n}, got: {task.spin}", key="task.spin")
        uf, label = selective_pi(n, task.spin, task.axis), f"π_{task.axis} on spin {task.spin}"
    else:
        raise ConfigError(
            f"task.target: unknown gate {task.target!r}, expected one of ['cnot', 'selective_pi']",
            key="task.target",
        )
    try:
        return ControlTask.gate_synthesis(uf, label=label)
    except ValueError as exc:
        raise ConfigError(f"task.target: {exc}", key="task.target") from None


def initial_pulse(
    config: PulseConfig,
    rng: np.random.Generator,
    resolve: Callable[[str], Path] = Path,
) -> PulseSequence:
    """Initial guess for the optimizer, per ``pulse.initial``."""
    if config.initial == PulseInit.ZERO:
        return PulseSequence.zeros(config.segments, config.tau)
    if config.initial == PulseInit.RANDOM:
        return PulseSequence.random(config.segments, config.tau, 2 * math.pi * config.init_scale_hz, rng)

    pulse = import_pulse(resolve(config.file))  # type: ignore[arg-type]
    if pulse.n_segments != config.segments:
        raise ConfigError(
            f"pulse.file: has {pulse.n_segments} segments, config says {config.segments}", key="pulse.file"
        )
    if not math.isclose(pulse.tau, config.tau, rel_tol=1e-9):
        raise ConfigError(f"pulse.file: tau {pulse.tau:g}s does not match {config.tau:g}s", key="pulse.file")
    return pulse
