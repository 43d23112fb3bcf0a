"""
core/objective.py
~~~~~~~~~~~~~~~~~
Ensemble-averaged fidelities, their gradients, and the GRAPE update.

Fidelities are normalized:
- state:  Φ = Σ_m p_m Tr[ρ_F† U^m ρ₀ U^m†] / (‖ρ_F‖_F ‖ρ₀‖_F)      ∈ [−1, 1]
- gate:   Φ = Σ_m p_m |Tr[U^m† U_F]|² / D²                           ∈ [0, 1]

The ensemble runs over RFI members r_m and, when given, noise trajectories
(each trajectory shared by all members, weight p_m / K).

Gradients come from one forward and one backward sweep per member. Two
propagator derivatives are available:
- exact:        dU_j = V (Γ ∘ V†∂H V) V†, Γ the divided differences of
                exp(−iτλ) over the eigenvalues of H(j)
- first_order:  dU_j ≈ −iτ ∂H U_j (the classic GRAPE form)
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from core.errors import NumericalError, ObjectiveError
from core.models import GradientMode, TaskKind
from core.propagate import NoiseTrajectory, PulseSequence, RfiDistribution, SegmentSpectra, segment_spectra
from core.spinsys import Operator, SpinSystem, is_hermitian

logger = logging.getLogger("sagrape.objective")

UNITARY_ATOL = 1e-10
# Below this |τΔλ| the divided difference switches to its derivative limit
DEGENERACY_TOL = 1e-7


# ──────────────────────────────────────────────
#  Value types
# ──────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class ControlTask:
    """A state-transfer (ρ₀ → ρ_F) or gate-synthesis (U_F) objective."""

    kind: TaskKind
    rho0: Operator | None = None
    rhoF: Operator | None = None
    UF: Operator | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.kind == TaskKind.STATE:
            if self.rho0 is None or self.rhoF is None:
                raise ObjectiveError("State transfer needs rho0 and rhoF")
            rho0 = np.array(self.rho0, dtype=complex)
            rhoF = np.array(self.rhoF, dtype=complex)
            if rho0.ndim != 2 or rho0.shape != rhoF.shape or rho0.shape[0] != rho0.shape[1]:
                raise ObjectiveError(f"rho0 {rho0.shape} and rhoF {rhoF.shape} must be equal square matrices")
            if not (is_hermitian(rho0) and is_hermitian(rhoF)):
                raise ObjectiveError("rho0 and rhoF must be Hermitian")
            if np.linalg.norm(rhoF) == 0:
                raise ObjectiveError("rhoF must have non-zero norm")
            rho0.setflags(write=False)
            rhoF.setflags(write=False)
            object.__setattr__(self, "rho0", rho0)
            object.__setattr__(self, "rhoF", rhoF)
        elif self.kind == TaskKind.GATE:
            if self.UF is None:
                raise ObjectiveError("Gate synthesis needs UF")
            uf = np.array(self.UF, dtype=complex)
            if uf.ndim != 2 or uf.shape[0] != uf.shape[1]:
                raise ObjectiveError(f"UF must be square, got shape {uf.shape}")
            if np.linalg.norm(uf.conj().T @ uf - np.eye(uf.shape[0])) >= UNITARY_ATOL:
                raise ObjectiveError("UF must be unitary")
            uf.setflags(write=False)
            object.__setattr__(self, "UF", uf)
        else:
            raise ObjectiveError(f"Unknown task kind: {self.kind!r}")

    @classmethod
    def state_transfer(cls, rho0: Operator, rhoF: Operator, label: str = "") -> "ControlTask":
        return cls(kind=TaskKind.STATE, rho0=rho0, rhoF=rhoF, label=label)

    @classmethod
    def gate_synthesis(cls, UF: Operator, label: str = "") -> "ControlTask":
        return cls(kind=TaskKind.GATE, UF=UF, label=label)

    @property
    def dim(self) -> int:
        ref = self.rho0 if self.kind == TaskKind.STATE else self.UF
        return int(ref.shape[0])  # type: ignore[union-attr]

    def normalization(self) -> float:
        """Divisor that maps the raw overlap onto the normalized fidelity."""
        if self.kind == TaskKind.GATE:
            return float(self.dim**2)
        norm0 = float(np.linalg.norm(self.rho0))
        if norm0 == 0:
            raise ObjectiveError("rho0 must have non-zero norm")
        return norm0 * float(np.linalg.norm(self.rhoF))

    def attainable(self) -> float:
        """Best fidelity any unitary can reach (1 for gates)."""
        if self.kind == TaskKind.GATE:
            return 1.0
        return attainability_bound(self.rho0, self.rhoF)  # type: ignore[arg-type]


@dataclass(frozen=True, eq=False)
class GradientField:
    """∂Φ/∂ω_α(j) per segment (per rad/s); exactly zero on frozen segments."""

    gx: NDArray[np.float64]
    gy: NDArray[np.float64]

    @classmethod
    def zeros(cls, n_segments: int) -> "GradientField":
        return cls(gx=np.zeros(n_segments), gy=np.zeros(n_segments))

    def norm(self) -> float:
        return float(math.sqrt(np.dot(self.gx, self.gx) + np.dot(self.gy, self.gy)))


@dataclass(frozen=True, eq=False)
class EnsembleMember:
    weight: float
    scale: float
    etas: NDArray[np.float64] | None = None


def ensemble_members(
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None = None,
) -> list[EnsembleMember]:
    """RFI members (outer) × noise trajectories (inner), weights p_m / K."""
    if not noise:
        return [EnsembleMember(weight=p, scale=r) for r, p in rfi]
    k = len(noise)
    return [EnsembleMember(weight=p / k, scale=r, etas=traj.etas) for r, p in rfi for traj in noise]


# ──────────────────────────────────────────────
#  Per-member kernels
# ──────────────────────────────────────────────

def _dagger(ops: NDArray) -> NDArray:
    return np.swapaxes(ops, -1, -2).conj()


def _divided_differences(spectra: SegmentSpectra) -> NDArray[np.complex128]:
    """Γ_kl = (e_k − e_l)/(λ_k − λ_l) with e = exp(−iτλ); −iτ e_k on (near-)degenerate pairs."""
    tau = spectra.tau
    lam = spectra.energies
    e = np.exp(-1j * tau * lam)
    d_lam = lam[:, :, None] - lam[:, None, :]
    d_e = e[:, :, None] - e[:, None, :]
    close = np.abs(tau * d_lam) < DEGENERACY_TOL
    limit = -0.5j * tau * (e[:, :, None] + e[:, None, :])
    return np.where(close, limit, d_e / np.where(close, 1.0, d_lam))


def _exact_traces(
    spectra: SegmentSpectra,
    generators: tuple[Operator, Operator],
    scale: float,
    weights: NDArray[np.complex128],
) -> tuple[NDArray, NDArray]:
    """Tr[∂U_j/∂ω_α · W_j] for every segment j and both quadratures."""
    v = spectra.vectors
    vd = _dagger(v)
    gamma = _divided_differences(spectra)
    w_eig_t = np.swapaxes(vd @ weights @ v, -1, -2)
    out = []
    for gen in generators:
        h_eig = vd @ gen @ v
        out.append(scale * np.einsum("nkl,nkl,nkl->n", gamma, h_eig, w_eig_t))
    return out[0], out[1]


def _state_terms(
    sys: SpinSystem,
    spectra: SegmentSpectra,
    task: ControlTask,
    scale: float,
    want_gradient: bool,
    mode: GradientMode,
) -> tuple[float, NDArray | None, NDArray | None]:
    u = spectra.propagators
    ud = _dagger(u)
    n_seg = u.shape[0]

    # fwd[j] = ρ after segment j (fwd[0] = ρ₀)
    fwd = np.empty((n_seg + 1,) + u.shape[1:], dtype=complex)
    fwd[0] = task.rho0
    for j in range(n_seg):
        fwd[j + 1] = u[j] @ fwd[j] @ ud[j]
    overlap = float(np.vdot(task.rhoF, fwd[n_seg]).real)
    if not want_gradient:
        return overlap, None, None

    # bwd[j] = costate λ_j = U_{j+1}†···U_N† ρ_F U_N···U_{j+1}
    bwd = np.empty_like(fwd)
    bwd[n_seg] = task.rhoF
    for j in range(n_seg - 1, -1, -1):
        bwd[j] = ud[j] @ bwd[j + 1] @ u[j]

    if mode == GradientMode.EXACT:
        weights = fwd[:-1] @ ud @ bwd[1:]
        tx, ty = _exact_traces(spectra, sys.controls, scale, weights)
        return overlap, 2 * tx.real, 2 * ty.real

    # −iτ r Tr[λ_j [H_α, ρ_j]]
    comm = fwd[1:] @ bwd[1:] - bwd[1:] @ fwd[1:]
    grads = []
    for gen in sys.controls:
        tr = np.einsum("kl,nlk->n", gen, comm)
        grads.append((-1j * spectra.tau * scale * tr).real)
    return overlap, grads[0], grads[1]


def _gate_terms(
    sys: SpinSystem,
    spectra: SegmentSpectra,
    task: ControlTask,
    scale: float,
    want_gradient: bool,
    mode: GradientMode,
) -> tuple[float, NDArray | None, NDArray | None]:
    u = spectra.propagators
    ud = _dagger(u)
    n_seg, dim = u.shape[0], u.shape[1]

    # X[j] = U_j···U_1 (X[0] = 1)
    fwd = np.empty((n_seg + 1, dim, dim), dtype=complex)
    fwd[0] = np.eye(dim)
    for j in range(n_seg):
        fwd[j + 1] = u[j] @ fwd[j]
    g = complex(np.vdot(fwd[n_seg], task.UF))
    overlap = abs(g) ** 2
    if not want_gradient:
        return overlap, None, None

    # P[j] = U_{j+1}†···U_N† U_F
    bwd = np.empty_like(fwd)
    bwd[n_seg] = task.UF
    for j in range(n_seg - 1, -1, -1):
        bwd[j] = ud[j] @ bwd[j + 1]

    if mode == GradientMode.EXACT:
        weights = fwd[:-1] @ _dagger(bwd[1:])
        tx, ty = _exact_traces(spectra, sys.controls, scale, weights)
        return overlap, 2 * (g * tx).real, 2 * (g * ty).real

    # 2τr Im{Tr[P_j† H_α X_j] Tr[X_j† P_j]}
    pd = _dagger(bwd[1:])
    grads = []
    for gen in sys.controls:
        tr = np.einsum("nij,jk,nki->n", pd, gen, fwd[1:])
        grads.append(2 * spectra.tau * scale * (tr * g).imag)
    return overlap, grads[0], grads[1]


def _member_terms(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    member: EnsembleMember,
    want_gradient: bool,
    mode: GradientMode,
) -> tuple[float, NDArray | None, NDArray | None]:
    spectra = segment_spectra(sys, pulse, member.scale, member.etas)
    kernel = _state_terms if task.kind == TaskKind.STATE else _gate_terms
    return kernel(sys, spectra, task, member.scale, want_gradient, mode)


# ──────────────────────────────────────────────
#  Ensemble evaluation
# ──────────────────────────────────────────────

def _check_dims(sys: SpinSystem, task: ControlTask) -> None:
    if task.dim != sys.dim:
        raise ObjectiveError(f"Task dimension {task.dim} does not match spin system dimension {sys.dim}")


def _evaluate(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None,
    executor: Executor | None,
    want_gradient: bool,
    mode: GradientMode,
) -> tuple[float, GradientField | None]:
    _check_dims(sys, task)
    members = ensemble_members(rfi, noise)
    kernel = partial(_member_terms, sys, pulse, task, want_gradient=want_gradient, mode=mode)
    # map() preserves submission order, so the reduction below is fixed-order
    results = list(executor.map(kernel, members)) if executor else [kernel(m) for m in members]

    norm = task.normalization()
    total = 0.0
    gx = np.zeros(pulse.n_segments)
    gy = np.zeros(pulse.n_segments)
    for member, (overlap, mx, my) in zip(members, results):
        total += member.weight * overlap
        if want_gradient:
            gx += member.weight * mx
            gy += member.weight * my

    phi = total / norm
    if not math.isfinite(phi):
        raise NumericalError(f"Fidelity is not finite: {phi}")
    if not want_gradient:
        return phi, None

    gx /= norm
    gy /= norm
    if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gy))):
        raise NumericalError("Gradient contains non-finite entries")
    gx[pulse.frozen] = 0.0
    gy[pulse.frozen] = 0.0
    return phi, GradientField(gx=gx, gy=gy)


def _require_kind(task: ControlTask, kind: TaskKind) -> None:
    if task.kind != kind:
        raise ObjectiveError(f"Expected a {kind.value} task, got: {task.kind.value}")


def fidelity(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None = None,
    executor: Executor | None = None,
) -> float:
    """Normalized fidelity for either task kind."""
    phi, _ = _evaluate(sys, pulse, task, rfi, noise, executor, False, GradientMode.EXACT)
    return phi


def fidelity_and_gradient(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None = None,
    executor: Executor | None = None,
    mode: GradientMode = GradientMode.EXACT,
) -> tuple[float, GradientField]:
    """Fidelity and gradient from a single set of sweeps."""
    phi, grad = _evaluate(sys, pulse, task, rfi, noise, executor, True, mode)
    assert grad is not None
    return phi, grad


def state_fidelity(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None = None,
    executor: Executor | None = None,
) -> float:
    _require_kind(task, TaskKind.STATE)
    return fidelity(sys, pulse, task, rfi, noise, executor)


def gate_fidelity(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None = None,
    executor: Executor | None = None,
) -> float:
    _require_kind(task, TaskKind.GATE)
    return fidelity(sys, pulse, task, rfi, noise, executor)


def state_gradient(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None = None,
    executor: Executor | None = None,
    mode: GradientMode = GradientMode.EXACT,
) -> GradientField:
    _require_kind(task, TaskKind.STATE)
    return fidelity_and_gradient(sys, pulse, task, rfi, noise, executor, mode)[1]


def gate_gradient(
    sys: SpinSystem,
    pulse: PulseSequence,
    task: ControlTask,
    rfi: RfiDistribution,
    noise: Sequence[NoiseTrajectory] | None = None,
    executor: Executor | None = None,
    mode: GradientMode = GradientMode.EXACT,
) -> GradientField:
    _require_kind(task, TaskKind.GATE)
    return fidelity_and_gradient(sys, pulse, task, rfi, noise, executor, mode)[1]


def attainability_bound(rho0: Operator, rhoF: Operator) -> float:
    """
    max over unitaries of Tr[ρ_F U ρ₀ U†] / (‖ρ_F‖ ‖ρ₀‖).

    Reached by pairing both spectra sorted in descending order.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    rhoF = np.asarray(rhoF, dtype=complex)
    if not (is_hermitian(rho0) and is_hermitian(rhoF)):
        raise ObjectiveError("Attainability bound needs Hermitian operators")
    norm = float(np.linalg.norm(rho0)) * float(np.linalg.norm(rhoF))
    if norm == 0:
        raise ObjectiveError("Attainability bound needs non-zero operators")
    lam0 = np.sort(np.linalg.eigvalsh(rho0))[::-1]
    lamF = np.sort(np.linalg.eigvalsh(rhoF))[::-1]
    return float(np.dot(lam0, lamF)) / norm


def grape_step(
    pulse: PulseSequence,
    grad: GradientField,
    epsilon: float,
    amp_max: float | None = None,
) -> PulseSequence:
    """ω_α(j) ← ω_α(j) + ε G_α(j) on unfrozen segments, then the optional clamp."""
    if epsilon < 0:
        raise ObjectiveError(f"Step size must be non-negative, got: {epsilon}")
    stepped = pulse.with_amplitudes(pulse.amps_x + epsilon * grad.gx, pulse.amps_y + epsilon * grad.gy)
    return stepped.clipped(amp_max)
